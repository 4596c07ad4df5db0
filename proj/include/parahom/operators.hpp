#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "parahom/symmat.hpp"

namespace phom {

struct OpError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Truncated Fourier sum over (x, t, y, s) with integer wave numbers.
// theta = kx.x/L + kt.t/Tt + ky.y + ks.s ; term = a_cos cos(2 pi theta) + a_sin sin(2 pi theta)
struct FourierMode {
    std::array<int, 2> kx{0, 0};
    int kt = 0;
    std::array<int, 2> ky{0, 0};
    int ks = 0;
    double a_cos = 0.0;
    double a_sin = 0.0;
};

struct FourierField {
    int n = 1;
    double constant = 0.0;
    std::vector<FourierMode> modes;
    double Lx = 1.0;  // slow spatial period
    double Tt = 1.0;  // slow temporal period used by kt modes
    bool reciprocal = false;  // evaluate 1 / (constant + sum of modes)

    double eval(const Vec2& x, double t, const Vec2& y, double s) const;
    bool depends_on_x() const;
    bool depends_on_t() const;
    bool depends_on_s() const;
    bool depends_on_y() const;
};

// SymMat-valued coefficient: one Fourier field per component.
struct MatCoefficient {
    int n = 1;
    std::vector<FourierField> comp;  // size SymMat::comps(n)

    static MatCoefficient constant_identity(int n);
    SymMat eval(const Vec2& x, double t, const Vec2& y, double s) const;
    bool depends_on_x() const;
    bool depends_on_t() const;
    bool depends_on_s() const;
};

enum class OpFamily { Linear, PucciMinus, HjbMin, RecessionPerturbed, Custom };

struct FullyNonlinearOp;
using OpPtr = std::shared_ptr<const FullyNonlinearOp>;

// The recession partner F_* with the gap exponent delta and gap constant K
// of |F - F_*| <= K ||P||^delta.
struct RecessionPartner {
    OpPtr fstar;
    double delta = 0.0;
    double gapK = 0.0;
};

// Fully nonlinear uniformly parabolic operator F(P, x, t, y, s), periodic of
// period 1 in each fast coordinate and of period L in each slow coordinate.
struct FullyNonlinearOp {
    OpFamily family = OpFamily::Custom;
    int n = 1;
    double lambda = 1.0;
    double Lambda = 1.0;
    bool concave = false;
    double K = 1.0;       // structural constant of the regularity assumption
    double alpha = 0.5;   // Hoelder exponent metadata
    double L = 1.0;       // slow spatial period
    std::string smoothness = "smooth";  // or "piecewise" for kinked operators

    std::function<double(const SymMat&, const Vec2&, double, const Vec2&, double)> evaluator;
    // optional analytic first derivative in the matrix slot
    std::function<SymMat(const SymMat&, const Vec2&, double, const Vec2&, double)> d1;

    std::optional<RecessionPartner> recession;

    // family payloads (used for reports / fast paths)
    MatCoefficient lin_coeff;                 // Linear
    double pucci_lambda = 1.0, pucci_Lambda = 1.0;
    std::vector<MatCoefficient> hjb_coeffs;   // HjbMin
    double hjb_kappa = 0.0;                   // 0 = exact min
    FourierField recession_b;                 // RecessionPerturbed
    double recession_delta = 0.0, recession_mu = 1.0;

    bool slow_x_dependent = false;
    bool slow_t_dependent = false;
    bool fast_s_dependent = false;

    double eval(const SymMat& P, const Vec2& x, double t, const Vec2& y, double s) const {
        double r = evaluator(P, x, t, y, s);
        if (!std::isfinite(r)) throw OpError("operator produced a non-finite value");
        return r;
    }
    bool piecewise() const { return smoothness == "piecewise"; }
};

// ---- factories -------------------------------------------------------------

OpPtr make_linear_tr(MatCoefficient A, double lambda, double Lambda, double L = 1.0);
// convenience: 1d linear a(y)*p with a given as a Fourier field
OpPtr make_linear_1d(FourierField a, double lambda, double Lambda, double L = 1.0);
OpPtr make_pucci_minus(int n, double lambda_p, double Lambda_p, double L = 1.0);
// exact min for kappa = 0; log-sum-exp smoothing for kappa > 0
OpPtr make_hjb_min(std::vector<MatCoefficient> As, double lambda, double Lambda,
                   double kappa = 0.0, double L = 1.0);
// F = M^-_{lp,Lp}(P) + b(y) * g_delta(P) with
//   g_delta(P) = (mu^2+||P||^2)^{delta/2} - mu^delta  (delta > 0)
//   g_0(P)     = ||P||^2 / (1 + ||P||^2)              (delta = 0)
// The recession partner is M^-_{lp,Lp} itself.
OpPtr make_recession_perturbed(int n, double lp, double Lp, FourierField b, double delta,
                               double mu, double lambda, double Lambda, double L = 1.0);

double pucci_minus_value(const SymMat& P, double lp, double Lp);

// ---- derivatives -----------------------------------------------------------

// Symmetric k-linear form D_p^k F(P,.) stored densely over component tuples.
// entry(c1..ck) is the mixed directional derivative along E_{c1},...,E_{ck}.
struct DerivativeTensor {
    int n = 1;
    int order = 1;
    std::vector<double> a;  // comps^order entries
    bool kink_flagged = false;

    int comps() const { return SymMat::comps(n); }
    int index(const std::vector<int>& t) const;
    double entry(const std::vector<int>& t) const { return a[index(t)]; }

    // multilinear application with off-diagonal multiplicities
    double apply(const std::vector<SymMat>& args) const;
    // order-1 tensor viewed as the gradient matrix (trace pairing)
    SymMat as_matrix() const;
};

struct FrechetConfig {
    double h_override = 0.0;  // 0: use max(1e-4, 1e-4 ||P||)
    double kink_tol = 1e-6;
};

DerivativeTensor frechet_derivative(const FullyNonlinearOp& op, int order, const SymMat& P,
                                    const Vec2& x, double t, const Vec2& y, double s,
                                    const FrechetConfig& cfg = {});

// ---- assumption validators -------------------------------------------------

struct SamplerConfig {
    int samples = 10000;
    double P_range = 4.0;
    double Q_range = 2.0;
    double x_range = 1.0;
    double t_range = 1.0;
    uint64_t seed = 2024;
    double tol = 1e-7;
};

struct AssumptionReport {
    double lambda_hat = 0.0;
    double Lambda_hat = 0.0;
    bool ellipticity_pass = false;
    bool concavity_pass = true;
    bool periodicity_pass = false;
    bool zero_at_zero_pass = false;
    double worst_concavity_violation = 0.0;
    double worst_periodicity_error = 0.0;
    double worst_zero_value = 0.0;
    bool all_pass() const {
        return ellipticity_pass && concavity_pass && periodicity_pass && zero_at_zero_pass;
    }
};

AssumptionReport check_assumptions(const FullyNonlinearOp& op, const SamplerConfig& cfg = {});

struct GapReport {
    double gap_hat = 0.0;   // sup |F - F_*| / ||P||^delta over the sample set
    double declaredK = 0.0;
    bool pass = false;
};

GapReport recession_gap(const FullyNonlinearOp& op, const SamplerConfig& cfg = {});

// random PSD matrix with eigenvalues in [0, range]
SymMat random_psd(int n, double range, std::mt19937_64& rng);
SymMat random_sym(int n, double range, std::mt19937_64& rng);

}  // namespace phom
