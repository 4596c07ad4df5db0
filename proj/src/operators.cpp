#include "parahom/operators.hpp"

#include <algorithm>
#include <cmath>

namespace phom {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

double FourierField::eval(const Vec2& x, double t, const Vec2& y, double s) const {
    double r = constant;
    for (const auto& m : modes) {
        double theta = m.ky[0] * y[0] + m.ks * s + m.kx[0] * x[0] / Lx + m.kt * t / Tt;
        if (n == 2) theta += m.ky[1] * y[1] + m.kx[1] * x[1] / Lx;
        const double ang = kTwoPi * theta;
        r += m.a_cos * std::cos(ang) + m.a_sin * std::sin(ang);
    }
    return reciprocal ? 1.0 / r : r;
}

bool FourierField::depends_on_x() const {
    return std::any_of(modes.begin(), modes.end(),
                       [](const FourierMode& m) { return m.kx[0] != 0 || m.kx[1] != 0; });
}
bool FourierField::depends_on_t() const {
    return std::any_of(modes.begin(), modes.end(), [](const FourierMode& m) { return m.kt != 0; });
}
bool FourierField::depends_on_s() const {
    return std::any_of(modes.begin(), modes.end(), [](const FourierMode& m) { return m.ks != 0; });
}
bool FourierField::depends_on_y() const {
    return std::any_of(modes.begin(), modes.end(),
                       [](const FourierMode& m) { return m.ky[0] != 0 || m.ky[1] != 0; });
}

MatCoefficient MatCoefficient::constant_identity(int n) {
    MatCoefficient c;
    c.n = n;
    c.comp.resize(SymMat::comps(n));
    for (auto& f : c.comp) f.n = n;
    c.comp[0].constant = 1.0;
    if (n == 2) c.comp[1].constant = 1.0;
    return c;
}

SymMat MatCoefficient::eval(const Vec2& x, double t, const Vec2& y, double s) const {
    SymMat m(n);
    for (int c = 0; c < SymMat::comps(n); ++c) m[c] = comp[c].eval(x, t, y, s);
    return m;
}
bool MatCoefficient::depends_on_x() const {
    return std::any_of(comp.begin(), comp.end(), [](const FourierField& f) { return f.depends_on_x(); });
}
bool MatCoefficient::depends_on_t() const {
    return std::any_of(comp.begin(), comp.end(), [](const FourierField& f) { return f.depends_on_t(); });
}
bool MatCoefficient::depends_on_s() const {
    return std::any_of(comp.begin(), comp.end(), [](const FourierField& f) { return f.depends_on_s(); });
}

double pucci_minus_value(const SymMat& P, double lp, double Lp) {
    return lp * P.trace_plus() - Lp * P.trace_minus();
}

OpPtr make_linear_tr(MatCoefficient A, double lambda, double Lambda, double L) {
    auto op = std::make_shared<FullyNonlinearOp>();
    op->family = OpFamily::Linear;
    op->n = A.n;
    op->lambda = lambda;
    op->Lambda = Lambda;
    op->concave = true;
    op->L = L;
    op->lin_coeff = A;
    op->slow_x_dependent = A.depends_on_x();
    op->slow_t_dependent = A.depends_on_t();
    op->fast_s_dependent = A.depends_on_s();
    auto coeff = op->lin_coeff;
    op->evaluator = [coeff](const SymMat& P, const Vec2& x, double t, const Vec2& y, double s) {
        return trace_product(coeff.eval(x, t, y, s), P);
    };
    op->d1 = [coeff](const SymMat&, const Vec2& x, double t, const Vec2& y, double s) {
        return coeff.eval(x, t, y, s);
    };
    return op;
}

OpPtr make_linear_1d(FourierField a, double lambda, double Lambda, double L) {
    MatCoefficient A;
    A.n = 1;
    a.n = 1;
    A.comp = {a};
    return make_linear_tr(A, lambda, Lambda, L);
}

OpPtr make_pucci_minus(int n, double lp, double Lp, double L) {
    auto op = std::make_shared<FullyNonlinearOp>();
    op->family = OpFamily::PucciMinus;
    op->n = n;
    op->lambda = lp;
    // Frobenius-norm ellipticity constant: tr(Q) <= sqrt(n) ||Q|| for Q >= 0
    op->Lambda = Lp * std::sqrt(static_cast<double>(n));
    op->concave = true;
    op->L = L;
    op->smoothness = "piecewise";
    op->pucci_lambda = lp;
    op->pucci_Lambda = Lp;
    op->evaluator = [lp, Lp](const SymMat& P, const Vec2&, double, const Vec2&, double) {
        return pucci_minus_value(P, lp, Lp);
    };
    return op;
}

OpPtr make_hjb_min(std::vector<MatCoefficient> As, double lambda, double Lambda, double kappa,
                   double L) {
    if (As.empty()) throw OpError("hjb_min needs at least one linear operator");
    auto op = std::make_shared<FullyNonlinearOp>();
    op->family = OpFamily::HjbMin;
    op->n = As.front().n;
    op->lambda = lambda;
    op->Lambda = Lambda;
    op->concave = true;
    op->L = L;
    op->hjb_coeffs = As;
    op->hjb_kappa = kappa;
    op->smoothness = kappa > 0.0 ? "smooth" : "piecewise";
    for (const auto& A : As) {
        op->slow_x_dependent = op->slow_x_dependent || A.depends_on_x();
        op->slow_t_dependent = op->slow_t_dependent || A.depends_on_t();
        op->fast_s_dependent = op->fast_s_dependent || A.depends_on_s();
    }
    auto coeffs = op->hjb_coeffs;
    if (kappa > 0.0) {
        const double logN = std::log(static_cast<double>(coeffs.size()));
        op->evaluator = [coeffs, kappa, logN](const SymMat& P, const Vec2& x, double t,
                                              const Vec2& y, double s) {
            // soft-min: -(1/kappa) [log sum exp(-kappa v_i) - log N]; smooth and concave,
            // vanishes at P = 0 because all v_i do
            double vmin = std::numeric_limits<double>::infinity();
            std::vector<double> vals(coeffs.size());
            for (size_t i = 0; i < coeffs.size(); ++i) {
                vals[i] = trace_product(coeffs[i].eval(x, t, y, s), P);
                vmin = std::min(vmin, vals[i]);
            }
            double acc = 0.0;
            for (double v : vals) acc += std::exp(-kappa * (v - vmin));
            return vmin - (std::log(acc) - logN) / kappa;
        };
        op->d1 = [coeffs, kappa](const SymMat& P, const Vec2& x, double t, const Vec2& y,
                                 double s) {
            double vmin = std::numeric_limits<double>::infinity();
            std::vector<double> vals(coeffs.size());
            std::vector<SymMat> mats(coeffs.size());
            for (size_t i = 0; i < coeffs.size(); ++i) {
                mats[i] = coeffs[i].eval(x, t, y, s);
                vals[i] = trace_product(mats[i], P);
                vmin = std::min(vmin, vals[i]);
            }
            double z = 0.0;
            SymMat g(P.n);
            for (size_t i = 0; i < coeffs.size(); ++i) {
                const double w = std::exp(-kappa * (vals[i] - vmin));
                z += w;
                g += w * mats[i];
            }
            return (1.0 / z) * g;
        };
    } else {
        op->evaluator = [coeffs](const SymMat& P, const Vec2& x, double t, const Vec2& y,
                                 double s) {
            double r = std::numeric_limits<double>::infinity();
            for (const auto& A : coeffs) r = std::min(r, trace_product(A.eval(x, t, y, s), P));
            return r;
        };
    }
    return op;
}

OpPtr make_recession_perturbed(int n, double lp, double Lp, FourierField b, double delta,
                               double mu, double lambda, double Lambda, double L) {
    auto op = std::make_shared<FullyNonlinearOp>();
    op->family = OpFamily::RecessionPerturbed;
    op->n = n;
    op->lambda = lambda;
    op->Lambda = Lambda;
    op->concave = false;
    op->L = L;
    op->smoothness = "piecewise";  // Pucci core keeps the kink at P = 0
    op->recession_b = b;
    op->recession_delta = delta;
    op->recession_mu = mu;
    op->fast_s_dependent = b.depends_on_s();
    FourierField bf = b;
    op->evaluator = [lp, Lp, bf, delta, mu](const SymMat& P, const Vec2& x, double t,
                                            const Vec2& y, double s) {
        const double base = pucci_minus_value(P, lp, Lp);
        const double p2 = P.norm() * P.norm();
        double g;
        if (delta > 0.0)
            g = std::pow(mu * mu + p2, 0.5 * delta) - std::pow(mu, delta);
        else
            g = p2 / (1.0 + p2);
        return base + bf.eval(x, t, y, s) * g;
    };
    RecessionPartner rp;
    rp.fstar = make_pucci_minus(n, lp, Lp, L);
    rp.delta = delta;
    double bmax = std::fabs(b.constant);
    for (const auto& m : b.modes) bmax += std::hypot(m.a_cos, m.a_sin);
    rp.gapK = bmax;
    op->recession = rp;
    return op;
}

// ---- derivative tensor -----------------------------------------------------

int DerivativeTensor::index(const std::vector<int>& t) const {
    const int c = comps();
    int idx = 0;
    for (int k = 0; k < order; ++k) idx = idx * c + t[k];
    return idx;
}

double DerivativeTensor::apply(const std::vector<SymMat>& args) const {
    if (static_cast<int>(args.size()) != order)
        throw OpError("DerivativeTensor::apply: wrong argument count");
    const int c = comps();
    double total = 0.0;
    std::vector<int> t(order, 0);
    const int count = static_cast<int>(a.size());
    for (int flat = 0; flat < count; ++flat) {
        int rem = flat;
        double prod = a[flat];
        if (prod == 0.0) continue;
        for (int k = order - 1; k >= 0; --k) {
            const int ck = rem % c;
            rem /= c;
            prod *= SymMat::comp_mult(ck) * args[k][ck];
        }
        total += prod;
    }
    return total;
}

SymMat DerivativeTensor::as_matrix() const {
    if (order != 1) throw OpError("as_matrix requires an order-1 tensor");
    SymMat m(n);
    for (int c = 0; c < comps(); ++c) m[c] = a[c];
    return m;
}

namespace {

// nested central differences: returns the mixed derivative along dirs[0..k-1]
double mixed_central(const FullyNonlinearOp& op, const SymMat& P, const Vec2& x, double t,
                     const Vec2& y, double s, const std::vector<int>& dirs, double h) {
    const int k = static_cast<int>(dirs.size());
    const int points = 1 << k;
    double acc = 0.0;
    for (int mask = 0; mask < points; ++mask) {
        SymMat Q = P;
        int sign = 1;
        for (int b = 0; b < k; ++b) {
            const double sgn = (mask >> b) & 1 ? 1.0 : -1.0;
            if (sgn < 0) sign = -sign;
            Q += sgn * h * SymMat::basis(P.n, dirs[b]);
        }
        acc += sign * op.eval(Q, x, t, y, s);
    }
    return acc / std::pow(2.0 * h, k);
}

// one-sided (forward) nested differences, used at kink points
double mixed_forward(const FullyNonlinearOp& op, const SymMat& P, const Vec2& x, double t,
                     const Vec2& y, double s, const std::vector<int>& dirs, double h) {
    const int k = static_cast<int>(dirs.size());
    const int points = 1 << k;
    double acc = 0.0;
    for (int mask = 0; mask < points; ++mask) {
        SymMat Q = P;
        int pc = 0;
        for (int b = 0; b < k; ++b)
            if ((mask >> b) & 1) {
                Q += h * SymMat::basis(P.n, dirs[b]);
                ++pc;
            }
        const double sign = ((k - pc) % 2 == 0) ? 1.0 : -1.0;
        acc += sign * op.eval(Q, x, t, y, s);
    }
    return acc / std::pow(h, k);
}

}  // namespace

DerivativeTensor frechet_derivative(const FullyNonlinearOp& op, int order, const SymMat& P,
                                    const Vec2& x, double t, const Vec2& y, double s,
                                    const FrechetConfig& cfg) {
    if (order < 1) throw OpError("frechet_derivative: order must be >= 1");
    double h = cfg.h_override > 0.0 ? cfg.h_override : std::max(1e-4, 1e-4 * P.norm());
    if (h < 1e-13 * std::max(1.0, P.norm()))
        throw OpError("frechet_derivative: step underflow");

    DerivativeTensor T;
    T.n = op.n;
    T.order = order;
    const int c = SymMat::comps(op.n);
    int count = 1;
    for (int k = 0; k < order; ++k) count *= c;
    T.a.assign(count, 0.0);

    if (order == 1 && op.d1) {
        const SymMat g = op.d1(P, x, t, y, s);
        for (int i = 0; i < c; ++i) T.a[i] = g[i];
        return T;
    }

    // kink detection for piecewise-smooth operators: compare one-sided slopes
    if (op.piecewise()) {
        for (int d = 0; d < c; ++d) {
            const SymMat e = SymMat::basis(op.n, d);
            const double f0 = op.eval(P, x, t, y, s);
            const double fp = op.eval(P + h * e, x, t, y, s);
            const double fm = op.eval(P - h * e, x, t, y, s);
            const double fwd = (fp - f0) / h, bwd = (f0 - fm) / h;
            const double scale = std::max({1.0, std::fabs(fwd), std::fabs(bwd)});
            if (std::fabs(fwd - bwd) > cfg.kink_tol * scale + 1e3 * h * scale)
                T.kink_flagged = true;
        }
    }

    std::vector<int> dirs(order);
    for (int flat = 0; flat < count; ++flat) {
        // compute only sorted tuples, mirror onto permutations
        int rem = flat;
        bool sorted = true;
        for (int k = order - 1; k >= 0; --k) {
            dirs[k] = rem % c;
            rem /= c;
        }
        for (int k = 1; k < order; ++k) sorted = sorted && dirs[k - 1] <= dirs[k];
        if (!sorted) continue;
        const double val = T.kink_flagged ? mixed_forward(op, P, x, t, y, s, dirs, h)
                                          : mixed_central(op, P, x, t, y, s, dirs, h);
        // scatter to all permutations of dirs (tensor is symmetric)
        std::vector<int> perm = dirs;
        std::sort(perm.begin(), perm.end());
        do {
            T.a[T.index(perm)] = val;
        } while (std::next_permutation(perm.begin(), perm.end()));
    }
    return T;
}

// ---- samplers --------------------------------------------------------------

SymMat random_sym(int n, double range, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-range, range);
    SymMat m(n);
    m[0] = u(rng);
    if (n == 2) {
        m[1] = u(rng);
        m[2] = u(rng);
    }
    return m;
}

SymMat random_psd(int n, double range, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, range);
    if (n == 1) {
        SymMat m(1);
        m[0] = u(rng);
        return m;
    }
    std::uniform_real_distribution<double> ang(0.0, kTwoPi);
    const double l1 = u(rng), l2 = u(rng), th = ang(rng);
    const double c = std::cos(th), s = std::sin(th);
    return SymMat::make2(l1 * c * c + l2 * s * s, l1 * s * s + l2 * c * c, (l1 - l2) * c * s);
}

AssumptionReport check_assumptions(const FullyNonlinearOp& op, const SamplerConfig& cfg) {
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> ux(-cfg.x_range, cfg.x_range);
    std::uniform_real_distribution<double> ut(0.0, cfg.t_range);
    std::uniform_real_distribution<double> uy(0.0, 1.0);
    std::uniform_real_distribution<double> urho(0.0, 1.0);

    AssumptionReport rep;
    rep.lambda_hat = std::numeric_limits<double>::infinity();
    rep.Lambda_hat = 0.0;

    for (int k = 0; k < cfg.samples; ++k) {
        const SymMat P = random_sym(op.n, cfg.P_range, rng);
        SymMat Q = random_psd(op.n, cfg.Q_range, rng);
        if (Q.norm() < 1e-8) Q = 1e-3 * SymMat::identity(op.n);
        const Vec2 x{ux(rng), op.n == 2 ? ux(rng) : 0.0};
        const double t = ut(rng);
        const Vec2 y{uy(rng), op.n == 2 ? uy(rng) : 0.0};
        const double s = uy(rng);

        const double f0 = op.eval(P, x, t, y, s);
        const double ratio = (op.eval(P + Q, x, t, y, s) - f0) / Q.norm();
        rep.lambda_hat = std::min(rep.lambda_hat, ratio);
        rep.Lambda_hat = std::max(rep.Lambda_hat, ratio);

        if (op.concave) {
            const SymMat R = random_sym(op.n, cfg.P_range, rng);
            const double rho = urho(rng);
            const double lhs = rho * f0 + (1.0 - rho) * op.eval(R, x, t, y, s);
            const double rhs = op.eval(rho * P + (1.0 - rho) * R, x, t, y, s);
            rep.worst_concavity_violation = std::max(rep.worst_concavity_violation, lhs - rhs);
        }

        const Vec2 yshift{y[0] + 1.0, y[1] + (op.n == 2 ? 1.0 : 0.0)};
        rep.worst_periodicity_error = std::max(
            rep.worst_periodicity_error, std::fabs(op.eval(P, x, t, yshift, s + 1.0) - f0));

        rep.worst_zero_value =
            std::max(rep.worst_zero_value, std::fabs(op.eval(SymMat::zero(op.n), x, t, y, s)));
    }

    const double scale = std::max(1.0, cfg.P_range * op.Lambda);
    rep.ellipticity_pass =
        rep.lambda_hat >= op.lambda - cfg.tol && rep.Lambda_hat <= op.Lambda + cfg.tol;
    rep.concavity_pass = !op.concave || rep.worst_concavity_violation <= cfg.tol * scale;
    rep.periodicity_pass = rep.worst_periodicity_error <= 1e-10 * scale;
    rep.zero_at_zero_pass = rep.worst_zero_value <= 1e-12 * scale;
    return rep;
}

GapReport recession_gap(const FullyNonlinearOp& op, const SamplerConfig& cfg) {
    if (!op.recession) throw OpError("recession_gap: operator has no recession partner");
    const auto& rp = *op.recession;
    std::mt19937_64 rng(cfg.seed + 1);
    std::uniform_real_distribution<double> ux(-cfg.x_range, cfg.x_range);
    std::uniform_real_distribution<double> ut(0.0, cfg.t_range);
    std::uniform_real_distribution<double> uy(0.0, 1.0);

    GapReport rep;
    rep.declaredK = rp.gapK;
    for (int k = 0; k < cfg.samples; ++k) {
        SymMat P = random_sym(op.n, cfg.P_range, rng);
        if (P.norm() < 1.0) {
            // gap normalisation ||P||^delta is only meaningful away from 0
            const double c = (1.0 + uy(rng) * (cfg.P_range - 1.0)) / std::max(P.norm(), 1e-12);
            P *= c;
        }
        const Vec2 x{ux(rng), op.n == 2 ? ux(rng) : 0.0};
        const double t = ut(rng);
        const Vec2 y{uy(rng), op.n == 2 ? uy(rng) : 0.0};
        const double s = uy(rng);
        const double gap = std::fabs(op.eval(P, x, t, y, s) - rp.fstar->eval(P, x, t, y, s));
        rep.gap_hat = std::max(rep.gap_hat, gap / std::pow(P.norm(), rp.delta));
    }
    rep.pass = rep.gap_hat <= rp.gapK * (1.0 + 1e-6) + 1e-9;
    return rep;
}

}  // namespace phom
