#pragma once

#include <array>
#include <string>

#include "parahom/stepper.hpp"

namespace phom {

// SymMat-valued function on the fast space-time torus, stored per component.
struct MatSlab {
    int n = 1;
    std::array<FastSlab, 3> comp;

    SymMat eval(int flat, double s) const {
        SymMat m(n);
        for (int c = 0; c < SymMat::comps(n); ++c) m[c] = comp[c].value(flat, s);
        return m;
    }
    SymMat eval_interp(const Vec2& y, double s) const {
        SymMat m(n);
        for (int c = 0; c < SymMat::comps(n); ++c) m[c] = comp[c].value_interp(y, s);
        return m;
    }
};

struct ErgodicConfig {
    double tol = 1e-9;            // Cauchy tolerance on the slope estimate
    int consecutive = 3;          // periods the tolerance must hold
    int max_periods = 4000;
    int Ns = 64;                  // stored phases per period
    // penalization
    double delta0 = 1.0;
    int delta_halvings = 6;
    int richardson_levels = 3;
    double fixpoint_tol = 1e-10;
    double cross_tol = 1e-4;      // slope vs penalization agreement
};

enum class CellMethod { LongTimeSlope, Penalization, Both };

struct CellSolution {
    double gamma = 0.0;
    FastSlab w;                   // periodic corrector, w at node 0 phase 0 is 0
    std::string method;
    double delta_min = 0.0;       // smallest penalization delta used
    double cross_diff = 0.0;      // |gamma_slope - gamma_penalization| when both ran
    double richardson_residual = 0.0;
    int periods_used = 0;
    std::vector<std::pair<double, double>> delta_gamma;  // (delta, delta*w(0,0)) pairs
};

// generic driven ergodic flow  z_s = rhs(D^2 z, node, s); returns the unique
// drift gamma and the normalized periodic profile
struct ErgodicFlowResult {
    double gamma = 0.0;
    FastSlab profile;
    int periods = 0;
    bool converged = false;
};

ErgodicFlowResult ergodic_flow_slope(const TorusGrid& g, const FastRhs& rhs, double Lambda,
                                     const ErgodicConfig& cfg);
// penalized fixed point for a single delta; warm_start may be empty
struct PenalizedResult {
    FastSlab w;             // one period of the steady state (not normalized)
    double w00 = 0.0;       // value at node 0, phase 0
    double sup_norm = 0.0;  // ||w^delta||_inf
    int periods = 0;
};
PenalizedResult penalized_cell(const TorusGrid& g, const FastRhs& rhs, double delta, double Lambda,
                               const ErgodicConfig& cfg, const FastSlab* warm_start = nullptr);

// ergodic constant of  w_s = F(D^2 w + P, x, t, ., .) - gamma
CellSolution ergodic_constant(const FullyNonlinearOp& op, const SymMat& P, const Vec2& x, double t,
                              CellMethod method, const TorusGrid& g, const ErgodicConfig& cfg = {});

// ---- matrix correctors -----------------------------------------------------

struct MatrixCorrector {
    SymMat Abar;                       // effective coefficient
    std::array<FastSlab, 3> chi;       // corrector chi_ij per component, chi(0,0) = 0
    MatSlab A;                         // linearized coefficient field D_pF(0,x,t,.,.)
};

// coefficient slab of the linearization of op at the given base field
MatSlab linearized_coefficient(const FullyNonlinearOp& op, const Vec2& x, double t,
                               const TorusGrid& g, const ErgodicConfig& cfg,
                               const MatSlab* base = nullptr);

MatrixCorrector matrix_corrector(const FullyNonlinearOp& op, const Vec2& x, double t,
                                 const TorusGrid& g, const ErgodicConfig& cfg = {});

// ---- driven cell problems ----------------------------------------------------

struct DrivenCellResult {
    double fbar = 0.0;
    FastSlab phi;  // periodic, phi(0,0) = 0
};

// unique fbar such that  phi_s = tr(A D^2 phi) + f - fbar  has a periodic solution
DrivenCellResult driven_cell(const MatSlab& A, const FastSlab& f, const TorusGrid& g,
                             const ErgodicConfig& cfg = {});

// ---- effective operator table ------------------------------------------------

struct RangeError : SolverError {
    using SolverError::SolverError;
};

struct TableValidation {
    double ellipticity_lo = 0.0;   // min sampled ratio
    double ellipticity_hi = 0.0;   // max sampled ratio
    double worst_concavity_violation = 0.0;
    int concavity_triples = 0;
    bool pass = false;
};

struct EffectiveOperatorTable {
    int n = 1;
    double P_max = 4.0;
    int P_res = 9;                  // nodes per matrix entry
    std::vector<Vec2> x_nodes;      // slow sample nodes (size 1 when op is x-independent)
    std::vector<double> t_nodes;
    SlowGrid slow;                  // geometry behind x_nodes
    std::vector<double> values;     // [t][x][P flattened row-major, comps axes]
    TableValidation validation;
    bool partial = false;
    std::vector<std::string> failures;

    int comps() const { return SymMat::comps(n); }
    int p_points() const {
        int r = 1;
        for (int c = 0; c < comps(); ++c) r *= P_res;
        return r;
    }
    double p_coord(int k) const { return -P_max + 2.0 * P_max * k / (P_res - 1); }

    double query(const SymMat& P, const Vec2& x, double t) const;
    SymMat derivative(const SymMat& P, const Vec2& x, double t, double h = 1e-3) const;
    std::string to_json() const;
    static EffectiveOperatorTable from_json(const std::string& doc);
};

struct TableConfig {
    double P_max = 4.0;
    int P_res = 9;
    int slow_x_samples = 1;   // used only when the operator depends on x
    int slow_t_samples = 1;
    uint64_t seed = 7;
    int concavity_triples = 1000;
    double tol = 1e-3;
};

EffectiveOperatorTable effective_operator_table(const FullyNonlinearOp& op, const SlowGrid& slow,
                                                const TorusGrid& g, const TableConfig& tcfg = {},
                                                const ErgodicConfig& cfg = {});

}  // namespace phom
