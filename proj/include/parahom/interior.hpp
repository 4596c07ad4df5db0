#pragma once

#include "parahom/layer.hpp"

namespace phom {

enum class EffectiveMode { Linearized, Nonlinear };

struct InteriorConfig {
    TorusGrid fast{1, 64};
    SlowGrid slow{1, 64, 1.0, 0.05};
    std::vector<double> t_slices{0.0, 0.0125, 0.025, 0.0375, 0.05};
    ErgodicConfig ergodic;
    FrechetConfig frechet;
    int traj_stride = 4;  // snapshot stride of the dense effective trajectories
};

// Cell machinery at one slow node: linearization coefficient, matrix
// correctors and the effective coefficient. In the nonlinear mode the
// linearization base is D_y^2 w(P) + P at P = D^2 ubar_0, and `base_w` holds
// the corrector w(P) itself.
struct CellNode {
    MatSlab A;                    // coefficient of the linearized cell problems
    std::array<FastSlab, 3> chi;  // matrix correctors, pinned at (0,0)
    SymMat Abar;                  // effective coefficient
    FastSlab base_w;              // nonlinear mode: w(P, x, t, ., .)
    MatSlab base;                 // nonlinear mode: D_y^2 w(P) + P
    SymMat Phat;                  // nonlinear mode: the Hessian base point
};

struct InteriorHierarchy {
    int d = 0;
    int M = 0;  // correctors w~_0..w~_M
    EffectiveMode mode = EffectiveMode::Linearized;
    InteriorConfig cfg;

    std::vector<CellNode> cells;       // [it * nx + ix]
    bool cells_shared = false;         // one entry reused for every node
    std::vector<SlowTraj> ubar;        // k = 0..M
    std::vector<SlabField> phi;        // r = 0..M+2 (phi[0..2] empty; see w2 note)
    std::vector<SlabField> w_slab;     // composed w_r at the slices, r = 0..M+2
    std::vector<MatSlabField> W;       // W_r fields, r = 0..M+2
    std::vector<std::vector<Field>> fbar;  // fbar[r][it] over x nodes
    std::vector<Field> gbar_used;      // the effective data consumed per level

    const CellNode& cell(int it, int ix) const {
        return cells_shared ? cells.front() : cells[it * cfg.slow.size() + ix];
    }
    // fbar_r interpolated across slices
    double fbar_at(int r, int ix, double t) const;
    // w_k(x, t, y, s) with the exact ubar Hessian factor
    double w_value(int k, const Vec2& x, double t, const Vec2& y, double s) const;
    // w~_k = w_k + ubar_k
    double wtilde(int k, const Vec2& x, double t, const Vec2& y, double s) const;
    // fast oscillation of w~_k at a slow node (0 for k <= 1)
    double fast_oscillation(int k, int it, int ix) const;
};

struct InteriorResidualReport {
    std::vector<double> epsilons;
    std::vector<double> sup_psi;
    double eps_order = 0.0;
    double target_order = 0.0;
    bool valid = false;
};

// Builds the interior hierarchy from the effective data sequence.
//  - mode Linearized: ubar_0 solves d_t u = tr(Abar D^2 u) (+ sources upward)
//  - mode Nonlinear:  ubar_0 solves d_t u = Fbar(D^2 u) via the table, and the
//    second corrector is the nonlinear cell corrector at P = D^2 ubar_0
// stageX supplies the bootstrap fields X_{d,k} (empty at the base stage).
// base_field, when given, is the nonzero X_{d,0} of a bootstrap stage: the
// linearization coefficient and the matrix correctors are taken at that base.
InteriorHierarchy build_interior_hierarchy(const FullyNonlinearOp& op,
                                           const std::vector<MatSlabField>& stageX,
                                           const std::vector<Field>& gbar, int M,
                                           EffectiveMode mode,
                                           const EffectiveOperatorTable* table,
                                           const InteriorConfig& cfg,
                                           const MatSlabField* base_field = nullptr);

// scaled residual (theorem pipeline): psi = d_t w~ - eps^{-2} F(eps^2 D^2 w~)
// unscaled residual (nonosc pipeline): psi = d_t w~ - F(D^2 w~)
InteriorResidualReport interior_residual_report(const FullyNonlinearOp& op,
                                                const InteriorHierarchy& h,
                                                const std::vector<double>& epsilons, bool scaled);

}  // namespace phom
