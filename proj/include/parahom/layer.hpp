#pragma once

#include "parahom/slabfield.hpp"

namespace phom {

// Initial data g_{d,k}(x, y) sampled per slow x-node on the fast torus.
struct GSampler {
    bool zero = true;
    std::vector<Field> per_x;  // index by slow node

    static GSampler zeros() { return GSampler{}; }
    const Field* field(int ix) const { return zero ? nullptr : &per_x[ix]; }
};

// Per-stage driving data of the bootstrap: X (space-time periodic), Y
// (spatially periodic, decaying in s), sources f (decaying) and initial data g.
// Missing entries are identically zero.
struct StageData {
    int d = 0;
    std::vector<MatSlabField> X;
    std::vector<MatSlabField> Y;
    std::vector<SlabField> f;
    std::vector<GSampler> g;

    const MatSlabField* Xk(int k) const {
        return k < static_cast<int>(X.size()) && !X[k].empty() ? &X[k] : nullptr;
    }
    const MatSlabField* Yk(int k) const {
        return k < static_cast<int>(Y.size()) && !Y[k].empty() ? &Y[k] : nullptr;
    }
    const SlabField* fk(int k) const {
        return k < static_cast<int>(f.size()) && !f[k].empty() ? &f[k] : nullptr;
    }
    const GSampler* gk(int k) const {
        return k < static_cast<int>(g.size()) && !g[k].zero ? &g[k] : nullptr;
    }
    bool trivial() const;

    static StageData base_case(const std::function<double(const Vec2&, const Vec2&)>& g0,
                               const SlowGrid& slow, const TorusGrid& fast);
};

struct LayerConfig {
    TorusGrid fast{1, 64};
    SlowGrid slow{1, 64, 1.0, 0.05};
    std::vector<double> t_slices{0.0};
    HorizonPolicy horizon{8.0, 1e-8, 1e-13, 1.0 / 32.0, true};
    FrechetConfig frechet{};
};

struct LayerLevel {
    SlabField vtilde;            // decaying corrector, one slab per slow node
    SlabField ds_vtilde;         // discrete d_s v along the trajectory
    std::vector<Field> vbar;     // the subtracted limits per t-slice
    Field gbar;                  // effective initial data (t = 0 slice, spatial-mean readout)
    Field gbar_origin;           // the y = 0 readout, recorded for comparison
    DecayFit beta;               // decay rate of the level
    DecayFit source_decay;       // decay of the driving source (levels >= 1)
    bool source_decay_ok = true;
};

struct LayerResidualReport {
    std::vector<double> epsilons;
    std::vector<double> sup_psi;      // sup over samples per epsilon
    double eps_order = 0.0;           // fitted order in epsilon
    double target_order = 0.0;        // m - 2d - 1
    double beta_fit = 0.0;            // fitted decay in s at the smallest epsilon
    bool valid = false;
};

struct LayerHierarchy {
    int d = 0;
    int K = 0;  // levels 0..K
    std::vector<LayerLevel> levels;
    std::vector<MatSlabField> V;  // V_k = D_y^2 v_k + sym mixed v_{k-1} + D_x^2 v_{k-2}
    // partial_V[k] = sym mixed v_k + D_x^2 v_{k-1}: the known part of V_{k+1}
    std::vector<MatSlabField> partial_V;
    std::vector<SlabField> dt_vtilde;  // slow time derivative per level
    LayerConfig cfg;

    const SlabField& vtilde(int k) const { return levels[k].vtilde; }
    // evaluate sum_k eps^k vtilde_k(x, t, x/eps, t/eps^2)
    double assembled(const Vec2& x, double t, double eps) const;
};

// Taylor coefficient machinery: coefficient of eps^k in
//   F(M0 + sum_i eps^i G_i, .) - F(N0 + sum_i eps^i Z_i, .)  + f_k,
// with G_i, Z_i given for 1 <= i <= k (index 0 of the spans is G_1).
// For k = 0 this is F(M0) - F(N0) + f_0.
double stage_phi_k(const FullyNonlinearOp& op, const Vec2& x, double t, const Vec2& y, double s,
                   int k, const std::vector<SymMat>& G, const SymMat& M0,
                   const std::vector<SymMat>& Z, const SymMat& N0, double f_k,
                   const FrechetConfig& fc = {});

// ordered compositions of k into l parts >= 1 (cached)
const std::vector<std::vector<std::vector<int>>>& compositions_of(int k);

LayerHierarchy build_layer_hierarchy(const FullyNonlinearOp& op, const StageData& stage, int K,
                                     const LayerConfig& cfg);

// residual of the assembled expansion in the stage equation, sampled over eps
LayerResidualReport layer_residual_report(const FullyNonlinearOp& op, const StageData& stage,
                                          const LayerHierarchy& h,
                                          const std::vector<double>& epsilons);

}  // namespace phom
