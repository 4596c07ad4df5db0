#pragma once

#include <functional>

#include "parahom/grid.hpp"
#include "parahom/operators.hpp"

namespace phom {

// Node-wise right hand side G(H, node, s) of a fast flow; node is the flat
// torus index. Built from an operator with (x,t) bound, a matrix shift, a
// penalization term, or a source, as the caller needs.
using FastRhs = std::function<double(const SymMat&, int, double)>;

// Samples of a function of fast time on the torus grid, uniformly spaced in s.
// Periodic slabs wrap s modulo the period; decaying slabs clamp to zero (the
// stored fields are differences from their limit) beyond the last snapshot.
struct FastSlab {
    enum class Tail { Clamp, Zero };

    TorusGrid grid;
    double s0 = 0.0;
    double ds = 0.0;
    bool periodic = false;
    double period = 1.0;
    Tail tail = Tail::Clamp;  // behaviour past the last snapshot (non-periodic slabs)
    std::vector<Field> snaps;

    int count() const { return static_cast<int>(snaps.size()); }
    double s_at(int k) const { return s0 + k * ds; }
    double s_end() const { return snaps.empty() ? s0 : s_at(count() - 1); }

    // linear interpolation in s at a grid node
    double value(int flat, double s) const;
    // multilinear interpolation in (y, s); y in torus coordinates
    double value_interp(const Vec2& y, double s) const;

    static FastSlab constant(const TorusGrid& g, double v);
    FastSlab map(const std::function<double(double)>& f) const;
    // node-wise combination of two slabs with matching layout
    static FastSlab combine(const FastSlab& a, const FastSlab& b,
                            const std::function<double(double, double)>& f);
    FastSlab derived_dy(int axis) const;   // central first fast derivative
    FastSlab derived_dyy() const;          // component slab of D_y^2 (n=1)
    void add_scaled(const FastSlab& o, double c);
    void scale(double c);
    void shift(double c);
};

double cfl_ds(const TorusGrid& g, double Lambda);
double cfl_dt_slow(const SlowGrid& g, double Lambda);

// One explicit monotone Euler step: out = in + ds * (G(H(in), node, s)).
// The CFL bound ds <= dy^2 / (2 n Lambda) must hold (checked by callers).
void monotone_step(const TorusGrid& g, const Field& in, Field& out, const FastRhs& rhs,
                   double s, double ds);

struct HorizonPolicy {
    double S_cap = 8.0;          // hard horizon cap
    double osc_tol_rel = 1e-8;   // stop once osc < rel * reference osc
    double osc_tol_abs = 1e-13;  // and this absolute floor
    double snap_ds = 1.0 / 32.0; // snapshot spacing
    bool require_convergence = true;
    // reference = peak oscillation seen so far (handles zero data driven by a
    // source); with false the reference is the initial oscillation
    bool peak_reference = true;
    int min_snaps = 2;
    bool record_rhs = false;  // also record rhs(v) at snapshots (discrete d_s v)
};

struct FastCauchyResult {
    FastSlab traj;
    FastSlab rhs_traj;  // filled when policy.record_rhs is set
    std::vector<std::pair<double, double>> osc_samples;
    bool converged = false;
    double final_osc = 0.0;
    double final_mean = 0.0;     // spatial mean of the final snapshot
    double final_at_origin = 0.0;
};

// Explicit solve of  v_s = rhs(D_y^2 v, node, s)  from v(.,0) = g0.
FastCauchyResult solve_fast_cauchy(const TorusGrid& g, const Field& g0, const FastRhs& rhs,
                                   double Lambda, const HorizonPolicy& policy);

// rhs builders
FastRhs make_fast_rhs(const FullyNonlinearOp& op, const Vec2& x, double t, const TorusGrid& g);
// F(H + shift(node,s), .) - F(shift(node,s), .) + source(node, s)
FastRhs make_shifted_rhs(const FullyNonlinearOp& op, const Vec2& x, double t, const TorusGrid& g,
                         const std::function<SymMat(int, double)>& shift,
                         const std::function<double(int, double)>& source);
// tr(B(node,s) H) + source(node,s)
FastRhs make_linear_rhs(const TorusGrid& g, const std::function<SymMat(int, double)>& coeff,
                        const std::function<double(int, double)>& source);

// n=2 cross-stencil monotonicity: the 4-point cross term stays monotone only
// under diagonal dominance of the sampled linearization; raises ConfigError.
void check_cross_monotonicity(const FullyNonlinearOp& op, int samples = 200,
                              uint64_t seed = 99);

// ---- slow problems ---------------------------------------------------------

using EffectiveOp = std::function<double(const SymMat&, const Vec2&, double)>;

struct SlowTraj {
    SlowGrid grid;
    double dt = 0.0;
    int stride = 1;           // snapshots every `stride` steps
    std::vector<Field> snaps; // snaps[k] at t = k * stride * dt (last one at T)
    std::vector<double> times;

    const Field& at(int k) const { return snaps[k]; }
    double value(int flat, double t) const;      // linear interpolation in t
    Field field_at(double t) const;
    SymMat hessian(int flat, double t) const;    // discrete slow Hessian, interpolated
    double dt_value(int flat, double t) const;   // time derivative via snapshots
};

struct SlowPolicy {
    int snapshot_stride = 1;
    long long max_node_steps = 0;  // 0: no budget guard
};

SlowTraj solve_slow_cauchy(const SlowGrid& g, const Field& g0, const EffectiveOp& op,
                           double Lambda, const std::function<double(const Vec2&, double)>& source,
                           const SlowPolicy& policy = {});

}  // namespace phom
