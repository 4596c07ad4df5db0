#pragma once

#include "parahom/ergodic.hpp"

namespace phom {

// A function of (x, t, y, s): one FastSlab per slow node (t-slice, x-node).
// All slabs of a field share the torus grid and the s-sample layout.
struct SlabField {
    SlowGrid xg;
    std::vector<double> t_slices{0.0};
    std::vector<FastSlab> slabs;

    int nt() const { return static_cast<int>(t_slices.size()); }
    int nx() const { return xg.size(); }
    int node(int it, int ix) const { return it * nx() + ix; }
    FastSlab& at(int it, int ix) { return slabs[node(it, ix)]; }
    const FastSlab& at(int it, int ix) const { return slabs[node(it, ix)]; }
    bool empty() const { return slabs.empty(); }

    static SlabField zeros(const SlowGrid& xg, const std::vector<double>& ts, const TorusGrid& g,
                           double snap_ds, int count, bool periodic);
    static SlabField zeros_like(const SlabField& proto);

    // evaluate with wrap in x and interpolation in (t, y, s)
    double eval(const Vec2& x, double t, const Vec2& y, double s) const;

    double max_abs() const;
    // max over slow nodes of the fast-spatial oscillation at each s sample
    std::vector<std::pair<double, double>> osc_envelope() const;
};

// SymMat-valued field over (x, t, y, s), stored per component
struct MatSlabField {
    int n = 1;
    std::array<SlabField, 3> comp;

    bool empty() const { return comp[0].empty(); }
    SymMat eval_node(int it, int ix, int flat, double s) const {
        SymMat m(n);
        if (empty()) return m;
        for (int c = 0; c < SymMat::comps(n); ++c) m[c] = comp[c].at(it, ix).value(flat, s);
        return m;
    }
    static MatSlabField zeros(int n, const SlabField& proto);
};

// derivative helpers; all fields must share layouts
SlabField dx_axis(const SlabField& f, int axis);            // central slow x-derivative
SlabField dt_slices(const SlabField& f);                    // polynomial derivative across slices
SlabField dy_axis(const SlabField& f, int axis);            // central fast derivative
MatSlabField fast_hessian(const SlabField& f);              // D_y^2
MatSlabField slow_hessian(const SlabField& f);              // D_x^2
MatSlabField mixed_slow_fast(const SlabField& f);           // D_x D_y + D_y D_x
void add_scaled(SlabField& dst, const SlabField& src, double c);
void add_scaled(MatSlabField& dst, const MatSlabField& src, double c);

// weights of the Lagrange derivative at node j over arbitrary distinct nodes
std::vector<double> lagrange_derivative_weights(const std::vector<double>& nodes, int j);
// value/derivative of polynomial interpolation through (nodes, values) at t
double lagrange_value(const std::vector<double>& nodes, const std::vector<double>& values,
                      double t);

}  // namespace phom
