#include "parahom/slabfield.hpp"

#include <cmath>

namespace phom {

SlabField SlabField::zeros(const SlowGrid& xg, const std::vector<double>& ts, const TorusGrid& g,
                           double snap_ds, int count, bool periodic) {
    SlabField f;
    f.xg = xg;
    f.t_slices = ts;
    FastSlab proto;
    proto.grid = g;
    proto.ds = snap_ds;
    proto.periodic = periodic;
    proto.tail = FastSlab::Tail::Zero;
    proto.snaps.assign(count, Field(g.size(), 0.0));
    f.slabs.assign(static_cast<size_t>(f.nt()) * f.nx(), proto);
    return f;
}

SlabField SlabField::zeros_like(const SlabField& proto) {
    SlabField f = proto;
    for (auto& sl : f.slabs)
        for (auto& snap : sl.snaps) std::fill(snap.begin(), snap.end(), 0.0);
    return f;
}

double SlabField::eval(const Vec2& x, double t, const Vec2& y, double s) const {
    if (empty()) return 0.0;
    // periodic linear interpolation in x, polynomial in t across slices
    const int N = xg.Nx;
    auto node_val = [&](int it, int i, int j) {
        return at(it, xg.n == 1 ? xg.wrap(i) : xg.idx(i, j)).value_interp(y, s);
    };
    auto x_val = [&](int it) {
        const double u0 = x[0] / xg.dx();
        const int i0 = static_cast<int>(std::floor(u0));
        const double wi = u0 - i0;
        if (xg.n == 1) return (1.0 - wi) * node_val(it, i0, 0) + wi * node_val(it, i0 + 1, 0);
        const double u1 = x[1] / xg.dx();
        const int j0 = static_cast<int>(std::floor(u1));
        const double wj = u1 - j0;
        return (1.0 - wi) * ((1.0 - wj) * node_val(it, i0, j0) + wj * node_val(it, i0, j0 + 1)) +
               wi * ((1.0 - wj) * node_val(it, i0 + 1, j0) + wj * node_val(it, i0 + 1, j0 + 1));
    };
    (void)N;
    if (nt() == 1) return x_val(0);
    std::vector<double> vals(nt());
    for (int it = 0; it < nt(); ++it) vals[it] = x_val(it);
    return lagrange_value(t_slices, vals, t);
}

double SlabField::max_abs() const {
    double m = 0.0;
    for (const auto& sl : slabs)
        for (const auto& snap : sl.snaps)
            for (double v : snap) m = std::max(m, std::fabs(v));
    return m;
}

std::vector<std::pair<double, double>> SlabField::osc_envelope() const {
    std::vector<std::pair<double, double>> env;
    if (empty()) return env;
    int count = 0;
    for (const auto& sl : slabs) count = std::max(count, sl.count());
    const double ds = slabs.front().ds;
    for (int k = 0; k < count; ++k) {
        double worst = 0.0;
        for (const auto& sl : slabs)
            if (k < sl.count()) worst = std::max(worst, oscillation(sl.snaps[k]));
        env.push_back({k * ds, worst});
    }
    return env;
}

MatSlabField MatSlabField::zeros(int n, const SlabField& proto) {
    MatSlabField m;
    m.n = n;
    for (int c = 0; c < SymMat::comps(n); ++c) m.comp[c] = SlabField::zeros_like(proto);
    return m;
}

SlabField dx_axis(const SlabField& f, int axis) {
    SlabField out = f;
    const double h2 = 2.0 * f.xg.dx();
    for (int it = 0; it < f.nt(); ++it)
        for (int ix = 0; ix < f.nx(); ++ix) {
            int ip, im;
            if (f.xg.n == 1) {
                ip = f.xg.wrap(ix + 1);
                im = f.xg.wrap(ix - 1);
            } else {
                const int i = ix / f.xg.Nx, j = ix % f.xg.Nx;
                ip = axis == 0 ? f.xg.idx(i + 1, j) : f.xg.idx(i, j + 1);
                im = axis == 0 ? f.xg.idx(i - 1, j) : f.xg.idx(i, j - 1);
            }
            const FastSlab &sp = f.at(it, ip), &sm = f.at(it, im);
            FastSlab& dst = out.at(it, ix);
            for (int k = 0; k < dst.count(); ++k) {
                const double s = dst.s_at(k);
                for (int i = 0; i < dst.grid.size(); ++i)
                    dst.snaps[k][i] = (sp.value(i, s) - sm.value(i, s)) / h2;
            }
        }
    return out;
}

SlabField dt_slices(const SlabField& f) {
    SlabField out = f;
    if (f.nt() == 1) {
        for (auto& sl : out.slabs)
            for (auto& snap : sl.snaps) std::fill(snap.begin(), snap.end(), 0.0);
        return out;
    }
    for (int it = 0; it < f.nt(); ++it) {
        const auto w = lagrange_derivative_weights(f.t_slices, it);
        for (int ix = 0; ix < f.nx(); ++ix) {
            FastSlab& dst = out.at(it, ix);
            for (int k = 0; k < dst.count(); ++k) {
                const double s = dst.s_at(k);
                for (int i = 0; i < dst.grid.size(); ++i) {
                    double acc = 0.0;
                    for (int jt = 0; jt < f.nt(); ++jt) acc += w[jt] * f.at(jt, ix).value(i, s);
                    dst.snaps[k][i] = acc;
                }
            }
        }
    }
    return out;
}

SlabField dy_axis(const SlabField& f, int axis) {
    SlabField out = f;
    for (auto& sl : out.slabs) sl = sl.derived_dy(axis);
    return out;
}

MatSlabField fast_hessian(const SlabField& f) {
    MatSlabField m;
    m.n = f.slabs.empty() ? 1 : f.slabs.front().grid.n;
    for (int c = 0; c < SymMat::comps(m.n); ++c) {
        m.comp[c] = f;
        for (auto& sl : m.comp[c].slabs) {
            FastSlab h = sl;
            for (int k = 0; k < sl.count(); ++k)
                for (int i = 0; i < sl.grid.size(); ++i)
                    h.snaps[k][i] = hessian_at(sl.snaps[k], sl.grid, i)[c];
            sl = std::move(h);
        }
    }
    return m;
}

MatSlabField slow_hessian(const SlabField& f) {
    MatSlabField m;
    const int n = f.xg.n;
    m.n = n;
    const double h2 = f.xg.dx() * f.xg.dx();
    for (int c = 0; c < SymMat::comps(n); ++c) m.comp[c] = SlabField::zeros_like(f);
    for (int it = 0; it < f.nt(); ++it)
        for (int ix = 0; ix < f.nx(); ++ix)
            for (int c = 0; c < SymMat::comps(n); ++c) {
                FastSlab& dst = m.comp[c].at(it, ix);
                std::array<int, 4> st{};  // stencil nodes
                if (n == 1) {
                    st = {f.xg.wrap(ix + 1), f.xg.wrap(ix - 1), ix, ix};
                } else {
                    const int i = ix / f.xg.Nx, j = ix % f.xg.Nx;
                    if (c == 0) st = {f.xg.idx(i + 1, j), f.xg.idx(i - 1, j), ix, ix};
                    if (c == 1) st = {f.xg.idx(i, j + 1), f.xg.idx(i, j - 1), ix, ix};
                    if (c == 2)
                        st = {f.xg.idx(i + 1, j + 1), f.xg.idx(i - 1, j - 1), f.xg.idx(i + 1, j - 1),
                              f.xg.idx(i - 1, j + 1)};
                }
                for (int k = 0; k < dst.count(); ++k) {
                    const double s = dst.s_at(k);
                    for (int i = 0; i < dst.grid.size(); ++i) {
                        double v;
                        if (c < 2 || n == 1)
                            v = (f.at(it, st[0]).value(i, s) - 2.0 * f.at(it, ix).value(i, s) +
                                 f.at(it, st[1]).value(i, s)) /
                                h2;
                        else
                            v = (f.at(it, st[0]).value(i, s) + f.at(it, st[1]).value(i, s) -
                                 f.at(it, st[2]).value(i, s) - f.at(it, st[3]).value(i, s)) /
                                (4.0 * h2);
                        dst.snaps[k][i] = v;
                    }
                }
            }
    return m;
}

MatSlabField mixed_slow_fast(const SlabField& f) {
    MatSlabField m;
    const int n = f.xg.n;
    m.n = n;
    if (n == 1) {
        SlabField dxy = dx_axis(dy_axis(f, 0), 0);
        m.comp[0] = dxy;
        for (auto& sl : m.comp[0].slabs) sl.scale(2.0);
        return m;
    }
    std::array<SlabField, 2> dy{dy_axis(f, 0), dy_axis(f, 1)};
    std::array<std::array<SlabField, 2>, 2> dxy;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) dxy[i][j] = dx_axis(dy[j], i);
    // comp (i,j): d_{x_i} d_{y_j} + d_{x_j} d_{y_i}
    m.comp[0] = dxy[0][0];
    for (auto& sl : m.comp[0].slabs) sl.scale(2.0);
    m.comp[1] = dxy[1][1];
    for (auto& sl : m.comp[1].slabs) sl.scale(2.0);
    m.comp[2] = dxy[0][1];
    for (size_t k = 0; k < m.comp[2].slabs.size(); ++k)
        m.comp[2].slabs[k].add_scaled(dxy[1][0].slabs[k], 1.0);
    return m;
}

void add_scaled(SlabField& dst, const SlabField& src, double c) {
    for (size_t k = 0; k < dst.slabs.size(); ++k) dst.slabs[k].add_scaled(src.slabs[k], c);
}

void add_scaled(MatSlabField& dst, const MatSlabField& src, double c) {
    for (int k = 0; k < SymMat::comps(dst.n); ++k) add_scaled(dst.comp[k], src.comp[k], c);
}

std::vector<double> lagrange_derivative_weights(const std::vector<double>& nodes, int j) {
    const int m = static_cast<int>(nodes.size());
    std::vector<double> w(m, 0.0);
    for (int i = 0; i < m; ++i) {
        if (i == j) {
            double acc = 0.0;
            for (int q = 0; q < m; ++q)
                if (q != j) acc += 1.0 / (nodes[j] - nodes[q]);
            w[j] = acc;
        } else {
            double num = 1.0, den = 1.0;
            for (int q = 0; q < m; ++q) {
                if (q == i || q == j) continue;
                num *= (nodes[j] - nodes[q]);
            }
            for (int q = 0; q < m; ++q)
                if (q != i) den *= (nodes[i] - nodes[q]);
            w[i] = num / den;
        }
    }
    return w;
}

double lagrange_value(const std::vector<double>& nodes, const std::vector<double>& values,
                      double t) {
    const int m = static_cast<int>(nodes.size());
    double acc = 0.0;
    for (int i = 0; i < m; ++i) {
        double li = 1.0;
        for (int q = 0; q < m; ++q)
            if (q != i) li *= (t - nodes[q]) / (nodes[i] - nodes[q]);
        acc += li * values[i];
    }
    return acc;
}

}  // namespace phom
