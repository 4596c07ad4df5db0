#include "parahom/stepper.hpp"

#include <algorithm>
#include <cmath>

namespace phom {

double FastSlab::value(int flat, double s) const {
    if (snaps.empty()) return 0.0;
    double sl = s - s0;
    if (periodic) {
        sl = std::fmod(sl, period);
        if (sl < 0) sl += period;
        const double pos = sl / ds;
        const int k0 = static_cast<int>(pos);
        const double w = pos - k0;
        const int k1 = (k0 + 1) % count();
        return (1.0 - w) * snaps[std::min(k0, count() - 1)][flat] + w * snaps[k1][flat];
    }
    if (sl <= 0.0) return snaps.front()[flat];
    const double pos = sl / ds;
    const int k0 = static_cast<int>(pos);
    if (k0 >= count() - 1) return tail == Tail::Zero ? 0.0 : snaps.back()[flat];
    const double w = pos - k0;
    return (1.0 - w) * snaps[k0][flat] + w * snaps[k0 + 1][flat];
}

double FastSlab::value_interp(const Vec2& y, double s) const {
    const int N = grid.Ny;
    auto sample = [&](int i, int j) {
        return value(grid.n == 1 ? grid.wrap(i) : grid.idx(i, j), s);
    };
    double u0 = y[0] * N;
    const int i0 = static_cast<int>(std::floor(u0));
    const double wi = u0 - i0;
    if (grid.n == 1) return (1.0 - wi) * sample(i0, 0) + wi * sample(i0 + 1, 0);
    double u1 = y[1] * N;
    const int j0 = static_cast<int>(std::floor(u1));
    const double wj = u1 - j0;
    return (1.0 - wi) * ((1.0 - wj) * sample(i0, j0) + wj * sample(i0, j0 + 1)) +
           wi * ((1.0 - wj) * sample(i0 + 1, j0) + wj * sample(i0 + 1, j0 + 1));
}

FastSlab FastSlab::constant(const TorusGrid& g, double v) {
    FastSlab s;
    s.grid = g;
    s.ds = 1.0;
    s.periodic = true;
    s.snaps = {Field(g.size(), v)};
    return s;
}

FastSlab FastSlab::map(const std::function<double(double)>& f) const {
    FastSlab out = *this;
    for (auto& snap : out.snaps)
        for (auto& v : snap) v = f(v);
    return out;
}

FastSlab FastSlab::combine(const FastSlab& a, const FastSlab& b,
                           const std::function<double(double, double)>& f) {
    FastSlab out = a;
    for (int k = 0; k < out.count(); ++k) {
        const double s = out.s_at(k);
        for (int i = 0; i < out.grid.size(); ++i) out.snaps[k][i] = f(a.snaps[k][i], b.value(i, s));
    }
    return out;
}

FastSlab FastSlab::derived_dy(int axis) const {
    FastSlab out = *this;
    for (int k = 0; k < count(); ++k)
        for (int i = 0; i < grid.size(); ++i) out.snaps[k][i] = dy_at(snaps[k], grid, i, axis);
    return out;
}

FastSlab FastSlab::derived_dyy() const {
    FastSlab out = *this;
    for (int k = 0; k < count(); ++k)
        for (int i = 0; i < grid.size(); ++i) out.snaps[k][i] = hessian_at(snaps[k], grid, i)[0];
    return out;
}

void FastSlab::add_scaled(const FastSlab& o, double c) {
    for (int k = 0; k < count(); ++k) {
        const double s = s_at(k);
        for (int i = 0; i < grid.size(); ++i) snaps[k][i] += c * o.value(i, s);
    }
}

void FastSlab::scale(double c) {
    for (auto& snap : snaps)
        for (auto& v : snap) v *= c;
}

void FastSlab::shift(double c) {
    for (auto& snap : snaps)
        for (auto& v : snap) v += c;
}

double cfl_ds(const TorusGrid& g, double Lambda) {
    return 0.9 * g.dy() * g.dy() / (2.0 * g.n * Lambda);
}
double cfl_dt_slow(const SlowGrid& g, double Lambda) {
    return 0.9 * g.dx() * g.dx() / (2.0 * g.n * Lambda);
}

void monotone_step(const TorusGrid& g, const Field& in, Field& out, const FastRhs& rhs, double s,
                   double ds) {
    const int N = g.size();
    for (int i = 0; i < N; ++i) out[i] = in[i] + ds * rhs(hessian_at(in, g, i), i, s);
}

FastCauchyResult solve_fast_cauchy(const TorusGrid& g, const Field& g0, const FastRhs& rhs,
                                   double Lambda, const HorizonPolicy& policy) {
    if (Lambda <= 0.0) throw ConfigError("solve_fast_cauchy: Lambda must be positive");
    FastCauchyResult res;
    res.traj.grid = g;
    res.traj.ds = policy.snap_ds;
    res.rhs_traj.grid = g;
    res.rhs_traj.ds = policy.snap_ds;
    res.rhs_traj.tail = FastSlab::Tail::Zero;
    auto record_rhs = [&](const Field& f, double sv) {
        if (!policy.record_rhs) return;
        Field r(f.size());
        for (int i = 0; i < g.size(); ++i) r[i] = rhs(hessian_at(f, g, i), i, sv);
        res.rhs_traj.snaps.push_back(std::move(r));
    };

    // integer number of steps per snapshot keeps snapshots exactly on the grid
    const double ds_cfl = cfl_ds(g, Lambda);
    const int steps_per_snap = std::max(1, static_cast<int>(std::ceil(policy.snap_ds / ds_cfl)));
    const double ds = policy.snap_ds / steps_per_snap;

    Field cur = g0, next(g0.size());
    double osc_ref = std::max(oscillation(cur), policy.osc_tol_abs);

    res.traj.snaps.push_back(cur);
    res.osc_samples.push_back({0.0, oscillation(cur)});
    record_rhs(cur, 0.0);

    double s = 0.0;
    const int max_snaps = static_cast<int>(std::ceil(policy.S_cap / policy.snap_ds));
    for (int snap = 0; snap < max_snaps; ++snap) {
        for (int k = 0; k < steps_per_snap; ++k) {
            monotone_step(g, cur, next, rhs, s, ds);
            cur.swap(next);
            s += ds;
        }
        if (!field_finite(cur)) throw SolverError("solve_fast_cauchy: divergence");
        res.traj.snaps.push_back(cur);
        record_rhs(cur, s);
        const double osc = oscillation(cur);
        res.osc_samples.push_back({s, osc});
        if (policy.peak_reference) osc_ref = std::max(osc_ref, osc);
        const double tol = std::max(policy.osc_tol_rel * osc_ref, policy.osc_tol_abs);
        if (osc < tol && snap + 1 >= policy.min_snaps) {
            res.converged = true;
            break;
        }
    }
    res.final_osc = oscillation(cur);
    res.final_mean = field_mean(cur);
    res.final_at_origin = cur[0];
    if (!res.converged && policy.require_convergence)
        throw SolverError("solve_fast_cauchy: horizon exhausted before oscillation tolerance "
                          "(final osc " +
                          std::to_string(res.final_osc) + ")");
    return res;
}

FastRhs make_fast_rhs(const FullyNonlinearOp& op, const Vec2& x, double t, const TorusGrid& g) {
    return [&op, x, t, g](const SymMat& H, int flat, double s) {
        return op.eval(H, x, t, g.node(flat), s);
    };
}

FastRhs make_shifted_rhs(const FullyNonlinearOp& op, const Vec2& x, double t, const TorusGrid& g,
                         const std::function<SymMat(int, double)>& shift,
                         const std::function<double(int, double)>& source) {
    return [&op, x, t, g, shift, source](const SymMat& H, int flat, double s) {
        const SymMat sh = shift(flat, s);
        const Vec2 y = g.node(flat);
        double r = op.eval(H + sh, x, t, y, s) - op.eval(sh, x, t, y, s);
        if (source) r += source(flat, s);
        return r;
    };
}

FastRhs make_linear_rhs(const TorusGrid& g, const std::function<SymMat(int, double)>& coeff,
                        const std::function<double(int, double)>& source) {
    (void)g;
    return [coeff, source](const SymMat& H, int flat, double s) {
        double r = trace_product(coeff(flat, s), H);
        if (source) r += source(flat, s);
        return r;
    };
}

void check_cross_monotonicity(const FullyNonlinearOp& op, int samples, uint64_t seed) {
    if (op.n != 2) return;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0), up(-4.0, 4.0);
    for (int k = 0; k < samples; ++k) {
        SymMat P(2);
        P[0] = up(rng);
        P[1] = up(rng);
        P[2] = 0.5 * up(rng);
        const Vec2 x{u(rng), u(rng)}, y{u(rng), u(rng)};
        const double t = 0.05 * u(rng), s = u(rng);
        const SymMat A = op.d1 ? op.d1(P, x, t, y, s)
                               : frechet_derivative(op, 1, P, x, t, y, s).as_matrix();
        const double off = std::fabs(A[2]);
        if (A[0] < off - 1e-10 || A[1] < off - 1e-10)
            throw ConfigError(
                "cross-derivative stencil loses monotonicity: sampled D_pF is not "
                "diagonally dominant");
    }
}

// ---- slow trajectories -----------------------------------------------------

double SlowTraj::value(int flat, double t) const {
    if (snaps.empty()) return 0.0;
    if (t <= times.front()) return snaps.front()[flat];
    if (t >= times.back()) return snaps.back()[flat];
    const double pos = (t - times.front()) / (times[1] - times[0]);
    int k0 = std::min(static_cast<int>(pos), static_cast<int>(snaps.size()) - 2);
    const double w = (t - times[k0]) / (times[k0 + 1] - times[k0]);
    return (1.0 - w) * snaps[k0][flat] + w * snaps[k0 + 1][flat];
}

Field SlowTraj::field_at(double t) const {
    Field f(grid.size());
    for (int i = 0; i < grid.size(); ++i) f[i] = value(i, t);
    return f;
}

SymMat SlowTraj::hessian(int flat, double t) const {
    Field f = field_at(t);
    return hessian_at_slow(f, grid, flat);
}

double SlowTraj::dt_value(int flat, double t) const {
    if (snaps.size() < 2) return 0.0;
    const double h = times[1] - times[0];
    if (t <= times.front() + h)
        return (value(flat, times.front() + h) - value(flat, times.front())) / h;
    if (t >= times.back() - h) return (value(flat, times.back()) - value(flat, times.back() - h)) / h;
    return (value(flat, t + h) - value(flat, t - h)) / (2.0 * h);
}

SlowTraj solve_slow_cauchy(const SlowGrid& g, const Field& g0, const EffectiveOp& op,
                           double Lambda, const std::function<double(const Vec2&, double)>& source,
                           const SlowPolicy& policy) {
    SlowTraj traj;
    traj.grid = g;
    const double dt_cfl = cfl_dt_slow(g, Lambda);
    const long long nsteps = std::max<long long>(1, static_cast<long long>(std::ceil(g.T / dt_cfl)));
    traj.dt = g.T / static_cast<double>(nsteps);
    traj.stride = policy.snapshot_stride;
    if (policy.max_node_steps > 0 && nsteps * g.size() > policy.max_node_steps)
        throw BudgetError("solve_slow_cauchy: node-count x steps exceeds the configured budget");

    Field cur = g0, next(g0.size());
    traj.snaps.push_back(cur);
    traj.times.push_back(0.0);
    for (long long k = 0; k < nsteps; ++k) {
        const double t = k * traj.dt;
        for (int i = 0; i < g.size(); ++i) {
            const SymMat H = hessian_at_slow(cur, g, i);
            const Vec2 xv = g.node(i);
            double r = op(H, xv, t);
            if (source) r += source(xv, t);
            next[i] = cur[i] + traj.dt * r;
        }
        cur.swap(next);
        if ((k + 1) % policy.snapshot_stride == 0 || k + 1 == nsteps) {
            if (!field_finite(cur)) throw SolverError("solve_slow_cauchy: divergence");
            traj.snaps.push_back(cur);
            traj.times.push_back((k + 1) * traj.dt);
        }
    }
    return traj;
}

}  // namespace phom
