#include "parahom/expansion.hpp"

#include <algorithm>
#include <cmath>

namespace phom {

namespace {

Vec2 wrap_unit(const Vec2& v) {
    Vec2 w{std::fmod(v[0], 1.0), std::fmod(v[1], 1.0)};
    if (w[0] < 0) w[0] += 1.0;
    if (w[1] < 0) w[1] += 1.0;
    return w;
}

Vec2 wrap_L(const Vec2& v, double L) {
    Vec2 w{std::fmod(v[0], L), std::fmod(v[1], L)};
    if (w[0] < 0) w[0] += L;
    if (w[1] < 0) w[1] += L;
    return w;
}

// sum_{l=2}^{k} (1/l!) sum_{i_j >= 1, sum = k} [T_l(lhs tuple) - T_l(rhs tuple)],
// tensors at the given base point
double coupling_pair_sum(const FullyNonlinearOp& op, const Vec2& x, double t, const Vec2& y,
                         double s, int k, const SymMat& base,
                         const std::function<SymMat(int)>& lhs,
                         const std::function<SymMat(int)>& rhs) {
    const auto& comps = compositions_of(k);
    double total = 0.0;
    std::vector<DerivativeTensor> tensors(k + 1);
    std::vector<bool> have(k + 1, false);
    double lfact = 1.0;
    for (int l = 2; l <= k; ++l) {
        lfact *= l;
        double acc = 0.0;
        std::vector<SymMat> a1(l, SymMat(op.n)), a2(l, SymMat(op.n));
        for (const auto& tup : comps[l]) {
            bool nz1 = true, nz2 = true;
            for (int j = 0; j < l; ++j) {
                a1[j] = lhs(tup[j]);
                a2[j] = rhs(tup[j]);
                if (a1[j].norm() == 0.0) nz1 = false;
                if (a2[j].norm() == 0.0) nz2 = false;
            }
            if (!nz1 && !nz2) continue;
            if (!have[l]) {
                tensors[l] = frechet_derivative(op, l, base, x, t, y, s);
                have[l] = true;
            }
            if (nz1) acc += tensors[l].apply(a1);
            if (nz2) acc -= tensors[l].apply(a2);
        }
        total += acc / lfact;
    }
    return total;
}

// stage update per the bootstrap rules: X, Y, f, g for depth d+1
StageData next_stage(const FullyNonlinearOp& op, const StageData& stage,
                     const LayerHierarchy& layer, const InteriorHierarchy& interior, int m,
                     std::vector<CouplingRecord>& couplings) {
    StageData next;
    next.d = stage.d + 1;
    const int d = stage.d;
    const LayerConfig& lc = layer.cfg;
    const TorusGrid& g = lc.fast;
    const SlowGrid& slow = lc.slow;
    const int nt = static_cast<int>(lc.t_slices.size());
    const int nx = slow.size();

    // X_{d+1,k} = X_{d,k} + W_{d,k-2d} (k >= 2d+2), Y_{d+1,k} = Y_{d,k} + V_{d,k-2d}
    next.X.resize(m + 1);
    next.Y.resize(m + 1);
    for (int k = 0; k <= m; ++k) {
        const MatSlabField* Xd = stage.Xk(k);
        const int kw = k - 2 * d;
        const bool addW = kw >= 2 && kw < static_cast<int>(interior.W.size());
        if (Xd || addW) {
            // build on the interior slice layout
            const SlabField proto = SlabField::zeros(
                slow, interior.cfg.t_slices, g, interior.W[2].comp[0].at(0, 0).ds,
                interior.W[2].comp[0].at(0, 0).count(), true);
            MatSlabField X = MatSlabField::zeros(op.n, proto);
            for (int c = 0; c < SymMat::comps(op.n); ++c)
                for (int it = 0; it < static_cast<int>(interior.cfg.t_slices.size()); ++it)
                    for (int ix = 0; ix < nx; ++ix) {
                        FastSlab& dst = X.comp[c].at(it, ix);
                        for (int snap = 0; snap < dst.count(); ++snap) {
                            const double s = dst.s_at(snap);
                            for (int i = 0; i < g.size(); ++i) {
                                double v = 0.0;
                                if (Xd)
                                    v += Xd->eval_node(std::min(it, Xd->comp[c].nt() - 1), ix, i,
                                                       s)[c];
                                if (addW) v += interior.W[kw].eval_node(it, ix, i, s)[c];
                                dst.snaps[snap][i] = v;
                            }
                        }
                    }
            next.X[k] = std::move(X);
        }
    }
    for (int k = 0; k <= m; ++k) {
        const MatSlabField* Yd = stage.Yk(k);
        const int kv = k - 2 * d;
        const bool addV = kv >= 0 && kv < static_cast<int>(layer.V.size());
        if (Yd || addV) {
            const SlabField proto = SlabField::zeros(
                slow, lc.t_slices, g, layer.V[0].comp[0].at(0, 0).ds,
                std::max(layer.V[addV ? kv : 0].comp[0].at(0, 0).count(), 2), false);
            MatSlabField Y = MatSlabField::zeros(op.n, proto);
            for (int c = 0; c < SymMat::comps(op.n); ++c)
                for (int it = 0; it < nt; ++it)
                    for (int ix = 0; ix < nx; ++ix) {
                        FastSlab& dst = Y.comp[c].at(it, ix);
                        dst.tail = FastSlab::Tail::Zero;
                        for (int snap = 0; snap < dst.count(); ++snap) {
                            const double s = dst.s_at(snap);
                            for (int i = 0; i < g.size(); ++i) {
                                double v = 0.0;
                                if (Yd) v += Yd->eval_node(it, ix, i, s)[c];
                                if (addV) v += layer.V[kv].eval_node(it, ix, i, s)[c];
                                dst.snaps[snap][i] = v;
                            }
                        }
                    }
            next.Y[k] = std::move(Y);
        }
    }

    // coupling sources f_{d+1,k} = f1 + f2 per the two Taylor-difference sums,
    // with the derivative tensors taken at the stage-d base X_0+Y_0+V_0
    next.f.resize(m + 1);
    const bool linear_op = op.family == OpFamily::Linear;
    if (!linear_op) {
        for (int k = 2; k <= m; ++k) {
            const SlabField proto = SlabField::zeros(
                slow, lc.t_slices, g, layer.V[0].comp[0].at(0, 0).ds,
                layer.V[0].comp[0].at(0, 0).count() + 4, false);
            SlabField fk = SlabField::zeros_like(proto);
            double max_abs = 0.0;
            for (int it = 0; it < nt; ++it)
                for (int ix = 0; ix < nx; ++ix) {
                    const Vec2 xv = slow.node(ix);
                    const double tv = lc.t_slices[it];
                    FastSlab& dst = fk.at(it, ix);
                    dst.tail = FastSlab::Tail::Zero;
                    for (int snap = 0; snap < dst.count(); ++snap) {
                        const double s = dst.s_at(snap);
                        for (int i = 0; i < g.size(); ++i) {
                            const Vec2 yv = g.node(i);
                            const SymMat M0 =
                                (stage.Xk(0) ? stage.Xk(0)->eval_node(it, ix, i, s)
                                             : SymMat(op.n)) +
                                (stage.Yk(0) ? stage.Yk(0)->eval_node(it, ix, i, s)
                                             : SymMat(op.n)) +
                                layer.V[0].eval_node(it, ix, i, s);
                            auto XY1 = [&](int j) {  // X_{d+1,j} + Y_{d+1,j}
                                SymMat v(op.n);
                                if (next.Xk(j)) v += next.Xk(j)->eval_node(it, ix, i, s);
                                if (next.Yk(j)) v += next.Yk(j)->eval_node(it, ix, i, s);
                                return v;
                            };
                            auto X1 = [&](int j) {
                                return next.Xk(j) ? next.Xk(j)->eval_node(it, ix, i, s)
                                                  : SymMat(op.n);
                            };
                            auto XY2 = [&](int j) {  // X_{d,j} + Y_{d+1,j}
                                SymMat v(op.n);
                                if (stage.Xk(j)) v += stage.Xk(j)->eval_node(it, ix, i, s);
                                if (next.Yk(j)) v += next.Yk(j)->eval_node(it, ix, i, s);
                                return v;
                            };
                            auto X2 = [&](int j) {
                                return stage.Xk(j) ? stage.Xk(j)->eval_node(it, ix, i, s)
                                                   : SymMat(op.n);
                            };
                            double v = coupling_pair_sum(op, xv, tv, yv, s, k, M0, XY1, X1) +
                                       coupling_pair_sum(op, xv, tv, yv, s, k, M0, XY2, X2);
                            dst.snaps[snap][i] = v;
                            max_abs = std::max(max_abs, std::fabs(v));
                        }
                    }
                }
            if (max_abs > 1e-14) {
                CouplingRecord rec;
                rec.depth = d;
                rec.k = k;
                rec.max_abs = max_abs;
                rec.decay = decay_fit(fk.osc_envelope());
                couplings.push_back(rec);
                next.f[k] = std::move(fk);
            }
        }
    }

    // g_{d+1,k}(x, y) = gbar_{d,k+2}(x) - w~_{d,k+2}(x, 0, y, 0)
    const int Kg = m - 2 * d - 2;
    next.g.resize(std::max(0, Kg + 1));
    for (int k = 0; k <= Kg; ++k) {
        GSampler gs;
        gs.zero = false;
        gs.per_x.assign(nx, Field(g.size(), 0.0));
        bool nonzero = false;
        for (int ix = 0; ix < nx; ++ix) {
            const Vec2 xv = slow.node(ix);
            const double gb = layer.levels[k + 2].gbar[ix];
            for (int i = 0; i < g.size(); ++i) {
                const double w0 = interior.wtilde(k + 2, xv, 0.0, g.node(i), 0.0);
                gs.per_x[ix][i] = gb - w0;
                if (std::fabs(gs.per_x[ix][i]) > 1e-14) nonzero = true;
            }
        }
        gs.zero = !nonzero;
        next.g[k] = std::move(gs);
    }
    return next;
}

}  // namespace

double ExpansionAssembly::eval(const Vec2& x, double t, double eps) const {
    AssemblyEvaluator ev(*this, eps);
    ev.prepare(t);
    return ev.full(x);
}

double ExpansionAssembly::eval_interior(const Vec2& x, double t, double eps) const {
    AssemblyEvaluator ev(*this, eps);
    ev.prepare(t);
    return ev.interior_only(x);
}

AssemblyEvaluator::AssemblyEvaluator(const ExpansionAssembly& a, double eps) : a_(a), eps_(eps) {}

void AssemblyEvaluator::prepare(double t) {
    t_ = t;
    depth_cache_.resize(a_.depths.size());
    for (size_t d = 0; d < a_.depths.size(); ++d) {
        const InteriorHierarchy& h = a_.depths[d].interior;
        auto& caches = depth_cache_[d];
        caches.resize(h.M + 1);
        for (int k = 0; k <= h.M; ++k) {
            if (h.ubar[k].snaps.empty()) continue;
            caches[k].ubar_t = h.ubar[k].field_at(t);
            caches[k].hess_t.resize(h.cfg.slow.size());
            for (int ix = 0; ix < h.cfg.slow.size(); ++ix)
                caches[k].hess_t[ix] = hessian_at_slow(caches[k].ubar_t, h.cfg.slow, ix);
        }
    }
    if (a_.prelude) {
        const InteriorHierarchy& h = *a_.prelude;
        prelude_cache_.resize(h.M + 1);
        for (int k = 0; k <= h.M; ++k) {
            if (h.ubar[k].snaps.empty()) continue;
            prelude_cache_[k].ubar_t = h.ubar[k].field_at(t);
            prelude_cache_[k].hess_t.resize(h.cfg.slow.size());
            for (int ix = 0; ix < h.cfg.slow.size(); ++ix)
                prelude_cache_[k].hess_t[ix] =
                    hessian_at_slow(prelude_cache_[k].ubar_t, h.cfg.slow, ix);
        }
    }
}

double AssemblyEvaluator::interior_value(const InteriorHierarchy& h,
                                         const std::vector<LevelCache>& cache, const Vec2& xw,
                                         const Vec2& y, double s, double eps_pow) const {
    const SlowGrid& sg = h.cfg.slow;
    double total = 0.0;
    double ek = eps_pow;
    int it = 0;
    for (int q = 1; q < static_cast<int>(h.cfg.t_slices.size()); ++q)
        if (std::fabs(h.cfg.t_slices[q] - t_) < std::fabs(h.cfg.t_slices[it] - t_)) it = q;
    // slow interpolation weights
    const double u = xw[0] / sg.dx();
    const int i0 = static_cast<int>(std::floor(u));
    const double wgt = u - i0;
    const int ixa = sg.wrap(i0), ixb = sg.wrap(i0 + 1);
    const int ixn = wgt < 0.5 ? ixa : ixb;
    int ixa2 = ixa, ixb2 = ixb;
    if (sg.n == 2) {
        const int j = static_cast<int>(std::lround(xw[1] / sg.dx()));
        ixa2 = sg.idx(i0, j);
        ixb2 = sg.idx(i0 + 1, j);
    }

    for (int k = 0; k <= h.M; ++k) {
        double v = 0.0;
        // ubar_k at (x, t)
        if (!cache[k].ubar_t.empty()) {
            if (sg.n == 1)
                v += (1.0 - wgt) * cache[k].ubar_t[ixa] + wgt * cache[k].ubar_t[ixb];
            else
                v += cache[k].ubar_t[ixn];
        }
        if (k >= 2) {
            if (h.mode == EffectiveMode::Nonlinear && k == 2) {
                v += h.w_slab[2].eval(xw, t_, y, s);
            } else {
                if (!h.phi[k].empty()) v += h.phi[k].eval(xw, t_, y, s);
                if (!cache[k - 2].ubar_t.empty()) {
                    SymMat H(sg.n);
                    if (sg.n == 1)
                        H = (1.0 - wgt) * cache[k - 2].hess_t[ixa] +
                            wgt * cache[k - 2].hess_t[ixb];
                    else
                        H = cache[k - 2].hess_t[ixn];
                    const CellNode& cn = h.cell(it, sg.n == 1 ? ixn : ixa2);
                    for (int c = 0; c < SymMat::comps(cn.A.n); ++c)
                        v += SymMat::comp_mult(c) * cn.chi[c].value_interp(y, s) * H[c];
                }
            }
        }
        total += ek * v;
        ek *= eps_;
    }
    return total;
}

double AssemblyEvaluator::full(const Vec2& x) const {
    double total = interior_only(x);
    const double s = t_ / (eps_ * eps_);
    const Vec2 y = wrap_unit(Vec2{x[0] / eps_, x[1] / eps_});
    for (const auto& dep : a_.depths) {
        const double ep = std::pow(eps_, dep.power);
        const Vec2 xw = wrap_L(x, dep.layer.cfg.slow.L);
        double acc = 0.0, ek = 1.0;
        for (int k = 0; k <= dep.layer.K; ++k) {
            acc += ek * dep.layer.levels[k].vtilde.eval(xw, t_, y, s);
            ek *= eps_;
        }
        total += ep * acc;
    }
    return total;
}

double AssemblyEvaluator::interior_only(const Vec2& x) const {
    double total = 0.0;
    const double s = t_ / (eps_ * eps_);
    const Vec2 y = wrap_unit(Vec2{x[0] / eps_, x[1] / eps_});
    if (a_.prelude) {
        const Vec2 xw = wrap_L(x, a_.prelude->cfg.slow.L);
        total += interior_value(*a_.prelude, prelude_cache_, xw, y, s, 1.0);
    }
    for (size_t d = 0; d < a_.depths.size(); ++d) {
        const auto& dep = a_.depths[d];
        const Vec2 xw = wrap_L(x, dep.interior.cfg.slow.L);
        total += interior_value(dep.interior, depth_cache_[d], xw, y, s,
                                std::pow(eps_, dep.power));
    }
    return total;
}

ExpansionAssembly bootstrap_run(const FullyNonlinearOp& op,
                                const std::function<double(const Vec2&, const Vec2&)>& g, int m,
                                int d_max, const ExpansionConfig& cfg) {
    if (d_max > m / 2) throw ConfigError("bootstrap: d_max must satisfy d_max <= floor(m/2)");
    ExpansionAssembly a;
    a.m = m;
    a.d_max = d_max;
    StageData stage = StageData::base_case(g, cfg.layer.slow, cfg.layer.fast);
    for (int d = 0; d <= d_max; ++d) {
        const int K = m - 2 * d;
        DepthEntry dep;
        dep.power = 2 * d;
        dep.layer = build_layer_hierarchy(op, stage, K, cfg.layer);
        std::vector<Field> gb;
        for (int k = 0; k <= K; ++k) gb.push_back(dep.layer.levels[k].gbar);
        const MatSlabField* base_field =
            !stage.X.empty() && stage.Xk(0) ? stage.Xk(0) : nullptr;
        dep.interior =
            build_interior_hierarchy(op, stage.X, gb, K,
                                     d == 0 ? cfg.mode : EffectiveMode::Linearized,
                                     d == 0 ? cfg.table : nullptr, cfg.interior, base_field);
        a.layer_residuals.push_back(LayerResidualReport{});
        if (d < d_max) {
            StageData nxt = next_stage(op, stage, dep.layer, dep.interior, m, a.couplings);
            a.depths.push_back(std::move(dep));
            stage = std::move(nxt);
        } else {
            a.depths.push_back(std::move(dep));
        }
    }
    return a;
}

ExpansionAssembly nonosc_run(const FullyNonlinearOp& op,
                             const std::function<double(const Vec2&)>& gbar, int m, int d_max,
                             const ExpansionConfig& cfg) {
    if (m < 2) throw ConfigError("nonosc: m must be at least 2");
    ExpansionAssembly a;
    a.m = m;
    a.d_max = d_max;
    const SlowGrid& slow = cfg.interior.slow;
    Field gb0(slow.size());
    for (int ix = 0; ix < slow.size(); ++ix) gb0[ix] = gbar(slow.node(ix));
    std::vector<Field> gb(m + 1, Field(slow.size(), 0.0));
    gb[0] = gb0;
    a.prelude = build_interior_hierarchy(op, {}, gb, m,
                                         cfg.table ? EffectiveMode::Nonlinear
                                                   : EffectiveMode::Linearized,
                                         cfg.table, cfg.interior);

    // remaining oscillatory correction: a scaled stage with X_{0,k} = W_{k+2}
    // and initial data g_{0,k} = -w~_{k+2}(x, 0, y, 0)
    const int m_eff = m - 2;
    StageData stage;
    stage.d = 0;
    stage.X.resize(m_eff + 1);
    for (int k = 0; k <= m_eff; ++k) {
        const int kw = k + 2;
        if (kw < static_cast<int>(a.prelude->W.size())) {
            // reuse the stored W field directly
            stage.X[k] = a.prelude->W[kw];
        }
    }
    const TorusGrid& fast = cfg.layer.fast;
    stage.g.resize(m_eff + 1);
    for (int k = 0; k <= m_eff; ++k) {
        GSampler gs;
        gs.zero = false;
        gs.per_x.assign(slow.size(), Field(fast.size(), 0.0));
        bool nonzero = false;
        for (int ix = 0; ix < slow.size(); ++ix) {
            const Vec2 xv = slow.node(ix);
            for (int i = 0; i < fast.size(); ++i) {
                // the prelude carries gbar_{k+2} = 0 for k+2 >= 1
                gs.per_x[ix][i] = -a.prelude->wtilde(k + 2, xv, 0.0, fast.node(i), 0.0);
                if (std::fabs(gs.per_x[ix][i]) > 1e-14) nonzero = true;
            }
        }
        gs.zero = !nonzero;
        stage.g[k] = std::move(gs);
    }

    const int stage_dmax = std::min(d_max, m_eff / 2);
    for (int d = 0; d <= stage_dmax; ++d) {
        const int K = m_eff - 2 * d;
        DepthEntry dep;
        dep.power = 2 + 2 * d;
        dep.layer = build_layer_hierarchy(op, stage, K, cfg.layer);
        std::vector<Field> gbs;
        for (int k = 0; k <= K; ++k) gbs.push_back(dep.layer.levels[k].gbar);
        const MatSlabField* base_field = stage.Xk(0);
        dep.interior = build_interior_hierarchy(op, stage.X, gbs, K, EffectiveMode::Linearized,
                                                nullptr, cfg.interior, base_field);
        if (d < stage_dmax) {
            StageData nxt = next_stage(op, stage, dep.layer, dep.interior, m_eff, a.couplings);
            a.depths.push_back(std::move(dep));
            stage = std::move(nxt);
        } else {
            a.depths.push_back(std::move(dep));
        }
    }
    return a;
}

// ---- direct eps-problems -------------------------------------------------------

FineTraj solve_eps_problem(const FullyNonlinearOp& op,
                           const std::function<double(const Vec2&, const Vec2&)>& g, double eps,
                           EpsVariant variant, const SlowGrid& domain, const EpsPolicy& policy) {
    FineTraj out;
    out.eps = eps;
    SlowGrid fine = domain;
    fine.Nx = std::max(policy.min_points,
                       static_cast<int>(std::lround(domain.L * policy.points_per_eps / eps)));
    out.grid = fine;

    const int N = fine.size();
    const double dt = cfl_dt_slow(fine, op.Lambda);
    const long long steps = static_cast<long long>(std::ceil(fine.T / dt));
    if (policy.max_node_steps > 0 && steps * N > policy.max_node_steps)
        throw BudgetError("solve_eps_problem: node-count x steps exceeds the configured budget");
    const double dt_eff = fine.T / static_cast<double>(steps);

    // fast coordinates per node
    std::vector<Vec2> ynode(N), xnode(N);
    for (int i = 0; i < N; ++i) {
        xnode[i] = fine.node(i);
        ynode[i] = wrap_unit(Vec2{xnode[i][0] / eps, xnode[i][1] / eps});
    }

    Field cur(N), next(N);
    for (int i = 0; i < N; ++i)
        cur[i] = variant == EpsVariant::NonOsc ? g(xnode[i], Vec2{0, 0}) : g(xnode[i], ynode[i]);

    // snapshot schedule: geometric early refinement plus a uniform tail
    std::vector<long long> schedule;
    {
        const int n_early = policy.stored_snapshots / 2;
        const int n_late = policy.stored_snapshots - n_early;
        const double t_layer = std::min(fine.T, 8.0 * eps * eps * std::fabs(std::log(eps)));
        for (int k = 0; k < n_early; ++k)
            schedule.push_back(static_cast<long long>(std::floor(
                t_layer * (k + 1) / static_cast<double>(n_early) / dt_eff)));
        for (int k = 0; k < n_late; ++k)
            schedule.push_back(static_cast<long long>(std::floor(
                (t_layer + (fine.T - t_layer) * (k + 1) / static_cast<double>(n_late)) / dt_eff)));
        schedule.push_back(steps);
        std::sort(schedule.begin(), schedule.end());
        schedule.erase(std::unique(schedule.begin(), schedule.end()), schedule.end());
    }

    out.times.push_back(0.0);
    out.fields.push_back(cur);
    const double inv_eps2 = 1.0 / (eps * eps);
    size_t sched_pos = 0;
    while (sched_pos < schedule.size() && schedule[sched_pos] == 0) ++sched_pos;
    for (long long k = 0; k < steps; ++k) {
        const double t = k * dt_eff;
        const double s = t * inv_eps2;
        for (int i = 0; i < N; ++i) {
            const SymMat H = hessian_at_slow(cur, fine, i);
            double r;
            switch (variant) {
                case EpsVariant::Scaled:
                    r = inv_eps2 * op.eval((eps * eps) * H, xnode[i], t, ynode[i], s);
                    break;
                default:
                    r = op.eval(H, xnode[i], t, ynode[i], s);
                    break;
            }
            next[i] = cur[i] + dt_eff * r;
        }
        cur.swap(next);
        if (sched_pos < schedule.size() && k + 1 == schedule[sched_pos]) {
            if (!field_finite(cur)) throw SolverError("solve_eps_problem: divergence");
            out.times.push_back((k + 1) * dt_eff);
            out.fields.push_back(cur);
            ++sched_pos;
        }
    }
    if (out.times.back() < fine.T - 0.5 * dt_eff) {
        out.times.push_back(fine.T);
        out.fields.push_back(cur);
    }
    return out;
}

RateRow error_report(const FineTraj& fine, const ExpansionAssembly& assembly, double eps,
                     double c_window) {
    RateRow row;
    row.eps = eps;
    double w0 = c_window * eps * eps * std::fabs(std::log(eps));
    row.window_clamped = w0 > 0.8 * fine.grid.T;
    row.window_start = row.window_clamped ? 0.8 * fine.grid.T : w0;

    AssemblyEvaluator ev(assembly, eps);
    for (size_t k = 0; k < fine.times.size(); ++k) {
        const double t = fine.times[k];
        ev.prepare(t);
        double sup_f = 0.0, sup_i = 0.0;
        for (int i = 0; i < fine.grid.size(); ++i) {
            const Vec2 x = fine.grid.node(i);
            const double u = fine.fields[k][i];
            sup_f = std::max(sup_f, std::fabs(u - ev.full(x)));
            if (t >= row.window_start) sup_i = std::max(sup_i, std::fabs(u - ev.interior_only(x)));
        }
        row.err_full = std::max(row.err_full, sup_f);
        row.err_interior = std::max(row.err_interior, sup_i);
    }
    return row;
}

RateReport rate_fit(const std::vector<RateRow>& rows, double target, double margin) {
    RateReport rep;
    rep.rows = rows;
    rep.target = target;
    rep.margin = margin;
    std::vector<double> lx, lf, li;
    bool exact = true;
    for (const auto& r : rows) {
        if (r.err_full > 1e-13 || r.err_interior > 1e-13) exact = false;
        if (r.err_full > 0 && r.err_interior > 0) {
            lx.push_back(std::log(r.eps));
            lf.push_back(std::log(r.err_full));
            li.push_back(std::log(r.err_interior));
        }
    }
    if (exact) {
        rep.exact = true;
        rep.pass = true;
        return rep;
    }
    if (lx.size() >= 2) {
        rep.slope_full = linear_fit(lx, lf).first;
        rep.slope_interior = linear_fit(lx, li).first;
        rep.pass = rep.slope_interior >= target - margin;
    }
    return rep;
}

double sup_error_vs(const FineTraj& fine, const std::function<double(const Vec2&, double)>& ref,
                    double t_min) {
    double sup = 0.0;
    for (size_t k = 0; k < fine.times.size(); ++k) {
        if (fine.times[k] < t_min) continue;
        for (int i = 0; i < fine.grid.size(); ++i)
            sup = std::max(sup,
                           std::fabs(fine.fields[k][i] - ref(fine.grid.node(i), fine.times[k])));
    }
    return sup;
}

// ---- recession experiment -------------------------------------------------------

RecessionResult recession_experiment(const FullyNonlinearOp& op,
                                     const std::function<double(const Vec2&, const Vec2&)>& g,
                                     const std::vector<double>& epsilons,
                                     const RecessionConfig& cfg) {
    if (!op.recession) throw ConfigError("recession experiment: operator has no recession partner");
    RecessionResult res;
    res.delta = op.recession->delta;
    res.target = std::min(1.0, 2.0 - 2.0 * res.delta);

    // effective initial datum from the recession-operator layer
    LayerConfig lc;
    lc.fast = cfg.fast;
    lc.slow = cfg.slow;
    lc.t_slices = {0.0};
    auto stage = StageData::base_case(g, cfg.slow, cfg.fast);
    auto layer = build_layer_hierarchy(*op.recession->fstar, stage, 0, lc);
    res.gbar = layer.levels[0].gbar;

    // effective operator table of the full operator
    double pmax = 1.0;
    for (int ix = 0; ix < cfg.slow.size(); ++ix)
        pmax = std::max(pmax, hessian_at_slow(res.gbar, cfg.slow, ix).norm());
    TableConfig tcfg = cfg.table;
    tcfg.P_max = std::max(tcfg.P_max, 4.0 * pmax);
    auto table = effective_operator_table(op, cfg.slow, cfg.fast, tcfg, cfg.ergodic);

    EffectiveOp eff = [&table](const SymMat& H, const Vec2& xv, double t) {
        return table.query(H, xv, t);
    };
    SlowPolicy spol;
    spol.snapshot_stride = 4;
    auto ubar = solve_slow_cauchy(cfg.slow, res.gbar, eff, op.Lambda, nullptr, spol);

    std::vector<RateRow> rows;
    for (double eps : epsilons) {
        auto fine = solve_eps_problem(op, g, eps, EpsVariant::Unscaled, cfg.slow, cfg.eps_policy);
        RateRow row;
        row.eps = eps;
        double w0 = cfg.c_window * eps * eps * std::fabs(std::log(eps));
        row.window_clamped = w0 > 0.8 * cfg.slow.T;
        row.window_start = row.window_clamped ? 0.8 * cfg.slow.T : w0;
        auto ref = [&](const Vec2& x, double t) {
            const SlowGrid& sg = cfg.slow;
            const double u = x[0] / sg.dx();
            const int i0 = static_cast<int>(std::floor(u));
            const double wgt = u - i0;
            return (1.0 - wgt) * ubar.value(sg.wrap(i0), t) + wgt * ubar.value(sg.wrap(i0 + 1), t);
        };
        row.err_interior = sup_error_vs(fine, ref, row.window_start);
        row.err_full = row.err_interior;
        rows.push_back(row);
    }
    res.report = rate_fit(rows, res.target);
    return res;
}

// ---- pucci example ----------------------------------------------------------------

PucciExampleResult pucci_gamma_example(double lp, double Lp,
                                       const std::function<double(double)>& phi,
                                       const std::function<double(double)>& psi,
                                       const SlowGrid& slow, const TorusGrid& fast,
                                       const HorizonPolicy& horizon) {
    PucciExampleResult out;
    auto minus = make_pucci_minus(1, lp, Lp);
    // F_+(P) = -F_-(-P), the maximal counterpart
    auto plus = std::make_shared<FullyNonlinearOp>(*minus);
    plus->concave = false;
    plus->evaluator = [lp, Lp](const SymMat& P, const Vec2&, double, const Vec2&, double) {
        SymMat M = P;
        M *= -1.0;
        return -pucci_minus_value(M, lp, Lp);
    };

    Field phi0(fast.size());
    for (int i = 0; i < fast.size(); ++i) phi0[i] = phi(fast.node(i)[0]);

    HorizonPolicy pol = horizon;
    pol.require_convergence = true;
    auto flow_m = solve_fast_cauchy(fast, phi0, make_fast_rhs(*minus, vec1(0), 0, fast),
                                    minus->Lambda, pol);
    auto flow_p =
        solve_fast_cauchy(fast, phi0, make_fast_rhs(*plus, vec1(0), 0, fast), plus->Lambda, pol);
    out.gamma_minus = flow_m.final_mean;
    out.gamma_plus = flow_p.final_mean;
    out.ordered = out.gamma_plus > out.gamma_minus;

    // reconstruction vbar(x) = gamma_- psi on {psi >= 0}, gamma_+ psi on {psi <= 0}
    out.vbar.resize(slow.size());
    std::vector<double> psis(slow.size());
    for (int ix = 0; ix < slow.size(); ++ix) {
        const double p = psi(slow.node(ix)[0]);
        psis[ix] = p;
        out.vbar[ix] = p >= 0.0 ? out.gamma_minus * p : out.gamma_plus * p;
    }

    // full pipeline readout with g = psi(x) phi(y) under the minimal operator
    LayerConfig lc;
    lc.fast = fast;
    lc.slow = slow;
    lc.t_slices = {0.0};
    lc.horizon = pol;
    auto stage = StageData::base_case(
        [&](const Vec2& x, const Vec2& y) { return psi(x[0]) * phi(y[0]); }, slow, fast);
    auto layer = build_layer_hierarchy(*minus, stage, 0, lc);
    out.gbar_pipeline = layer.levels[0].gbar;
    for (int ix = 0; ix < slow.size(); ++ix)
        out.sup_diff = std::max(out.sup_diff, std::fabs(out.gbar_pipeline[ix] - out.vbar[ix]));

    // kink report at the sign changes of psi
    const double dx = slow.dx();
    for (int ix = 0; ix < slow.size(); ++ix) {
        const int jx = slow.wrap(ix + 1);
        if (psis[ix] == 0.0 || psis[ix] * psis[jx] >= 0.0) continue;
        KinkRow row;
        const double frac = psis[ix] / (psis[ix] - psis[jx]);
        row.x0 = slow.node(ix)[0] + frac * dx;
        // one-sided second-order slopes of the pipeline readout
        const Field& v = out.gbar_pipeline;
        const double right = (-3.0 * v[jx] + 4.0 * v[slow.wrap(ix + 2)] - v[slow.wrap(ix + 3)]) /
                             (2.0 * dx);
        const double left =
            (3.0 * v[ix] - 4.0 * v[slow.wrap(ix - 1)] + v[slow.wrap(ix - 2)]) / (2.0 * dx);
        row.measured = std::fabs(right - left);
        const double dpsi = (psi(row.x0 + 1e-5) - psi(row.x0 - 1e-5)) / 2e-5;
        row.predicted = (out.gamma_plus - out.gamma_minus) * std::fabs(dpsi);
        out.kinks.push_back(row);
    }
    return out;
}

}  // namespace phom
