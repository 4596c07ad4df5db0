#include "parahom/layer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

namespace phom {

bool StageData::trivial() const {
    for (const auto& m : X)
        if (!m.empty()) return false;
    for (const auto& m : Y)
        if (!m.empty()) return false;
    for (const auto& s : f)
        if (!s.empty()) return false;
    return true;
}

StageData StageData::base_case(const std::function<double(const Vec2&, const Vec2&)>& g0,
                               const SlowGrid& slow, const TorusGrid& fast) {
    StageData st;
    st.d = 0;
    GSampler gs;
    gs.zero = false;
    gs.per_x.resize(slow.size());
    for (int ix = 0; ix < slow.size(); ++ix) {
        gs.per_x[ix].resize(fast.size());
        for (int i = 0; i < fast.size(); ++i) gs.per_x[ix][i] = g0(slow.node(ix), fast.node(i));
    }
    st.g.push_back(std::move(gs));
    return st;
}

const std::vector<std::vector<std::vector<int>>>& compositions_of(int k) {
    static std::map<int, std::vector<std::vector<std::vector<int>>>> cache;
    auto it = cache.find(k);
    if (it != cache.end()) return it->second;
    std::vector<std::vector<std::vector<int>>> comps(k + 1);
    std::vector<int> cur;
    std::function<void(int, int)> rec = [&](int rem, int parts) {
        if (rem == 0) {
            comps[parts].push_back(cur);
            return;
        }
        for (int i = 1; i <= rem; ++i) {
            cur.push_back(i);
            rec(rem - i, parts + 1);
            cur.pop_back();
        }
    };
    rec(k, 0);
    return cache.emplace(k, std::move(comps)).first->second;
}

namespace {

double factorial(int l) {
    double f = 1.0;
    for (int i = 2; i <= l; ++i) f *= i;
    return f;
}

// sum over l >= 1 of (1/l!) sum over ordered tuples i_1+...+i_l = k of
// D_p^l F(base)(inc_{i_1}, ..., inc_{i_l})
double taylor_sum(const FullyNonlinearOp& op, const Vec2& x, double t, const Vec2& y, double s,
                  int k, const std::vector<SymMat>& inc, const SymMat& base,
                  const FrechetConfig& fc) {
    bool all_zero = true;
    for (const auto& m : inc)
        if (m.norm() > 0.0) all_zero = false;
    if (all_zero) return 0.0;

    const auto& comps = compositions_of(k);
    double total = 0.0;
    std::vector<DerivativeTensor> tensors(k + 1);
    std::vector<bool> have(k + 1, false);
    std::vector<SymMat> args;
    for (int l = 1; l <= k; ++l) {
        if (comps[l].empty()) continue;
        double acc = 0.0;
        args.assign(l, SymMat(op.n));
        for (const auto& tuple : comps[l]) {
            bool nil = false;
            for (int j = 0; j < l && !nil; ++j) {
                args[j] = inc[tuple[j] - 1];
                if (args[j].norm() == 0.0) nil = true;
            }
            if (nil) continue;
            if (!have[l]) {
                tensors[l] = frechet_derivative(op, l, base, x, t, y, s, fc);
                have[l] = true;
            }
            acc += tensors[l].apply(args);
        }
        total += acc / factorial(l);
    }
    return total;
}

SymMat mat_at(const MatSlabField* m, int it, int ix, int flat, double s, int n) {
    return m ? m->eval_node(it, ix, flat, s) : SymMat(n);
}

}  // namespace

double stage_phi_k(const FullyNonlinearOp& op, const Vec2& x, double t, const Vec2& y, double s,
                   int k, const std::vector<SymMat>& G, const SymMat& M0,
                   const std::vector<SymMat>& Z, const SymMat& N0, double f_k,
                   const FrechetConfig& fc) {
    if (k == 0) return op.eval(M0, x, t, y, s) - op.eval(N0, x, t, y, s) + f_k;
    double v = taylor_sum(op, x, t, y, s, k, G, M0, fc);
    if (!Z.empty()) v -= taylor_sum(op, x, t, y, s, k, Z, N0, fc);
    return v + f_k;
}

double LayerHierarchy::assembled(const Vec2& x, double t, double eps) const {
    const double L = cfg.slow.L;
    Vec2 y{std::fmod(x[0] / eps, 1.0), std::fmod(x[1] / eps, 1.0)};
    if (y[0] < 0) y[0] += 1.0;
    if (y[1] < 0) y[1] += 1.0;
    const double s = t / (eps * eps);
    Vec2 xw{std::fmod(x[0], L), std::fmod(x[1], L)};
    if (xw[0] < 0) xw[0] += L;
    if (xw[1] < 0) xw[1] += L;
    double acc = 0.0, ek = 1.0;
    for (int k = 0; k <= K; ++k) {
        acc += ek * levels[k].vtilde.eval(xw, t, y, s);
        ek *= eps;
    }
    return acc;
}

LayerHierarchy build_layer_hierarchy(const FullyNonlinearOp& op, const StageData& stage, int K,
                                     const LayerConfig& cfg) {
    if (cfg.t_slices.empty() || cfg.t_slices.front() != 0.0)
        throw ConfigError("layer: the first t slice must be t = 0");
    LayerHierarchy h;
    h.d = stage.d;
    h.K = K;
    h.cfg = cfg;
    const TorusGrid& g = cfg.fast;
    const SlowGrid& slow = cfg.slow;
    const int nt = static_cast<int>(cfg.t_slices.size());
    const int nx = slow.size();
    const bool stage_fields = !stage.trivial();

    HorizonPolicy pol = cfg.horizon;
    pol.require_convergence = false;
    pol.record_rhs = true;
    const int max_count = static_cast<int>(std::ceil(pol.S_cap / pol.snap_ds)) + 1;

    for (int k = 0; k <= K; ++k) {
        LayerLevel lvl;
        lvl.vtilde = SlabField::zeros(slow, cfg.t_slices, g, pol.snap_ds, 1, false);
        lvl.ds_vtilde = SlabField::zeros(slow, cfg.t_slices, g, pol.snap_ds, 1, false);
        lvl.vbar.assign(nt, Field(nx, 0.0));
        lvl.gbar.assign(nx, 0.0);
        lvl.gbar_origin.assign(nx, 0.0);

        std::vector<std::pair<double, double>> src_env;
        for (int i = 0; i < max_count; ++i) src_env.push_back({i * pol.snap_ds, 0.0});
        bool any_unconverged = false;
        double worst_final_osc = 0.0;

        const MatSlabField* X0 = stage.Xk(0);
        const MatSlabField* Y0 = stage.Yk(0);

        for (int it = 0; it < nt; ++it) {
            for (int ix = 0; ix < nx; ++ix) {
                const Vec2 x = slow.node(ix);
                const double t = cfg.t_slices[it];
                const SlabField* fk_stage = stage.fk(k);

                Field init(g.size(), 0.0);
                if (const GSampler* gs = stage.gk(k)) init = gs->per_x[ix];

                FastCauchyResult res;
                if (k == 0) {
                    auto shift = [&](int flat, double s) {
                        return mat_at(X0, it, ix, flat, s, op.n) +
                               mat_at(Y0, it, ix, flat, s, op.n);
                    };
                    std::function<double(int, double)> src;
                    if (fk_stage) {
                        const FastSlab& fs = fk_stage->at(it, ix);
                        src = [&fs](int flat, double s) { return fs.value(flat, s); };
                    }
                    FastRhs rhs;
                    if (X0 || Y0 || src)
                        rhs = make_shifted_rhs(op, x, t, g, shift, src);
                    else
                        rhs = make_fast_rhs(op, x, t, g);
                    res = solve_fast_cauchy(g, init, rhs, op.Lambda, pol);
                } else {
                    // coefficient slab B = D_pF(Z_0 + V_0) over the full horizon
                    const int nB = max_count;
                    MatSlab B;
                    B.n = op.n;
                    for (int c = 0; c < SymMat::comps(op.n); ++c) {
                        B.comp[c].grid = g;
                        B.comp[c].ds = pol.snap_ds;
                        B.comp[c].snaps.assign(nB, Field(g.size(), 0.0));
                        B.comp[c].tail = FastSlab::Tail::Clamp;
                    }
                    // source horizon: longest ingredient slab
                    int nS = 2;
                    for (int j = std::max(0, k - 2); j < k; ++j)
                        nS = std::max(nS, h.levels[j].vtilde.at(it, ix).count() + 2);
                    for (int j = 1; j <= k; ++j) {
                        if (const MatSlabField* Yj = stage.Yk(j))
                            nS = std::max(nS, Yj->comp[0].at(it, ix).count() + 2);
                        if (const SlabField* fj = stage.fk(j))
                            nS = std::max(nS, fj->at(it, ix).count() + 2);
                    }
                    if (stage_fields && Y0) nS = std::max(nS, Y0->comp[0].at(it, ix).count() + 2);
                    nS = std::min(nS, nB);
                    FastSlab fsrc;
                    fsrc.grid = g;
                    fsrc.ds = pol.snap_ds;
                    fsrc.tail = FastSlab::Tail::Zero;
                    fsrc.snaps.assign(nS, Field(g.size(), 0.0));

                    std::vector<SymMat> G(k, SymMat(op.n)), Z;
                    for (int snap = 0; snap < nB; ++snap) {
                        const double s = snap * pol.snap_ds;
                        for (int i = 0; i < g.size(); ++i) {
                            const Vec2 y = g.node(i);
                            const SymMat Z0v = mat_at(X0, it, ix, i, s, op.n) +
                                               mat_at(Y0, it, ix, i, s, op.n);
                            const SymMat M0 = Z0v + h.V[0].eval_node(it, ix, i, s);
                            const SymMat Bv =
                                op.d1 ? op.d1(M0, x, t, y, s)
                                      : frechet_derivative(op, 1, M0, x, t, y, s, cfg.frechet)
                                            .as_matrix();
                            for (int c = 0; c < SymMat::comps(op.n); ++c)
                                B.comp[c].snaps[snap][i] = Bv[c];
                            if (snap >= nS) continue;

                            // recursion source: f_k + c_k[F(M0 + sum G)] -
                            // c_k[F(Z0 + sum Z)] - d_t v_{k-2}, with the unknown
                            // D_y^2 v_k left out of G_k
                            const SymMat Vk_partial =
                                h.partial_V[k - 1].eval_node(it, ix, i, s);
                            for (int j = 1; j <= k; ++j) {
                                SymMat Zj = mat_at(stage.Xk(j), it, ix, i, s, op.n) +
                                            mat_at(stage.Yk(j), it, ix, i, s, op.n);
                                G[j - 1] = Zj;
                                if (j < k)
                                    G[j - 1] += h.V[j].eval_node(it, ix, i, s);
                                else
                                    G[j - 1] += Vk_partial;
                            }
                            double val = taylor_sum(op, x, t, y, s, k, G, M0, cfg.frechet);
                            if (stage_fields) {
                                Z.assign(k, SymMat(op.n));
                                for (int j = 1; j <= k; ++j)
                                    Z[j - 1] = mat_at(stage.Xk(j), it, ix, i, s, op.n) +
                                               mat_at(stage.Yk(j), it, ix, i, s, op.n);
                                val -= taylor_sum(op, x, t, y, s, k, Z, Z0v, cfg.frechet);
                            }
                            if (k >= 2) val -= h.dt_vtilde[k - 2].at(it, ix).value(i, s);
                            if (fk_stage) val += fk_stage->at(it, ix).value(i, s);
                            fsrc.snaps[snap][i] = val;
                        }
                    }
                    for (int snap = 0; snap < nS; ++snap)
                        src_env[snap].second = std::max(
                            src_env[snap].second, oscillation(fsrc.snaps[snap]) +
                                                      std::fabs(field_mean(fsrc.snaps[snap])));

                    FastRhs rhs = make_linear_rhs(
                        g, [&B](int flat, double s) { return B.eval(flat, s); },
                        [&fsrc](int flat, double s) { return fsrc.value(flat, s); });
                    res = solve_fast_cauchy(g, init, rhs, op.Lambda, pol);
                }

                if (!res.converged) {
                    any_unconverged = true;
                    worst_final_osc = std::max(worst_final_osc, res.final_osc);
                }
                const double gamma = res.final_mean;
                lvl.vbar[it][ix] = gamma;
                if (it == 0) {
                    lvl.gbar[ix] = gamma;
                    lvl.gbar_origin[ix] = res.final_at_origin;
                }
                FastSlab vt = std::move(res.traj);
                vt.tail = FastSlab::Tail::Zero;
                for (auto& snap : vt.snaps)
                    for (auto& v : snap) v -= gamma;
                lvl.vtilde.at(it, ix) = std::move(vt);
                lvl.ds_vtilde.at(it, ix) = std::move(res.rhs_traj);
            }
        }

        if (any_unconverged)
            throw SolverError("layer level " + std::to_string(k) +
                              ": horizon exhausted before oscillation tolerance (worst osc " +
                              std::to_string(worst_final_osc) + ")");

        lvl.beta = decay_fit(lvl.vtilde.osc_envelope());
        if (k >= 1) {
            while (src_env.size() > 5 && src_env.back().second == 0.0) src_env.pop_back();
            lvl.source_decay = decay_fit(src_env);
            lvl.source_decay_ok = !lvl.source_decay.valid || lvl.source_decay.all_zero ||
                                  lvl.source_decay.beta > 0.0;
        }
        h.levels.push_back(std::move(lvl));

        const SlabField& vt_k = h.levels[k].vtilde;
        MatSlabField Vk = fast_hessian(vt_k);
        if (k >= 1) add_scaled(Vk, mixed_slow_fast(h.levels[k - 1].vtilde), 1.0);
        if (k >= 2) add_scaled(Vk, slow_hessian(h.levels[k - 2].vtilde), 1.0);
        h.V.push_back(std::move(Vk));

        MatSlabField pv = mixed_slow_fast(vt_k);
        if (k >= 1) add_scaled(pv, slow_hessian(h.levels[k - 1].vtilde), 1.0);
        h.partial_V.push_back(std::move(pv));
        h.dt_vtilde.push_back(dt_slices(vt_k));
    }
    return h;
}

LayerResidualReport layer_residual_report(const FullyNonlinearOp& op, const StageData& stage,
                                          const LayerHierarchy& h,
                                          const std::vector<double>& epsilons) {
    LayerResidualReport rep;
    rep.epsilons = epsilons;
    rep.target_order = static_cast<double>(h.K) - 2.0 * h.d - 1.0;
    const TorusGrid& g = h.cfg.fast;
    const SlowGrid& slow = h.cfg.slow;
    const int it = 0;
    const double t = 0.0;
    const double dsn = h.cfg.horizon.snap_ds;

    std::vector<std::pair<double, double>> decay_smallest;
    for (double eps : epsilons) {
        double sup = 0.0;
        int count = 4;
        for (int ix = 0; ix < slow.size(); ++ix)
            count = std::max(count, h.levels[0].vtilde.at(it, ix).count());
        std::vector<std::pair<double, double>> decay;
        for (int snap = 1; snap + 1 < count; ++snap) {
            const double s = snap * dsn;
            double sup_s = 0.0;
            for (int ix = 0; ix < slow.size(); ix += std::max(1, slow.size() / 16)) {
                const Vec2 x = slow.node(ix);
                for (int i = 0; i < g.size(); i += std::max(1, g.size() / 16)) {
                    const Vec2 y = g.node(i);
                    double lhs = 0.0;  // eps^2 d_t of the assembled expansion
                    SymMat arg(op.n), Zsum(op.n);
                    double fsum = 0.0;
                    double ek = 1.0;
                    for (int k = 0; k <= h.K; ++k) {
                        const double dsv = h.levels[k].ds_vtilde.at(it, ix).value(i, s);
                        lhs += ek * (dsv + eps * eps * h.dt_vtilde[k].at(it, ix).value(i, s));
                        const SymMat Zk = mat_at(stage.Xk(k), it, ix, i, s, op.n) +
                                          mat_at(stage.Yk(k), it, ix, i, s, op.n);
                        arg += ek * (Zk + h.V[k].eval_node(it, ix, i, s));
                        Zsum += ek * Zk;
                        if (const SlabField* fj = stage.fk(k))
                            fsum += ek * fj->at(it, ix).value(i, s);
                        ek *= eps;
                    }
                    arg += ek * h.partial_V[h.K].eval_node(it, ix, i, s);
                    const double rhs_val =
                        op.eval(arg, x, t, y, s) - op.eval(Zsum, x, t, y, s) + fsum;
                    sup_s = std::max(sup_s, std::fabs(lhs - rhs_val) / (eps * eps));
                }
            }
            decay.push_back({s, sup_s});
            sup = std::max(sup, sup_s);
        }
        rep.sup_psi.push_back(sup);
        if (eps == epsilons.back()) decay_smallest = decay;
    }
    std::vector<double> lx, ly;
    for (size_t i = 0; i < epsilons.size(); ++i) {
        if (rep.sup_psi[i] <= 0) continue;
        lx.push_back(std::log(epsilons[i]));
        ly.push_back(std::log(rep.sup_psi[i]));
    }
    if (lx.size() >= 2) {
        rep.eps_order = linear_fit(lx, ly).first;
        rep.valid = true;
    }
    if (!decay_smallest.empty()) rep.beta_fit = decay_fit(decay_smallest).beta;
    return rep;
}

}  // namespace phom
