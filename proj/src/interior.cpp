#include "parahom/interior.hpp"

#include <algorithm>
#include <cmath>

namespace phom {

namespace {

double factorial(int l) {
    double f = 1.0;
    for (int i = 2; i <= l; ++i) f *= i;
    return f;
}

// multilinear tail sum_{l>=2} (1/l!) sum_{tuples, i_j >= i_min} of
// T_l(lhs args) - T_l(rhs args), with T_l = D_p^l F(base)
double interior_tail(const FullyNonlinearOp& op, const Vec2& x, double t, const Vec2& y, double s,
                     int r, int i_min, const SymMat& base,
                     const std::function<SymMat(int)>& lhs_arg,
                     const std::function<SymMat(int)>& rhs_arg, bool has_rhs,
                     const FrechetConfig& fc) {
    const auto& comps = compositions_of(r);
    double total = 0.0;
    std::vector<DerivativeTensor> tensors(r + 1);
    std::vector<bool> have(r + 1, false);
    for (int l = 2; l <= r; ++l) {
        double acc = 0.0;
        std::vector<SymMat> a1(l, SymMat(op.n)), a2(l, SymMat(op.n));
        for (const auto& tup : comps[l]) {
            bool admissible = true;
            for (int j = 0; j < l; ++j) admissible = admissible && tup[j] >= i_min;
            if (!admissible) continue;
            bool nz1 = true, nz2 = has_rhs;
            for (int j = 0; j < l; ++j) {
                a1[j] = lhs_arg(tup[j]);
                if (a1[j].norm() == 0.0) nz1 = false;
                if (has_rhs) {
                    a2[j] = rhs_arg(tup[j]);
                    if (a2[j].norm() == 0.0) nz2 = false;
                }
            }
            if (!nz1 && !nz2) continue;
            if (!have[l]) {
                tensors[l] = frechet_derivative(op, l, base, x, t, y, s, fc);
                have[l] = true;
            }
            if (nz1) acc += tensors[l].apply(a1);
            if (nz2) acc -= tensors[l].apply(a2);
        }
        total += acc / factorial(l);
    }
    return total;
}

}  // namespace

double InteriorHierarchy::fbar_at(int r, int ix, double t) const {
    if (r >= static_cast<int>(fbar.size()) || fbar[r].empty()) return 0.0;
    const int nt = static_cast<int>(cfg.t_slices.size());
    if (nt == 1) return fbar[r][0][ix];
    std::vector<double> vals(nt);
    for (int it = 0; it < nt; ++it) vals[it] = fbar[r][it][ix];
    return lagrange_value(cfg.t_slices, vals, t);
}

double InteriorHierarchy::w_value(int k, const Vec2& x, double t, const Vec2& y, double s) const {
    if (k < 2 || k > M + 2) return 0.0;
    if (mode == EffectiveMode::Nonlinear && k == 2) return w_slab[2].eval(x, t, y, s);
    double v = phi[k].empty() ? 0.0 : phi[k].eval(x, t, y, s);
    const int kk = k - 2;
    if (kk <= M && !ubar[kk].snaps.empty()) {
        const SlowGrid& sg = cfg.slow;
        const Field ft = ubar[kk].field_at(t);
        SymMat H(sg.n);
        int ixn;
        if (sg.n == 1) {
            const double u = x[0] / sg.dx();
            const int i0 = static_cast<int>(std::floor(u));
            const double wgt = u - i0;
            H = (1.0 - wgt) * hessian_at_slow(ft, sg, sg.wrap(i0)) +
                wgt * hessian_at_slow(ft, sg, sg.wrap(i0 + 1));
            ixn = sg.wrap(static_cast<int>(std::lround(u)));
        } else {
            ixn = sg.idx(static_cast<int>(std::lround(x[0] / sg.dx())),
                         static_cast<int>(std::lround(x[1] / sg.dx())));
            H = hessian_at_slow(ft, sg, ixn);
        }
        int it = 0;
        for (int q = 1; q < static_cast<int>(cfg.t_slices.size()); ++q)
            if (std::fabs(cfg.t_slices[q] - t) < std::fabs(cfg.t_slices[it] - t)) it = q;
        const CellNode& cn = cell(it, ixn);
        for (int c = 0; c < SymMat::comps(cn.A.n); ++c)
            v += SymMat::comp_mult(c) * cn.chi[c].value_interp(y, s) * H[c];
    }
    return v;
}

double InteriorHierarchy::wtilde(int k, const Vec2& x, double t, const Vec2& y, double s) const {
    double v = w_value(k, x, t, y, s);
    if (k <= M && !ubar[k].snaps.empty()) {
        const SlowGrid& sg = cfg.slow;
        if (sg.n == 1) {
            const double u = x[0] / sg.dx();
            const int i0 = static_cast<int>(std::floor(u));
            const double wgt = u - i0;
            v += (1.0 - wgt) * ubar[k].value(sg.wrap(i0), t) +
                 wgt * ubar[k].value(sg.wrap(i0 + 1), t);
        } else {
            v += ubar[k].value(sg.idx(static_cast<int>(std::lround(x[0] / sg.dx())),
                                      static_cast<int>(std::lround(x[1] / sg.dx()))),
                               t);
        }
    }
    return v;
}

double InteriorHierarchy::fast_oscillation(int k, int it, int ix) const {
    if (k < 0 || k > M + 2 || w_slab[k].empty()) return 0.0;
    const FastSlab& sl = w_slab[k].at(it, ix);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& snap : sl.snaps) {
        lo = std::min(lo, field_min(snap));
        hi = std::max(hi, field_max(snap));
    }
    return hi - lo;
}

InteriorHierarchy build_interior_hierarchy(const FullyNonlinearOp& op,
                                           const std::vector<MatSlabField>& stageX,
                                           const std::vector<Field>& gbar, int M,
                                           EffectiveMode mode,
                                           const EffectiveOperatorTable* table,
                                           const InteriorConfig& cfg,
                                           const MatSlabField* base_field) {
    if (static_cast<int>(gbar.size()) < M + 1)
        throw ConfigError("interior: effective data sequence shorter than the hierarchy order");
    if (mode == EffectiveMode::Nonlinear && table == nullptr)
        throw ConfigError("interior: nonlinear mode requires an effective operator table");
    if (cfg.t_slices.empty() || cfg.t_slices.front() != 0.0)
        throw ConfigError("interior: the first t slice must be t = 0");

    InteriorHierarchy h;
    h.M = M;
    h.mode = mode;
    h.cfg = cfg;
    h.gbar_used.assign(gbar.begin(), gbar.begin() + (M + 1));
    const TorusGrid& g = cfg.fast;
    const SlowGrid& slow = cfg.slow;
    const int nt = static_cast<int>(cfg.t_slices.size());
    const int nx = slow.size();
    bool have_stage_fields = base_field != nullptr;
    for (const auto& m_ : stageX)
        if (!m_.empty()) have_stage_fields = true;
    const int i_min = mode == EffectiveMode::Nonlinear ? 3 : (have_stage_fields ? 1 : 2);
    const bool slow_indep = !op.slow_x_dependent && !op.slow_t_dependent && !base_field;

    auto stageXk = [&](int k) -> const MatSlabField* {
        return k < static_cast<int>(stageX.size()) && !stageX[k].empty() ? &stageX[k] : nullptr;
    };
    bool have_stageX = false;
    for (const auto& m : stageX)
        if (!m.empty()) have_stageX = true;

    const SlabField proto =
        SlabField::zeros(slow, cfg.t_slices, g, 1.0 / cfg.ergodic.Ns, cfg.ergodic.Ns, true);

    SlowPolicy spol;
    spol.snapshot_stride = cfg.traj_stride;
    h.ubar.resize(M + 1);
    h.phi.assign(M + 3, SlabField{});
    h.w_slab.assign(M + 3, SlabField{});
    h.W.assign(M + 3, MatSlabField{});
    h.fbar.assign(M + 3, {});

    auto nearest_slice = [&](double t) {
        int it = 0;
        for (int q = 1; q < nt; ++q)
            if (std::fabs(cfg.t_slices[q] - t) < std::fabs(cfg.t_slices[it] - t)) it = q;
        return it;
    };
    auto node_of = [&](const Vec2& xv) {
        return slow.n == 1 ? slow.wrap(static_cast<int>(std::lround(xv[0] / slow.dx())))
                           : slow.idx(static_cast<int>(std::lround(xv[0] / slow.dx())),
                                      static_cast<int>(std::lround(xv[1] / slow.dx())));
    };
    EffectiveOp eff_lin = [&h, nearest_slice, node_of](const SymMat& H, const Vec2& xv, double t) {
        return trace_product(h.cell(nearest_slice(t), node_of(xv)).Abar, H);
    };

    if (mode == EffectiveMode::Linearized) {
        h.cells_shared = slow_indep;
        const int cell_count = h.cells_shared ? 1 : nt * nx;
        h.cells.resize(cell_count);
        for (int c = 0; c < cell_count; ++c) {
            const int it = h.cells_shared ? 0 : c / nx;
            const int ix = h.cells_shared ? 0 : c % nx;
            if (base_field) {
                // linearize at the stage base X_{d,0}(x, t, ., .)
                CellNode& cn = h.cells[c];
                cn.base.n = op.n;
                for (int cc = 0; cc < SymMat::comps(op.n); ++cc)
                    cn.base.comp[cc] = base_field->comp[cc].at(
                        std::min(it, base_field->comp[cc].nt() - 1), ix);
                cn.A = linearized_coefficient(op, slow.node(ix), cfg.t_slices[it], g, cfg.ergodic,
                                              &cn.base);
                for (int cc = 0; cc < SymMat::comps(op.n); ++cc) {
                    const SymMat E = SymMat::basis(op.n, cc);
                    const MatSlab& A = cn.A;
                    FastRhs rhs = [&A, E](const SymMat& H, int flat, double s) {
                        return trace_product(A.eval(flat, s), H + E);
                    };
                    auto flow = ergodic_flow_slope(g, rhs, op.Lambda, cfg.ergodic);
                    cn.Abar[cc] = flow.gamma;
                    cn.chi[cc] = std::move(flow.profile);
                }
            } else {
                auto mc = matrix_corrector(op, slow.node(ix), cfg.t_slices[it], g, cfg.ergodic);
                h.cells[c].A = std::move(mc.A);
                h.cells[c].chi = std::move(mc.chi);
                h.cells[c].Abar = mc.Abar;
            }
        }
        h.ubar[0] = solve_slow_cauchy(slow, gbar[0], eff_lin, op.Lambda, nullptr, spol);
    } else {
        EffectiveOp eff_tab = [table](const SymMat& H, const Vec2& xv, double t) {
            return table->query(H, xv, t);
        };
        h.ubar[0] = solve_slow_cauchy(slow, gbar[0], eff_tab, op.Lambda, nullptr, spol);
        h.cells_shared = false;
        h.cells.resize(static_cast<size_t>(nt) * nx);
        for (int it = 0; it < nt; ++it) {
            const Field ft = h.ubar[0].field_at(cfg.t_slices[it]);
            for (int ix = 0; ix < nx; ++ix) {
                CellNode& cn = h.cells[static_cast<size_t>(it) * nx + ix];
                const Vec2 xv = slow.node(ix);
                const double tv = cfg.t_slices[it];
                cn.Phat = hessian_at_slow(ft, slow, ix);
                auto sol =
                    ergodic_constant(op, cn.Phat, xv, tv, CellMethod::LongTimeSlope, g, cfg.ergodic);
                cn.base_w = std::move(sol.w);
                cn.base.n = op.n;
                for (int c = 0; c < SymMat::comps(op.n); ++c) cn.base.comp[c] = cn.base_w;
                for (int snap = 0; snap < cn.base_w.count(); ++snap)
                    for (int i = 0; i < g.size(); ++i) {
                        const SymMat Hw = hessian_at(cn.base_w.snaps[snap], g, i);
                        for (int c = 0; c < SymMat::comps(op.n); ++c)
                            cn.base.comp[c].snaps[snap][i] = Hw[c] + cn.Phat[c];
                    }
                cn.A = linearized_coefficient(op, xv, tv, g, cfg.ergodic, &cn.base);
                for (int c = 0; c < SymMat::comps(op.n); ++c) {
                    const SymMat E = SymMat::basis(op.n, c);
                    const MatSlab& A = cn.A;
                    FastRhs rhs = [&A, E](const SymMat& H, int flat, double s) {
                        return trace_product(A.eval(flat, s), H + E);
                    };
                    auto flow = ergodic_flow_slope(g, rhs, op.Lambda, cfg.ergodic);
                    cn.Abar[c] = flow.gamma;
                    cn.chi[c] = std::move(flow.profile);
                }
            }
        }
    }

    for (int k = 0; k <= std::min(1, M + 2); ++k) {
        h.w_slab[k] = SlabField::zeros_like(proto);
        h.W[k] = MatSlabField::zeros(op.n, proto);
    }

    for (int r = 2; r <= M + 2; ++r) {
        const int kk = r - 2;

        // ---- f_r at the slices (identically zero at r = 2) ------------------
        SlabField f_r = SlabField::zeros_like(proto);
        bool f_r_nonzero = false;
        if (r >= 3) {
            MatSlabField mixed_prev = mixed_slow_fast(h.w_slab[r - 1]);
            MatSlabField sh_prev2 = slow_hessian(h.w_slab[r - 2]);
            SlabField dt_prev2 = dt_slices(h.w_slab[r - 2]);
            for (int it = 0; it < nt; ++it)
                for (int ix = 0; ix < nx; ++ix) {
                    const Vec2 xv = slow.node(ix);
                    const double tv = cfg.t_slices[it];
                    const CellNode& cn = h.cell(it, ix);
                    FastSlab& dst = f_r.at(it, ix);
                    for (int snap = 0; snap < dst.count(); ++snap) {
                        const double s = dst.s_at(snap);
                        for (int i = 0; i < g.size(); ++i) {
                            const SymMat A = cn.A.eval(i, s);
                            SymMat grad = mixed_prev.eval_node(it, ix, i, s);
                            grad += sh_prev2.eval_node(it, ix, i, s);
                            double val = trace_product(A, grad);
                            val -= dt_prev2.at(it, ix).value(i, s);
                            if (r >= 2 * i_min) {
                                const SymMat base = (mode == EffectiveMode::Nonlinear || base_field)
                                                        ? cn.base.eval(i, s)
                                                        : SymMat::zero(op.n);
                                auto lhs_arg = [&](int j) {
                                    SymMat m = j <= M + 2 ? h.W[j].eval_node(it, ix, i, s)
                                                          : SymMat(op.n);
                                    if (const auto* X = stageXk(j))
                                        m += X->eval_node(it, ix, i, s);
                                    return m;
                                };
                                auto rhs_arg = [&](int j) {
                                    return stageXk(j) ? stageXk(j)->eval_node(it, ix, i, s)
                                                      : SymMat(op.n);
                                };
                                val += interior_tail(op, xv, tv, g.node(i), s, r, i_min, base,
                                                     lhs_arg, rhs_arg, have_stageX, cfg.frechet);
                            }
                            dst.snaps[snap][i] = val;
                            if (std::fabs(val) > 1e-300) f_r_nonzero = true;
                        }
                    }
                }
        }

        // ---- driven cells ----------------------------------------------------
        h.fbar[r].assign(nt, Field(nx, 0.0));
        h.phi[r] = SlabField::zeros_like(proto);
        if (f_r_nonzero) {
            for (int it = 0; it < nt; ++it)
                for (int ix = 0; ix < nx; ++ix) {
                    auto res = driven_cell(h.cell(it, ix).A, f_r.at(it, ix), g, cfg.ergodic);
                    h.fbar[r][it][ix] = res.fbar;
                    h.phi[r].at(it, ix) = std::move(res.phi);
                }
        }

        // ---- effective problem for ubar_{r-2} --------------------------------
        if (kk <= M && kk >= 1) {
            std::function<double(const Vec2&, double)> src;
            if (f_r_nonzero)
                src = [&h, r, node_of](const Vec2& xv, double t) {
                    return h.fbar_at(r, node_of(xv), t);
                };
            h.ubar[kk] = solve_slow_cauchy(slow, gbar[kk], eff_lin, op.Lambda, src, spol);
        }

        // ---- compose w_r at the slices ---------------------------------------
        h.w_slab[r] = SlabField::zeros_like(proto);
        if (mode == EffectiveMode::Nonlinear && r == 2) {
            for (int it = 0; it < nt; ++it)
                for (int ix = 0; ix < nx; ++ix) {
                    const CellNode& cn = h.cell(it, ix);
                    FastSlab& dst = h.w_slab[2].at(it, ix);
                    for (int snap = 0; snap < dst.count(); ++snap)
                        for (int i = 0; i < g.size(); ++i)
                            dst.snaps[snap][i] = cn.base_w.value(i, dst.s_at(snap));
                }
        } else {
            for (int it = 0; it < nt; ++it) {
                Field u_at;
                if (kk <= M && !h.ubar[kk].snaps.empty())
                    u_at = h.ubar[kk].field_at(cfg.t_slices[it]);
                for (int ix = 0; ix < nx; ++ix) {
                    const CellNode& cn = h.cell(it, ix);
                    SymMat H(op.n);
                    if (!u_at.empty()) H = hessian_at_slow(u_at, slow, ix);
                    FastSlab& dst = h.w_slab[r].at(it, ix);
                    const FastSlab& ph = h.phi[r].at(it, ix);
                    for (int snap = 0; snap < dst.count(); ++snap) {
                        const double s = dst.s_at(snap);
                        for (int i = 0; i < g.size(); ++i) {
                            double v = f_r_nonzero ? ph.value(i, s) : 0.0;
                            for (int c = 0; c < SymMat::comps(op.n); ++c)
                                v += SymMat::comp_mult(c) * cn.chi[c].value(i, s) * H[c];
                            dst.snaps[snap][i] = v;
                        }
                    }
                }
            }
        }

        // ---- W_r --------------------------------------------------------------
        MatSlabField Wr = fast_hessian(h.w_slab[r]);
        add_scaled(Wr, mixed_slow_fast(h.w_slab[r - 1]), 1.0);
        add_scaled(Wr, slow_hessian(h.w_slab[r - 2]), 1.0);
        if (kk <= M && !h.ubar[kk].snaps.empty()) {
            for (int it = 0; it < nt; ++it) {
                const Field u_at = h.ubar[kk].field_at(cfg.t_slices[it]);
                for (int ix = 0; ix < nx; ++ix) {
                    const SymMat H = hessian_at_slow(u_at, slow, ix);
                    for (int c = 0; c < SymMat::comps(op.n); ++c)
                        Wr.comp[c].at(it, ix).shift(H[c]);
                }
            }
        }
        h.W[r] = std::move(Wr);
    }
    return h;
}

InteriorResidualReport interior_residual_report(const FullyNonlinearOp& op,
                                                const InteriorHierarchy& h,
                                                const std::vector<double>& epsilons, bool scaled) {
    InteriorResidualReport rep;
    rep.epsilons = epsilons;
    rep.target_order = static_cast<double>(h.M) - 1.0;
    const TorusGrid& g = h.cfg.fast;
    const SlowGrid& slow = h.cfg.slow;
    const int nt = static_cast<int>(h.cfg.t_slices.size());

    std::vector<SlabField> dtw(h.M + 1);
    std::vector<MatSlabField> FH(h.M + 1), MX(h.M + 1), SH(h.M + 1);
    for (int k = 0; k <= h.M; ++k) {
        dtw[k] = dt_slices(h.w_slab[k]);
        FH[k] = fast_hessian(h.w_slab[k]);
        MX[k] = mixed_slow_fast(h.w_slab[k]);
        SH[k] = slow_hessian(h.w_slab[k]);
        if (!h.ubar[k].snaps.empty()) {
            for (int it = 0; it < nt; ++it) {
                const Field u_at = h.ubar[k].field_at(h.cfg.t_slices[it]);
                for (int ix = 0; ix < slow.size(); ++ix) {
                    const SymMat H = hessian_at_slow(u_at, slow, ix);
                    for (int c = 0; c < SymMat::comps(op.n); ++c)
                        SH[k].comp[c].at(it, ix).shift(H[c]);
                }
            }
        }
    }

    const double t_probe = 0.5 * slow.T;
    int it_probe = 0;
    for (int q = 1; q < nt; ++q)
        if (std::fabs(h.cfg.t_slices[q] - t_probe) < std::fabs(h.cfg.t_slices[it_probe] - t_probe))
            it_probe = q;
    const double tv = h.cfg.t_slices[it_probe];

    for (double eps : epsilons) {
        double sup = 0.0;
        for (int ix = 0; ix < slow.size(); ix += std::max(1, slow.size() / 16)) {
            const Vec2 xv = slow.node(ix);
            const FastSlab& probe = h.w_slab[2].at(it_probe, ix);
            for (int snap = 0; snap < std::max(1, probe.count()); snap += 4)
                for (int i = 0; i < g.size(); i += std::max(1, g.size() / 16)) {
                    const double s = probe.count() ? probe.s_at(snap) : 0.0;
                    const Vec2 yv = g.node(i);
                    double dt_total = 0.0;
                    SymMat arg(op.n);
                    double ek = 1.0;
                    for (int k = 0; k <= h.M; ++k) {
                        double dt_k =
                            h.ubar[k].snaps.empty() ? 0.0 : h.ubar[k].dt_value(ix, tv);
                        dt_k += dtw[k].at(it_probe, ix).value(i, s);
                        if (k >= 2) {
                            const FastSlab& wsl = h.w_slab[k].at(it_probe, ix);
                            const double dss = wsl.ds;
                            const double dsv =
                                (wsl.value(i, s + dss) - wsl.value(i, s - dss)) / (2.0 * dss);
                            dt_total += ek * dsv / (eps * eps);
                        }
                        dt_total += ek * dt_k;
                        SymMat piece = FH[k].eval_node(it_probe, ix, i, s);
                        piece += eps * MX[k].eval_node(it_probe, ix, i, s);
                        piece += (eps * eps) * SH[k].eval_node(it_probe, ix, i, s);
                        arg += ek * piece;
                        ek *= eps;
                    }
                    const double rhs_val = scaled
                                               ? op.eval(arg, xv, tv, yv, s) / (eps * eps)
                                               : op.eval((1.0 / (eps * eps)) * arg, xv, tv, yv, s);
                    sup = std::max(sup, std::fabs(dt_total - rhs_val));
                }
        }
        rep.sup_psi.push_back(sup);
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
    return rep;
}

}  // namespace phom
