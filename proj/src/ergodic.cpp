#include "parahom/ergodic.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace phom {

namespace {

// integrate exactly one fast period (length 1), optionally with the
// penalization term -delta * w. The step count is rounded up to a multiple of
// Ns so that recorded phases sit exactly on the phase grid j/Ns.
void integrate_period(const TorusGrid& g, Field& w, const FastRhs& rhs, double Lambda,
                      double delta, double s_start, int Ns, std::vector<Field>* phases = nullptr) {
    const double ds_cfl = cfl_ds(g, Lambda);
    int steps = std::max(1, static_cast<int>(std::ceil(1.0 / ds_cfl)));
    steps = (steps + Ns - 1) / Ns * Ns;
    const double ds = 1.0 / steps;
    const int stride = steps / Ns;
    const int N = g.size();
    Field next(N);
    for (int k = 0; k < steps; ++k) {
        const double s = s_start + k * ds;
        if (phases && k % stride == 0) phases->push_back(w);
        for (int i = 0; i < N; ++i) {
            double r = rhs(hessian_at(w, g, i), i, s);
            if (delta > 0.0) r -= delta * w[i];
            next[i] = w[i] + ds * r;
        }
        w.swap(next);
    }
}

}  // namespace

ErgodicFlowResult ergodic_flow_slope(const TorusGrid& g, const FastRhs& rhs, double Lambda,
                                     const ErgodicConfig& cfg) {
    ErgodicFlowResult res;
    const int N = g.size();
    Field z(N, 0.0);
    Field prev = z;
    double g_prev = std::numeric_limits<double>::quiet_NaN();
    int stable = 0;
    int period = 0;
    for (; period < cfg.max_periods; ++period) {
        integrate_period(g, z, rhs, Lambda, 0.0, static_cast<double>(period), cfg.Ns);
        double inc_mean = 0.0, inc_min = std::numeric_limits<double>::infinity(),
               inc_max = -inc_min;
        for (int i = 0; i < N; ++i) {
            const double inc = z[i] - prev[i];
            inc_mean += inc;
            inc_min = std::min(inc_min, inc);
            inc_max = std::max(inc_max, inc);
        }
        inc_mean /= N;
        const double g_est = inc_mean;
        if (!field_finite(z)) throw SolverError("ergodic_flow: divergence");
        if (std::isfinite(g_prev) && std::fabs(g_est - g_prev) < cfg.tol &&
            (inc_max - inc_min) < 10.0 * cfg.tol) {
            if (++stable >= cfg.consecutive) {
                res.gamma = g_est;
                res.converged = true;
                prev = z;
                ++period;
                break;
            }
        } else {
            stable = 0;
        }
        g_prev = g_est;
        prev = z;
    }
    if (!res.converged)
        throw SolverError("ergodic_flow: slope did not converge within the period budget");
    res.periods = period;

    // record one more period of phases and subtract the linear drift
    std::vector<Field> phases;
    Field z2 = z;
    integrate_period(g, z2, rhs, Lambda, 0.0, static_cast<double>(period), cfg.Ns, &phases);
    FastSlab prof;
    prof.grid = g;
    prof.periodic = true;
    prof.period = 1.0;
    prof.ds = 1.0 / static_cast<int>(phases.size());
    prof.snaps = std::move(phases);
    for (int k = 0; k < prof.count(); ++k) {
        const double drift = res.gamma * (period + k * prof.ds);
        for (auto& v : prof.snaps[k]) v -= drift;
    }
    const double norm0 = prof.snaps[0][0];
    for (auto& snap : prof.snaps)
        for (auto& v : snap) v -= norm0;
    res.profile = std::move(prof);
    return res;
}

PenalizedResult penalized_cell(const TorusGrid& g, const FastRhs& rhs, double delta, double Lambda,
                               const ErgodicConfig& cfg, const FastSlab* warm_start) {
    const int N = g.size();
    Field w(N, 0.0);
    if (warm_start && !warm_start->snaps.empty()) w = warm_start->snaps.front();

    Field prev = w, diff(N);
    double d_prev = 0.0, ratio_prev = 0.0;
    int period = 0;
    bool done = false;
    const double tol = cfg.fixpoint_tol * std::max(1.0, 1.0 / delta);
    for (; period < cfg.max_periods; ++period) {
        integrate_period(g, w, rhs, Lambda, delta, 0.0, cfg.Ns);
        if (!field_finite(w)) throw SolverError("penalized_cell: divergence");
        double d = 0.0;
        for (int i = 0; i < N; ++i) {
            diff[i] = w[i] - prev[i];
            d = std::max(d, std::fabs(diff[i]));
        }
        if (d <= tol) {
            done = true;
            ++period;
            break;
        }
        const double ratio = d_prev > 0.0 ? d / d_prev : 0.0;
        if (period > 4 && ratio >= 1.0 + 1e-9)
            throw SolverError("penalized_cell: period map is not a contraction at this delta");
        // geometric extrapolation once the contraction ratio settles
        if (period > 4 && ratio > 0.0 && ratio < 0.9999 &&
            std::fabs(ratio - ratio_prev) < 0.02 * ratio) {
            const double amp = ratio / (1.0 - ratio);
            for (int i = 0; i < N; ++i) w[i] += amp * diff[i];
            d_prev = 0.0;
            ratio_prev = 0.0;
            prev = w;
            continue;
        }
        ratio_prev = ratio;
        d_prev = d;
        prev = w;
    }
    if (!done) throw SolverError("penalized_cell: fixed point not reached within period budget");

    PenalizedResult res;
    res.periods = period;
    std::vector<Field> phases;
    Field w2 = w;
    integrate_period(g, w2, rhs, Lambda, delta, 0.0, cfg.Ns, &phases);
    FastSlab slab;
    slab.grid = g;
    slab.periodic = true;
    slab.period = 1.0;
    slab.ds = 1.0 / static_cast<int>(phases.size());
    slab.snaps = std::move(phases);
    res.w00 = slab.snaps[0][0];
    double sup = 0.0;
    for (const auto& snap : slab.snaps)
        for (double v : snap) sup = std::max(sup, std::fabs(v));
    res.sup_norm = sup;
    res.w = std::move(slab);
    return res;
}

CellSolution ergodic_constant(const FullyNonlinearOp& op, const SymMat& P, const Vec2& x, double t,
                              CellMethod method, const TorusGrid& g, const ErgodicConfig& cfg) {
    FastRhs rhs = [&op, P, x, t, &g](const SymMat& H, int flat, double s) {
        return op.eval(H + P, x, t, g.node(flat), s);
    };

    CellSolution sol;
    double gamma_slope = 0.0, gamma_pen = 0.0;
    bool have_slope = false, have_pen = false;

    if (method == CellMethod::LongTimeSlope || method == CellMethod::Both) {
        auto flow = ergodic_flow_slope(g, rhs, op.Lambda, cfg);
        gamma_slope = flow.gamma;
        have_slope = true;
        sol.w = std::move(flow.profile);
        sol.periods_used = flow.periods;
    }
    if (method == CellMethod::Penalization || method == CellMethod::Both) {
        double delta = cfg.delta0;
        std::vector<double> gs;
        FastSlab warm;
        FastSlab last_w;
        for (int j = 0; j <= cfg.delta_halvings; ++j) {
            const FastSlab* ws = j == 0 ? nullptr : &warm;
            auto pr = penalized_cell(g, rhs, delta, op.Lambda, cfg, ws);
            gs.push_back(delta * pr.w00);
            sol.delta_gamma.push_back({delta, delta * pr.w00});
            // warm start the next level: rescale the constant mode
            warm = pr.w;
            if (j < cfg.delta_halvings) {
                const double mean_shift = pr.w00 * (delta / (0.5 * delta) - 1.0);
                for (auto& snap : warm.snaps)
                    for (auto& v : snap) v += mean_shift;
            }
            last_w = pr.w;
            sol.delta_min = delta;
            delta *= 0.5;
        }
        // Richardson in delta (first order leading term): T[j][m]
        std::vector<std::vector<double>> T(gs.size());
        for (size_t j = 0; j < gs.size(); ++j) {
            T[j].resize(cfg.richardson_levels + 1);
            T[j][0] = gs[j];
        }
        const int levels = std::min<int>(cfg.richardson_levels, static_cast<int>(gs.size()) - 1);
        for (int m = 1; m <= levels; ++m) {
            const double f = std::pow(2.0, m);
            for (size_t j = m; j < gs.size(); ++j)
                T[j][m] = (f * T[j][m - 1] - T[j - 1][m - 1]) / (f - 1.0);
        }
        gamma_pen = T.back()[levels];
        sol.richardson_residual = std::fabs(T.back()[levels] - T.back()[std::max(0, levels - 1)]);
        have_pen = true;
        if (!have_slope) {
            // normalized limit of w^delta - w^delta(0,0)
            const double w00 = last_w.snaps[0][0];
            sol.w = std::move(last_w);
            for (auto& snap : sol.w.snaps)
                for (auto& v : snap) v -= w00;
        }
    }

    if (have_slope && have_pen) {
        sol.cross_diff = std::fabs(gamma_slope - gamma_pen);
        if (sol.cross_diff > cfg.cross_tol)
            throw ConsistencyError("ergodic_constant: slope and penalization disagree by " +
                                   std::to_string(sol.cross_diff));
    }
    sol.gamma = have_slope ? gamma_slope : gamma_pen;
    sol.method = method == CellMethod::LongTimeSlope  ? "long-time-slope"
                 : method == CellMethod::Penalization ? "penalization"
                                                      : "both";
    return sol;
}

MatSlab linearized_coefficient(const FullyNonlinearOp& op, const Vec2& x, double t,
                               const TorusGrid& g, const ErgodicConfig& cfg,
                               const MatSlab* base) {
    MatSlab A;
    A.n = op.n;
    const int Ns = op.fast_s_dependent || base ? cfg.Ns : 1;
    for (int c = 0; c < SymMat::comps(op.n); ++c) {
        FastSlab sl;
        sl.grid = g;
        sl.periodic = true;
        sl.period = 1.0;
        sl.ds = 1.0 / Ns;
        sl.snaps.assign(Ns, Field(g.size(), 0.0));
        A.comp[c] = std::move(sl);
    }
    for (int k = 0; k < Ns; ++k) {
        const double s = static_cast<double>(k) / Ns;
        for (int i = 0; i < g.size(); ++i) {
            const SymMat P0 = base ? base->eval(i, s) : SymMat::zero(op.n);
            const auto D = frechet_derivative(op, 1, P0, x, t, g.node(i), s);
            const SymMat m = D.as_matrix();
            for (int c = 0; c < SymMat::comps(op.n); ++c) A.comp[c].snaps[k][i] = m[c];
        }
    }
    return A;
}

MatrixCorrector matrix_corrector(const FullyNonlinearOp& op, const Vec2& x, double t,
                                 const TorusGrid& g, const ErgodicConfig& cfg) {
    MatrixCorrector mc;
    mc.A = linearized_coefficient(op, x, t, g, cfg);
    mc.Abar = SymMat(op.n);
    for (int c = 0; c < SymMat::comps(op.n); ++c) {
        const SymMat E = SymMat::basis(op.n, c);
        const MatSlab& A = mc.A;
        FastRhs rhs = [&A, E](const SymMat& H, int flat, double s) {
            return trace_product(A.eval(flat, s), H + E);
        };
        auto flow = ergodic_flow_slope(g, rhs, op.Lambda, cfg);
        // gamma = tr(Abar E_c) equals the (i,j) entry for both diagonal and
        // off-diagonal components under the E_ij normalization
        mc.Abar[c] = flow.gamma;
        mc.chi[c] = std::move(flow.profile);
    }
    return mc;
}

DrivenCellResult driven_cell(const MatSlab& A, const FastSlab& f, const TorusGrid& g,
                             const ErgodicConfig& cfg) {
    FastRhs rhs = [&A, &f](const SymMat& H, int flat, double s) {
        return trace_product(A.eval(flat, s), H) + f.value(flat, s);
    };
    const double Lambda = [&] {
        double m = 0.0;
        for (const auto& snap : A.comp[0].snaps)
            for (double v : snap) m = std::max(m, std::fabs(v));
        if (A.n == 2)
            for (const auto& snap : A.comp[1].snaps)
                for (double v : snap) m = std::max(m, std::fabs(v));
        return std::max(m, 1e-8);
    }();
    auto flow = ergodic_flow_slope(g, rhs, Lambda, cfg);
    DrivenCellResult res;
    res.fbar = flow.gamma;
    res.phi = std::move(flow.profile);
    return res;
}

// ---- effective operator table ----------------------------------------------

double EffectiveOperatorTable::query(const SymMat& P, const Vec2& x, double t) const {
    const int c = comps();
    // P interpolation weights per axis
    std::array<int, 3> i0{};
    std::array<double, 3> w{};
    for (int a = 0; a < c; ++a) {
        const double p = P[a];
        if (p < -P_max - 1e-12 || p > P_max + 1e-12)
            throw RangeError("effective table query outside P range; extend the table (|p|=" +
                             std::to_string(std::fabs(p)) + " > " + std::to_string(P_max) + ")");
        const double u = (std::clamp(p, -P_max, P_max) + P_max) / (2.0 * P_max) * (P_res - 1);
        i0[a] = std::min(static_cast<int>(u), P_res - 2);
        w[a] = u - i0[a];
    }
    // slow interpolation: nearest x node (tables store coarse slow samples),
    // linear in t between slices
    auto p_value = [&](int tk, int xk) {
        const double* base = values.data() +
                             (static_cast<size_t>(tk) * x_nodes.size() + xk) * p_points();
        double acc = 0.0;
        const int corners = 1 << c;
        for (int mask = 0; mask < corners; ++mask) {
            double ww = 1.0;
            int flat = 0;
            for (int a = 0; a < c; ++a) {
                const int bit = (mask >> a) & 1;
                ww *= bit ? w[a] : 1.0 - w[a];
                flat = flat * P_res + i0[a] + bit;
            }
            acc += ww * base[flat];
        }
        return acc;
    };
    int xk = 0;
    if (x_nodes.size() > 1) {
        double best = std::numeric_limits<double>::infinity();
        for (size_t k = 0; k < x_nodes.size(); ++k) {
            double d2 = 0.0;
            for (int a = 0; a < n; ++a) {
                double dd = std::remainder(x[a] - x_nodes[k][a], slow.L);
                d2 += dd * dd;
            }
            if (d2 < best) {
                best = d2;
                xk = static_cast<int>(k);
            }
        }
    }
    if (t_nodes.size() == 1) return p_value(0, xk);
    const auto hi = std::upper_bound(t_nodes.begin(), t_nodes.end(), t);
    int k1 = std::clamp<int>(static_cast<int>(hi - t_nodes.begin()), 1,
                             static_cast<int>(t_nodes.size()) - 1);
    const double tw = std::clamp((t - t_nodes[k1 - 1]) / (t_nodes[k1] - t_nodes[k1 - 1]), 0.0, 1.0);
    return (1.0 - tw) * p_value(k1 - 1, xk) + tw * p_value(k1, xk);
}

SymMat EffectiveOperatorTable::derivative(const SymMat& P, const Vec2& x, double t,
                                          double h) const {
    SymMat d(n);
    for (int c = 0; c < comps(); ++c) {
        const SymMat E = SymMat::basis(n, c);
        d[c] = (query(P + h * E, x, t) - query(P - h * E, x, t)) / (2.0 * h);
    }
    return d;
}

EffectiveOperatorTable effective_operator_table(const FullyNonlinearOp& op, const SlowGrid& slow,
                                                const TorusGrid& g, const TableConfig& tcfg,
                                                const ErgodicConfig& cfg) {
    EffectiveOperatorTable tab;
    tab.n = op.n;
    tab.P_max = tcfg.P_max;
    tab.P_res = tcfg.P_res;
    tab.slow = slow;

    const int nx = op.slow_x_dependent ? tcfg.slow_x_samples : 1;
    const int nt = op.slow_t_dependent ? tcfg.slow_t_samples : 1;
    for (int k = 0; k < nx; ++k)
        tab.x_nodes.push_back(op.n == 1 ? vec1(slow.L * k / nx)
                                        : Vec2{slow.L * k / nx, slow.L * k / nx});
    for (int k = 0; k < nt; ++k) tab.t_nodes.push_back(nt == 1 ? 0.0 : slow.T * k / (nt - 1));

    tab.values.assign(static_cast<size_t>(nx) * nt * tab.p_points(), 0.0);
    const int c = tab.comps();
    for (int tk = 0; tk < nt; ++tk)
        for (int xk = 0; xk < nx; ++xk) {
            for (int flat = 0; flat < tab.p_points(); ++flat) {
                SymMat P(op.n);
                int rem = flat;
                for (int a = c - 1; a >= 0; --a) {
                    P[a] = tab.p_coord(rem % tab.P_res);
                    rem /= tab.P_res;
                }
                try {
                    auto sol = ergodic_constant(op, P, tab.x_nodes[xk], tab.t_nodes[tk],
                                                CellMethod::LongTimeSlope, g, cfg);
                    tab.values[(static_cast<size_t>(tk) * nx + xk) * tab.p_points() + flat] =
                        sol.gamma;
                } catch (const std::exception& e) {
                    tab.partial = true;
                    tab.failures.push_back(e.what());
                }
            }
        }

    // validation: sampled ellipticity ratios and midpoint concavity
    std::mt19937_64 rng(tcfg.seed);
    std::uniform_int_distribution<int> pick(0, tab.P_res - 1);
    std::uniform_real_distribution<double> upos(0.0, 1.0);
    auto random_node = [&](SymMat& P, int& tk, int& xk) {
        tk = static_cast<int>(upos(rng) * nt) % nt;
        xk = static_cast<int>(upos(rng) * nx) % nx;
        for (int a = 0; a < c; ++a) P[a] = tab.p_coord(pick(rng));
    };
    auto& val = tab.validation;
    val.ellipticity_lo = std::numeric_limits<double>::infinity();
    val.ellipticity_hi = 0.0;
    for (int k = 0; k < tcfg.concavity_triples; ++k) {
        SymMat P(op.n);
        int tk, xk;
        random_node(P, tk, xk);
        SymMat Q = random_psd(op.n, tab.P_max * 0.5, rng);
        if (Q.norm() < 1e-10) continue;
        bool inside = true;
        for (int a = 0; a < c; ++a)
            if (std::fabs(P[a] + Q[a]) > tab.P_max) inside = false;
        const Vec2 xv = tab.x_nodes[xk];
        const double tv = tab.t_nodes[tk];
        if (inside) {
            const double ratio = (tab.query(P + Q, xv, tv) - tab.query(P, xv, tv)) / Q.norm();
            val.ellipticity_lo = std::min(val.ellipticity_lo, ratio);
            val.ellipticity_hi = std::max(val.ellipticity_hi, ratio);
        }
        if (op.concave) {
            SymMat R(op.n);
            int tk2, xk2;
            random_node(R, tk2, xk2);
            const double rho = upos(rng);
            SymMat mid = rho * P + (1.0 - rho) * R;
            const double lhs = rho * tab.query(P, xv, tv) + (1.0 - rho) * tab.query(R, xv, tv);
            val.worst_concavity_violation =
                std::max(val.worst_concavity_violation, lhs - tab.query(mid, xv, tv));
            ++val.concavity_triples;
        }
    }
    val.pass = val.ellipticity_lo >= op.lambda - tcfg.tol &&
               val.ellipticity_hi <= op.Lambda + tcfg.tol &&
               (!op.concave || val.worst_concavity_violation <= 1e-6);
    return tab;
}

std::string EffectiveOperatorTable::to_json() const {
    nlohmann::json j;
    j["kind"] = "effective_operator_table";
    j["n"] = n;
    j["P_max"] = P_max;
    j["P_res"] = P_res;
    j["L"] = slow.L;
    j["T"] = slow.T;
    j["t_nodes"] = t_nodes;
    nlohmann::json xs = nlohmann::json::array();
    for (const auto& x : x_nodes) xs.push_back({x[0], x[1]});
    j["x_nodes"] = xs;
    j["values"] = values;
    j["validation"] = {{"ellipticity_lo", validation.ellipticity_lo},
                       {"ellipticity_hi", validation.ellipticity_hi},
                       {"worst_concavity_violation", validation.worst_concavity_violation},
                       {"pass", validation.pass}};
    j["partial"] = partial;
    return j.dump(2);
}

EffectiveOperatorTable EffectiveOperatorTable::from_json(const std::string& doc) {
    const auto j = nlohmann::json::parse(doc);
    EffectiveOperatorTable tab;
    tab.n = j.at("n").get<int>();
    tab.P_max = j.at("P_max").get<double>();
    tab.P_res = j.at("P_res").get<int>();
    tab.slow.n = tab.n;
    tab.slow.L = j.at("L").get<double>();
    tab.slow.T = j.at("T").get<double>();
    tab.t_nodes = j.at("t_nodes").get<std::vector<double>>();
    for (const auto& x : j.at("x_nodes")) tab.x_nodes.push_back(Vec2{x[0], x[1]});
    tab.values = j.at("values").get<std::vector<double>>();
    tab.partial = j.value("partial", false);
    return tab;
}

}  // namespace phom
