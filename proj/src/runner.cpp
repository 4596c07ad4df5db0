#include "parahom/runner.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "parahom/io.hpp"

namespace phom {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;
constexpr const char* kVersion = "parahom 0.1.0";

class PhaseTimer {
  public:
    explicit PhaseTimer(RunManifest& m) : m_(m) {}
    template <class F>
    auto phase(const std::string& name, F&& f) {
        const auto t0 = std::chrono::steady_clock::now();
        if constexpr (std::is_void_v<decltype(f())>) {
            f();
            m_.wall_times.push_back({name, secs_since(t0)});
        } else {
            auto r = f();
            m_.wall_times.push_back({name, secs_since(t0)});
            return r;
        }
    }

  private:
    static double secs_since(std::chrono::steady_clock::time_point t0) {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    RunManifest& m_;
};

void parallel_for_indexed(int count, int workers, const std::function<void(int)>& fn) {
    if (workers <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int w = 0; w < std::min(workers, count); ++w)
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
        });
    for (auto& th : pool) th.join();
}

void register_artifact(RunManifest& man, const fs::path& path) {
    ArtifactInfo info;
    info.path = path.string();
    info.bytes = fs::exists(path) ? static_cast<uint64_t>(fs::file_size(path)) : 0;
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a_file(path)));
    info.checksum = buf;
    man.artifacts.push_back(info);
}

void write_rates_csv(const fs::path& path, const RateReport& rep) {
    std::ofstream out(path);
    out << "eps,err_full,err_interior,target,slope\n";
    for (const auto& row : rep.rows)
        out << format_double(row.eps) << ',' << format_double(row.err_full) << ','
            << format_double(row.err_interior) << ',' << format_double(rep.target) << ','
            << format_double(rep.slope_interior) << '\n';
}

json rate_report_json(const RateReport& rep) {
    json rows = json::array();
    for (const auto& r : rep.rows)
        rows.push_back({{"eps", r.eps},
                        {"err_full", r.err_full},
                        {"err_interior", r.err_interior},
                        {"window_start", r.window_start},
                        {"window_clamped", r.window_clamped}});
    return {{"rows", rows},
            {"slope_full", rep.slope_full},
            {"slope_interior", rep.slope_interior},
            {"target", rep.target},
            {"margin", rep.margin},
            {"exact", rep.exact},
            {"pass", rep.pass}};
}

std::vector<double> linspace_slices(double T, int count) {
    std::vector<double> s;
    if (count <= 1) return {0.0};
    for (int k = 0; k < count; ++k) s.push_back(T * k / (count - 1));
    return s;
}

struct PipelineSetup {
    OpPtr op;
    ExpansionConfig xcfg;
    LayerConfig layer;
    InteriorConfig interior;
};

PipelineSetup make_setup(const ExperimentConfig& cfg, const OpPtr& op) {
    PipelineSetup s;
    s.op = op;
    s.layer.fast = TorusGrid{cfg.dimension, cfg.Ny};
    s.layer.slow = SlowGrid{cfg.dimension, cfg.Nx, cfg.L, cfg.T};
    s.layer.t_slices = op->slow_t_dependent ? linspace_slices(cfg.T, cfg.t_slices)
                                            : std::vector<double>{0.0};
    s.layer.horizon.osc_tol_rel = cfg.osc_tol_rel;
    s.interior.fast = s.layer.fast;
    s.interior.slow = s.layer.slow;
    s.interior.t_slices = linspace_slices(cfg.T, cfg.t_slices);
    s.interior.ergodic.tol = cfg.cell_tol;
    s.interior.ergodic.cross_tol = cfg.cross_tol;
    s.interior.ergodic.Ns = op->fast_s_dependent ? cfg.Ns : 1;
    s.xcfg.layer = s.layer;
    s.xcfg.interior = s.interior;
    return s;
}

}  // namespace

std::string RunManifest::to_json() const {
    json j;
    j["version"] = version;
    j["config"] = json::parse(config_echo);
    json wt = json::object();
    for (const auto& [k, v] : wall_times) wt[k] = v;
    j["wall_times_s"] = wt;
    json arts = json::array();
    for (const auto& a : artifacts)
        arts.push_back({{"path", a.path}, {"bytes", a.bytes}, {"checksum", a.checksum}});
    j["artifacts"] = arts;
    j["pass"] = pass;
    j["summary"] = summary;
    j["exit_code"] = exit_code;
    return j.dump(2);
}

RunManifest run_experiment(const ExperimentConfig& cfg) {
    RunManifest man;
    man.version = kVersion;
    man.config_echo = cfg.echo_json();
    PhaseTimer timer(man);

    auto vrep = validate_config(cfg);
    if (!vrep.ok()) {
        std::string msg = "configuration invalid:";
        for (const auto& i : vrep.issues)
            if (i.fatal) msg += " [" + i.path + "] " + i.message + ";";
        throw ConfigError(msg);
    }

    const fs::path out_dir(cfg.out_dir);
    fs::create_directories(out_dir);
    auto op = cfg.make_operator();
    if (cfg.dimension == 2) check_cross_monotonicity(*op, 200, cfg.seed);
    auto setup = make_setup(cfg, op);

    json report;
    report["kind"] = json::parse(cfg.echo_json())["pipeline"]["kind"];

    switch (cfg.kind) {
        case PipelineKind::TheoremRate:
        case PipelineKind::NonOscRate: {
            const bool nonosc = cfg.kind == PipelineKind::NonOscRate;
            EffectiveOperatorTable table;
            if (nonosc) {
                TableConfig tcfg;
                tcfg.P_res = cfg.table_P_res;
                double pmax = 1.0;
                Field gb(setup.layer.slow.size());
                for (int ix = 0; ix < setup.layer.slow.size(); ++ix)
                    gb[ix] = cfg.gbar(setup.layer.slow.node(ix));
                for (int ix = 0; ix < setup.layer.slow.size(); ++ix)
                    pmax = std::max(pmax, hessian_at_slow(gb, setup.layer.slow, ix).norm());
                tcfg.P_max = cfg.table_P_max > 0 ? cfg.table_P_max : 4.0 * pmax;
                tcfg.seed = cfg.seed;
                table = timer.phase("cell-table", [&] {
                    return effective_operator_table(*op, setup.layer.slow, setup.layer.fast, tcfg,
                                                    setup.interior.ergodic);
                });
                setup.xcfg.table = &table;
            }
            auto assembly = timer.phase("hierarchies", [&] {
                return nonosc ? nonosc_run(*op, [&](const Vec2& x) { return cfg.gbar(x); }, cfg.m,
                                           cfg.d_max, setup.xcfg)
                              : bootstrap_run(
                                    *op,
                                    [&](const Vec2& x, const Vec2& y) { return cfg.g(x, y); },
                                    cfg.m, cfg.d_max, setup.xcfg);
            });
            std::vector<RateRow> rows(cfg.epsilons.size());
            timer.phase("eps-sweep", [&] {
                parallel_for_indexed(
                    static_cast<int>(cfg.epsilons.size()), cfg.workers, [&](int i) {
                        const double eps = cfg.epsilons[i];
                        EpsPolicy pol;
                        pol.points_per_eps = cfg.points_per_eps;
                        pol.max_node_steps = cfg.budget_node_steps;
                        auto fine = solve_eps_problem(
                            *op, [&](const Vec2& x, const Vec2& y) { return cfg.g(x, y); }, eps,
                            nonosc ? EpsVariant::NonOsc : EpsVariant::Scaled, setup.layer.slow,
                            pol);
                        rows[i] = error_report(fine, assembly, eps, cfg.c_window);
                    });
            });
            const double target = cfg.target_slope >= 0 ? cfg.target_slope : cfg.m - 1.0;
            auto rep = rate_fit(rows, target, cfg.margin);
            man.pass = rep.pass && (rep.exact || rep.slope_full >= target - cfg.margin);
            {
                std::ostringstream os;
                os << (nonosc ? "nonosc" : "theorem") << " rate: slope_interior="
                   << rep.slope_interior << " slope_full=" << rep.slope_full
                   << " target=" << target << " margin=" << cfg.margin;
                man.summary = os.str();
            }
            report["rate"] = rate_report_json(rep);
            json cj = json::array();
            for (const auto& c : assembly.couplings)
                cj.push_back({{"depth", c.depth},
                              {"k", c.k},
                              {"max_abs", c.max_abs},
                              {"decay_beta", c.decay.beta},
                              {"decay_valid", c.decay.valid}});
            report["coupling_sources"] = cj;
            if (cfg.write_csv) {
                write_rates_csv(out_dir / "rates.csv", rep);
                register_artifact(man, out_dir / "rates.csv");
            }
            break;
        }
        case PipelineKind::RecessionRate: {
            RecessionConfig rc;
            rc.slow = setup.layer.slow;
            rc.fast = setup.layer.fast;
            rc.eps_policy.points_per_eps = cfg.points_per_eps;
            rc.eps_policy.max_node_steps = cfg.budget_node_steps;
            rc.table.P_res = cfg.table_P_res;
            if (cfg.table_P_max > 0) rc.table.P_max = cfg.table_P_max;
            rc.ergodic = setup.interior.ergodic;
            rc.c_window = cfg.c_window;
            auto res = timer.phase("recession", [&] {
                return recession_experiment(
                    *op, [&](const Vec2& x, const Vec2& y) { return cfg.g(x, y); }, cfg.epsilons,
                    rc);
            });
            man.pass = std::fabs(res.report.slope_interior - res.target) <= cfg.margin ||
                       res.report.exact;
            std::ostringstream os;
            os << "recession rate: slope=" << res.report.slope_interior
               << " target=" << res.target << " delta=" << res.delta;
            man.summary = os.str();
            report["rate"] = rate_report_json(res.report);
            report["delta"] = res.delta;
            report["target"] = res.target;
            if (cfg.write_csv) {
                write_rates_csv(out_dir / "rates.csv", res.report);
                register_artifact(man, out_dir / "rates.csv");
            }
            break;
        }
        case PipelineKind::PucciExample: {
            auto phi_fn = [&](double y) {
                return cfg.phi.eval(Vec2{0, 0}, 0.0, Vec2{y, 0}, 0.0);
            };
            auto psi_fn = [&](double x) { return cfg.psi_at(x); };
            auto res = timer.phase("pucci-example", [&] {
                return pucci_gamma_example(cfg.pucci_lambda, cfg.pucci_Lambda, phi_fn, psi_fn,
                                           setup.layer.slow, setup.layer.fast);
            });
            bool kinks_ok = true;
            for (const auto& k : res.kinks)
                if (std::fabs(k.measured - k.predicted) > 0.2 * std::fabs(k.predicted))
                    kinks_ok = false;
            man.pass = res.ordered && res.gamma_plus - res.gamma_minus > 1e-3 &&
                       (res.kinks.empty() ? res.sup_diff <= 1e-3 : kinks_ok);
            std::ostringstream os;
            os << "pucci example: gamma+ = " << res.gamma_plus << ", gamma- = " << res.gamma_minus
               << ", kinks = " << res.kinks.size();
            man.summary = os.str();
            json kj = json::array();
            for (const auto& k : res.kinks)
                kj.push_back({{"x0", k.x0}, {"measured", k.measured}, {"predicted", k.predicted}});
            report["gamma_plus"] = res.gamma_plus;
            report["gamma_minus"] = res.gamma_minus;
            report["sup_diff"] = res.sup_diff;
            report["kinks"] = kj;
            if (cfg.write_csv) {
                write_field_csv(out_dir / "vbar.csv", setup.layer.slow, res.gbar_pipeline);
                register_artifact(man, out_dir / "vbar.csv");
            }
            break;
        }
        case PipelineKind::CellTable: {
            TableConfig tcfg;
            tcfg.P_max = cfg.table_P_max > 0 ? cfg.table_P_max : 4.0;
            tcfg.P_res = cfg.table_P_res;
            tcfg.seed = cfg.seed;
            auto table = timer.phase("cell-table", [&] {
                return effective_operator_table(*op, setup.layer.slow, setup.layer.fast, tcfg,
                                                setup.interior.ergodic);
            });
            SamplerConfig scfg;
            scfg.seed = cfg.seed;
            auto arep = check_assumptions(*op, scfg);
            man.pass = table.validation.pass && !table.partial && arep.all_pass();
            std::ostringstream os;
            os << "cell table: ellipticity [" << table.validation.ellipticity_lo << ", "
               << table.validation.ellipticity_hi << "], concavity violation "
               << table.validation.worst_concavity_violation;
            man.summary = os.str();
            report["assumptions"] = {{"lambda_hat", arep.lambda_hat},
                                     {"Lambda_hat", arep.Lambda_hat},
                                     {"all_pass", arep.all_pass()}};
            report["table_validation"] = {{"lo", table.validation.ellipticity_lo},
                                          {"hi", table.validation.ellipticity_hi},
                                          {"concavity", table.validation.worst_concavity_violation},
                                          {"pass", table.validation.pass}};
            std::ofstream tf(out_dir / "effective_table.json");
            tf << table.to_json();
            tf.close();
            register_artifact(man, out_dir / "effective_table.json");
            break;
        }
        case PipelineKind::LayerOnly: {
            auto stage = StageData::base_case(
                [&](const Vec2& x, const Vec2& y) { return cfg.g(x, y); }, setup.layer.slow,
                setup.layer.fast);
            auto layer = timer.phase("layer", [&] {
                return build_layer_hierarchy(*op, stage, cfg.m, setup.layer);
            });
            man.pass = true;
            json levels = json::array();
            for (int k = 0; k <= layer.K; ++k) {
                levels.push_back({{"k", k},
                                  {"beta", layer.levels[k].beta.beta},
                                  {"beta_residual", layer.levels[k].beta.residual},
                                  {"source_decay_ok", layer.levels[k].source_decay_ok}});
                if (cfg.write_csv) {
                    const fs::path p = out_dir / ("gbar_" + std::to_string(k) + ".csv");
                    write_field_csv(p, setup.layer.slow, layer.levels[k].gbar);
                    register_artifact(man, p);
                }
                if (cfg.write_dumps) {
                    const FastSlab& sl = layer.levels[k].vtilde.at(0, 0);
                    std::vector<double> flat;
                    for (const auto& snap : sl.snaps)
                        flat.insert(flat.end(), snap.begin(), snap.end());
                    const fs::path p = out_dir / ("vtilde_" + std::to_string(k) + ".phom");
                    write_phom_dump(p, cfg.dimension, {sl.count(), setup.layer.fast.size()}, flat);
                    register_artifact(man, p);
                }
            }
            report["levels"] = levels;
            std::ostringstream os;
            os << "layer hierarchy built to order " << cfg.m << ", beta0 = "
               << layer.levels[0].beta.beta;
            man.summary = os.str();
            break;
        }
    }

    man.exit_code = man.pass ? 0 : 1;
    if (cfg.write_json) {
        std::ofstream rf(out_dir / "report.json");
        rf << report.dump(2);
        rf.close();
        register_artifact(man, out_dir / "report.json");
    }
    std::ofstream mf(out_dir / "manifest.json");
    mf << man.to_json();
    return man;
}

void render_plot_data(const std::string& rates_csv, const std::string& out_path) {
    std::ifstream in(rates_csv);
    if (!in) throw ConfigError("cannot open " + rates_csv);
    std::string line;
    std::getline(in, line);  // header
    std::ofstream full(out_path + ".full.dat"), inter(out_path + ".interior.dat");
    full << "# log_eps log_err_full\n";
    inter << "# log_eps log_err_interior\n";
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::string tok;
        std::vector<double> vals;
        while (std::getline(ss, tok, ',')) vals.push_back(std::stod(tok));
        if (vals.size() < 3) continue;
        if (vals[1] > 0) full << format_double(std::log(vals[0])) << ' '
                              << format_double(std::log(vals[1])) << '\n';
        if (vals[2] > 0) inter << format_double(std::log(vals[0])) << ' '
                               << format_double(std::log(vals[2])) << '\n';
    }
}

}  // namespace phom
