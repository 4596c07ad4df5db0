#include "parahom/config.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

namespace phom {

namespace {

using nlohmann::json;
constexpr double kTwoPi = 6.283185307179586476925286766559;

FourierField field_from_json(const json& j, int n, double L, double T) {
    FourierField f;
    f.n = n;
    f.Lx = L;
    f.Tt = T;
    f.constant = j.value("constant", 0.0);
    f.reciprocal = j.value("reciprocal", false);
    if (j.contains("modes"))
        for (const auto& m : j.at("modes")) {
            FourierMode mode;
            if (m.contains("ky")) {
                if (m.at("ky").is_array()) {
                    mode.ky[0] = m.at("ky")[0].get<int>();
                    if (m.at("ky").size() > 1) mode.ky[1] = m.at("ky")[1].get<int>();
                } else {
                    mode.ky[0] = m.at("ky").get<int>();
                }
            }
            mode.ks = m.value("ks", 0);
            if (m.contains("kx")) {
                if (m.at("kx").is_array()) {
                    mode.kx[0] = m.at("kx")[0].get<int>();
                    if (m.at("kx").size() > 1) mode.kx[1] = m.at("kx")[1].get<int>();
                } else {
                    mode.kx[0] = m.at("kx").get<int>();
                }
            }
            mode.kt = m.value("kt", 0);
            mode.a_cos = m.value("cos", 0.0);
            mode.a_sin = m.value("sin", 0.0);
            f.modes.push_back(mode);
        }
    return f;
}

json field_to_json(const FourierField& f) {
    json j;
    j["constant"] = f.constant;
    j["reciprocal"] = f.reciprocal;
    json modes = json::array();
    for (const auto& m : f.modes) {
        json jm;
        jm["ky"] = {m.ky[0], m.ky[1]};
        jm["ks"] = m.ks;
        jm["kx"] = {m.kx[0], m.kx[1]};
        jm["kt"] = m.kt;
        jm["cos"] = m.a_cos;
        jm["sin"] = m.a_sin;
        modes.push_back(jm);
    }
    j["modes"] = modes;
    return j;
}

GTerm gterm_from_json(const json& j, int n, double L, double T) {
    GTerm g;
    g.kx = j.value("kx", 0);
    g.a_cos = j.value("cos", 0.0);
    g.a_sin = j.value("sin", 0.0);
    g.constant = j.value("constant", 0.0);
    if (j.contains("y")) g.y_field = field_from_json(j.at("y"), n, L, T);
    else g.y_field.constant = 1.0;
    g.y_field.n = n;
    return g;
}

json gterm_to_json(const GTerm& g) {
    json j;
    j["kx"] = g.kx;
    j["cos"] = g.a_cos;
    j["sin"] = g.a_sin;
    j["constant"] = g.constant;
    j["y"] = field_to_json(g.y_field);
    return j;
}

}  // namespace

double GTerm::x_part(double x, double L) const {
    return constant + a_cos * std::cos(kTwoPi * kx * x / L) +
           a_sin * std::sin(kTwoPi * kx * x / L);
}

OpPtr ExperimentConfig::make_operator() const {
    if (family == "linear_tr") {
        MatCoefficient A;
        A.n = dimension;
        A.comp = coefficient;
        if (static_cast<int>(A.comp.size()) != SymMat::comps(dimension))
            throw ConfigError("operator.coefficient: expected " +
                              std::to_string(SymMat::comps(dimension)) + " components");
        for (auto& f : A.comp) f.n = dimension;
        return make_linear_tr(A, lambda, Lambda, L);
    }
    if (family == "pucci_minus") return make_pucci_minus(dimension, pucci_lambda, pucci_Lambda, L);
    if (family == "hjb_min") {
        std::vector<MatCoefficient> As;
        for (const auto& comps : hjb_ops) {
            MatCoefficient A;
            A.n = dimension;
            A.comp = comps;
            for (auto& f : A.comp) f.n = dimension;
            As.push_back(std::move(A));
        }
        return make_hjb_min(As, lambda, Lambda, hjb_smoothing, L);
    }
    if (family == "recession_perturbed")
        return make_recession_perturbed(dimension, pucci_lambda, pucci_Lambda, recession_b,
                                        recession_delta, recession_mu, lambda, Lambda, L);
    throw ConfigError("operator.family: unknown family '" + family + "'");
}

double ExperimentConfig::g(const Vec2& x, const Vec2& y) const {
    double r = 0.0;
    for (const auto& term : g_terms)
        r += term.x_part(x[0], L) * term.y_field.eval(Vec2{0, 0}, 0.0, y, 0.0);
    return r;
}

double ExperimentConfig::gbar(const Vec2& x) const {
    double r = 0.0;
    for (const auto& term : g_terms) {
        // the non-oscillatory pipeline reads only the y-constant part
        r += term.x_part(x[0], L) * term.y_field.constant;
    }
    return r;
}

double ExperimentConfig::psi_at(double x) const {
    double r = 0.0;
    for (const auto& term : psi) r += term.x_part(x, L);
    return r;
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    ExperimentConfig c;
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);

    if (j.contains("grids")) {
        const auto& gj = j.at("grids");
        c.Ny = gj.value("Ny", c.Ny);
        c.Ns = gj.value("Ns", c.Ns);
        c.Nx = gj.value("Nx", c.Nx);
        c.L = gj.value("L", c.L);
        c.T = gj.value("T", c.T);
        c.t_slices = gj.value("t_slices", c.t_slices);
    }
    if (j.contains("operator")) {
        const auto& oj = j.at("operator");
        c.family = oj.value("family", c.family);
        c.dimension = oj.value("dimension", c.dimension);
        c.lambda = oj.value("lambda", c.lambda);
        c.Lambda = oj.value("Lambda", c.Lambda);
        c.concave = oj.value("concave", c.concave);
        c.K = oj.value("K", c.K);
        c.alpha = oj.value("alpha", c.alpha);
        if (oj.contains("coefficient"))
            for (const auto& comp : oj.at("coefficient").at("components"))
                c.coefficient.push_back(field_from_json(comp, c.dimension, c.L, c.T));
        if (oj.contains("pucci")) {
            c.pucci_lambda = oj.at("pucci").value("lambda", c.pucci_lambda);
            c.pucci_Lambda = oj.at("pucci").value("Lambda", c.pucci_Lambda);
        }
        if (oj.contains("hjb")) {
            for (const auto& opj : oj.at("hjb").at("operators")) {
                std::vector<FourierField> comps;
                for (const auto& comp : opj.at("components"))
                    comps.push_back(field_from_json(comp, c.dimension, c.L, c.T));
                c.hjb_ops.push_back(std::move(comps));
            }
            c.hjb_smoothing = oj.at("hjb").value("smoothing", c.hjb_smoothing);
        }
        if (oj.contains("recession")) {
            const auto& rj = oj.at("recession");
            if (rj.contains("pucci")) {
                c.pucci_lambda = rj.at("pucci").value("lambda", c.pucci_lambda);
                c.pucci_Lambda = rj.at("pucci").value("Lambda", c.pucci_Lambda);
            }
            if (rj.contains("b")) c.recession_b = field_from_json(rj.at("b"), c.dimension, c.L, c.T);
            c.recession_delta = rj.value("delta", c.recession_delta);
            c.recession_mu = rj.value("mu", c.recession_mu);
        }
    }
    if (j.contains("data")) {
        const auto& dj = j.at("data");
        if (dj.contains("g"))
            for (const auto& t : dj.at("g")) c.g_terms.push_back(gterm_from_json(t, c.dimension, c.L, c.T));
        if (dj.contains("phi")) c.phi = field_from_json(dj.at("phi"), 1, c.L, c.T);
        if (dj.contains("psi"))
            for (const auto& t : dj.at("psi")) c.psi.push_back(gterm_from_json(t, 1, c.L, c.T));
    }
    if (j.contains("pipeline")) {
        const auto& pj = j.at("pipeline");
        const std::string kind = pj.value("kind", std::string("theorem-rate"));
        if (kind == "theorem-rate") c.kind = PipelineKind::TheoremRate;
        else if (kind == "nonosc-rate") c.kind = PipelineKind::NonOscRate;
        else if (kind == "recession-rate") c.kind = PipelineKind::RecessionRate;
        else if (kind == "pucci-example") c.kind = PipelineKind::PucciExample;
        else if (kind == "cell-table") c.kind = PipelineKind::CellTable;
        else if (kind == "layer-only") c.kind = PipelineKind::LayerOnly;
        else throw ConfigError("pipeline.kind: unknown kind '" + kind + "'");
        c.m = pj.value("m", c.m);
        c.d_max = pj.value("d_max", c.d_max);
        if (pj.contains("epsilons")) c.epsilons = pj.at("epsilons").get<std::vector<double>>();
        c.c_window = pj.value("c_window", c.c_window);
        c.points_per_eps = pj.value("points_per_eps", c.points_per_eps);
        c.target_slope = pj.value("target_slope", c.target_slope);
        c.margin = pj.value("margin", c.margin);
        if (pj.contains("tolerances")) {
            const auto& tj = pj.at("tolerances");
            c.osc_tol_rel = tj.value("osc_tol_rel", c.osc_tol_rel);
            c.cell_tol = tj.value("cell_tol", c.cell_tol);
            c.cross_tol = tj.value("cross_tol", c.cross_tol);
        }
        c.budget_node_steps = pj.value("budget_node_steps", c.budget_node_steps);
        if (pj.contains("table")) {
            c.table_P_max = pj.at("table").value("P_max", c.table_P_max);
            c.table_P_res = pj.at("table").value("P_res", c.table_P_res);
        }
    }
    if (j.contains("output")) {
        const auto& oj = j.at("output");
        c.out_dir = oj.value("dir", c.out_dir);
        c.write_csv = oj.value("csv", c.write_csv);
        c.write_json = oj.value("json", c.write_json);
        c.write_dumps = oj.value("dumps", c.write_dumps);
    }
    return c;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json_text(text);
}

std::string ExperimentConfig::echo_json() const {
    json j;
    j["seed"] = seed;
    j["workers"] = workers;
    j["grids"] = {{"Ny", Ny}, {"Ns", Ns}, {"Nx", Nx}, {"L", L}, {"T", T}, {"t_slices", t_slices}};
    json oj;
    oj["family"] = family;
    oj["dimension"] = dimension;
    oj["lambda"] = lambda;
    oj["Lambda"] = Lambda;
    oj["concave"] = concave;
    oj["K"] = K;
    oj["alpha"] = alpha;
    if (!coefficient.empty()) {
        json comps = json::array();
        for (const auto& f : coefficient) comps.push_back(field_to_json(f));
        oj["coefficient"] = {{"components", comps}};
    }
    oj["pucci"] = {{"lambda", pucci_lambda}, {"Lambda", pucci_Lambda}};
    if (!hjb_ops.empty()) {
        json ops = json::array();
        for (const auto& comps : hjb_ops) {
            json cj = json::array();
            for (const auto& f : comps) cj.push_back(field_to_json(f));
            ops.push_back({{"components", cj}});
        }
        oj["hjb"] = {{"operators", ops}, {"smoothing", hjb_smoothing}};
    }
    if (family == "recession_perturbed")
        oj["recession"] = {{"b", field_to_json(recession_b)},
                           {"delta", recession_delta},
                           {"mu", recession_mu},
                           {"pucci", {{"lambda", pucci_lambda}, {"Lambda", pucci_Lambda}}}};
    j["operator"] = oj;
    json dj;
    json gt = json::array();
    for (const auto& t : g_terms) gt.push_back(gterm_to_json(t));
    dj["g"] = gt;
    dj["phi"] = field_to_json(phi);
    json pj = json::array();
    for (const auto& t : psi) pj.push_back(gterm_to_json(t));
    dj["psi"] = pj;
    j["data"] = dj;
    const char* kinds[] = {"theorem-rate", "nonosc-rate",  "recession-rate",
                           "pucci-example", "cell-table", "layer-only"};
    j["pipeline"] = {{"kind", kinds[static_cast<int>(kind)]},
                     {"m", m},
                     {"d_max", d_max},
                     {"epsilons", epsilons},
                     {"c_window", c_window},
                     {"points_per_eps", points_per_eps},
                     {"target_slope", target_slope},
                     {"margin", margin},
                     {"tolerances",
                      {{"osc_tol_rel", osc_tol_rel}, {"cell_tol", cell_tol},
                       {"cross_tol", cross_tol}}},
                     {"budget_node_steps", budget_node_steps},
                     {"table", {{"P_max", table_P_max}, {"P_res", table_P_res}}}};
    j["output"] = {{"dir", out_dir}, {"csv", write_csv}, {"json", write_json},
                   {"dumps", write_dumps}};
    return j.dump(2);
}

ValidationReport validate_config(const ExperimentConfig& cfg) {
    ValidationReport rep;
    auto issue = [&](const std::string& path, const std::string& msg, bool fatal = true) {
        rep.issues.push_back({path, msg, fatal});
    };
    if (cfg.dimension != 1 && cfg.dimension != 2)
        issue("operator.dimension", "dimension must be 1 or 2");
    if (cfg.lambda <= 0 || cfg.Lambda < cfg.lambda)
        issue("operator.lambda", "need 0 < lambda <= Lambda");
    if (cfg.family == "linear_tr" &&
        static_cast<int>(cfg.coefficient.size()) != SymMat::comps(cfg.dimension))
        issue("operator.coefficient", "component count does not match the dimension");
    if (cfg.family == "hjb_min" && cfg.hjb_ops.empty())
        issue("operator.hjb.operators", "at least one linear operator required");
    if (cfg.Ny < 8 || (cfg.Ny & (cfg.Ny - 1)) != 0)
        issue("grids.Ny", "Ny must be a power of two >= 8");
    if (cfg.Nx < 4) issue("grids.Nx", "Nx must be at least 4");
    if (cfg.T <= 0) issue("grids.T", "T must be positive");
    for (size_t i = 1; i < cfg.epsilons.size(); ++i)
        if (cfg.epsilons[i] >= cfg.epsilons[i - 1])
            issue("pipeline.epsilons", "epsilons must be strictly decreasing");
    for (double e : cfg.epsilons)
        if (e <= 0 || e > 0.5) issue("pipeline.epsilons", "epsilons must lie in (0, 1/2]");
    if (cfg.kind == PipelineKind::TheoremRate || cfg.kind == PipelineKind::NonOscRate) {
        if (cfg.d_max > cfg.m / 2) issue("pipeline.d_max", "d_max must satisfy d_max <= floor(m/2)");
        if (cfg.g_terms.empty() && cfg.kind == PipelineKind::TheoremRate)
            issue("data.g", "initial data required");
    }
    if (cfg.points_per_eps < 32)
        issue("pipeline.points_per_eps", "ratio below 32; direct solves may under-resolve",
              false);

    // dry-run cost estimate: direct solves dominate
    double total = 0.0;
    for (double e : cfg.epsilons) {
        const double nx = cfg.L * cfg.points_per_eps / e;
        const double dt = 0.9 * (cfg.L / nx) * (cfg.L / nx) / (2.0 * cfg.dimension * cfg.Lambda);
        total += std::pow(nx, cfg.dimension) * (cfg.T / dt);
    }
    rep.estimated_node_steps = total;
    if (cfg.budget_node_steps > 0 && total > static_cast<double>(cfg.budget_node_steps))
        issue("pipeline.budget_node_steps", "estimated cost exceeds the budget");
    return rep;
}

}  // namespace phom
