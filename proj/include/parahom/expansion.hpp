#pragma once

#include <optional>

#include "parahom/interior.hpp"

namespace phom {

struct ExpansionConfig {
    LayerConfig layer;
    InteriorConfig interior;
    EffectiveMode mode = EffectiveMode::Linearized;  // interior mode of the base stage
    const EffectiveOperatorTable* table = nullptr;
};

// one bootstrap depth: the eps^{power} block of the two-hierarchy sum
struct DepthEntry {
    int power = 0;
    LayerHierarchy layer;
    InteriorHierarchy interior;
};

struct CouplingRecord {
    int depth = 0;  // produced while passing from this depth to the next
    int k = 0;
    double max_abs = 0.0;
    DecayFit decay;
};

struct ExpansionAssembly {
    int m = 0;
    int d_max = 0;
    std::vector<DepthEntry> depths;
    std::optional<InteriorHierarchy> prelude;  // non-oscillatory pipeline only
    std::vector<CouplingRecord> couplings;
    std::vector<LayerResidualReport> layer_residuals;

    double eval(const Vec2& x, double t, double eps) const;
    double eval_interior(const Vec2& x, double t, double eps) const;
};

// evaluation helper with per-time caching of the slow trajectory fields
class AssemblyEvaluator {
  public:
    AssemblyEvaluator(const ExpansionAssembly& a, double eps);
    void prepare(double t);
    double full(const Vec2& x) const;
    double interior_only(const Vec2& x) const;

  private:
    struct LevelCache {
        Field ubar_t;
        std::vector<SymMat> hess_t;
    };
    const ExpansionAssembly& a_;
    double eps_;
    double t_ = -1.0;
    std::vector<std::vector<LevelCache>> depth_cache_;  // [depth][level]
    std::vector<LevelCache> prelude_cache_;
    double interior_value(const InteriorHierarchy& h, const std::vector<LevelCache>& cache,
                          const Vec2& xw, const Vec2& y, double s, double eps_pow) const;
};

// theorem pipeline: oscillatory data, alternating layer/interior bootstrap
ExpansionAssembly bootstrap_run(const FullyNonlinearOp& op,
                                const std::function<double(const Vec2&, const Vec2&)>& g, int m,
                                int d_max, const ExpansionConfig& cfg);

// non-oscillatory pipeline: interior first with the fully nonlinear effective
// operator, then the bootstrap on the remaining oscillatory correction
ExpansionAssembly nonosc_run(const FullyNonlinearOp& op,
                             const std::function<double(const Vec2&)>& gbar, int m, int d_max,
                             const ExpansionConfig& cfg);

// ---- direct eps-problems -----------------------------------------------------

enum class EpsVariant { Scaled, Unscaled, NonOsc };

struct EpsPolicy {
    int points_per_eps = 64;  // fine dx = eps / points_per_eps
    int min_points = 64;
    long long max_node_steps = 6'000'000'000LL;
    int stored_snapshots = 512;
};

struct FineTraj {
    SlowGrid grid;
    double eps = 0.0;
    std::vector<double> times;
    std::vector<Field> fields;
};

FineTraj solve_eps_problem(const FullyNonlinearOp& op,
                           const std::function<double(const Vec2&, const Vec2&)>& g, double eps,
                           EpsVariant variant, const SlowGrid& domain, const EpsPolicy& policy);

// ---- error and rate reports ----------------------------------------------------

struct RateRow {
    double eps = 0.0;
    double err_full = 0.0;
    double err_interior = 0.0;
    double window_start = 0.0;
    bool window_clamped = false;
};

struct RateReport {
    std::vector<RateRow> rows;
    double slope_full = 0.0;
    double slope_interior = 0.0;
    double target = 0.0;
    double margin = 0.3;
    bool exact = false;  // all errors at rounding level
    bool pass = false;
};

RateRow error_report(const FineTraj& fine, const ExpansionAssembly& assembly, double eps,
                     double c_window);

RateReport rate_fit(const std::vector<RateRow>& rows, double target, double margin = 0.3);

// compare a fine trajectory against an arbitrary reference (x, t) -> value
double sup_error_vs(const FineTraj& fine, const std::function<double(const Vec2&, double)>& ref,
                    double t_min);

// ---- special experiments -------------------------------------------------------

struct RecessionResult {
    RateReport report;
    double delta = 0.0;
    double target = 0.0;
    Field gbar;  // effective initial datum from the recession-operator layer
};

struct RecessionConfig {
    SlowGrid slow{1, 64, 1.0, 0.05};
    TorusGrid fast{1, 64};
    EpsPolicy eps_policy;
    TableConfig table;
    ErgodicConfig ergodic;
    double c_window = 0.5;
};

RecessionResult recession_experiment(const FullyNonlinearOp& op,
                                     const std::function<double(const Vec2&, const Vec2&)>& g,
                                     const std::vector<double>& epsilons,
                                     const RecessionConfig& cfg);

struct KinkRow {
    double x0 = 0.0;          // location of the sign change
    double measured = 0.0;    // one-sided derivative jump of vbar
    double predicted = 0.0;   // (gamma_+ - gamma_-) |psi'(x0)|
};

struct PucciExampleResult {
    double gamma_plus = 0.0;
    double gamma_minus = 0.0;
    Field vbar;          // reconstruction from the two scalar flows
    Field gbar_pipeline; // the full pipeline readout
    double sup_diff = 0.0;
    std::vector<KinkRow> kinks;
    bool ordered = false;  // gamma_+ > gamma_-
};

PucciExampleResult pucci_gamma_example(double lp, double Lp,
                                       const std::function<double(double)>& phi,
                                       const std::function<double(double)>& psi,
                                       const SlowGrid& slow, const TorusGrid& fast,
                                       const HorizonPolicy& horizon = {});

}  // namespace phom
