#pragma once

#include <string>

#include "parahom/expansion.hpp"

namespace phom {

enum class PipelineKind { TheoremRate, NonOscRate, RecessionRate, PucciExample, CellTable,
                          LayerOnly };

// x-profile term of the initial data: (c0 + a cos(2 pi k x/L) + b sin(...)) * y-field
struct GTerm {
    int kx = 0;
    double a_cos = 0.0;
    double a_sin = 0.0;
    double constant = 0.0;
    FourierField y_field;  // y-only Fourier sum

    double x_part(double x, double L) const;
};

struct ExperimentConfig {
    uint64_t seed = 12345;
    int workers = 1;

    // operator block
    std::string family = "linear_tr";
    int dimension = 1;
    double lambda = 1.0;
    double Lambda = 1.0;
    bool concave = true;
    double K = 1.0;
    double alpha = 0.5;
    std::vector<FourierField> coefficient;       // linear_tr components
    double pucci_lambda = 1.0, pucci_Lambda = 2.0;
    std::vector<std::vector<FourierField>> hjb_ops;
    double hjb_smoothing = 4.0;
    FourierField recession_b;
    double recession_delta = 0.0, recession_mu = 1.0;

    // data block
    std::vector<GTerm> g_terms;
    FourierField phi;          // pucci example fast profile
    std::vector<GTerm> psi;    // pucci example slow profile (y-field unused)

    // grids
    int Ny = 64, Ns = 64, Nx = 64;
    double L = 1.0, T = 0.05;
    int t_slices = 5;

    // pipeline
    PipelineKind kind = PipelineKind::TheoremRate;
    int m = 2;
    int d_max = 1;
    std::vector<double> epsilons{0.125, 0.0625, 0.03125};
    double c_window = 2.0;
    int points_per_eps = 64;
    double target_slope = -1.0;  // <0: derive from m
    double margin = 0.3;
    double osc_tol_rel = 1e-8;
    double cell_tol = 1e-9;
    double cross_tol = 1e-4;
    long long budget_node_steps = 6'000'000'000LL;
    double table_P_max = 0.0;  // 0: automatic from the data
    int table_P_res = 9;

    // output
    std::string out_dir = "out";
    bool write_csv = true;
    bool write_json = true;
    bool write_dumps = false;

    OpPtr make_operator() const;
    double g(const Vec2& x, const Vec2& y) const;
    double gbar(const Vec2& x) const;  // data for the non-oscillatory pipeline
    double psi_at(double x) const;

    std::string echo_json() const;  // all defaults materialized
    static ExperimentConfig from_json_text(const std::string& text);
    static ExperimentConfig from_json_file(const std::string& path);
};

struct ValidationIssue {
    std::string path;
    std::string message;
    bool fatal = true;
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;
    double estimated_node_steps = 0.0;
    bool ok() const {
        for (const auto& i : issues)
            if (i.fatal) return false;
        return true;
    }
};

ValidationReport validate_config(const ExperimentConfig& cfg);

}  // namespace phom
