#include "parahom/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace phom {

double field_max(const Field& f) { return *std::max_element(f.begin(), f.end()); }
double field_min(const Field& f) { return *std::min_element(f.begin(), f.end()); }
double oscillation(const Field& f) { return field_max(f) - field_min(f); }
double field_mean(const Field& f) {
    return std::accumulate(f.begin(), f.end(), 0.0) / static_cast<double>(f.size());
}
bool field_finite(const Field& f) {
    return std::all_of(f.begin(), f.end(), [](double v) { return std::isfinite(v); });
}

SymMat hessian_at(const Field& f, const TorusGrid& g, int flat) {
    SymMat H(g.n);
    const double h2 = g.dy() * g.dy();
    if (g.n == 1) {
        H[0] = (f[g.idx(flat + 1)] - 2.0 * f[flat] + f[g.idx(flat - 1)]) / h2;
        return H;
    }
    const int i = flat / g.Ny, j = flat % g.Ny;
    H[0] = (f[g.idx(i + 1, j)] - 2.0 * f[flat] + f[g.idx(i - 1, j)]) / h2;
    H[1] = (f[g.idx(i, j + 1)] - 2.0 * f[flat] + f[g.idx(i, j - 1)]) / h2;
    H[2] = (f[g.idx(i + 1, j + 1)] + f[g.idx(i - 1, j - 1)] - f[g.idx(i + 1, j - 1)] -
            f[g.idx(i - 1, j + 1)]) /
           (4.0 * h2);
    return H;
}

SymMat hessian_at_slow(const Field& f, const SlowGrid& g, int flat) {
    SymMat H(g.n);
    const double h2 = g.dx() * g.dx();
    if (g.n == 1) {
        H[0] = (f[g.idx(flat + 1)] - 2.0 * f[flat] + f[g.idx(flat - 1)]) / h2;
        return H;
    }
    const int i = flat / g.Nx, j = flat % g.Nx;
    H[0] = (f[g.idx(i + 1, j)] - 2.0 * f[flat] + f[g.idx(i - 1, j)]) / h2;
    H[1] = (f[g.idx(i, j + 1)] - 2.0 * f[flat] + f[g.idx(i, j - 1)]) / h2;
    H[2] = (f[g.idx(i + 1, j + 1)] + f[g.idx(i - 1, j - 1)] - f[g.idx(i + 1, j - 1)] -
            f[g.idx(i - 1, j + 1)]) /
           (4.0 * h2);
    return H;
}

std::vector<SymMat> discrete_hessian(const Field& f, const TorusGrid& g) {
    std::vector<SymMat> out(f.size(), SymMat(g.n));
    for (size_t k = 0; k < f.size(); ++k) out[k] = hessian_at(f, g, static_cast<int>(k));
    return out;
}

std::vector<SymMat> discrete_hessian_slow(const Field& f, const SlowGrid& g) {
    std::vector<SymMat> out(f.size(), SymMat(g.n));
    for (size_t k = 0; k < f.size(); ++k) out[k] = hessian_at_slow(f, g, static_cast<int>(k));
    return out;
}

double dy_at(const Field& f, const TorusGrid& g, int flat, int axis) {
    const double h2 = 2.0 * g.dy();
    if (g.n == 1) return (f[g.idx(flat + 1)] - f[g.idx(flat - 1)]) / h2;
    const int i = flat / g.Ny, j = flat % g.Ny;
    if (axis == 0) return (f[g.idx(i + 1, j)] - f[g.idx(i - 1, j)]) / h2;
    return (f[g.idx(i, j + 1)] - f[g.idx(i, j - 1)]) / h2;
}

std::pair<double, double> linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
    const size_t m = x.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t k = 0; k < m; ++k) {
        sx += x[k];
        sy += y[k];
        sxx += x[k] * x[k];
        sxy += x[k] * y[k];
    }
    const double denom = m * sxx - sx * sx;
    if (std::fabs(denom) < 1e-300) return {0.0, m ? sy / m : 0.0};
    const double slope = (m * sxy - sx * sy) / denom;
    const double intercept = (sy - slope * sx) / m;
    return {slope, intercept};
}

DecayFit decay_fit(const std::vector<std::pair<double, double>>& samples) {
    DecayFit fit;
    if (samples.empty()) return fit;
    const double eps10 = 10.0 * std::numeric_limits<double>::epsilon();
    const double osc0 = samples.front().second;
    if (osc0 <= eps10) {
        fit.all_zero = true;
        fit.beta = std::numeric_limits<double>::infinity();
        fit.valid = true;
        return fit;
    }
    std::vector<double> xs, ys;
    bool in_window = false;
    for (const auto& [s, osc] : samples) {
        if (!in_window && osc <= 0.1 * osc0) in_window = true;
        if (in_window && osc > eps10 * std::max(1.0, osc0)) {
            xs.push_back(s);
            ys.push_back(std::log(osc));
        }
    }
    if (xs.size() < 5) {
        // transient never ends (short run): fall back to the tail half
        xs.clear();
        ys.clear();
        for (size_t k = samples.size() / 2; k < samples.size(); ++k) {
            if (samples[k].second > eps10 * std::max(1.0, osc0)) {
                xs.push_back(samples[k].first);
                ys.push_back(std::log(samples[k].second));
            }
        }
    }
    if (xs.size() < 5) return fit;
    auto [slope, intercept] = linear_fit(xs, ys);
    fit.beta = -slope;
    fit.prefactor = std::exp(intercept);
    fit.window_lo = xs.front();
    fit.window_hi = xs.back();
    double ss = 0.0;
    for (size_t k = 0; k < xs.size(); ++k) {
        const double r = ys[k] - (intercept + slope * xs[k]);
        ss += r * r;
    }
    fit.residual = std::sqrt(ss / xs.size());
    fit.valid = true;
    return fit;
}

}  // namespace phom
