#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "parahom/symmat.hpp"

namespace phom {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConsistencyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct BudgetError : ConfigError {
    using ConfigError::ConfigError;
};

// Periodic grid on the unit fast torus, Ny nodes per axis.
struct TorusGrid {
    int n = 1;
    int Ny = 64;

    double dy() const { return 1.0 / Ny; }
    int size() const { return n == 1 ? Ny : Ny * Ny; }
    int wrap(int i) const {
        i %= Ny;
        return i < 0 ? i + Ny : i;
    }
    int idx(int i, int j = 0) const { return n == 1 ? wrap(i) : wrap(i) * Ny + wrap(j); }
    Vec2 node(int flat) const {
        if (n == 1) return Vec2{flat * dy(), 0.0};
        return Vec2{(flat / Ny) * dy(), (flat % Ny) * dy()};
    }
};

// Periodic grid on the slow torus of period L, Nx nodes per axis, horizon T.
struct SlowGrid {
    int n = 1;
    int Nx = 64;
    double L = 1.0;
    double T = 0.05;

    double dx() const { return L / Nx; }
    int size() const { return n == 1 ? Nx : Nx * Nx; }
    int wrap(int i) const {
        i %= Nx;
        return i < 0 ? i + Nx : i;
    }
    int idx(int i, int j = 0) const { return n == 1 ? wrap(i) : wrap(i) * Nx + wrap(j); }
    Vec2 node(int flat) const {
        if (n == 1) return Vec2{flat * dx(), 0.0};
        return Vec2{(flat / Nx) * dx(), (flat % Nx) * dx()};
    }
};

using Field = std::vector<double>;  // one value per grid node

double field_max(const Field& f);
double field_min(const Field& f);
double oscillation(const Field& f);
double field_mean(const Field& f);
bool field_finite(const Field& f);

// second-order central Hessian with periodic wrap; n=2 cross terms by the
// standard 4-point stencil
SymMat hessian_at(const Field& f, const TorusGrid& g, int flat);
SymMat hessian_at_slow(const Field& f, const SlowGrid& g, int flat);
std::vector<SymMat> discrete_hessian(const Field& f, const TorusGrid& g);
std::vector<SymMat> discrete_hessian_slow(const Field& f, const SlowGrid& g);

// first derivative (central) along fast axis a
double dy_at(const Field& f, const TorusGrid& g, int flat, int axis);

// Exponential decay fit of oscillation samples: log(osc) ~ log(C) - beta * s.
// The fit window starts once osc has dropped by a factor 10 from its first
// sample and requires at least 5 usable points.
struct DecayFit {
    double beta = 0.0;
    double prefactor = 0.0;
    double residual = 0.0;  // rms residual of the log-linear fit
    double window_lo = 0.0;
    double window_hi = 0.0;
    bool valid = false;
    bool all_zero = false;  // beta reported as +inf sentinel
};

DecayFit decay_fit(const std::vector<std::pair<double, double>>& samples);

// simple least squares of y against x; returns slope and intercept
std::pair<double, double> linear_fit(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace phom
