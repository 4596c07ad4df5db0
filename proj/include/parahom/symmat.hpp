#pragma once

#include <array>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace phom {

// Small symmetric matrix for spatial dimension n in {1,2}.
// Storage order: [p11, p22, p12]; for n=1 only p11 is used.
// The off-diagonal basis matrix E12 carries 1/2 entries so that
// F(P + h E12) differentiates along the direction used by tr-pairing.
struct SymMat {
    int n = 1;
    std::array<double, 3> v{0.0, 0.0, 0.0};

    SymMat() = default;
    explicit SymMat(int dim) : n(dim) { assert(dim == 1 || dim == 2); }
    static SymMat scalar(double p) {
        SymMat m(1);
        m.v[0] = p;
        return m;
    }
    static SymMat make2(double p11, double p22, double p12) {
        SymMat m(2);
        m.v = {p11, p22, p12};
        return m;
    }
    static SymMat zero(int dim) { return SymMat(dim); }
    static SymMat identity(int dim) {
        SymMat m(dim);
        m.v[0] = 1.0;
        if (dim == 2) m.v[1] = 1.0;
        return m;
    }

    static int comps(int dim) { return dim == 1 ? 1 : 3; }
    int comps() const { return comps(n); }

    // component index c -> (i,j), i<=j: 0->(0,0), 1->(1,1), 2->(0,1)
    static std::pair<int, int> comp_ij(int c) {
        switch (c) {
            case 0: return {0, 0};
            case 1: return {1, 1};
            default: return {0, 1};
        }
    }
    static bool comp_diag(int c) { return c < 2; }
    // multiplicity of the component in full-index sums (off-diagonals count twice)
    static double comp_mult(int c) { return comp_diag(c) ? 1.0 : 2.0; }

    // standard basis matrix E_c with half off-diagonal entries
    static SymMat basis(int dim, int c) {
        SymMat e(dim);
        if (c < 2)
            e.v[c] = 1.0;
        else
            e.v[2] = 0.5;
        return e;
    }

    double& operator[](int c) { return v[c]; }
    double operator[](int c) const { return v[c]; }

    double trace() const { return n == 1 ? v[0] : v[0] + v[1]; }
    double norm() const {
        if (n == 1) return std::fabs(v[0]);
        return std::sqrt(v[0] * v[0] + v[1] * v[1] + 2.0 * v[2] * v[2]);
    }

    SymMat& operator+=(const SymMat& o) {
        for (int c = 0; c < 3; ++c) v[c] += o.v[c];
        return *this;
    }
    SymMat& operator-=(const SymMat& o) {
        for (int c = 0; c < 3; ++c) v[c] -= o.v[c];
        return *this;
    }
    SymMat& operator*=(double a) {
        for (int c = 0; c < 3; ++c) v[c] *= a;
        return *this;
    }
    friend SymMat operator+(SymMat a, const SymMat& b) { return a += b; }
    friend SymMat operator-(SymMat a, const SymMat& b) { return a -= b; }
    friend SymMat operator*(double a, SymMat m) { return m *= a; }

    // eigenvalues (ascending)
    std::array<double, 2> eigenvalues() const {
        if (n == 1) return {v[0], 0.0};
        const double tr = v[0] + v[1];
        const double disc = std::sqrt((v[0] - v[1]) * (v[0] - v[1]) + 4.0 * v[2] * v[2]);
        return {0.5 * (tr - disc), 0.5 * (tr + disc)};
    }
    double trace_plus() const {
        auto ev = eigenvalues();
        double t = std::max(ev[0], 0.0) + (n == 2 ? std::max(ev[1], 0.0) : 0.0);
        return t;
    }
    double trace_minus() const {
        auto ev = eigenvalues();
        double t = std::max(-ev[0], 0.0) + (n == 2 ? std::max(-ev[1], 0.0) : 0.0);
        return t;
    }
    bool is_psd(double tol = 0.0) const {
        auto ev = eigenvalues();
        return ev[0] >= -tol && (n == 1 || ev[1] >= -tol);
    }
};

// tr(A B) for symmetric A, B
inline double trace_product(const SymMat& a, const SymMat& b) {
    if (a.n == 1) return a.v[0] * b.v[0];
    return a.v[0] * b.v[0] + a.v[1] * b.v[1] + 2.0 * a.v[2] * b.v[2];
}

// 2-vector used for slow/fast spatial coordinates (x or y); n=1 uses [0]
using Vec2 = std::array<double, 2>;

inline Vec2 vec1(double x) { return Vec2{x, 0.0}; }

}  // namespace phom
