#include <cmath>
#include <random>

#include "doctest.h"
#include "parahom/stepper.hpp"

using namespace phom;

namespace {
constexpr double kPi = 3.14159265358979323846;

Field cos_mode(const TorusGrid& g, int k) {
    Field f(g.size());
    for (int i = 0; i < g.size(); ++i) f[i] = std::cos(2.0 * kPi * k * g.node(i)[0]);
    return f;
}

OpPtr heat_op(int n = 1) { return make_linear_tr(MatCoefficient::constant_identity(n), 1.0, 1.0); }

}  // namespace

TEST_CASE("discrete hessian: constants, cosine mode, periodized quadratic") {
    TorusGrid g{1, 64};
    SUBCASE("constant field has zero hessian") {
        Field f(g.size(), 3.7);
        for (auto H : discrete_hessian(f, g)) CHECK(H[0] == doctest::Approx(0.0));
    }
    SUBCASE("cosine mode reproduces the discrete symbol and -4 pi^2 within O(dy^2)") {
        Field f = cos_mode(g, 1);
        const double sym = (2.0 - 2.0 * std::cos(2.0 * kPi * g.dy())) / (g.dy() * g.dy());
        const SymMat H0 = hessian_at(f, g, 0);
        CHECK(H0[0] == doctest::Approx(-sym).epsilon(1e-12));
        CHECK(std::fabs(H0[0] + 4.0 * kPi * kPi) < 4.0 * kPi * kPi * 1e-2);
        TorusGrid g2{1, 128};
        Field f2 = cos_mode(g2, 1);
        const double e1 = std::fabs(hessian_at(f, g, 0)[0] + 4 * kPi * kPi);
        const double e2 = std::fabs(hessian_at(f2, g2, 0)[0] + 4 * kPi * kPi);
        CHECK(e1 / e2 > 3.5);  // second order
    }
    SUBCASE("periodized quadratic is exact away from the wrap seam") {
        Field f(g.size());
        for (int i = 0; i < g.size(); ++i) {
            const double y = g.node(i)[0];
            f[i] = y * (1.0 - y);
        }
        for (int i = 2; i < g.size() - 2; ++i)
            CHECK(hessian_at(f, g, i)[0] == doctest::Approx(-2.0).epsilon(1e-9));
    }
    SUBCASE("2d cross stencil on a product mode") {
        TorusGrid q{2, 32};
        Field f(q.size());
        for (int i = 0; i < q.size(); ++i) {
            const Vec2 y = q.node(i);
            f[i] = std::sin(2 * kPi * y[0]) * std::sin(2 * kPi * y[1]);
        }
        // d2/dxdy = (2pi)^2 cos cos at the node (1/8, 1/8): value (2pi)^2/2
        const int flat = q.idx(4, 4);
        const double exact = 4 * kPi * kPi * std::cos(2 * kPi * 0.125) * std::cos(2 * kPi * 0.125);
        CHECK(hessian_at(f, q, flat)[2] == doctest::Approx(exact).epsilon(2e-2));
    }
}

TEST_CASE("monotone step: constants preserved, fourier symbol exact, monotone") {
    TorusGrid g{1, 64};
    auto op = heat_op();
    const double ds = cfl_ds(g, 1.0);
    auto rhs = make_fast_rhs(*op, vec1(0), 0.0, g);

    SUBCASE("constants are solutions") {
        Field f(g.size(), 1.23), out(g.size());
        monotone_step(g, f, out, rhs, 0.0, ds);
        for (double v : out) CHECK(v == doctest::Approx(1.23));
    }
    SUBCASE("single mode is multiplied by the discrete amplification factor") {
        Field f = cos_mode(g, 1), out(g.size());
        monotone_step(g, f, out, rhs, 0.0, ds);
        const double sym = (2.0 - 2.0 * std::cos(2.0 * kPi * g.dy())) / (g.dy() * g.dy());
        const double amp = 1.0 - ds * sym;
        for (int i = 0; i < g.size(); ++i) CHECK(out[i] == doctest::Approx(amp * f[i]).epsilon(1e-12));
        CHECK(amp == doctest::Approx(std::exp(-4.0 * kPi * kPi * ds)).epsilon(1e-4));
    }
    SUBCASE("comparison principle on random ordered pairs, all built-in families") {
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> u(-1.0, 1.0), upos(0.0, 0.5);
        std::vector<OpPtr> ops = {heat_op(), make_pucci_minus(1, 1.0, 2.0)};
        MatCoefficient A1 = MatCoefficient::constant_identity(1),
                       A2 = MatCoefficient::constant_identity(1);
        A2.comp[0].constant = 2.0;
        ops.push_back(make_hjb_min({A1, A2}, 1.0, 2.0, 4.0));
        for (const auto& o : ops) {
            auto r = make_fast_rhs(*o, vec1(0), 0.0, g);
            const double dso = cfl_ds(g, o->Lambda);
            for (int rep = 0; rep < 30; ++rep) {
                Field lo(g.size()), hi(g.size());
                for (int i = 0; i < g.size(); ++i) {
                    lo[i] = u(rng);
                    hi[i] = lo[i] + upos(rng);
                }
                Field lo2(g.size()), hi2(g.size());
                monotone_step(g, lo, lo2, r, 0.0, dso);
                monotone_step(g, hi, hi2, r, 0.0, dso);
                for (int i = 0; i < g.size(); ++i) CHECK(lo2[i] <= hi2[i] + 1e-13);
            }
        }
    }
}

TEST_CASE("solve_fast_cauchy: heat decay of a cosine and oscillation behaviour") {
    TorusGrid g{1, 64};
    auto op = heat_op();
    auto rhs = make_fast_rhs(*op, vec1(0), 0.0, g);

    SUBCASE("cos(2 pi y) decays like exp(-4 pi^2 s) up to 5e-3 at S=0.1") {
        HorizonPolicy pol;
        pol.S_cap = 0.1;
        pol.snap_ds = 0.1 / 16;
        pol.require_convergence = false;
        auto res = solve_fast_cauchy(g, cos_mode(g, 1), rhs, 1.0, pol);
        const double decay = std::exp(-4.0 * kPi * kPi * 0.1);
        double err = 0.0;
        for (int i = 0; i < g.size(); ++i)
            err = std::max(err, std::fabs(res.traj.snaps.back()[i] - decay * cos_mode(g, 1)[i]));
        CHECK(err <= 5e-3);
    }
    SUBCASE("constant data gives a constant trajectory") {
        HorizonPolicy pol;
        pol.S_cap = 0.5;
        pol.require_convergence = false;
        auto res = solve_fast_cauchy(g, Field(g.size(), 0.4), rhs, 1.0, pol);
        for (const auto& snap : res.traj.snaps)
            for (double v : snap) CHECK(v == doctest::Approx(0.4));
        CHECK(res.osc_samples.back().second == doctest::Approx(0.0));
    }
    SUBCASE("pucci flow has strictly decreasing oscillation") {
        auto pm = make_pucci_minus(1, 1.0, 2.0);
        auto rp = make_fast_rhs(*pm, vec1(0), 0.0, g);
        HorizonPolicy pol;
        pol.S_cap = 0.2;
        pol.require_convergence = false;
        auto res = solve_fast_cauchy(g, cos_mode(g, 1), rp, 2.0, pol);
        for (size_t k = 1; k < res.osc_samples.size(); ++k)
            CHECK(res.osc_samples[k].second < res.osc_samples[k - 1].second);
    }
}

TEST_CASE("oscillation decay fits") {
    TorusGrid g{1, 64};
    SUBCASE("heat flow rate 4 pi^2 within 5 percent") {
        auto op = heat_op();
        auto rhs = make_fast_rhs(*op, vec1(0), 0.0, g);
        HorizonPolicy pol;
        pol.S_cap = 0.6;
        pol.snap_ds = 1.0 / 128;
        pol.require_convergence = false;
        auto res = solve_fast_cauchy(g, cos_mode(g, 1), rhs, 1.0, pol);
        auto fit = decay_fit(res.osc_samples);
        CHECK(fit.valid);
        CHECK(fit.beta == doctest::Approx(4.0 * kPi * kPi).epsilon(0.05));
        CHECK(fit.residual < 0.05);
    }
    SUBCASE("constant trajectory fits the +inf sentinel") {
        std::vector<std::pair<double, double>> samples;
        for (int k = 0; k < 10; ++k) samples.push_back({0.1 * k, 0.0});
        auto fit = decay_fit(samples);
        CHECK(fit.all_zero);
        CHECK(std::isinf(fit.beta));
        CHECK(fit.residual == doctest::Approx(0.0));
    }
    SUBCASE("pucci rate lies between the extremal linear rates") {
        auto pm = make_pucci_minus(1, 1.0, 2.0);
        auto rhs = make_fast_rhs(*pm, vec1(0), 0.0, g);
        HorizonPolicy pol;
        pol.S_cap = 0.5;
        pol.snap_ds = 1.0 / 128;
        pol.require_convergence = false;
        auto res = solve_fast_cauchy(g, cos_mode(g, 1), rhs, 2.0, pol);
        auto fit = decay_fit(res.osc_samples);
        CHECK(fit.beta >= 4.0 * kPi * kPi * 0.95);
        CHECK(fit.beta <= 8.0 * kPi * kPi * 1.05);
    }
}

TEST_CASE("solve_slow_cauchy: analytic decay and cross-solver agreement") {
    SlowGrid g{1, 64, 1.0, 0.05};
    Field g0(g.size());
    for (int i = 0; i < g.size(); ++i) g0[i] = std::cos(2.0 * kPi * g.node(i)[0]);

    SUBCASE("tr(A P) with A = 1/2 decays at rate 2 pi^2 per unit t") {
        EffectiveOp eff = [](const SymMat& H, const Vec2&, double) { return 0.5 * H[0]; };
        auto traj = solve_slow_cauchy(g, g0, eff, 0.5, nullptr);
        const double decay = std::exp(-2.0 * kPi * kPi * g.T);
        double err = 0.0;
        for (int i = 0; i < g.size(); ++i)
            err = std::max(err, std::fabs(traj.snaps.back()[i] - decay * g0[i]));
        CHECK(err <= 1e-2);
    }
    SUBCASE("constant initial data stays constant") {
        EffectiveOp eff = [](const SymMat& H, const Vec2&, double) { return 0.5 * H[0]; };
        auto traj = solve_slow_cauchy(g, Field(g.size(), 2.5), eff, 0.5, nullptr);
        for (double v : traj.snaps.back()) CHECK(v == doctest::Approx(2.5));
    }
    SUBCASE("budget guard raises") {
        EffectiveOp eff = [](const SymMat& H, const Vec2&, double) { return 0.5 * H[0]; };
        SlowPolicy pol;
        pol.max_node_steps = 10;
        CHECK_THROWS_AS(solve_slow_cauchy(g, g0, eff, 0.5, nullptr, pol), BudgetError);
    }
}

TEST_CASE("grid refinement changes sup values at second order on smooth linear cases") {
    auto run = [&](int N) {
        TorusGrid g{1, N};
        auto op = heat_op();
        auto rhs = make_fast_rhs(*op, vec1(0), 0.0, g);
        HorizonPolicy pol;
        pol.S_cap = 0.05;
        pol.snap_ds = 0.05 / 8;
        pol.require_convergence = false;
        Field f(g.size());
        for (int i = 0; i < g.size(); ++i) f[i] = std::cos(2 * kPi * g.node(i)[0]);
        auto res = solve_fast_cauchy(g, f, rhs, 1.0, pol);
        // compare against the exact solution at S = 0.05
        double err = 0.0;
        for (int i = 0; i < g.size(); ++i)
            err = std::max(err, std::fabs(res.traj.snaps.back()[i] -
                                          std::exp(-4 * kPi * kPi * 0.05) * f[i]));
        return err;
    };
    const double e1 = run(32), e2 = run(64);
    CHECK(e1 / e2 > 2.0);  // at least first order observed; smooth case is ~2nd
}
