#include <cmath>

#include "doctest.h"
#include "parahom/interior.hpp"

using namespace phom;

namespace {
constexpr double kPi = 3.14159265358979323846;

OpPtr heat_1d() { return make_linear_tr(MatCoefficient::constant_identity(1), 1.0, 1.0); }

OpPtr harmonic_a_op() {
    FourierField a;
    a.n = 1;
    a.constant = 2.0;
    FourierMode m;
    m.ky = {1, 0};
    m.a_sin = 1.0;
    a.modes.push_back(m);
    a.reciprocal = true;
    return make_linear_1d(a, 1.0 / 3.0, 1.0);
}

InteriorConfig int_cfg(int Ny = 32, int Nx = 32) {
    InteriorConfig cfg;
    cfg.fast = TorusGrid{1, Ny};
    cfg.slow = SlowGrid{1, Nx, 1.0, 0.05};
    cfg.t_slices = {0.0, 0.0125, 0.025, 0.0375, 0.05};
    cfg.ergodic.Ns = 16;
    return cfg;
}

Field cos_x(const SlowGrid& g, int mode = 1) {
    Field f(g.size());
    for (int i = 0; i < g.size(); ++i) f[i] = std::cos(2 * kPi * mode * g.node(i)[0]);
    return f;
}

}  // namespace

TEST_CASE("effective zeroth order") {
    auto cfg = int_cfg(16, 64);
    SUBCASE("heat: exact decay of the first mode") {
        auto op = heat_1d();
        auto h = build_interior_hierarchy(*op, {}, {cos_x(cfg.slow), Field(cfg.slow.size(), 0.0),
                                                    Field(cfg.slow.size(), 0.0)},
                                          0, EffectiveMode::Linearized, nullptr, cfg);
        const double decay = std::exp(-4 * kPi * kPi * cfg.slow.T);
        for (int ix = 0; ix < cfg.slow.size(); ++ix)
            CHECK(h.ubar[0].value(ix, cfg.slow.T) ==
                  doctest::Approx(decay * cos_x(cfg.slow)[ix]).epsilon(1e-2));
    }
    SUBCASE("constant data stays constant") {
        auto op = harmonic_a_op();
        auto h = build_interior_hierarchy(*op, {}, {Field(cfg.slow.size(), 0.7)}, 0,
                                          EffectiveMode::Linearized, nullptr, cfg);
        for (int ix = 0; ix < cfg.slow.size(); ++ix)
            CHECK(h.ubar[0].value(ix, cfg.slow.T) == doctest::Approx(0.7));
    }
    SUBCASE("harmonic-mean coefficient homogenizes to 1/2") {
        auto op = harmonic_a_op();
        auto h = build_interior_hierarchy(*op, {}, {cos_x(cfg.slow)}, 0,
                                          EffectiveMode::Linearized, nullptr, cfg);
        CHECK(h.cell(0, 0).Abar[0] == doctest::Approx(0.5).epsilon(1e-6));
        const double decay = std::exp(-2 * kPi * kPi * cfg.slow.T);
        for (int ix = 0; ix < cfg.slow.size(); ++ix)
            CHECK(h.ubar[0].value(ix, cfg.slow.T) ==
                  doctest::Approx(decay * cos_x(cfg.slow)[ix]).epsilon(1e-2));
    }
}

TEST_CASE("linearized and nonlinear modes agree for a linear operator") {
    auto cfg = int_cfg(32, 32);
    auto op = harmonic_a_op();
    std::vector<Field> gb = {cos_x(cfg.slow), Field(cfg.slow.size(), 0.0),
                             Field(cfg.slow.size(), 0.0)};
    auto lin = build_interior_hierarchy(*op, {}, gb, 2, EffectiveMode::Linearized, nullptr, cfg);

    TableConfig tcfg;
    tcfg.P_max = 64.0;  // covers (2 pi)^2 cos
    tcfg.P_res = 9;
    tcfg.concavity_triples = 50;
    auto table = effective_operator_table(*op, cfg.slow, cfg.fast, tcfg, cfg.ergodic);
    auto nl = build_interior_hierarchy(*op, {}, gb, 2, EffectiveMode::Nonlinear, &table, cfg);

    for (int ix = 0; ix < cfg.slow.size(); ix += 4) {
        CHECK(lin.ubar[0].value(ix, 0.03) ==
              doctest::Approx(nl.ubar[0].value(ix, 0.03)).epsilon(1e-6));
        const Vec2 xv = cfg.slow.node(ix);
        for (double y : {0.0, 0.3, 0.66})
            CHECK(lin.wtilde(2, xv, 0.02, Vec2{y, 0}, 0.1) ==
                  doctest::Approx(nl.wtilde(2, xv, 0.02, Vec2{y, 0}, 0.1)).epsilon(2e-4));
    }
}

TEST_CASE("phi_2 and fbar_2 vanish identically") {
    auto cfg = int_cfg();
    auto op = harmonic_a_op();
    auto h = build_interior_hierarchy(*op, {}, {cos_x(cfg.slow), Field(cfg.slow.size(), 0.0),
                                                Field(cfg.slow.size(), 0.0)},
                                      2, EffectiveMode::Linearized, nullptr, cfg);
    CHECK(h.phi[2].max_abs() == doctest::Approx(0.0));
    for (const auto& slice : h.fbar[2])
        for (double v : slice) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("constant coefficients: all correctors are fast-constant") {
    auto cfg = int_cfg();
    MatCoefficient A = MatCoefficient::constant_identity(1);
    A.comp[0].constant = 0.8;
    auto op = make_linear_tr(A, 0.8, 0.8);
    auto h = build_interior_hierarchy(*op, {}, {cos_x(cfg.slow), Field(cfg.slow.size(), 0.0),
                                                Field(cfg.slow.size(), 0.0)},
                                      2, EffectiveMode::Linearized, nullptr, cfg);
    for (int k = 0; k <= 2; ++k)
        for (int it = 0; it < 5; ++it)
            for (int ix = 0; ix < cfg.slow.size(); ix += 8)
                CHECK(h.fast_oscillation(k, it, ix) < 1e-8);
}

TEST_CASE("structural invariants: pinning and fast-constant low orders") {
    auto cfg = int_cfg(32, 32);
    auto op = harmonic_a_op();
    Field g1(cfg.slow.size()), g2(cfg.slow.size());
    for (int i = 0; i < cfg.slow.size(); ++i) {
        g1[i] = 0.3 * std::sin(2 * kPi * cfg.slow.node(i)[0]);
        g2[i] = 0.1 * std::cos(4 * kPi * cfg.slow.node(i)[0]);
    }
    auto h = build_interior_hierarchy(*op, {}, {cos_x(cfg.slow), g1, g2}, 2,
                                      EffectiveMode::Linearized, nullptr, cfg);
    for (int ix = 0; ix < cfg.slow.size(); ix += 4) {
        CHECK(h.fast_oscillation(0, 0, ix) == doctest::Approx(0.0));
        CHECK(h.fast_oscillation(1, 0, ix) == doctest::Approx(0.0));
    }
    const std::vector<Field> gb = {cos_x(cfg.slow), g1, g2};
    for (int k = 0; k <= 2; ++k)
        for (int ix = 0; ix < cfg.slow.size(); ix += 4) {
            const Vec2 xv = cfg.slow.node(ix);
            CHECK(h.wtilde(k, xv, 0.0, Vec2{0, 0}, 0.0) ==
                  doctest::Approx(gb[k][ix]).epsilon(1e-9));
        }
}

TEST_CASE("fbar_4 matches the closed-form invariant-measure value") {
    // harmonic a(y): chi = -sin(2 pi y)/(8 pi^2) and the r=4 driven constant is
    // fbar_4 = -mu[chi] Abar u0'''' = u0''''/(64 pi^2), i.e. (pi^2/4) cos(2 pi x)
    // at t = 0 for data cos(2 pi x)
    auto cfg = int_cfg(64, 64);
    auto op = harmonic_a_op();
    auto h = build_interior_hierarchy(*op, {}, {cos_x(cfg.slow), Field(cfg.slow.size(), 0.0),
                                                Field(cfg.slow.size(), 0.0)},
                                      2, EffectiveMode::Linearized, nullptr, cfg);
    const double expect = kPi * kPi / 4.0;
    CHECK(h.fbar[4][0][0] == doctest::Approx(expect).epsilon(0.03));
    for (int ix = 0; ix < cfg.slow.size(); ix += 8)
        CHECK(std::fabs(h.ubar[1].value(ix, cfg.slow.T)) < 1e-8);
}

TEST_CASE("linear superposition of the interior hierarchy") {
    auto cfg = int_cfg(32, 32);
    auto op = harmonic_a_op();
    Field ga = cos_x(cfg.slow), gb_f = cos_x(cfg.slow, 2), zero(cfg.slow.size(), 0.0);
    Field gsum(cfg.slow.size());
    for (int i = 0; i < cfg.slow.size(); ++i) gsum[i] = ga[i] + 0.5 * gb_f[i];

    auto ha = build_interior_hierarchy(*op, {}, {ga, zero, zero}, 2, EffectiveMode::Linearized,
                                       nullptr, cfg);
    auto hb = build_interior_hierarchy(*op, {}, {gb_f, zero, zero}, 2, EffectiveMode::Linearized,
                                       nullptr, cfg);
    auto hs = build_interior_hierarchy(*op, {}, {gsum, zero, zero}, 2, EffectiveMode::Linearized,
                                       nullptr, cfg);
    for (int ix = 0; ix < cfg.slow.size(); ix += 4) {
        const Vec2 xv = cfg.slow.node(ix);
        for (int k = 0; k <= 2; ++k) {
            const double sum = ha.wtilde(k, xv, 0.02, Vec2{0.3, 0}, 0.4) +
                               0.5 * hb.wtilde(k, xv, 0.02, Vec2{0.3, 0}, 0.4);
            CHECK(hs.wtilde(k, xv, 0.02, Vec2{0.3, 0}, 0.4) == doctest::Approx(sum).epsilon(1e-3));
        }
    }
}

TEST_CASE("interior residual order reaches the target at m=2") {
    auto cfg = int_cfg(32, 32);
    auto op = harmonic_a_op();
    auto h = build_interior_hierarchy(*op, {}, {cos_x(cfg.slow), Field(cfg.slow.size(), 0.0),
                                                Field(cfg.slow.size(), 0.0)},
                                      2, EffectiveMode::Linearized, nullptr, cfg);
    auto rep = interior_residual_report(*op, h, {0.25, 0.125, 0.0625}, true);
    CHECK(rep.valid);
    CHECK(rep.eps_order >= 0.9);
}
