#include <cmath>

#include "doctest.h"
#include "parahom/layer.hpp"

using namespace phom;

namespace {
constexpr double kPi = 3.14159265358979323846;

OpPtr heat_1d() { return make_linear_tr(MatCoefficient::constant_identity(1), 1.0, 1.0); }

// a(y) = 1/(2 + sin 2 pi y) as an exact reciprocal Fourier field
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

LayerConfig small_cfg(int Ny = 32, int Nx = 16) {
    LayerConfig cfg;
    cfg.fast = TorusGrid{1, Ny};
    cfg.slow = SlowGrid{1, Nx, 1.0, 0.05};
    cfg.t_slices = {0.0};
    return cfg;
}

StageData cos_product_data(const LayerConfig& cfg) {
    return StageData::base_case(
        [](const Vec2& x, const Vec2& y) {
            return std::cos(2 * kPi * x[0]) * (1.0 + std::cos(2 * kPi * y[0]));
        },
        cfg.slow, cfg.fast);
}

}  // namespace

TEST_CASE("base layer: heat with zero-mean fast data gives gbar = 0 and beta = 4 pi^2") {
    auto cfg = small_cfg();
    auto op = heat_1d();
    auto stage = StageData::base_case(
        [](const Vec2& x, const Vec2& y) {
            return (0.5 + std::sin(2 * kPi * x[0])) * std::cos(2 * kPi * y[0]);
        },
        cfg.slow, cfg.fast);
    auto h = build_layer_hierarchy(*op, stage, 0, cfg);
    for (int ix = 0; ix < cfg.slow.size(); ++ix) CHECK(std::fabs(h.levels[0].gbar[ix]) < 1e-9);
    CHECK(h.levels[0].beta.beta == doctest::Approx(4 * kPi * kPi).epsilon(0.05));
}

TEST_CASE("base layer: heat preserves the mean, gbar = psi") {
    auto cfg = small_cfg();
    auto op = heat_1d();
    auto stage = StageData::base_case(
        [](const Vec2& x, const Vec2& y) {
            return 0.3 + std::sin(2 * kPi * x[0]) + std::cos(2 * kPi * y[0]);
        },
        cfg.slow, cfg.fast);
    auto h = build_layer_hierarchy(*op, stage, 0, cfg);
    for (int ix = 0; ix < cfg.slow.size(); ++ix) {
        const double psi = 0.3 + std::sin(2 * kPi * cfg.slow.node(ix)[0]);
        CHECK(h.levels[0].gbar[ix] == doctest::Approx(psi).epsilon(1e-8));
    }
    for (int ix = 0; ix < cfg.slow.size(); ++ix)
        CHECK(std::fabs(h.levels[0].gbar[ix] - h.levels[0].gbar_origin[ix]) < 1e-6);
}

TEST_CASE("harmonic-mean operator: gbar_0 = cos(2 pi x) by the invariant measure") {
    auto cfg = small_cfg(32, 16);
    auto op = harmonic_a_op();
    auto stage = cos_product_data(cfg);
    auto h = build_layer_hierarchy(*op, stage, 1, cfg);
    for (int ix = 0; ix < cfg.slow.size(); ++ix) {
        const double expect = std::cos(2 * kPi * cfg.slow.node(ix)[0]);
        CHECK(h.levels[0].gbar[ix] == doctest::Approx(expect).epsilon(1e-6));
    }
    // the first-order effective datum vanishes: the invariant mean of
    // f_1 = 2 a d_x d_y v_0 is a periodic sum of central differences
    for (int ix = 0; ix < cfg.slow.size(); ++ix) CHECK(std::fabs(h.levels[1].gbar[ix]) < 1e-6);
    CHECK(h.levels[1].source_decay_ok);
}

TEST_CASE("level 1 with x-independent data is identically zero") {
    auto cfg = small_cfg();
    auto op = heat_1d();
    auto stage = StageData::base_case(
        [](const Vec2&, const Vec2& y) { return std::cos(2 * kPi * y[0]); }, cfg.slow, cfg.fast);
    auto h = build_layer_hierarchy(*op, stage, 2, cfg);
    CHECK(h.levels[1].vtilde.max_abs() < 1e-10);
    for (int ix = 0; ix < cfg.slow.size(); ++ix) {
        CHECK(std::fabs(h.levels[1].gbar[ix]) < 1e-10);
        CHECK(std::fabs(h.levels[2].gbar[ix]) < 1e-10);
    }
}

TEST_CASE("linear operator: a periodic stage shift cancels exactly") {
    auto cfg = small_cfg(32, 8);
    auto op = harmonic_a_op();
    auto stage0 = cos_product_data(cfg);

    StageData shifted = cos_product_data(cfg);
    SlabField proto = SlabField::zeros(cfg.slow, cfg.t_slices, cfg.fast, 1.0 / 32, 33, false);
    MatSlabField X0 = MatSlabField::zeros(1, proto);
    for (auto& sl : X0.comp[0].slabs) {
        sl.periodic = true;
        sl.period = 1.0;
        for (int k = 0; k < sl.count(); ++k)
            for (int i = 0; i < sl.grid.size(); ++i)
                sl.snaps[k][i] = 0.7 * std::sin(2 * kPi * sl.grid.node(i)[0]);
    }
    shifted.X.push_back(X0);

    auto h0 = build_layer_hierarchy(*op, stage0, 1, cfg);
    auto h1 = build_layer_hierarchy(*op, shifted, 1, cfg);
    for (int k = 0; k <= 1; ++k)
        for (int ix = 0; ix < cfg.slow.size(); ++ix)
            CHECK(h0.levels[k].gbar[ix] == doctest::Approx(h1.levels[k].gbar[ix]).epsilon(1e-9));
}

TEST_CASE("taylor source phi") {
    MatCoefficient A1 = MatCoefficient::constant_identity(1),
                   A2 = MatCoefficient::constant_identity(1);
    A2.comp[0].constant = 2.0;
    auto op = make_hjb_min({A1, A2}, 1.0, 2.0, 3.0);
    const Vec2 x{0.1, 0}, y{0.4, 0};
    const double t = 0.0, s = 0.2;

    SUBCASE("k=0 trivial stage gives F(V0)") {
        const SymMat V0 = SymMat::scalar(0.7);
        const double phi0 = stage_phi_k(*op, x, t, y, s, 0, {}, V0, {}, SymMat::zero(1), 0.0);
        CHECK(phi0 == doctest::Approx(op->eval(V0, x, t, y, s)));
    }
    SUBCASE("k=1 with V1 = 0 vanishes") {
        const SymMat V0 = SymMat::scalar(0.7);
        CHECK(stage_phi_k(*op, x, t, y, s, 1, {SymMat::zero(1)}, V0, {}, SymMat::zero(1), 0.0) ==
              doctest::Approx(0.0));
    }
    SUBCASE("k=2 with only V1 nonzero equals the sigma-path second derivative") {
        const SymMat V0 = SymMat::scalar(0.7), V1 = SymMat::scalar(0.4);
        const double phi2 =
            stage_phi_k(*op, x, t, y, s, 2, {V1, SymMat::zero(1)}, V0, {}, SymMat::zero(1), 0.0);
        auto g = [&](double sg) { return op->eval(V0 + sg * V1, x, t, y, s); };
        const double h = 1e-3;
        const double d2 = (g(h) - 2.0 * g(0.0) + g(-h)) / (h * h);
        CHECK(phi2 == doctest::Approx(0.5 * d2).epsilon(1e-4));
    }
    SUBCASE("k=2 includes tr(B V2) when V2 is nonzero") {
        const SymMat V0 = SymMat::scalar(0.7), V1 = SymMat::zero(1), V2 = SymMat::scalar(0.3);
        const double phi2 = stage_phi_k(*op, x, t, y, s, 2, {V1, V2}, V0, {}, SymMat::zero(1), 0.0);
        const SymMat B = frechet_derivative(*op, 1, V0, x, t, y, s).as_matrix();
        CHECK(phi2 == doctest::Approx(trace_product(B, V2)).epsilon(1e-6));
    }
}

TEST_CASE("gbar_2 is grid-consistent under refinement") {
    // note: the plain cos(2 pi y) data is antisymmetric about y = 1/4 while
    // a(y) is symmetric there, which makes gbar_2 vanish identically; the
    // cos(4 pi y) component breaks that parity
    auto op = harmonic_a_op();
    auto run = [&](int Ny) {
        auto cfg = small_cfg(Ny, 16);
        auto stage = StageData::base_case(
            [](const Vec2& x, const Vec2& y) {
                return std::cos(2 * kPi * x[0]) *
                       (1.0 + std::cos(2 * kPi * y[0]) + 0.5 * std::cos(4 * kPi * y[0]));
            },
            cfg.slow, cfg.fast);
        auto h = build_layer_hierarchy(*op, stage, 2, cfg);
        return h.levels[2].gbar;
    };
    const Field g32 = run(32), g64 = run(64);
    double scale = 0.0, diff = 0.0;
    for (size_t i = 0; i < g32.size(); ++i) {
        scale = std::max(scale, std::fabs(g64[i]));
        diff = std::max(diff, std::fabs(g32[i] - g64[i]));
    }
    CHECK(scale > 1e-4);
    CHECK(diff < 0.05 * std::max(scale, 1e-3));
}

TEST_CASE("decay slopes are non-increasing in k within tolerance") {
    auto cfg = small_cfg(32, 16);
    auto op = harmonic_a_op();
    auto stage = cos_product_data(cfg);
    auto h = build_layer_hierarchy(*op, stage, 2, cfg);
    REQUIRE(h.levels[0].beta.valid);
    for (int k = 1; k <= 2; ++k)
        if (h.levels[k].beta.valid && !h.levels[k].beta.all_zero)
            CHECK(h.levels[k].beta.beta <= h.levels[0].beta.beta * 1.10);
}

TEST_CASE("residual report: m=2 order reaches the target m-1") {
    auto cfg = small_cfg(32, 16);
    auto op = harmonic_a_op();
    auto stage = cos_product_data(cfg);
    auto h = build_layer_hierarchy(*op, stage, 2, cfg);
    auto rep = layer_residual_report(*op, stage, h, {0.25, 0.125, 0.0625});
    CHECK(rep.valid);
    CHECK(rep.eps_order >= 0.9);
}
