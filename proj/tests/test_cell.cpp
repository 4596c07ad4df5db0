#include <cmath>

#include "doctest.h"
#include "parahom/ergodic.hpp"

using namespace phom;

namespace {
constexpr double kPi = 3.14159265358979323846;

// F(p, y) = p / (2 + sin 2 pi y): ergodic constant gamma(p) = p/2 exactly
OpPtr harmonic_mean_op() {
    FourierField denom;
    denom.n = 1;
    denom.constant = 2.0;
    FourierMode m;
    m.ky = {1, 0};
    m.a_sin = 1.0;
    denom.modes.push_back(m);
    auto op = std::make_shared<FullyNonlinearOp>();
    op->n = 1;
    op->lambda = 1.0 / 3.0;
    op->Lambda = 1.0;
    op->concave = true;
    op->evaluator = [denom](const SymMat& P, const Vec2& x, double t, const Vec2& y, double s) {
        return P[0] / denom.eval(x, t, y, s);
    };
    op->d1 = [denom](const SymMat&, const Vec2& x, double t, const Vec2& y, double s) {
        return SymMat::scalar(1.0 / denom.eval(x, t, y, s));
    };
    return op;
}

}  // namespace

TEST_CASE("cell: operator independent of fast variables has gamma = F(P) and w = 0") {
    auto op = make_pucci_minus(1, 1.0, 2.0);
    TorusGrid g{1, 32};
    ErgodicConfig cfg;
    auto sol = ergodic_constant(*op, SymMat::scalar(-1.5), vec1(0), 0, CellMethod::LongTimeSlope, g,
                                cfg);
    CHECK(sol.gamma == doctest::Approx(-3.0).epsilon(1e-8));
    for (const auto& snap : sol.w.snaps)
        for (double v : snap) CHECK(std::fabs(v) < 1e-8);
}

TEST_CASE("cell: P = 0 gives gamma = 0 and w = 0") {
    auto op = harmonic_mean_op();
    TorusGrid g{1, 32};
    auto sol = ergodic_constant(*op, SymMat::zero(1), vec1(0), 0, CellMethod::LongTimeSlope, g, {});
    CHECK(std::fabs(sol.gamma) < 1e-12);
    for (const auto& snap : sol.w.snaps)
        for (double v : snap) CHECK(std::fabs(v) < 1e-12);
}

TEST_CASE("cell: 1d harmonic mean oracle gamma(p) = p/2") {
    auto op = harmonic_mean_op();
    TorusGrid g{1, 64};
    for (double p : {-2.0, -1.0, 1.0, 2.0}) {
        auto sol =
            ergodic_constant(*op, SymMat::scalar(p), vec1(0), 0, CellMethod::LongTimeSlope, g, {});
        CHECK(sol.gamma == doctest::Approx(0.5 * p).epsilon(1e-6));
    }
}

TEST_CASE("cell: penalization and slope agree; normalization and uniqueness") {
    auto op = harmonic_mean_op();
    TorusGrid g{1, 32};
    ErgodicConfig cfg;
    auto sol = ergodic_constant(*op, SymMat::scalar(1.0), vec1(0), 0, CellMethod::Both, g, cfg);
    CHECK(sol.cross_diff < 1e-5);
    CHECK(sol.gamma == doctest::Approx(0.5).epsilon(1e-5));
    CHECK(sol.w.snaps[0][0] == doctest::Approx(0.0));  // w(0,0) = 0 exactly

    // uniqueness up to a constant: the penalized corrector differs from the
    // slope corrector by at most a constant once both are pinned at (0,0)
    auto pen = ergodic_constant(*op, SymMat::scalar(1.0), vec1(0), 0, CellMethod::Penalization, g,
                                cfg);
    double worst = 0.0;
    for (int k = 0; k < sol.w.count(); ++k) {
        const double s = sol.w.s_at(k);
        for (int i = 0; i < g.size(); ++i)
            worst = std::max(worst, std::fabs(sol.w.snaps[k][i] - pen.w.value(i, s)));
    }
    CHECK(worst < 5e-4);
}

TEST_CASE("cell: delta w^delta boundedness") {
    auto op = harmonic_mean_op();
    TorusGrid g{1, 32};
    const SymMat P = SymMat::scalar(2.0);
    FastRhs rhs = [&](const SymMat& H, int flat, double s) {
        return op->eval(H + P, vec1(0), 0, g.node(flat), s);
    };
    double supF = 0.0;
    for (int i = 0; i < g.size(); ++i)
        supF = std::max(supF, std::fabs(op->eval(P, vec1(0), 0, g.node(i), 0)));
    ErgodicConfig cfg;
    for (double delta : {1.0, 0.25}) {
        auto pr = penalized_cell(g, rhs, delta, op->Lambda, cfg);
        CHECK(delta * pr.sup_norm <= supF + 1e-6);
    }
}

TEST_CASE("effective operator table") {
    SlowGrid slow{1, 8, 1.0, 0.05};
    TorusGrid g{1, 32};
    TableConfig tcfg;
    tcfg.P_max = 2.0;
    tcfg.P_res = 5;
    tcfg.concavity_triples = 200;

    SUBCASE("linear identity: table is gamma = tr(P) exactly") {
        auto op = make_linear_tr(MatCoefficient::constant_identity(1), 1.0, 1.0);
        auto tab = effective_operator_table(*op, slow, g, tcfg);
        CHECK_FALSE(tab.partial);
        for (double p : {-2.0, -1.0, 0.0, 0.3, 1.7})
            CHECK(tab.query(SymMat::scalar(p), vec1(0), 0) == doctest::Approx(p).epsilon(1e-7));
        CHECK(tab.validation.pass);
    }
    SUBCASE("harmonic mean operator tabulates gamma = p/2 on all samples") {
        auto op = harmonic_mean_op();
        auto tab = effective_operator_table(*op, slow, g, tcfg);
        for (double p : {-2.0, -0.5, 0.9})
            CHECK(tab.query(SymMat::scalar(p), vec1(0), 0) == doctest::Approx(0.5 * p).epsilon(2e-6));
        // derivative of the effective operator from the table
        CHECK(tab.derivative(SymMat::scalar(0.0), vec1(0), 0)[0] == doctest::Approx(0.5).epsilon(1e-4));
        CHECK(tab.validation.ellipticity_lo >= op->lambda - 1e-3);
        CHECK(tab.validation.ellipticity_hi <= op->Lambda + 1e-3);
    }
    SUBCASE("concave nonlinear operator: midpoint concavity holds on sampled triples") {
        MatCoefficient A1 = MatCoefficient::constant_identity(1),
                       A2 = MatCoefficient::constant_identity(1);
        A2.comp[0].constant = 2.0;
        FourierMode m;
        m.ky = {1, 0};
        m.a_cos = 0.3;
        A1.comp[0].modes.push_back(m);
        auto op = make_hjb_min({A1, A2}, 0.7, 2.0, 4.0);
        auto tab = effective_operator_table(*op, slow, g, tcfg);
        CHECK(tab.validation.worst_concavity_violation <= 1e-6);
        CHECK(tab.validation.pass);
    }
    SUBCASE("queries outside the P range raise a range error") {
        auto op = make_linear_tr(MatCoefficient::constant_identity(1), 1.0, 1.0);
        auto tab = effective_operator_table(*op, slow, g, tcfg);
        CHECK_THROWS_AS(tab.query(SymMat::scalar(5.0), vec1(0), 0), RangeError);
    }
    SUBCASE("json round trip preserves queries") {
        auto op = harmonic_mean_op();
        auto tab = effective_operator_table(*op, slow, g, tcfg);
        auto tab2 = EffectiveOperatorTable::from_json(tab.to_json());
        for (double p : {-1.5, 0.25, 1.9})
            CHECK(tab2.query(SymMat::scalar(p), vec1(0), 0) ==
                  doctest::Approx(tab.query(SymMat::scalar(p), vec1(0), 0)).epsilon(1e-14));
    }
}

TEST_CASE("matrix corrector") {
    TorusGrid g{1, 64};
    SUBCASE("constant coefficient: Abar = A0 and chi = 0") {
        MatCoefficient A = MatCoefficient::constant_identity(1);
        A.comp[0].constant = 0.8;
        auto op = make_linear_tr(A, 0.8, 0.8);
        auto mc = matrix_corrector(*op, vec1(0), 0, g);
        CHECK(mc.Abar[0] == doctest::Approx(0.8).epsilon(1e-8));
        for (const auto& snap : mc.chi[0].snaps)
            for (double v : snap) CHECK(std::fabs(v) < 1e-7);
    }
    SUBCASE("1d harmonic mean coefficient: Abar = 1/2 and chi matches the closed form") {
        auto op = harmonic_mean_op();
        auto mc = matrix_corrector(*op, vec1(0), 0, g);
        CHECK(mc.Abar[0] == doctest::Approx(0.5).epsilon(1e-6));
        // chi'' = gamma/a - 1 = sin(2 pi y)/2  =>  chi = -sin(2 pi y) / (8 pi^2) + c,
        // pinned at chi(0,0) = 0
        double worst = 0.0;
        for (int i = 0; i < g.size(); ++i) {
            const double y = g.node(i)[0];
            const double exact = -std::sin(2 * kPi * y) / (8 * kPi * kPi);
            worst = std::max(worst, std::fabs(mc.chi[0].snaps[0][i] - exact));
        }
        CHECK(worst < 1e-3);
        CHECK(mc.chi[0].snaps[0][0] == doctest::Approx(0.0));
    }
    SUBCASE("Abar cross-checks against the table derivative at P=0") {
        auto op = harmonic_mean_op();
        SlowGrid slow{1, 8, 1.0, 0.05};
        TableConfig tcfg;
        tcfg.P_max = 2.0;
        tcfg.P_res = 9;
        tcfg.concavity_triples = 50;
        auto tab = effective_operator_table(*op, slow, TorusGrid{1, 32}, tcfg);
        auto mc = matrix_corrector(*op, vec1(0), 0, TorusGrid{1, 32});
        const double fd = tab.derivative(SymMat::zero(1), vec1(0), 0, 1e-3)[0];
        CHECK(std::fabs(mc.Abar[0] - fd) <= 1e-4);
    }
}

TEST_CASE("driven cell problems") {
    TorusGrid g{1, 64};
    MatSlab A;
    A.n = 1;
    A.comp[0] = FastSlab::constant(g, 1.0);

    SUBCASE("constant source: fbar = c and phi = 0") {
        auto res = driven_cell(A, FastSlab::constant(g, 0.7), g);
        CHECK(res.fbar == doctest::Approx(0.7).epsilon(1e-9));
        for (const auto& snap : res.phi.snaps)
            for (double v : snap) CHECK(std::fabs(v) < 1e-8);
    }
    SUBCASE("A=1, f=cos(2 pi y): fbar = 0 and phi = (cos(2 pi y) - 1)/(4 pi^2)") {
        FastSlab f = FastSlab::constant(g, 0.0);
        for (int i = 0; i < g.size(); ++i) f.snaps[0][i] = std::cos(2 * kPi * g.node(i)[0]);
        auto res = driven_cell(A, f, g);
        CHECK(std::fabs(res.fbar) < 1e-8);
        double worst = 0.0;
        for (int i = 0; i < g.size(); ++i) {
            const double y = g.node(i)[0];
            const double exact = (std::cos(2 * kPi * y) - 1.0) / (4 * kPi * kPi);
            worst = std::max(worst, std::fabs(res.phi.snaps[0][i] - exact));
        }
        CHECK(worst < 1e-4);
    }
    SUBCASE("fbar of a mean-free source reproduced by two delta sequences within 1e-4") {
        // run the penalized route twice with different delta ladders on the
        // shifted operator and compare against the slope fbar
        FourierField a;
        a.n = 1;
        a.constant = 2.0;
        FourierMode m;
        m.ky = {1, 0};
        m.a_cos = 0.5;
        a.modes.push_back(m);
        auto op = make_linear_1d(a, 1.5, 2.5);
        TorusGrid gg{1, 32};
        ErgodicConfig c1, c2;
        c1.delta0 = 1.0;
        c2.delta0 = 0.5;
        auto s1 = ergodic_constant(*op, SymMat::scalar(0.8), vec1(0), 0, CellMethod::Penalization,
                                   gg, c1);
        auto s2 = ergodic_constant(*op, SymMat::scalar(0.8), vec1(0), 0, CellMethod::Penalization,
                                   gg, c2);
        CHECK(std::fabs(s1.gamma - s2.gamma) < 1e-4);
    }
}
