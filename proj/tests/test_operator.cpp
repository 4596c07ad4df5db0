#include <cmath>

#include "doctest.h"
#include "parahom/operators.hpp"

using namespace phom;

namespace {

FourierField harmonic_a() {
    // a(y) = 1/(2 + sin 2 pi y), evaluated through a custom operator below
    FourierField f;
    f.n = 1;
    f.constant = 2.0;
    FourierMode m;
    m.ky = {1, 0};
    m.a_sin = 1.0;
    f.modes.push_back(m);
    return f;
}

OpPtr harmonic_mean_op() {
    auto denom = harmonic_a();
    auto op = std::make_shared<FullyNonlinearOp>();
    op->family = OpFamily::Custom;
    op->n = 1;
    op->lambda = 1.0 / 3.0;
    op->Lambda = 1.0;
    op->concave = true;
    op->evaluator = [denom](const SymMat& P, const Vec2& x, double t, const Vec2& y, double s) {
        return P[0] / denom.eval(x, t, y, s);
    };
    return op;
}

}  // namespace

TEST_CASE("linear trace identity and zero at zero") {
    auto op = make_linear_tr(MatCoefficient::constant_identity(1), 1.0, 1.0);
    CHECK(op->eval(SymMat::scalar(2.0), vec1(0.3), 0.0, vec1(0.1), 0.2) == doctest::Approx(2.0));
    CHECK(op->eval(SymMat::zero(1), vec1(0.3), 0.0, vec1(0.1), 0.2) == doctest::Approx(0.0));

    auto op2 = make_linear_tr(MatCoefficient::constant_identity(2), 1.0, 1.0);
    CHECK(op2->eval(SymMat::make2(2.0, 2.0, 0.0), vec1(0.0), 0.0, vec1(0.0), 0.0) ==
          doctest::Approx(4.0));
}

TEST_CASE("pucci minus closed form in 1d") {
    auto op = make_pucci_minus(1, 1.0, 2.0);
    CHECK(op->eval(SymMat::scalar(-3.0), vec1(0), 0, vec1(0), 0) == doctest::Approx(-6.0));
    CHECK(op->eval(SymMat::scalar(3.0), vec1(0), 0, vec1(0), 0) == doctest::Approx(3.0));
    CHECK(op->eval(SymMat::zero(1), vec1(0), 0, vec1(0), 0) == doctest::Approx(0.0));
}

TEST_CASE("pucci minus in 2d uses spectral parts") {
    auto op = make_pucci_minus(2, 1.0, 2.0);
    // eigenvalues 3 and -1: M^- = 1*3 - 2*1 = 1
    const SymMat P = SymMat::make2(1.0, 1.0, 2.0);
    CHECK(op->eval(P, vec1(0), 0, vec1(0), 0) == doctest::Approx(1.0));
}

TEST_CASE("frechet derivative of linear operator is the coefficient; order 2 vanishes") {
    FourierField a;
    a.n = 1;
    a.constant = 0.7;
    auto op = make_linear_1d(a, 0.7, 0.7);
    const auto d1 = frechet_derivative(*op, 1, SymMat::scalar(1.3), vec1(0.2), 0.1, vec1(0.4), 0.5);
    CHECK(d1.as_matrix()[0] == doctest::Approx(0.7));
    // force the finite-difference path
    auto opfd = std::make_shared<FullyNonlinearOp>(*op);
    opfd->d1 = nullptr;
    const auto d1fd =
        frechet_derivative(*opfd, 1, SymMat::scalar(1.3), vec1(0.2), 0.1, vec1(0.4), 0.5);
    CHECK(d1fd.as_matrix()[0] == doctest::Approx(0.7).epsilon(1e-9));
    const auto d2 = frechet_derivative(*opfd, 2, SymMat::scalar(1.3), vec1(0.2), 0.1, vec1(0.4), 0.5);
    CHECK(std::fabs(d2.a[0]) < 1e-6);
}

TEST_CASE("frechet derivative of pucci away from the kink is one sided smooth") {
    auto op = make_pucci_minus(1, 1.5, 2.5);
    const auto d1 = frechet_derivative(*op, 1, SymMat::scalar(1.0), vec1(0), 0, vec1(0), 0);
    CHECK(d1.as_matrix()[0] == doctest::Approx(1.5).epsilon(1e-9));
    CHECK_FALSE(d1.kink_flagged);
    const auto dk = frechet_derivative(*op, 1, SymMat::scalar(0.0), vec1(0), 0, vec1(0), 0);
    CHECK(dk.kink_flagged);
    // one-sided (forward) value at the kink
    CHECK(dk.as_matrix()[0] == doctest::Approx(1.5).epsilon(1e-9));
}

TEST_CASE("directional finite differences agree with frechet order >= 1.8 under halving") {
    // smooth genuinely nonlinear concave operator: soft-min of two linear ones
    MatCoefficient A1 = MatCoefficient::constant_identity(1);
    MatCoefficient A2 = MatCoefficient::constant_identity(1);
    A1.comp[0].constant = 1.0;
    A2.comp[0].constant = 2.0;
    auto op = make_hjb_min({A1, A2}, 1.0, 2.0, 4.0);
    const SymMat P = SymMat::scalar(0.3);
    const SymMat E = SymMat::basis(1, 0);
    auto dir_fd = [&](double h) {
        return (op->eval(P + h * E, vec1(0), 0, vec1(0), 0) -
                op->eval(P - h * E, vec1(0), 0, vec1(0), 0)) /
               (2.0 * h);
    };
    const double exact = frechet_derivative(*op, 1, P, vec1(0), 0, vec1(0), 0).as_matrix()[0];
    const double e1 = std::fabs(dir_fd(1e-2) - exact);
    const double e2 = std::fabs(dir_fd(5e-3) - exact);
    const double order = std::log2(e1 / e2);
    CHECK(order > 1.8);
}

TEST_CASE("hjb soft-min second derivative is nonzero and concave") {
    MatCoefficient A1 = MatCoefficient::constant_identity(1);
    MatCoefficient A2 = MatCoefficient::constant_identity(1);
    A2.comp[0].constant = 2.0;
    auto op = make_hjb_min({A1, A2}, 1.0, 2.0, 4.0);
    CHECK(op->eval(SymMat::zero(1), vec1(0), 0, vec1(0), 0) == doctest::Approx(0.0));
    auto d2 = frechet_derivative(*op, 2, SymMat::scalar(0.1), vec1(0), 0, vec1(0), 0);
    CHECK(d2.a[0] < -1e-3);  // concavity
}

TEST_CASE("check_assumptions validates the built-in families") {
    SamplerConfig cfg;
    cfg.samples = 2000;

    auto lin = make_linear_tr(MatCoefficient::constant_identity(1), 1.0, 1.0);
    auto rl = check_assumptions(*lin, cfg);
    CHECK(rl.lambda_hat == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(rl.Lambda_hat == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(rl.all_pass());

    auto pm1 = make_pucci_minus(1, 1.0, 2.0);
    auto rp1 = check_assumptions(*pm1, cfg);
    CHECK(rp1.lambda_hat >= 1.0 - 1e-9);
    CHECK(rp1.Lambda_hat <= 2.0 + 1e-9);
    CHECK(rp1.all_pass());

    // in n=2 the Frobenius-norm upper constant is sqrt(2) * 2 (witnessed at Q ~ I)
    auto pm = make_pucci_minus(2, 1.0, 2.0);
    auto rp = check_assumptions(*pm, cfg);
    CHECK(rp.lambda_hat >= 1.0 - 1e-9);
    CHECK(rp.Lambda_hat <= 2.0 * std::sqrt(2.0) + 1e-9);
    CHECK(rp.concavity_pass);
    CHECK(rp.all_pass());
}

TEST_CASE("zero-at-zero negative control fails") {
    auto bad = std::make_shared<FullyNonlinearOp>();
    bad->n = 1;
    bad->lambda = 1.0;
    bad->Lambda = 1.0;
    bad->evaluator = [](const SymMat& P, const Vec2&, double, const Vec2&, double) {
        return P[0] + 0.1;
    };
    SamplerConfig cfg;
    cfg.samples = 100;
    auto rep = check_assumptions(*bad, cfg);
    CHECK_FALSE(rep.zero_at_zero_pass);
}

TEST_CASE("ellipticity property over random psd increments") {
    SamplerConfig cfg;
    cfg.samples = 10000;
    auto hm = harmonic_mean_op();
    auto rep = check_assumptions(*hm, cfg);
    CHECK(rep.lambda_hat >= hm->lambda - 1e-9);
    CHECK(rep.Lambda_hat <= hm->Lambda + 1e-9);
    CHECK(rep.concavity_pass);
}

TEST_CASE("recession gap of the operator against its own partner") {
    FourierField b;
    b.n = 1;
    b.constant = 0.25;
    FourierMode m;
    m.ky = {1, 0};
    m.a_cos = 0.25;
    b.modes.push_back(m);

    SUBCASE("delta zero with zero perturbation is exactly the partner") {
        FourierField zero;
        zero.n = 1;
        auto op = make_recession_perturbed(1, 1.0, 2.0, zero, 0.0, 1.0, 0.5, 2.5);
        auto rep = recession_gap(*op);
        CHECK(rep.gap_hat == doctest::Approx(0.0));
        CHECK(rep.pass);
    }
    SUBCASE("perturbed gap stays below the declared constant") {
        auto op = make_recession_perturbed(1, 1.0, 2.0, b, 0.5, 0.5, 0.5, 2.5);
        SamplerConfig cfg;
        cfg.samples = 5000;
        cfg.P_range = 8.0;
        auto rep = recession_gap(*op, cfg);
        CHECK(rep.gap_hat <= rep.declaredK + 1e-9);
        CHECK(rep.pass);
    }
    SUBCASE("epsilon rescaling bound of the gap") {
        // |e^2 F(e^{-2}P) - F_*(P)| <= K e^{2-2 delta} ||P||^delta at e=1/4, delta=1/2
        auto op = make_recession_perturbed(1, 1.0, 2.0, b, 0.5, 0.5, 0.5, 2.5);
        const double eps = 0.25;
        const double K = op->recession->gapK;
        std::mt19937_64 rng(11);
        for (int k = 0; k < 200; ++k) {
            SymMat P = random_sym(1, 4.0, rng);
            if (P.norm() < 0.1) continue;
            const SymMat Pb = (1.0 / (eps * eps)) * P;
            const double lhs = std::fabs(eps * eps * op->eval(Pb, vec1(0), 0, vec1(0.3), 0.2) -
                                         op->recession->fstar->eval(P, vec1(0), 0, vec1(0.3), 0.2));
            CHECK(lhs <= K * std::pow(eps, 2.0 - 2.0 * 0.5) * std::pow(P.norm(), 0.5) + 1e-9);
        }
    }
    SUBCASE("missing partner raises") {
        auto lin = make_linear_tr(MatCoefficient::constant_identity(1), 1.0, 1.0);
        CHECK_THROWS_AS(recession_gap(*lin), OpError);
    }
}

TEST_CASE("periodicity holds to machine precision at period shifts") {
    FourierField a;
    a.n = 1;
    a.constant = 1.5;
    FourierMode m;
    m.ky = {2, 0};
    m.ks = 1;
    m.a_cos = 0.3;
    a.modes.push_back(m);
    auto op = make_linear_1d(a, 1.2, 1.8);
    const SymMat P = SymMat::scalar(0.7);
    const double v0 = op->eval(P, vec1(0.2), 0.1, vec1(0.37), 0.81);
    const double v1 = op->eval(P, vec1(0.2), 0.1, vec1(1.37), 1.81);
    CHECK(v0 == doctest::Approx(v1).epsilon(1e-12));
}
