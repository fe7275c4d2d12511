#include "parahedge/models.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>

using namespace parahedge;

namespace {

DiffusionModel identity_model(int d) {
    return make_constant_model(Mat::Identity(d, d), Vec::Zero(d));
}

SamplingBox unit_box(int d) { return SamplingBox{Vec::Zero(d), 5.0}; }

}  // namespace

TEST_CASE("ellipticity validation accepts the identity inside a wide window") {
    DiffusionModel mdl = identity_model(2);
    mdl.m = 0.5;
    mdl.M = 2.0;
    const ModelReport rep = validate_ellipticity(mdl, unit_box(2), 500, 1);
    REQUIRE(rep.ellipticity_ok);
    REQUIRE(rep.sampled_min_eig == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(rep.sampled_max_eig == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("ellipticity validation flags a window the spectrum leaves") {
    DiffusionModel mdl = identity_model(2);
    mdl.m = 1.5;
    mdl.M = 2.0;
    REQUIRE_FALSE(validate_ellipticity(mdl, unit_box(2), 100, 1).ellipticity_ok);
}

TEST_CASE("diagonal sin^2 family stays within its declared window") {
    Vec base(2), amp(2);
    base << 1.0, 1.0;
    amp << 0.5, 0.0;
    const DiffusionModel mdl = make_diagonal_model(base, amp, "sin2", Vec::Zero(2));
    REQUIRE(mdl.m == Catch::Approx(1.0));
    REQUIRE(mdl.M == Catch::Approx(1.5));
    REQUIRE(validate_ellipticity(mdl, unit_box(2), 2000, 3).ellipticity_ok);
}

TEST_CASE("asymmetric coefficients are rejected") {
    DiffusionModel mdl;
    mdl.family = "custom";
    mdl.d = 2;
    mdl.A = [](const Vec&) {
        Mat A(2, 2);
        A << 1.0, 0.2, 0.0, 1.0;
        return A;
    };
    mdl.b = [](const Vec&) { return Vec::Zero(2); };
    REQUIRE_THROWS_AS(validate_ellipticity(mdl, unit_box(2), 10, 1), contract_error);
}

TEST_CASE("commutator defect vanishes for diagonal coefficients and axis gamma") {
    Vec base(2), amp(2);
    base << 1.0, 2.0;
    amp << 0.3, 0.1;
    const DiffusionModel mdl = make_diagonal_model(base, amp, "sin2", Vec::Zero(2));
    HalfSpaceDomain dom(Vec::Unit(2, 0), 0.0);
    REQUIRE(commutator_defect(mdl, dom, 200, 5) == Catch::Approx(0.0).margin(1e-14));
}

TEST_CASE("commutator defect matches the 2x2 closed form") {
    Mat A(2, 2);
    A << 1.0, 0.1, 0.1, 1.0;
    const DiffusionModel mdl = make_constant_model(A, Vec::Zero(2));
    HalfSpaceDomain dom(Vec::Unit(2, 0), 0.0);
    // [A, e1 (x) e1] has entries (0, -a12; a12, 0): delta = 2 sqrt(2) |a12|
    REQUIRE(commutator_defect(mdl, dom, 1, 5) ==
            Catch::Approx(2.0 * std::sqrt(0.02)).epsilon(1e-12));
    REQUIRE(commutator_defect(mdl, dom, 1, 5) == Catch::Approx(0.28284).epsilon(1e-4));
}

TEST_CASE("scalar multiples of the identity commute with any reflector") {
    DiffusionModel mdl;
    mdl.family = "custom";
    mdl.d = 2;
    mdl.A = [](const Vec& x) {
        return Mat((1.0 + 0.5 * sqr(std::sin(x[0] + 0.3 * x[1]))) * Mat::Identity(2, 2));
    };
    mdl.b = [](const Vec&) { return Vec::Zero(2); };
    Vec g(2);
    g << std::cos(0.7), std::sin(0.7);
    HalfSpaceDomain dom(g, 0.2);
    REQUIRE(commutator_defect(mdl, dom, 500, 6) == Catch::Approx(0.0).margin(1e-13));
}

TEST_CASE("symmetrization branches and conjugation identity") {
    Mat A(2, 2);
    A << 1.3, 0.2, 0.2, 0.9;
    const DiffusionModel mdl = make_constant_model(A, Vec::Zero(2));
    Vec g(2);
    g << std::cos(0.3), std::sin(0.3);
    HalfSpaceDomain dom(g, -0.4);
    const Mat Psi = dom.psi_matrix();

    RngStream rs(17, 1);
    for (int i = 0; i < 200; ++i) {
        Vec y(2);
        y << rs.uniform(-3.0, 3.0), rs.uniform(-3.0, 3.0);
        if (dom.contains(y)) {
            REQUIRE((symmetrize_A(mdl, dom, y) - A).norm() < 1e-14);
            const Mat lhs = symmetrize_A(mdl, dom, dom.reflect(y));
            const Mat rhs = Psi * symmetrize_A(mdl, dom, y) * Psi;
            REQUIRE((lhs - rhs).norm() < 1e-13);
        }
    }
}

TEST_CASE("diagonal constant coefficients are unchanged by symmetrization") {
    Mat A = Mat::Zero(2, 2);
    A(0, 0) = 1.7;
    A(1, 1) = 0.6;
    const DiffusionModel mdl = make_constant_model(A, Vec::Zero(2));
    HalfSpaceDomain dom(Vec::Unit(2, 0), 0.0);
    Vec y(2);
    y << -1.2, 0.4;  // off-domain
    REQUIRE((symmetrize_A(mdl, dom, y) - A).norm() < 1e-14);
}

TEST_CASE("symmetrized coefficients keep the ellipticity window") {
    Mat A(2, 2);
    A << 1.2, 0.35, 0.35, 0.8;
    const DiffusionModel mdl = make_constant_model(A, Vec::Zero(2));
    Vec g(2);
    g << 0.8, 0.6;
    HalfSpaceDomain dom(g, 0.1);
    RngStream rs(23, 2);
    Eigen::SelfAdjointEigenSolver<Mat> es;
    for (int i = 0; i < 300; ++i) {
        Vec y(2);
        y << rs.uniform(-3.0, 3.0), rs.uniform(-3.0, 3.0);
        es.compute(symmetrize_A(mdl, dom, y), Eigen::EigenvaluesOnly);
        REQUIRE(es.eigenvalues().minCoeff() >= mdl.m - 1e-12);
        REQUIRE(es.eigenvalues().maxCoeff() <= mdl.M + 1e-12);
    }
}

TEST_CASE("symmetrized coefficients are continuous away from the boundary") {
    Vec base(1), amp(1);
    base << 1.0;
    amp << 0.4;
    const DiffusionModel mdl = make_diagonal_model(base, amp, "tanh", Vec::Zero(1));
    HalfSpaceDomain dom(Vec::Ones(1), 0.0);
    RngStream rs(29, 3);
    const double h = 1e-7;
    for (int i = 0; i < 500; ++i) {
        Vec y(1);
        y << rs.uniform(-3.0, 3.0);
        if (std::fabs(y[0]) < 10.0 * h) continue;
        Vec yh = y;
        yh[0] += h;
        if (dom.contains(y) != dom.contains(yh)) continue;
        const double jump = (symmetrize_A(mdl, dom, y) - symmetrize_A(mdl, dom, yh)).norm();
        REQUIRE(jump < 10.0 * h);
    }
}

TEST_CASE("lipschitz estimate: constants are flat, tanh slope is 1/2") {
    const DiffusionModel flat = identity_model(2);
    REQUIRE(lipschitz_estimate(flat, unit_box(2), 500, 7) == 0.0);

    Vec base(1), amp(1);
    base << 1.0;
    amp << 0.5;
    DiffusionModel mdl = make_diagonal_model(base, amp, "tanh", Vec::Zero(1));
    const double est = lipschitz_estimate(mdl, unit_box(1), 4000, 7);
    REQUIRE(est <= 0.5 * (1.0 + 1e-6));
    REQUIRE(est > 0.3);  // pairs straddling 0 approach the sup slope
    // a declared constant below the estimate is a validation failure
    const double declared_too_small = 0.2;
    REQUIRE(est > declared_too_small * (1.0 + 1e-6));
}

TEST_CASE("cross-boundary coefficient gap obeys the Lipschitz + defect bound") {
    Mat A(2, 2);
    A << 1.0, 0.15, 0.15, 1.1;
    const DiffusionModel mdl = make_constant_model(A, Vec::Zero(2));
    Vec g(2);
    g << 1.0, 0.0;
    HalfSpaceDomain dom(g, 0.0);
    const double delta = commutator_defect(mdl, dom, 2000, 11);
    RngStream rs(31, 4);
    for (int i = 0; i < 2000; ++i) {
        Vec x(2), y(2);
        x << rs.uniform(0.001, 4.0), rs.uniform(-4.0, 4.0);
        y << rs.uniform(-4.0, -0.001), rs.uniform(-4.0, 4.0);
        const double lhs = (mdl.A(x) - symmetrize_A(mdl, dom, y)).norm();
        REQUIRE(lhs <= mdl.a_inf * (x - y).norm() + delta + 1e-9);
    }
}

TEST_CASE("grid model loads a tensor CSV and interpolates multilinearly") {
    const std::string path = "test_grid_model.csv";
    {
        std::ofstream csv(path);
        // 3x3 grid, A(x) = diag(1 + 0.1 x1, 2 + 0.2 x2), b = (x1, -x2)
        for (double x1 : {-1.0, 0.0, 1.0})
            for (double x2 : {-1.0, 0.0, 1.0})
                csv << x1 << "," << x2 << "," << 1.0 + 0.1 * x1 << ",0,0," << 2.0 + 0.2 * x2
                    << "," << x1 << "," << -x2 << "\n";
    }
    DiffusionModel mdl = make_grid_model(path, 2);
    std::remove(path.c_str());
    Vec x(2);
    x << 0.5, -0.25;  // multilinear interp reproduces affine data exactly
    const Mat A = mdl.A(x);
    REQUIRE(A(0, 0) == Catch::Approx(1.05).margin(1e-12));
    REQUIRE(A(1, 1) == Catch::Approx(1.95).margin(1e-12));
    REQUIRE(mdl.b(x)[0] == Catch::Approx(0.5).margin(1e-12));
    REQUIRE(mdl.b(x)[1] == Catch::Approx(0.25).margin(1e-12));
    // clamped outside the hull
    Vec far(2);
    far << 9.0, 0.0;
    REQUIRE(mdl.A(far)(0, 0) == Catch::Approx(1.1).margin(1e-12));
}

TEST_CASE("declared envelope validation") {
    DiffusionModel mdl = identity_model(1);
    mdl.M0 = 1.0;  // must exceed M strictly
    REQUIRE_THROWS_AS(mdl.validate_declared(), config_error);
    mdl.M0 = 1.05;
    REQUIRE_NOTHROW(mdl.validate_declared());
}
