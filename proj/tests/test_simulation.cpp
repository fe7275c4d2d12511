#include "parahedge/simulation.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>

using namespace parahedge;

namespace {

Vec v1(double a) {
    Vec v(1);
    v << a;
    return v;
}

DiffusionModel bm_model(int d) {
    return make_constant_model(Mat::Identity(d, d), Vec::Zero(d));
}

DiffusionModel drift_model_1d(double b) {
    DiffusionModel mdl = make_constant_model(Mat::Identity(1, 1), v1(b));
    mdl.Cq = 2.0;
    return mdl;
}

PathConfig fast_cfg(long paths, std::uint64_t seed = 777) {
    PathConfig cfg;
    cfg.n_paths = paths;
    cfg.n_steps = 64;
    cfg.seed = seed;
    return cfg;
}

// P(min_{t<=1} W_t > -1) = 2 Phi(1) - 1 by the reflection principle
const double survival_bm = 2.0 * std_normal_cdf(1.0) - 1.0;

const PayoffFunction unit_payoff = make_constant_payoff(1.0);

}  // namespace

TEST_CASE("survival probability matches the reflection-principle value") {
    HalfSpaceDomain dom(Vec::Ones(1), 0.0);
    PathConfig cfg = fast_cfg(10000);
    cfg.n_steps = 256;
    const PathEnsemble ens = simulate_paths(bm_model(1), dom, v1(1.0), 1.0, cfg);
    const MCEstimate ko = price_knock_out(ens, unit_payoff, 0.0);
    REQUIRE(survival_bm == Catch::Approx(0.682689).margin(1e-6));
    REQUIRE(std::fabs(ko.mean - survival_bm) <= 3.0 * ko.std_error);
}

TEST_CASE("strong inward drift reduces the exit fraction at matched noise") {
    HalfSpaceDomain dom(Vec::Ones(1), 0.0);
    const PathConfig cfg = fast_cfg(4000);
    const PathEnsemble flat = simulate_paths(bm_model(1), dom, v1(1.0), 1.0, cfg);
    const PathEnsemble inward = simulate_paths(drift_model_1d(1.5), dom, v1(1.0), 1.0, cfg);
    long exits_flat = 0, exits_in = 0;
    for (long p = 0; p < cfg.n_paths; ++p) {
        exits_flat += flat.exited(p);
        exits_in += inward.exited(p);
    }
    REQUIRE(exits_in < exits_flat);
}

TEST_CASE("exit states sit at or below the barrier after clamping") {
    HalfSpaceDomain dom(Vec::Ones(1), 0.25);
    const PathEnsemble ens =
        simulate_paths(bm_model(1), dom, v1(1.0), 1.0, fast_cfg(2000));
    long exits = 0, raw_subk = 0;
    for (long p = 0; p < ens.n_paths(); ++p) {
        if (!ens.exited(p)) continue;
        ++exits;
        const Vec xc = ens.exit_state_clamped(p, dom);
        REQUIRE(dom.signed_coord(xc) <= 1e-12);
        if (dom.signed_coord(ens.exit_state_raw(p)) <= 0.0) ++raw_subk;
        REQUIRE(ens.tau(p) <= 1.0);
    }
    REQUIRE(exits > 100);
    REQUIRE(raw_subk > 0);  // sub-barrier detections present alongside bridge draws
}

TEST_CASE("starting outside the knock-out region is a precondition error") {
    HalfSpaceDomain dom(Vec::Ones(1), 0.0);
    REQUIRE_THROWS_AS(simulate_paths(bm_model(1), dom, v1(-0.5), 1.0, fast_cfg(200)),
                      contract_error);
}

TEST_CASE("path config limits are enforced at load") {
    PathConfig cfg;
    cfg.n_paths = 50;
    REQUIRE_THROWS_AS(cfg.validate(), config_error);
    cfg.n_paths = 100;
    cfg.n_steps = 8;
    REQUIRE_THROWS_AS(cfg.validate(), config_error);
    cfg.n_steps = 16;
    cfg.scheme = "milstein";
    REQUIRE_THROWS_AS(cfg.validate(), config_error);
}

TEST_CASE("zero payoff prices to exactly zero") {
    HalfSpaceDomain dom(Vec::Ones(1), 0.0);
    const PathEnsemble ens = simulate_paths(bm_model(1), dom, v1(1.0), 1.0, fast_cfg(500));
    const MCEstimate ko = price_knock_out(ens, make_constant_payoff(0.0), 0.0);
    REQUIRE(ko.mean == 0.0);
    REQUIRE(ko.std_error == 0.0);
}

TEST_CASE("constant payoff prices to its discounted value with zero error") {
    HalfSpaceDomain dom(Vec::Ones(1), 0.0);
    const PathEnsemble ens = simulate_paths(bm_model(1), dom, v1(1.0), 0.5, fast_cfg(500));
    const double r = 0.03;
    const MCEstimate plain = price_plain(ens, [](const Vec&) { return 2.5; }, r);
    REQUIRE(plain.mean == Catch::Approx(2.5 * std::exp(-r * 0.5)).epsilon(1e-14));
    REQUIRE(plain.std_error == 0.0);
}

TEST_CASE("martingale mean of the plain estimator") {
    HalfSpaceDomain dom(Vec::Ones(1), 0.0);
    const PathEnsemble ens = simulate_paths(bm_model(1), dom, v1(1.0), 1.0, fast_cfg(10000));
    const MCEstimate m = price_plain(ens, [](const Vec& x) { return x[0]; }, 0.0);
    REQUIRE(std::fabs(m.mean - 1.0) <= 3.0 * m.std_error);
}

TEST_CASE("plain price of the hedging projection reproduces the survival value") {
    HalfSpaceDomain dom(Vec::Ones(1), 0.0);
    const PathEnsemble ens = simulate_paths(bm_model(1), dom, v1(1.0), 1.0, fast_cfg(10000));
    // pi(1)(y) = 1_{y>0} - 1_{y<=0}: mean is 2 Phi(1) - 1
    const MCEstimate m = price_plain(
        ens, [&](const Vec& x) { return project_pi(unit_payoff, dom, x); }, 0.0);
    REQUIRE(std::fabs(m.mean - survival_bm) <= 3.0 * m.std_error);
}

TEST_CASE("knock-out and knock-in prices add to the plain price path by path") {
    HalfSpaceDomain dom(Vec::Ones(1), 0.1);
    const PayoffFunction f = make_capped_call_payoff(dom, -0.5, 4.0);
    const PathEnsemble ens =
        simulate_paths(drift_model_1d(0.2), dom, v1(1.0), 1.0, fast_cfg(3000));
    const MCEstimate ko = price_knock_out(ens, f, 0.0);
    const MCEstimate ki = price_knock_in(ens, f, 0.0);
    const MCEstimate plain = price_plain(ens, [&](const Vec& x) { return f(x); }, 0.0);
    REQUIRE(ko.mean + ki.mean == Catch::Approx(plain.mean).margin(1e-14));
}

TEST_CASE("hedging error vanishes for reflection-symmetric dynamics") {
    HalfSpaceDomain dom(Vec::Ones(1), 0.0);
    PathConfig cfg = fast_cfg(20000);
    const PathEnsemble ens = simulate_paths(bm_model(1), dom, v1(1.0), 1.0, cfg);
    const MCEstimate lhs = error_lhs_mc(ens, unit_payoff, dom);
    REQUIRE(std::fabs(lhs.mean) <= 3.0 * lhs.std_error);
}

TEST_CASE("zero payoff gives an exactly zero hedging error") {
    HalfSpaceDomain dom(Vec::Ones(1), 0.0);
    const PathEnsemble ens = simulate_paths(bm_model(1), dom, v1(1.0), 1.0, fast_cfg(500));
    const MCEstimate lhs = error_lhs_mc(ens, make_constant_payoff(0.0), dom);
    REQUIRE(lhs.mean == 0.0);
}

TEST_CASE("quadrature side of the error identity is exactly zero when h vanishes") {
    DiffusionModel mdl = bm_model(1);
    HalfSpaceDomain dom(Vec::Ones(1), 0.0);
    KernelEval kern(mdl, dom);
    const PathEnsemble ens = simulate_paths(mdl, dom, v1(1.0), 1.0, fast_cfg(500));
    QuadratureScheme quad;
    quad.space_order = 16;
    quad.time_order = 8;
    const MCEstimate rhs = error_rhs_quadmc(ens, kern, unit_payoff, quad);
    REQUIRE(rhs.mean == 0.0);
}

TEST_CASE("first-order error identity holds on the drift model") {
    DiffusionModel mdl = drift_model_1d(0.2);
    HalfSpaceDomain dom(Vec::Ones(1), 0.0);
    KernelEval kern(mdl, dom);
    PathConfig cfg = fast_cfg(4000);
    cfg.n_steps = 128;
    const PathEnsemble ens = simulate_paths(mdl, dom, v1(1.0), 1.0, cfg);
    QuadratureScheme quad;
    quad.time_order = 24;
    const MCEstimate lhs = error_lhs_mc(ens, unit_payoff, dom);
    const MCEstimate rhs = error_rhs_quadmc(ens, kern, unit_payoff, quad);
    const double tol = 3.0 * std::sqrt(sqr(lhs.std_error) + sqr(rhs.std_error));
    REQUIRE(std::fabs(lhs.mean - rhs.mean) <= tol);

    // doubling the time nodes barely moves the quadrature side
    QuadratureScheme fine = quad;
    fine.time_order = 48;
    const MCEstimate rhs2 = error_rhs_quadmc(ens, kern, unit_payoff, fine);
    REQUIRE(std::fabs(rhs2.mean - rhs.mean) <= 5e-4);
}

TEST_CASE("bridge correction only increases detected exits at fixed seed") {
    HalfSpaceDomain dom(Vec::Ones(1), 0.0);
    PathConfig with = fast_cfg(4000), without = fast_cfg(4000);
    without.bridge_correction = false;
    const PathEnsemble e1 = simulate_paths(bm_model(1), dom, v1(0.8), 1.0, with);
    const PathEnsemble e0 = simulate_paths(bm_model(1), dom, v1(0.8), 1.0, without);
    long n1 = 0, n0 = 0, flips = 0;
    for (long p = 0; p < 4000; ++p) {
        n1 += e1.exited(p);
        n0 += e0.exited(p);
        if (e0.exited(p) && !e1.exited(p)) ++flips;
    }
    REQUIRE(flips == 0);  // per path, bridge can only add exits
    REQUIRE(n1 > n0);
}

TEST_CASE("step halving moves the bridge-corrected survival by less than noise") {
    HalfSpaceDomain dom(Vec::Ones(1), 0.0);
    PathConfig coarse = fast_cfg(10000, 31);
    coarse.n_steps = 64;
    PathConfig fine = fast_cfg(10000, 32);
    fine.n_steps = 128;
    const MCEstimate s1 = price_knock_out(
        simulate_paths(bm_model(1), dom, v1(1.0), 1.0, coarse), unit_payoff, 0.0);
    const MCEstimate s2 = price_knock_out(
        simulate_paths(bm_model(1), dom, v1(1.0), 1.0, fine), unit_payoff, 0.0);
    REQUIRE(std::fabs(s1.mean - s2.mean) <=
            3.0 * std::sqrt(sqr(s1.std_error) + sqr(s2.std_error)));
}

TEST_CASE("estimates are bitwise reproducible across thread schedules") {
    HalfSpaceDomain dom(Vec::Ones(1), 0.0);
    auto run = [&](const char* threads) {
        setenv("PARAHEDGE_THREADS", threads, 1);
        const PathEnsemble ens =
            simulate_paths(drift_model_1d(0.2), dom, v1(1.0), 1.0, fast_cfg(2000));
        const MCEstimate ko = price_knock_out(ens, unit_payoff, 0.0);
        const MCEstimate lhs = error_lhs_mc(ens, unit_payoff, dom);
        unsetenv("PARAHEDGE_THREADS");
        return std::make_pair(ko, lhs);
    };
    const auto [ko1, lhs1] = run("1");
    const auto [ko2, lhs2] = run("4");
    REQUIRE(ko1.mean == ko2.mean);
    REQUIRE(ko1.std_error == ko2.std_error);
    REQUIRE(lhs1.mean == lhs2.mean);
}

TEST_CASE("hedge ledger on symmetric dynamics: corrections vanish, defect is noise") {
    DiffusionModel mdl = bm_model(1);
    HalfSpaceDomain dom(Vec::Ones(1), 0.0);
    KernelEval kern(mdl, dom);
    const PathEnsemble ens = simulate_paths(mdl, dom, v1(1.0), 1.0, fast_cfg(5000));
    QuadratureScheme quad;
    quad.space_order = 16;
    quad.time_order = 8;
    LedgerParams lp;
    lp.u_nodes = 6;
    lp.s_nodes = 6;
    lp.grid_points = 16;
    lp.value_grid_points = 24;
    const HedgeReport rep = hedge_ledger(ens, kern, unit_payoff, 0.0, quad, lp, 2);
    REQUIRE(rep.order1.mean == 0.0);
    REQUIRE(rep.higher[0].mean == 0.0);
    REQUIRE(rep.residuals[0].mean == 0.0);
    REQUIRE(rep.residuals[1].mean == 0.0);
    REQUIRE(std::fabs(rep.defect.mean) <= 3.0 * rep.defect.std_error);
    // plain value equals knock-out plus the raw hedging error, path by path
    const MCEstimate lhs = error_lhs_mc(ens, unit_payoff, dom);
    REQUIRE(rep.plain_pi.mean - rep.knock_out.mean ==
            Catch::Approx(lhs.mean).margin(1e-13));
}

TEST_CASE("hedge ledger defect is statistical noise on the drift model") {
    DiffusionModel mdl = drift_model_1d(0.2);
    HalfSpaceDomain dom(Vec::Ones(1), 0.0);
    KernelEval kern(mdl, dom);
    PathConfig cfg = fast_cfg(4000);
    cfg.n_steps = 128;
    const PathEnsemble ens = simulate_paths(mdl, dom, v1(1.0), 1.0, cfg);
    QuadratureScheme quad;
    quad.time_order = 16;
    quad.space_order = 32;
    LedgerParams lp;  // 1-D defaults
    const HedgeReport rep = hedge_ledger(ens, kern, unit_payoff, 0.0, quad, lp, 2);
    REQUIRE(std::fabs(rep.defect.mean) <= 3.0 * rep.defect.std_error + 1e-12);
    REQUIRE(std::fabs(rep.residuals[1].mean) <=
            std::fabs(rep.residuals[0].mean) +
                3.0 * (rep.residuals[0].std_error + rep.residuals[1].std_error));
    REQUIRE(rep.higher.size() == 1);
    REQUIRE(rep.residuals.size() == 2);
}

TEST_CASE("discounting enters the ledger only through the common factor") {
    DiffusionModel mdl = bm_model(1);
    HalfSpaceDomain dom(Vec::Ones(1), 0.0);
    KernelEval kern(mdl, dom);
    const PathEnsemble ens = simulate_paths(mdl, dom, v1(1.0), 1.0, fast_cfg(500));
    QuadratureScheme quad;
    quad.space_order = 12;
    quad.time_order = 6;
    LedgerParams lp;
    lp.u_nodes = 4;
    lp.s_nodes = 4;
    lp.grid_points = 8;
    lp.value_grid_points = 12;
    const HedgeReport r0 = hedge_ledger(ens, kern, unit_payoff, 0.0, quad, lp, 1);
    const HedgeReport r1 = hedge_ledger(ens, kern, unit_payoff, 0.05, quad, lp, 1);
    REQUIRE(r0.discount == 1.0);
    REQUIRE(r1.discount == Catch::Approx(std::exp(-0.05)).epsilon(1e-15));
    REQUIRE(r0.knock_out.mean == r1.knock_out.mean);  // undiscounted expectations match
}
