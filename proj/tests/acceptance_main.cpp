// Acceptance suite: runs every top-level criterion at its stated scale and
// tolerance, printing one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include "parahedge/bounds.hpp"
#include "parahedge/config.hpp"
#include "parahedge/simulation.hpp"

#include <chrono>
#include <cstdarg>
#include <cstdio>

using namespace parahedge;

namespace {

int failures = 0;

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

void report(int num, const char* name, bool pass, const std::string& detail, double secs) {
    std::printf("%s criterion %2d: %s (%s) [%.1f s]\n", pass ? "PASS" : "FAIL", num, name,
                detail.c_str(), secs);
    std::fflush(stdout);
    if (!pass) ++failures;
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof(buf), f, args);
    va_end(args);
    return buf;
}

Vec v1(double a) {
    Vec v(1);
    v << a;
    return v;
}

Vec v2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

DiffusionModel rotated_model(double scale) {
    const double l1 = 1.5, l2 = 0.5;
    const double angle = 0.5 * std::asin(std::clamp(2.0 * scale / (l1 - l2), 0.0, 1.0));
    DiffusionModel mdl = make_rotated_constant_model(l1, l2, angle, Vec::Zero(2));
    mdl.Cq = calibrate_Cq(mdl, 1.0);
    return mdl;
}

const PayoffFunction unit_payoff = make_constant_payoff(1.0);

// --------------------------------------------------------------------------

void criterion1_boundary_symmetry() {
    Timer timer;
    DiffusionModel mdl = rotated_model(0.35);
    HalfSpaceDomain dom(Vec::Unit(2, 0), 0.0);
    KernelEval kern(mdl, dom);
    RngStream rs(101, 1);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Vec x = dom.boundary_point(v1(3.0 * rs.normal()));
        const Vec y = x + v2(rs.normal(), rs.normal());
        const double t = rs.uniform(0.05, 1.0);
        const double p1 = kern.p_kernel(t, x, y);
        const double p2 = kern.p_kernel(t, x, dom.reflect(y));
        worst = std::max(worst, std::fabs(p1 - p2) / p1);
    }
    report(1, "boundary kernel symmetry", worst <= 1e-12,
           fmt("max relative gap %.2e <= 1e-12 over 1000 samples", worst), timer.seconds());
}

void criterion2_degenerate_exactness() {
    Timer timer;
    double worst_h0 = 0.0, worst_S = 0.0;
    for (int d = 1; d <= 3; ++d) {
        DiffusionModel mdl = make_constant_model(Mat::Identity(d, d), Vec::Zero(d));
        HalfSpaceDomain dom(Vec::Unit(d, 0), 0.0);
        KernelEval kern(mdl, dom);
        RngStream rs(202, d);
        for (long i = 0; i < 100000; ++i) {
            Vec z(d), y(d);
            for (int j = 0; j < d; ++j) {
                z[j] = rs.uniform(-3.0, 3.0);
                y[j] = rs.uniform(-3.0, 3.0);
            }
            worst_h0 = std::max(worst_h0, std::fabs(kern.h0(rs.uniform(0.01, 1.0), z, y)));
        }
        QuadratureScheme quad;
        quad.space_order = 16;
        for (double xv : {-0.7, 0.4, 1.3})
            worst_S = std::max(worst_S, std::fabs(apply_S(kern, 0.4, unit_payoff,
                                                          Vec(Vec::Unit(d, 0) * xv), quad)));
    }
    DiffusionModel mdl = make_constant_model(Mat::Identity(1, 1), Vec::Zero(1));
    HalfSpaceDomain dom(Vec::Ones(1), 0.0);
    PathConfig cfg;
    cfg.n_paths = 10000;
    cfg.n_steps = 128;
    cfg.seed = 2024;
    const PathEnsemble ens = simulate_paths(mdl, dom, v1(1.0), 1.0, cfg);
    const MCEstimate lhs = error_lhs_mc(ens, unit_payoff, dom);
    const bool pass = worst_h0 == 0.0 && worst_S == 0.0 &&
                      std::fabs(lhs.mean) <= 3.0 * lhs.std_error;
    report(2, "degenerate exactness (identity coefficients)", pass,
           fmt("max |h0| %.1e, max |S f| %.1e, MC error %.4f +- %.4f", worst_h0, worst_S,
               lhs.mean, lhs.std_error),
           timer.seconds());
}

void criterion3_exit_probability() {
    Timer timer;
    DiffusionModel mdl = make_constant_model(Mat::Identity(1, 1), Vec::Zero(1));
    HalfSpaceDomain dom(Vec::Ones(1), 0.0);
    PathConfig cfg;
    cfg.n_paths = 10000;
    cfg.n_steps = 256;
    cfg.seed = 303;
    cfg.bridge_correction = true;
    const PathEnsemble ens = simulate_paths(mdl, dom, v1(1.0), 1.0, cfg);
    const MCEstimate surv = price_knock_out(ens, unit_payoff, 0.0);
    const double target = 2.0 * std_normal_cdf(1.0) - 1.0;  // 0.682689...
    const double gap = std::fabs(surv.mean - target);
    report(3, "first-exit survival oracle", gap <= 3.0 * surv.std_error,
           fmt("survival %.6f vs 2*Phi(1)-1 = %.6f, |gap| %.2e <= 3 SE %.2e", surv.mean,
               target, gap, 3.0 * surv.std_error),
           timer.seconds());
}

void criterion4_parametrix_identity() {
    Timer timer;
    Mat A(2, 2);
    A << 1.0, 0.3, 0.3, 1.0;
    DiffusionModel mdl = make_constant_model(A, Vec::Zero(2));
    mdl.Cq = calibrate_Cq(mdl, 1.0);
    HalfSpaceDomain dom(Vec::Unit(2, 0), 0.0);
    KernelEval kern(mdl, dom);
    QuadratureScheme quad;
    quad.space_order = 48;
    quad.time_order = 48;

    const std::vector<double> times = {0.1, 0.5, 1.0};
    const std::vector<Vec> xs = {v2(0.3, 0.0), v2(0.8, 0.4), v2(1.5, -0.3)};
    const std::vector<Vec> ys = {v2(-0.3, 0.1), v2(-0.8, -0.2), v2(-1.4, 0.3)};
    double worst = 0.0;
    for (double t : times)
        for (const Vec& x : xs)
            for (const Vec& y : ys) {
                const double gap = kern.q_reference(t, x, y) - kern.p_kernel(t, x, y);
                const double resid = kern.parametrix_residual(t, x, y, quad);
                worst = std::max(worst, std::fabs(resid) / std::fabs(gap));
            }
    report(4, "parametrix identity on the skewed 2-D model", worst <= 0.02,
           fmt("max |residual| / |q - p| = %.4f <= 0.02 on the 3x3x3 grid", worst),
           timer.seconds());
}

void criterion5_first_order_identity() {
    Timer timer;
    DiffusionModel mdl = make_constant_model(Mat::Identity(1, 1), v1(0.2));
    mdl.Cq = calibrate_Cq(mdl, 1.0);
    HalfSpaceDomain dom(Vec::Ones(1), 0.0);
    KernelEval kern(mdl, dom);
    PathConfig cfg;
    cfg.n_paths = 10000;
    cfg.n_steps = 256;
    cfg.seed = 505;
    const PathEnsemble ens = simulate_paths(mdl, dom, v1(1.0), 1.0, cfg);
    QuadratureScheme quad;  // 48-point space, 32-node singular time rule
    const MCEstimate lhs = error_lhs_mc(ens, unit_payoff, dom);
    const MCEstimate rhs = error_rhs_quadmc(ens, kern, unit_payoff, quad);
    const double tol = 3.0 * std::sqrt(sqr(lhs.std_error) + sqr(rhs.std_error));
    const double gap = std::fabs(lhs.mean - rhs.mean);
    report(5, "first-order error identity at t = 0", gap <= tol,
           fmt("lhs %.5f +- %.5f, rhs %.5f +- %.5f, |gap| %.2e <= %.2e", lhs.mean,
               lhs.std_error, rhs.mean, rhs.std_error, gap, tol),
           timer.seconds());
}

void criterion6_ledger_defect() {
    Timer timer;
    DiffusionModel mdl = make_constant_model(Mat::Identity(1, 1), v1(0.2));
    mdl.Cq = calibrate_Cq(mdl, 1.0);
    HalfSpaceDomain dom(Vec::Ones(1), 0.0);
    KernelEval kern(mdl, dom);
    PathConfig cfg;
    cfg.n_paths = 10000;
    cfg.n_steps = 256;
    cfg.seed = 606;
    const PathEnsemble ens = simulate_paths(mdl, dom, v1(1.0), 1.0, cfg);
    QuadratureScheme quad;
    quad.time_order = 16;
    LedgerParams lp;  // 1-D defaults: 12x12 simplex nodes
    const HedgeReport rep = hedge_ledger(ens, kern, unit_payoff, 0.0, quad, lp, 2);
    const bool defect_ok = std::fabs(rep.defect.mean) <= 3.0 * rep.defect.std_error;
    const double r1 = std::fabs(rep.residuals[0].mean);
    const double r2 = std::fabs(rep.residuals[1].mean);
    const double slack = 3.0 * (rep.residuals[0].std_error + rep.residuals[1].std_error);
    const bool decay_ok = r2 <= r1 + slack;
    report(6, "iterated-hedge ledger defect at order 2", defect_ok && decay_ok,
           fmt("defect %.5f +- %.5f; residuals %.5f -> %.5f", rep.defect.mean,
               rep.defect.std_error, rep.residuals[0].mean, rep.residuals[1].mean),
           timer.seconds());
}

void criterion7_h0_bound() {
    Timer timer;
    struct Case {
        const char* name;
        DiffusionModel mdl;
        HalfSpaceDomain dom;
        Vec center;
    };
    Vec base(1), amp(1);
    base << 1.0;
    amp << 0.2;
    DiffusionModel diag = make_diagonal_model(base, amp, "sin2", v1(0.1));
    std::vector<Case> cases;
    cases.push_back({"identity-1d", make_constant_model(Mat::Identity(1, 1), Vec::Zero(1)),
                     HalfSpaceDomain(Vec::Ones(1), 0.0), v1(1.0)});
    cases.push_back({"drift-1d", make_constant_model(Mat::Identity(1, 1), v1(0.2)),
                     HalfSpaceDomain(Vec::Ones(1), 0.0), v1(1.0)});
    cases.push_back({"diagonal-1d", diag, HalfSpaceDomain(Vec::Ones(1), 0.0), v1(1.0)});
    cases.push_back({"rotated-2d", rotated_model(0.25), HalfSpaceDomain(Vec::Unit(2, 0), 0.0),
                     v2(1.0, 0.0)});
    long violations = 0;
    double worst = 0.0;
    for (auto& c : cases) {
        KernelEval kern(c.mdl, c.dom);
        const double delta = commutator_defect(c.mdl, c.dom, 2000, 7);
        const ConstantsTable ct = compute_constants(c.mdl, delta, 1.0);
        const H0BoundReport rep = check_h0_bound(kern, ct, c.center, 1.0, 100000, 707);
        violations += rep.violations;
        worst = std::max(worst, rep.max_ratio);
    }
    report(7, "pointwise defect-integrand bound", violations == 0,
           fmt("%ld violations over 4 x 100000 samples, max ratio %.4f", violations, worst),
           timer.seconds());
}

void criterion8_determinant_identities() {
    Timer timer;
    RngStream rs(808, 1);
    long cases = 0, violations = 0;
    double worst_rel = 0.0, worst_cof = 0.0;
    for (int n = 2; n <= 6; ++n) {
        for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
            for (int rep = 0; rep < 100; ++rep) {
                DetCase c;
                c.n = n;
                c.a_mask = mask;
                c.s.resize(n);
                for (int i = 0; i < n; ++i) c.s[i] = std::exp(rs.uniform(-2.3, 2.3));
                const DetCheckResult r = det_identity_check(c);
                ++cases;
                if (r.skipped) continue;
                worst_rel = std::max({worst_rel, r.rel_err_decomposition,
                                      r.max_rel_err_blocks});
                worst_cof = std::max(worst_cof, r.cofactor_ratio);
                if (!r.ok()) ++violations;
            }
        }
    }
    report(8, "chain-matrix determinant identities", violations == 0,
           fmt("%ld cases, %ld violations; max rel err %.1e, max cofactor ratio %.6f", cases,
               violations, worst_rel, worst_cof),
           timer.seconds());
}

void criterion9_beta_chain() {
    Timer timer;
    const double C8 = betachain::estimate_C8().value;
    const BetaChainReport rep =
        beta_chain_check({1, 2, 3}, {0.0, 0.125, 0.25}, {0.25, 0.5, 1.0}, C8, 1000, 909);
    const bool pass = rep.max_rel_err_closed_form <= 1e-6 && rep.t1_violations == 0;
    report(9, "simplex-operator closed forms and envelope", pass,
           fmt("max closed-form rel err %.2e <= 1e-6; %ld envelope violations, max ratio %.3f",
               rep.max_rel_err_closed_form, rep.t1_violations, rep.t1_max_ratio),
           timer.seconds());
}

void criterion10_convergence_flag() {
    Timer timer;
    const std::vector<double> scales = {0.0,  0.0005, 0.001, 0.002, 0.004,
                                        0.01, 0.05,   0.2,   0.5};
    HalfSpaceDomain dom(Vec::Unit(2, 0), 0.0);
    QuadratureScheme quad;
    quad.space_order = 20;
    quad.time_order = 8;
    LedgerParams lp;
    lp.u_nodes = 8;
    lp.s_nodes = 8;
    lp.grid_points = 24;
    lp.value_grid_points = 32;
    lp.grid_cap = 48;
    PathConfig cfg;
    cfg.n_paths = 1200;
    cfg.n_steps = 64;
    cfg.seed = 1010;

    std::vector<double> margins, r1s, r2s, se1s, se2s;
    for (double scale : scales) {
        DiffusionModel mdl = rotated_model(scale);
        KernelEval kern(mdl, dom);
        const double delta = commutator_defect(mdl, dom, 1, 1);
        const ConstantsTable c = compute_constants(mdl, delta, 1.0);
        const PathEnsemble ens = simulate_paths(mdl, dom, v2(1.0, 0.0), 1.0, cfg);
        const HedgeReport rep = hedge_ledger(ens, kern, unit_payoff, 0.0, quad, lp, 2);
        margins.push_back(c.convergence_margin);
        r1s.push_back(rep.residuals[0].mean);
        se1s.push_back(rep.residuals[0].std_error);
        r2s.push_back(rep.residuals[1].mean);
        se2s.push_back(rep.residuals[1].std_error);
    }

    bool monotone = true;
    int crossings = 0;
    for (std::size_t i = 1; i < margins.size(); ++i) {
        if (margins[i] < margins[i - 1] - 1e-12) monotone = false;
        if ((margins[i - 1] < 1.0) != (margins[i] < 1.0)) ++crossings;
    }
    bool ratios_ok = true;
    std::string worst_note = "all sub-unit margins satisfied the ratio bound";
    for (std::size_t i = 0; i < margins.size(); ++i) {
        if (margins[i] >= 1.0) continue;
        const double lhs = std::fabs(r2s[i]);
        const double rhs = (margins[i] + 0.1) * std::fabs(r1s[i]) +
                           3.0 * (se1s[i] + se2s[i]) + 1e-12;
        if (lhs > rhs) {
            ratios_ok = false;
            worst_note = fmt("scale %.4f: |r2| %.3e > bound %.3e", scales[i], lhs, rhs);
        }
    }
    report(10, "convergence margin sweep", monotone && crossings == 1 && ratios_ok,
           fmt("margins %.3f..%.1f monotone=%d, unit crossings=%d; %s", margins.front(),
               margins.back(), monotone ? 1 : 0, crossings, worst_note.c_str()),
           timer.seconds());
}

}  // namespace

int main() {
    std::printf("acceptance suite\n================\n");
    criterion1_boundary_symmetry();
    criterion2_degenerate_exactness();
    criterion3_exit_probability();
    criterion4_parametrix_identity();
    criterion5_first_order_identity();
    criterion6_ledger_defect();
    criterion7_h0_bound();
    criterion8_determinant_identities();
    criterion9_beta_chain();
    criterion10_convergence_flag();
    std::printf("================\n%s: %d of 10 criteria failed\n",
                failures == 0 ? "SUCCESS" : "FAILURE", failures);
    return failures;
}
