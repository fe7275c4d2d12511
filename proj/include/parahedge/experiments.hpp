#ifndef PARAHEDGE_EXPERIMENTS_HPP
#define PARAHEDGE_EXPERIMENTS_HPP

#include "parahedge/bounds.hpp"
#include "parahedge/config.hpp"

#include <iomanip>

namespace parahedge {

namespace expdetail {

inline json mc_json(const MCEstimate& e, std::uint64_t seed, std::uint64_t model_hash) {
    return json{{"estimate", e.mean},
                {"std_error", e.std_error},
                {"n_paths", e.n_effective},
                {"seed", seed},
                {"model_hash", model_hash}};
}

inline std::uint64_t model_hash(const RunConfig& cfg) {
    return fnv1a_hash(cfg.materialized["model"].dump() + cfg.materialized["domain"].dump());
}

/// Random point in a centered box, boundary-biased half the time so both
/// sides of the barrier get exercised.
inline Vec sample_point(const HalfSpaceDomain& dom, RngStream& rs, double spread) {
    Vec u(dom.dim());
    u[0] = dom.k() + spread * rs.normal() * 0.5;
    for (int i = 1; i < dom.dim(); ++i) u[i] = spread * rs.normal() * 0.5;
    return dom.from_frame(u);
}

inline double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::fabs(x));
    return m;
}

}  // namespace expdetail

// ---------------------------------------------------------------------------
// individual checks used by the verify experiment
// ---------------------------------------------------------------------------

inline CheckRecord check_reflection_involution(const RunConfig& cfg, long n) {
    RngStream rs(cfg.montecarlo.seed, 11);
    double worst = 0.0;
    for (long i = 0; i < n; ++i) {
        const Vec x = expdetail::sample_point(cfg.domain, rs, 5.0);
        worst = std::max(worst, (cfg.domain.reflect(cfg.domain.reflect(x)) - x).norm());
    }
    return make_check("reflection_involution", worst, 1e-13 * cfg.tolerance_scale);
}

inline CheckRecord check_reflection_isometry(const RunConfig& cfg, long n) {
    RngStream rs(cfg.montecarlo.seed, 12);
    double worst = 0.0;
    for (long i = 0; i < n; ++i) {
        const Vec x = expdetail::sample_point(cfg.domain, rs, 5.0);
        const Vec y = expdetail::sample_point(cfg.domain, rs, 5.0);
        worst = std::max(worst, std::fabs((cfg.domain.reflect(x) - cfg.domain.reflect(y)).norm() -
                                          (x - y).norm()));
    }
    return make_check("reflection_isometry", worst, 1e-13 * cfg.tolerance_scale);
}

inline CheckRecord check_projection_decomposition(const RunConfig& cfg, long n) {
    RngStream rs(cfg.montecarlo.seed, 13);
    double worst = 0.0;
    for (long i = 0; i < n; ++i) {
        const Vec x = expdetail::sample_point(cfg.domain, rs, 5.0);
        if (cfg.domain.on_boundary(x)) continue;
        const double lhs = project_pi(cfg.payoff, cfg.domain, x) +
                           project_pi_perp(cfg.payoff, cfg.domain, x);
        worst = std::max(worst, std::fabs(lhs - cfg.payoff(x)));
    }
    return make_check("projection_decomposition", worst, 1e-12 * cfg.tolerance_scale);
}

inline CheckRecord check_boundary_kernel_symmetry(const RunConfig& cfg, const KernelEval& kern,
                                                  long n) {
    RngStream rs(cfg.montecarlo.seed, 14);
    double worst = 0.0;
    for (long i = 0; i < n; ++i) {
        Vec tang = Vec::Zero(std::max(cfg.domain.dim() - 1, 1));
        for (int j = 0; j < cfg.domain.dim() - 1; ++j) tang[j] = rs.normal();
        const Vec x = cfg.domain.boundary_point(tang);
        const Vec y = x + Vec::NullaryExpr(cfg.domain.dim(), [&](Eigen::Index) {
                          return rs.normal() * std::sqrt(cfg.model.M * cfg.T);
                      });
        const double t = rs.uniform(0.05, 1.0) * cfg.T;
        const double p1 = kern.p_kernel(t, x, y);
        const double p2 = kern.p_kernel(t, x, cfg.domain.reflect(y));
        worst = std::max(worst, std::fabs(p1 - p2) / p1);
    }
    return make_check("boundary_kernel_symmetry", worst, 1e-12 * cfg.tolerance_scale);
}

/// For x on the boundary, int pi(f)(y) p_t(x,y) dy over the truncated grid.
inline CheckRecord check_knock_in_neutrality(const RunConfig& cfg, const KernelEval& kern) {
    const HalfSpaceDomain& dom = cfg.domain;
    double worst = 0.0;
    RngStream rs(cfg.montecarlo.seed, 15);
    for (int c = 0; c < 8; ++c) {
        Vec tang = Vec::Zero(std::max(dom.dim() - 1, 1));
        for (int j = 0; j < dom.dim() - 1; ++j) tang[j] = rs.normal();
        const Vec x = dom.boundary_point(tang);
        const double t = rs.uniform(0.1, 1.0) * cfg.T;
        const Vec xf = dom.to_frame(x);
        const double w = cfg.quadrature.truncation_sigmas * std::sqrt(2.0 * cfg.model.M * t);
        Vec lo = xf.array() - w, hi = xf.array() + w;
        double acc = 0.0;
        box_rule(lo, hi, cfg.quadrature.space_order).for_each([&](const Vec& uf, double wq) {
            const Vec y = dom.from_frame(uf);
            acc += wq * project_pi(cfg.payoff, dom, y) * kern.p_kernel(t, x, y);
        });
        worst = std::max(worst, std::fabs(acc));
    }
    return make_check("boundary_knock_in_neutrality", worst, 1e-8 * cfg.tolerance_scale);
}

inline CheckRecord check_kernel_normalization(const RunConfig& cfg, const KernelEval& kern) {
    const HalfSpaceDomain& dom = cfg.domain;
    RngStream rs(cfg.montecarlo.seed, 16);
    double worst = 0.0;
    // the 1e-6 target needs ~0.3 sigma node spacing over a 7-sigma box
    const int order = std::max(cfg.quadrature.space_order, 52);
    for (int c = 0; c < 4; ++c) {
        const Vec y = expdetail::sample_point(dom, rs, 2.0);
        const double t = rs.uniform(0.1, 1.0) * cfg.T;
        const Vec yf = dom.to_frame(y);
        const double w = 7.0 * std::sqrt(cfg.model.M * t);
        Vec lo = yf.array() - w, hi = yf.array() + w;
        double acc = 0.0;
        box_rule(lo, hi, order).for_each([&](const Vec& uf, double wq) {
            acc += wq * kern.p_kernel(t, dom.from_frame(uf), y);
        });
        worst = std::max(worst, std::fabs(acc - 1.0));
    }
    return make_check("kernel_normalization", worst, 1e-6 * cfg.tolerance_scale);
}

/// d_s p_s(x,y) = (1/2) Atilde(y) . grad^2_x p_s(x,y) by central differences.
inline CheckRecord check_heat_equation(const RunConfig& cfg, const KernelEval& kern, long n) {
    const HalfSpaceDomain& dom = cfg.domain;
    RngStream rs(cfg.montecarlo.seed, 17);
    double worst = 0.0;
    const int d = dom.dim();
    for (long c = 0; c < n; ++c) {
        const Vec x = expdetail::sample_point(dom, rs, 1.5);
        Vec y = expdetail::sample_point(dom, rs, 1.5);
        if (dom.on_boundary(y)) y[0] += 1e-3;
        const double s = rs.uniform(0.2, 1.0) * cfg.T;
        const double ht = 1e-4 * std::sqrt(s);
        const double hx = 1e-4 * std::sqrt(cfg.model.M * s);

        const double dpdt =
            (kern.p_kernel(s + ht, x, y) - kern.p_kernel(s - ht, x, y)) / (2.0 * ht);

        const Mat At = symmetrize_A(cfg.model, dom, y);
        double rhs = 0.0;
        const double p0 = kern.p_kernel(s, x, y);
        for (int i = 0; i < d; ++i) {
            Vec xp = x, xm = x;
            xp[i] += hx;
            xm[i] -= hx;
            const double dii =
                (kern.p_kernel(s, xp, y) - 2.0 * p0 + kern.p_kernel(s, xm, y)) / (hx * hx);
            rhs += 0.5 * At(i, i) * dii;
            for (int j = i + 1; j < d; ++j) {
                Vec xpp = x, xpm = x, xmp = x, xmm = x;
                xpp[i] += hx; xpp[j] += hx;
                xpm[i] += hx; xpm[j] -= hx;
                xmp[i] -= hx; xmp[j] += hx;
                xmm[i] -= hx; xmm[j] -= hx;
                const double dij = (kern.p_kernel(s, xpp, y) - kern.p_kernel(s, xpm, y) -
                                    kern.p_kernel(s, xmp, y) + kern.p_kernel(s, xmm, y)) /
                                   (4.0 * hx * hx);
                rhs += At(i, j) * dij;
            }
        }
        const double scale = std::max({std::fabs(dpdt), std::fabs(rhs), 1e-3 * p0 / s});
        if (scale > 0.0) worst = std::max(worst, std::fabs(dpdt - rhs) / scale);
    }
    return make_check("heat_equation_fd", worst, 1e-4 * cfg.tolerance_scale);
}

/// Lemma-2 style continuity control across the boundary:
/// ||A(x) - Atilde(y)|| <= a_inf |x-y| + delta for x in D, y off D.
inline CheckRecord check_symmetrized_coeff_bound(const RunConfig& cfg, double delta, long n) {
    const HalfSpaceDomain& dom = cfg.domain;
    RngStream rs(cfg.montecarlo.seed, 18);
    double worst = -1e300;
    for (long i = 0; i < n; ++i) {
        Vec x = expdetail::sample_point(dom, rs, 3.0);
        Vec y = expdetail::sample_point(dom, rs, 3.0);
        if (!dom.contains(x)) x = dom.reflect(x);
        if (dom.contains(y)) y = dom.reflect(y);
        if (!dom.contains(x) || dom.contains(y)) continue;
        const double lhs = (cfg.model.A(x) - symmetrize_A(cfg.model, dom, y)).norm();
        const double rhs = cfg.model.a_inf * (x - y).norm() + delta;
        worst = std::max(worst, lhs - rhs);
    }
    return make_check("symmetrized_coeff_bound", std::max(worst, 0.0),
                      1e-9 * cfg.tolerance_scale);
}

inline CheckRecord check_parametrix_identity(const RunConfig& cfg, const KernelEval& kern) {
    if (!cfg.model.constant_coefficients) {
        CheckRecord r;
        r.id = "parametrix_identity";
        r.status = CheckStatus::Skip;
        r.details = "closed-form transition density needs constant coefficients";
        return r;
    }
    const HalfSpaceDomain& dom = cfg.domain;
    const std::vector<double> times = {0.1 * cfg.T, 0.5 * cfg.T, cfg.T};
    const double k = dom.k();
    std::vector<Vec> xs, ys;
    for (double off : {0.3, 0.8, 1.5}) {
        Vec u = Vec::Zero(dom.dim());
        u[0] = k + off;
        if (dom.dim() > 1) u[1] = 0.2 * off - 0.3;
        xs.push_back(dom.from_frame(u));
    }
    for (double off : {-0.3, -0.8, -1.4}) {
        Vec u = Vec::Zero(dom.dim());
        u[0] = k + off;
        if (dom.dim() > 1) u[1] = -0.1 * off + 0.1;
        ys.push_back(dom.from_frame(u));
    }
    double worst = 0.0;
    for (double t : times)
        for (const Vec& x : xs)
            for (const Vec& y : ys) {
                const double gap = kern.q_reference(t, x, y) - kern.p_kernel(t, x, y);
                const double resid = kern.parametrix_residual(t, x, y, cfg.quadrature);
                const double ref = std::max(std::fabs(gap), 1e-12);
                worst = std::max(worst, std::fabs(resid) / ref);
            }
    return make_check("parametrix_identity", worst, 0.02 * cfg.tolerance_scale);
}

inline CheckRecord check_first_order_identity(const RunConfig& cfg, const KernelEval& kern,
                                              const PathEnsemble& ens, json* payload) {
    const MCEstimate lhs = error_lhs_mc(ens, cfg.payoff, cfg.domain);
    const MCEstimate rhs = error_rhs_quadmc(ens, kern, cfg.payoff, cfg.quadrature);
    const double tol =
        3.0 * std::sqrt(sqr(lhs.std_error) + sqr(rhs.std_error)) * cfg.tolerance_scale;
    if (payload) {
        (*payload)["error_lhs"] = {{"estimate", lhs.mean}, {"std_error", lhs.std_error}};
        (*payload)["error_rhs"] = {{"estimate", rhs.mean}, {"std_error", rhs.std_error}};
    }
    return make_check("first_order_identity_mc", std::fabs(lhs.mean - rhs.mean), tol,
                      json{{"lhs", lhs.mean}, {"rhs", rhs.mean}});
}

inline CheckRecord check_complementarity(const RunConfig& cfg, const PathEnsemble& ens) {
    const HalfSpaceDomain& dom = cfg.domain;
    double worst = 0.0;
    for (long p = 0; p < ens.n_paths(); ++p) {
        const Vec xT = ens.state(p, ens.n_steps());
        const double ko = ens.exited(p) ? 0.0 : cfg.payoff(xT);
        const double ki = ens.exited(p) ? cfg.payoff(xT) : 0.0;
        worst = std::max(worst, std::fabs(ko + ki - cfg.payoff(xT)));
    }
    (void)dom;
    return make_check("knockout_complementarity", worst, 1e-12 * cfg.tolerance_scale);
}

inline CheckRecord check_det_identities(const RunConfig& cfg, json* payload) {
    RngStream rs(cfg.montecarlo.seed, 19);
    long cases = 0, violations = 0, skipped = 0;
    double worst_rel = 0.0;
    for (int n = 2; n <= 6; ++n) {
        for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
            for (int rep = 0; rep < 100; ++rep) {
                DetCase c;
                c.n = n;
                c.a_mask = mask;
                c.s.resize(n);
                for (int i = 0; i < n; ++i) c.s[i] = std::exp(rs.uniform(-2.3, 2.3));
                const DetCheckResult res = det_identity_check(c);
                ++cases;
                if (res.skipped) {
                    ++skipped;
                    continue;
                }
                worst_rel = std::max({worst_rel, res.rel_err_decomposition,
                                      res.max_rel_err_blocks});
                if (!res.ok()) ++violations;
            }
        }
    }
    if (payload)
        (*payload)["det_checks"] = {{"cases", cases}, {"violations", violations},
                                    {"skipped", skipped}, {"max_rel_err", worst_rel}};
    return make_check("determinant_identities", static_cast<double>(violations), 0.0,
                      json{{"cases", cases}, {"max_rel_err", worst_rel}});
}

inline std::pair<CheckRecord, CheckRecord> check_beta_chain(const RunConfig& cfg, double C8) {
    const BetaChainReport rep = beta_chain_check({1, 2, 3}, {0.0, 0.125, 0.25},
                                                 {0.25, 0.5, 1.0}, C8, 1000,
                                                 cfg.montecarlo.seed);
    return {make_check("beta_chain_closed_forms", rep.max_rel_err_closed_form,
                       1e-6 * cfg.tolerance_scale),
            make_check("beta_chain_t1_inequality", static_cast<double>(rep.t1_violations), 0.0,
                       json{{"max_ratio", rep.t1_max_ratio}})};
}

inline CheckRecord check_gamma_reciprocal(const RunConfig& cfg) {
    const auto c10 = betachain::estimate_C10(0.5);
    // re-scan on a shifted grid; the certified constant must dominate
    double worst = 0.0;
    for (int i = 0; i <= 3001; ++i) {
        const double x = 1e-3 * std::pow(50.0 / 1e-3, (i + 0.37) / 3001.0);
        worst = std::max(worst, std::exp(-std::lgamma(x) - x * std::log(0.5)) / c10.value);
    }
    return make_check("gamma_reciprocal_bound", std::max(worst - 1.0, 0.0),
                      1e-3 * cfg.tolerance_scale, json{{"C10", c10.value}, {"xi", 0.5}});
}

// ---------------------------------------------------------------------------
// experiments
// ---------------------------------------------------------------------------

inline void experiment_verify(const RunConfig& cfg, RunReport& rep) {
    KernelEval kern(cfg.model, cfg.domain);
    const long n = cfg.verify_samples;

    rep.records.push_back(check_reflection_involution(cfg, n));
    rep.records.push_back(check_reflection_isometry(cfg, n));
    rep.records.push_back(check_projection_decomposition(cfg, n));
    rep.records.push_back(check_boundary_kernel_symmetry(cfg, kern, std::min(n, 2000L)));
    rep.records.push_back(check_knock_in_neutrality(cfg, kern));
    rep.records.push_back(check_kernel_normalization(cfg, kern));
    rep.records.push_back(check_heat_equation(cfg, kern, std::min(n, 200L)));

    const double delta = commutator_defect(cfg.model, cfg.domain, 2000, cfg.montecarlo.seed);
    rep.records.push_back(check_symmetrized_coeff_bound(cfg, delta, n));

    const ConstantsTable consts = compute_constants(cfg.model, delta, cfg.T);
    const H0BoundReport h0rep = check_h0_bound(kern, consts, cfg.x0, cfg.T, n,
                                               cfg.montecarlo.seed);
    rep.records.push_back(make_check("h0_pointwise_bound",
                                     static_cast<double>(h0rep.violations), 0.0,
                                     json{{"max_ratio", h0rep.max_ratio}}));

    rep.records.push_back(check_parametrix_identity(cfg, kern));

    const PathEnsemble ens = simulate_paths(cfg.model, cfg.domain, cfg.x0, cfg.T,
                                            cfg.montecarlo);
    rep.records.push_back(check_first_order_identity(cfg, kern, ens, &rep.payload));
    rep.records.push_back(check_complementarity(cfg, ens));

    rep.records.push_back(check_det_identities(cfg, &rep.payload));
    auto [beta1, beta2] = check_beta_chain(cfg, consts.C8);
    rep.records.push_back(beta1);
    rep.records.push_back(beta2);
    rep.records.push_back(check_gamma_reciprocal(cfg));
}

inline void experiment_price(const RunConfig& cfg, RunReport& rep,
                             const std::filesystem::path& out_dir) {
    const PathEnsemble ens = simulate_paths(cfg.model, cfg.domain, cfg.x0, cfg.T,
                                            cfg.montecarlo);
    const std::uint64_t mh = expdetail::model_hash(cfg);
    const MCEstimate ko = price_knock_out(ens, cfg.payoff, cfg.r);
    const MCEstimate ki = price_knock_in(ens, cfg.payoff, cfg.r);
    const MCEstimate plain = price_plain(
        ens, [&](const Vec& x) { return cfg.payoff(x); }, cfg.r);
    const MCEstimate plain_pi = price_plain(
        ens, [&](const Vec& x) { return project_pi(cfg.payoff, cfg.domain, x); }, cfg.r);

    rep.payload["knock_out"] = expdetail::mc_json(ko, cfg.montecarlo.seed, mh);
    rep.payload["knock_in"] = expdetail::mc_json(ki, cfg.montecarlo.seed, mh);
    rep.payload["plain"] = expdetail::mc_json(plain, cfg.montecarlo.seed, mh);
    rep.payload["plain_pi"] = expdetail::mc_json(plain_pi, cfg.montecarlo.seed, mh);
    rep.records.push_back(
        make_check("knockout_complementarity",
                   std::fabs(ko.mean + ki.mean - plain.mean), 1e-12 * cfg.tolerance_scale));

    if (cfg.dump_paths) {
        std::ofstream csv(out_dir / "paths.csv");
        csv << "path,step,t";
        for (int i = 0; i < cfg.model.d; ++i) csv << ",x" << i + 1;
        csv << ",exited\n";
        const long n_dump = std::min<long>(ens.n_paths(), 200);
        for (long p = 0; p < n_dump; ++p)
            for (int s = 0; s <= ens.n_steps(); ++s) {
                csv << p << "," << s << "," << s * ens.dt();
                const auto x = ens.state(p, s);
                for (int i = 0; i < cfg.model.d; ++i) csv << "," << x[i];
                csv << "," << (ens.exited(p) && ens.tau(p) <= s * ens.dt() ? 1 : 0) << "\n";
            }
    }
}

inline void export_hedge_terms(const RunConfig& cfg, const KernelEval& kern,
                               const std::filesystem::path& out_dir) {
    const auto families = build_hedge_terms(kern, cfg.hedge_order, cfg.T, cfg.payoff,
                                            cfg.quadrature);
    std::ofstream csv(out_dir / "hedge_terms.csv");
    csv << "order,s,u,x1,payoff\n";
    csv << std::setprecision(12);
    // evaluation points along the barrier axis, off-domain side included
    std::vector<double> offs = {-2.0, -1.5, -1.0, -0.6, -0.3, -0.1, 0.0, 0.1, 0.3, 0.6, 1.0};
    auto point_at = [&](double off) {
        Vec u = Vec::Zero(cfg.domain.dim());
        u[0] = cfg.domain.k() + off;
        return cfg.domain.from_frame(u);
    };
    const Rule1d srule = sin2_rule(0.0, cfg.T, 6);
    for (const auto& fam : families) {
        if (fam.order == 0) {
            const PayoffFunction pf = fam.payoff_at(0.0, 0.0);
            for (double off : offs)
                csv << 0 << "," << cfg.T << ",," << cfg.domain.k() + off << ","
                    << pf(point_at(off)) << "\n";
        } else if (fam.order == 1) {
            for (std::size_t j = 0; j < srule.size(); ++j) {
                const PayoffFunction pf = fam.payoff_at(srule.nodes[j], 0.0);
                for (double off : offs)
                    csv << 1 << "," << srule.nodes[j] << ",," << cfg.domain.k() + off << ","
                        << pf(point_at(off)) << "\n";
            }
        } else {
            for (std::size_t j = 0; j < srule.size(); ++j) {
                const double s = srule.nodes[j];
                const Rule1d urule = sin2_rule(0.0, s, 4);
                for (std::size_t l = 0; l < urule.size(); ++l) {
                    const double u = urule.nodes[l];
                    if (!(u < s)) continue;
                    const PayoffFunction pf = fam.payoff_at(s, u);
                    for (double off : offs)
                        csv << fam.order << "," << s << "," << u << ","
                            << cfg.domain.k() + off << "," << pf(point_at(off)) << "\n";
                }
            }
        }
    }
}

inline void experiment_hedge(const RunConfig& cfg, RunReport& rep,
                             const std::filesystem::path& out_dir) {
    KernelEval kern(cfg.model, cfg.domain);
    const PathEnsemble ens = simulate_paths(cfg.model, cfg.domain, cfg.x0, cfg.T,
                                            cfg.montecarlo);
    const HedgeReport ledger = hedge_ledger(ens, kern, cfg.payoff, cfg.r, cfg.quadrature,
                                            cfg.ledger, cfg.hedge_order);
    const std::uint64_t mh = expdetail::model_hash(cfg);

    rep.payload["discount"] = ledger.discount;
    rep.payload["knock_out"] = expdetail::mc_json(ledger.knock_out, cfg.montecarlo.seed, mh);
    rep.payload["order0_plain_pi"] =
        expdetail::mc_json(ledger.plain_pi, cfg.montecarlo.seed, mh);
    rep.payload["order1"] = expdetail::mc_json(ledger.order1, cfg.montecarlo.seed, mh);
    for (std::size_t h = 0; h < ledger.higher.size(); ++h)
        rep.payload["order" + std::to_string(h + 2)] =
            expdetail::mc_json(ledger.higher[h], cfg.montecarlo.seed, mh);
    for (std::size_t n = 0; n < ledger.residuals.size(); ++n)
        rep.payload["residual" + std::to_string(n + 1)] =
            expdetail::mc_json(ledger.residuals[n], cfg.montecarlo.seed, mh);
    rep.payload["defect"] = expdetail::mc_json(ledger.defect, cfg.montecarlo.seed, mh);

    rep.records.push_back(make_check(
        "ledger_identity_defect", std::fabs(ledger.defect.mean),
        3.0 * ledger.defect.std_error * cfg.tolerance_scale + 1e-12));
    if (ledger.residuals.size() >= 2) {
        const MCEstimate& r1 = ledger.residuals.front();
        const MCEstimate& rn = ledger.residuals.back();
        const double noise = 3.0 * std::sqrt(sqr(r1.std_error) + sqr(rn.std_error));
        rep.records.push_back(make_check(
            "residual_decay", std::max(std::fabs(rn.mean) - std::fabs(r1.mean), 0.0),
            noise * cfg.tolerance_scale + 1e-12,
            json{{"residual_first", r1.mean}, {"residual_last", rn.mean}}));
    }
    export_hedge_terms(cfg, kern, out_dir);
}

inline void experiment_bounds(const RunConfig& cfg, RunReport& rep,
                              const std::filesystem::path& out_dir, std::ostream& log) {
    KernelEval kern(cfg.model, cfg.domain);
    const SamplingBox box = SamplingBox::reachable(cfg.x0, cfg.model.M, cfg.T);
    const ModelReport mrep = validate_ellipticity(cfg.model, box, 2000, cfg.montecarlo.seed);
    const double delta = commutator_defect(cfg.model, cfg.domain, 2000, cfg.montecarlo.seed);
    const double lip = lipschitz_estimate(cfg.model, box, 2000, cfg.montecarlo.seed);

    rep.records.push_back(make_check("ellipticity_window",
                                     mrep.ellipticity_ok ? 0.0 : 1.0, 0.0,
                                     json{{"min_eig", mrep.sampled_min_eig},
                                          {"max_eig", mrep.sampled_max_eig},
                                          {"samples", mrep.sample_count}}));
    rep.records.push_back(make_check(
        "declared_lipschitz", std::max(lip - cfg.model.a_inf * (1.0 + 1e-6), 0.0), 0.0,
        json{{"estimate", lip}, {"declared", cfg.model.a_inf}}));

    const ConstantsTable c = compute_constants(cfg.model, delta, cfg.T);

    const H0BoundReport h0rep =
        check_h0_bound(kern, c, cfg.x0, cfg.T, cfg.verify_samples, cfg.montecarlo.seed);
    rep.records.push_back(make_check("h0_pointwise_bound",
                                     static_cast<double>(h0rep.violations), 0.0,
                                     json{{"max_ratio", h0rep.max_ratio}}));

    std::vector<double> times = {0.05 * cfg.T, 0.2 * cfg.T, 0.5 * cfg.T, cfg.T};
    std::vector<Vec> xs, ys;
    for (double off : {-1.2, -0.4, 0.0, 0.4, 1.2}) {
        Vec u = Vec::Zero(cfg.domain.dim());
        u[0] = cfg.domain.k() + off;
        xs.push_back(cfg.domain.from_frame(u));
    }
    for (double off : {-1.0, -0.3, 0.5}) {
        Vec u = Vec::Zero(cfg.domain.dim());
        u[0] = cfg.domain.k() + off;
        ys.push_back(cfg.domain.from_frame(u));
    }
    const Theorem4Report t4 = check_theorem4_bounds(kern, c, times, xs, ys, cfg.quadrature);
    rep.records.push_back(
        make_check("knock_in_mass_envelope", std::max(t4.max_ratio_i - 1.0, 0.0),
                   1e-9 * cfg.tolerance_scale, json{{"max_ratio", t4.max_ratio_i}}));
    if (t4.part_iii_skipped) {
        CheckRecord r;
        r.id = "smoothed_defect_envelope";
        r.status = CheckStatus::Skip;
        r.details = "closed-form transition density needs constant coefficients";
        rep.records.push_back(r);
    } else {
        rep.records.push_back(
            make_check("smoothed_defect_envelope", std::max(t4.max_ratio_iii - 1.0, 0.0),
                       1e-9 * cfg.tolerance_scale, json{{"max_ratio", t4.max_ratio_iii}}));
    }

    rep.records.push_back(check_det_identities(cfg, &rep.payload));
    auto [beta1, beta2] = check_beta_chain(cfg, c.C8);
    rep.records.push_back(beta1);
    rep.records.push_back(beta2);
    rep.records.push_back(check_gamma_reciprocal(cfg));

    // iterated-operator envelope, n = 2 (n = 3 is cost-capped to 1-D)
    {
        std::vector<double> st = {0.25 * cfg.T, 0.6 * cfg.T};
        std::vector<Vec> sx;
        for (double off : {0.4, 1.0}) {
            Vec u = Vec::Zero(cfg.domain.dim());
            u[0] = cfg.domain.k() + off;
            sx.push_back(cfg.domain.from_frame(u));
        }
        QuadratureScheme q = cfg.quadrature;
        if (cfg.model.d >= 2) {
            q.space_order = std::min(q.space_order, 20);
            q.time_order = std::min(q.time_order, 12);
        }
        const NthBoundReport nb = nth_bound_check(kern, c, 2, cfg.payoff, st, sx, q);
        rep.records.push_back(make_check(
            "iterated_operator_envelope", static_cast<double>(nb.violations), 0.0,
            json{{"max_ratio", nb.max_ratio}, {"degenerate_delta", nb.degenerate_delta}}));
    }

    json jc;
    jc["m"] = c.m; jc["M"] = c.M; jc["d"] = c.d;
    jc["a_inf"] = c.a_inf; jc["b_inf"] = c.b_inf;
    jc["delta"] = c.delta; jc["M0"] = c.M0; jc["Cq"] = c.Cq; jc["T"] = c.T;
    jc["K_1_2"] = c.K_half; jc["K_1"] = c.K_one;
    jc["K_3_2"] = c.K_three_half; jc["K_3_8"] = c.K_three_eighth;
    jc["C1"] = c.C1; jc["C2"] = c.C2; jc["C3"] = c.C3; jc["C4_eff"] = c.C4_eff;
    jc["C5"] = c.C5; jc["C6"] = c.C6; jc["C7"] = c.C7; jc["C8"] = c.C8;
    jc["C9"] = c.C9; jc["C10"] = c.C10; jc["C10_xi"] = c.c10_xi;
    jc["C11"] = c.C11; jc["C12"] = c.C12; jc["C13"] = c.C13;
    jc["convergence_margin"] = c.convergence_margin;
    jc["convergent"] = c.convergent;
    rep.payload["constants"] = jc;

    std::filesystem::create_directories(out_dir);
    std::ofstream cj(out_dir / "constants.json");
    cj << jc.dump(2) << "\n";

    log << "\nConstants\n---------\n" << std::setprecision(8);
    for (auto& [key, val] : jc.items()) log << "  " << std::setw(20) << std::left << key
                                            << " " << val.dump() << "\n";
    rep.records.push_back(make_check("convergence_flag", c.convergent ? 0.0 : 1.0,
                                     c.delta < 1e-300 ? 0.0 : 1.0,
                                     json{{"margin", c.convergence_margin}}));
}

inline void experiment_convergence(const RunConfig& cfg, RunReport& rep,
                                   const std::filesystem::path& out_dir, std::ostream& log) {
    std::vector<double> scales = cfg.commutator_scales;
    if (scales.empty())
        scales = {0.0, 0.001, 0.002, 0.004, 0.008, 0.02, 0.05, 0.1, 0.2, 0.35, 0.5};

    const double l1 = 1.5, l2 = 0.5;  // fixed spectrum; the angle tunes the commutator
    struct Row {
        double scale, delta, margin, res1, res1_se, res2, res2_se;
    };
    std::vector<Row> rows;

    for (double scale : scales) {
        if (scale > 0.5 * (l1 - l2) + 1e-12)
            throw config_error("convergence: commutator scale exceeds (lambda1-lambda2)/2");
        const double angle = 0.5 * std::asin(std::clamp(2.0 * scale / (l1 - l2), 0.0, 1.0));
        DiffusionModel mdl = make_rotated_constant_model(l1, l2, angle, Vec::Zero(2));
        mdl.Cq = calibrate_Cq(mdl, cfg.T);
        HalfSpaceDomain dom(Vec::Unit(2, 0), cfg.domain.k());
        KernelEval kern(mdl, dom);
        const double delta = commutator_defect(mdl, dom, 1, 1);
        const ConstantsTable c = compute_constants(mdl, delta, cfg.T);

        Vec x0 = Vec::Zero(2);
        x0[0] = dom.k() + 1.0;
        const PathEnsemble ens = simulate_paths(mdl, dom, x0, cfg.T, cfg.montecarlo);
        const HedgeReport ledger =
            hedge_ledger(ens, kern, cfg.payoff, 0.0, cfg.quadrature, cfg.ledger, 2);

        rows.push_back({scale, delta, c.convergence_margin, ledger.residuals[0].mean,
                        ledger.residuals[0].std_error, ledger.residuals[1].mean,
                        ledger.residuals[1].std_error});
        log << "  scale " << scale << ": delta " << delta << ", margin "
            << c.convergence_margin << ", residual1 " << ledger.residuals[0].mean
            << ", residual2 " << ledger.residuals[1].mean << "\n";
    }

    long mono_violations = 0;
    for (std::size_t i = 1; i < rows.size(); ++i)
        if (rows[i].margin < rows[i - 1].margin - 1e-12) ++mono_violations;
    long crossings = 0;
    for (std::size_t i = 1; i < rows.size(); ++i)
        if ((rows[i - 1].margin < 1.0) != (rows[i].margin < 1.0)) ++crossings;

    long ratio_violations = 0;
    double worst_ratio_gap = 0.0;
    for (const Row& r : rows) {
        if (r.margin >= 1.0) continue;
        const double lhs = std::fabs(r.res2);
        const double rhs = (r.margin + 0.1) * std::fabs(r.res1) +
                           3.0 * (r.res2_se + r.res1_se) + 1e-12;
        if (lhs > rhs) ++ratio_violations;
        if (std::fabs(r.res1) > 1e-12)
            worst_ratio_gap = std::max(worst_ratio_gap,
                                       lhs / std::fabs(r.res1) - (r.margin + 0.1));
    }

    rep.records.push_back(make_check("margin_monotone", static_cast<double>(mono_violations),
                                     0.0));
    rep.records.push_back(make_check("margin_crosses_once",
                                     std::fabs(static_cast<double>(crossings) - 1.0), 0.0));
    rep.records.push_back(make_check("residual_ratio_within_margin",
                                     static_cast<double>(ratio_violations), 0.0,
                                     json{{"worst_gap", worst_ratio_gap}}));

    json jr = json::array();
    std::filesystem::create_directories(out_dir);
    std::ofstream csv(out_dir / "sweep.csv");
    csv << "scale,delta,margin,residual1,residual1_se,residual2,residual2_se\n"
        << std::setprecision(12);
    for (const Row& r : rows) {
        csv << r.scale << "," << r.delta << "," << r.margin << "," << r.res1 << ","
            << r.res1_se << "," << r.res2 << "," << r.res2_se << "\n";
        jr.push_back(json{{"scale", r.scale},
                          {"delta", r.delta},
                          {"margin", r.margin},
                          {"residual1", r.res1},
                          {"residual2", r.res2}});
    }
    rep.payload["sweep"] = jr;
}

/// Debug dump of kernel values on a coordinate grid.
inline void experiment_kernels(const RunConfig& cfg, const std::filesystem::path& out_dir) {
    KernelEval kern(cfg.model, cfg.domain);
    std::filesystem::create_directories(out_dir);
    std::ofstream csv(out_dir / "kernel_grid.csv");
    csv << "t";
    for (int i = 0; i < cfg.model.d; ++i) csv << ",x" << i + 1;
    for (int i = 0; i < cfg.model.d; ++i) csv << ",y" << i + 1;
    csv << ",p,h0,h\n";
    csv << std::setprecision(12);
    const std::vector<double> times = {0.1 * cfg.T, 0.5 * cfg.T, cfg.T};
    for (double t : times)
        for (int ix = -6; ix <= 6; ++ix)
            for (int iy = -6; iy <= 6; ++iy) {
                Vec ux = Vec::Zero(cfg.domain.dim()), uy = Vec::Zero(cfg.domain.dim());
                ux[0] = cfg.domain.k() + 0.4 * ix;
                uy[0] = cfg.domain.k() + 0.4 * iy;
                const Vec x = cfg.domain.from_frame(ux), y = cfg.domain.from_frame(uy);
                csv << t;
                for (int i = 0; i < cfg.model.d; ++i) csv << "," << x[i];
                for (int i = 0; i < cfg.model.d; ++i) csv << "," << y[i];
                csv << "," << kern.p_kernel(t, x, y) << "," << kern.h0(t, x, y) << ","
                    << kern.h_sym(t, x, y) << "\n";
            }
}

/// Experiment dispatcher: writes report.json (plus any CSV artifacts) into
/// out_dir and returns the report with its exit code.
inline RunReport run_experiment(const RunConfig& cfg, const std::filesystem::path& out_dir,
                                std::ostream& log) {
    RunReport rep;
    rep.experiment = cfg.experiment;
    rep.config = cfg.materialized;
    rep.config_hash = fnv1a_hash(cfg.materialized.dump());
    std::filesystem::create_directories(out_dir);

    if (cfg.experiment == "verify") {
        experiment_verify(cfg, rep);
    } else if (cfg.experiment == "price") {
        experiment_price(cfg, rep, out_dir);
    } else if (cfg.experiment == "hedge") {
        experiment_hedge(cfg, rep, out_dir);
    } else if (cfg.experiment == "bounds") {
        experiment_bounds(cfg, rep, out_dir, log);
    } else if (cfg.experiment == "convergence") {
        experiment_convergence(cfg, rep, out_dir, log);
    } else if (cfg.experiment == "kernels") {
        experiment_kernels(cfg, out_dir);
    } else {
        throw config_error("unknown experiment '" + cfg.experiment + "'");
    }

    rep.write(out_dir);
    for (const auto& r : rep.records)
        log << "  [" << to_string(r.status) << "] " << r.id << " (measured "
            << r.measured << ", tolerance " << r.tolerance << ")\n";
    return rep;
}

}  // namespace parahedge

#endif
