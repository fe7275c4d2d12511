#ifndef PARAHEDGE_CONFIG_HPP
#define PARAHEDGE_CONFIG_HPP

#include "parahedge/report.hpp"
#include "parahedge/simulation.hpp"

namespace parahedge {

/// Parsed and validated run configuration. `materialized` carries every
/// effective value (defaults filled in) so reports are self-describing.
struct RunConfig {
    std::string experiment;
    HalfSpaceDomain domain{Vec::Unit(1, 0), 0.0};
    DiffusionModel model;
    PayoffFunction payoff{[](const Vec&) { return 0.0; }, 0.0};
    double T = 1.0;
    double r = 0.0;
    QuadratureScheme quadrature;
    PathConfig montecarlo;
    int hedge_order = 2;
    std::vector<double> commutator_scales;
    double tolerance_scale = 1.0;
    long verify_samples = 10000;
    bool dump_paths = false;
    LedgerParams ledger;

    Vec x0;
    std::optional<std::string> domain_warning;
    json materialized;
};

namespace cfgdetail {

template <class T>
T get_or(const json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const std::exception& e) {
        throw config_error("config field '" + key + "': " + e.what());
    }
}

inline Vec get_vec(const json& j, const std::string& field) {
    try {
        const auto arr = j.at(field).get<std::vector<double>>();
        return Eigen::Map<const Vec>(arr.data(), static_cast<Eigen::Index>(arr.size()));
    } catch (const std::exception& e) {
        throw config_error("config field '" + field + "': " + e.what());
    }
}

}  // namespace cfgdetail

inline DiffusionModel build_model(const json& jm) {
    using cfgdetail::get_or;
    const std::string family = cfgdetail::get_or<std::string>(jm, "family", "constant");
    const json params = jm.contains("params") ? jm.at("params") : json::object();
    DiffusionModel mdl;

    if (family == "constant") {
        const auto a = params.at("A").get<std::vector<std::vector<double>>>();
        const int d = static_cast<int>(a.size());
        Mat A(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) A(i, j) = a[i][j];
        Vec b = Vec::Zero(d);
        if (params.contains("b")) b = cfgdetail::get_vec(params, "b");
        mdl = make_constant_model(A, b);
    } else if (family == "diagonal") {
        const Vec base = cfgdetail::get_vec(params, "base");
        const Vec amp = cfgdetail::get_vec(params, "amp");
        Vec b = Vec::Zero(base.size());
        if (params.contains("b")) b = cfgdetail::get_vec(params, "b");
        mdl = make_diagonal_model(base, amp, get_or<std::string>(params, "shape", "sin2"), b);
    } else if (family == "rotated_constant") {
        Vec b = Vec::Zero(2);
        if (params.contains("b")) b = cfgdetail::get_vec(params, "b");
        mdl = make_rotated_constant_model(params.at("lambda1").get<double>(),
                                          params.at("lambda2").get<double>(),
                                          get_or<double>(params, "angle", 0.0), b);
    } else if (family == "grid") {
        mdl = make_grid_model(params.at("csv").get<std::string>(), params.at("d").get<int>());
    } else {
        throw config_error("model: unknown family '" + family + "'");
    }

    // declared envelope overrides the family defaults where given
    mdl.m = get_or<double>(jm, "m", mdl.m);
    mdl.M = get_or<double>(jm, "M", mdl.M);
    mdl.a_inf = get_or<double>(jm, "a_inf", mdl.a_inf);
    mdl.b_inf = get_or<double>(jm, "b_inf", mdl.b_inf);
    mdl.M0 = get_or<double>(jm, "M0", 1.05 * mdl.M);
    if (jm.contains("Cq")) {
        mdl.Cq = jm.at("Cq").get<double>();
    } else if (mdl.constant_coefficients) {
        // calibrate Cq by sampling q / (t^{-d/2} e^{-|x-y|^2/4 M0 t}) on the
        // constant-coefficient reference
        mdl.Cq = 1.0;  // placeholder until the kernel exists
    }
    mdl.validate_declared();
    return mdl;
}

/// Sampled calibration of the Gaussian-bound prefactor Cq for constant
/// models: max of q_t(x,y) / (t^{-d/2} e^{-|x-y|^2 / 4 M0 t}) over a cloud,
/// padded by 10%.
inline double calibrate_Cq(const DiffusionModel& mdl, double T, std::uint64_t seed = 99) {
    if (!mdl.constant_coefficients) return mdl.Cq;
    Eigen::LLT<Mat> llt(mdl.A0);
    const Mat Ainv = llt.solve(Mat::Identity(mdl.d, mdl.d));
    const double det = mdl.A0.determinant();
    RngStream rs(seed, 4);
    double worst = 0.0;
    for (int i = 0; i < 20000; ++i) {
        const double t = 1e-3 * std::pow(T / 1e-3, rs.uniform());
        Vec w(mdl.d);
        for (int j = 0; j < mdl.d; ++j) w[j] = rs.normal() * std::sqrt(mdl.M * T) * 2.0;
        const Vec shift = w - t * mdl.b0;
        const double q = std::pow(2.0 * pi * t, -0.5 * mdl.d) / std::sqrt(det) *
                         std::exp(-0.5 * shift.dot(Ainv * shift) / t);
        const double ref = std::pow(t, -0.5 * mdl.d) * std::exp(-w.squaredNorm() / (4.0 * mdl.M0 * t));
        worst = std::max(worst, q / ref);
    }
    return 1.1 * worst;
}

inline RunConfig parse_config(const json& j, const std::string& experiment) {
    RunConfig cfg;
    cfg.experiment = experiment;

    if (!j.contains("domain")) throw config_error("config: missing 'domain' block");
    cfg.domain = HalfSpaceDomain::normalized(cfgdetail::get_vec(j.at("domain"), "gamma"),
                                             j.at("domain").value("k", 0.0),
                                             &cfg.domain_warning);

    if (!j.contains("model")) throw config_error("config: missing 'model' block");
    cfg.model = build_model(j.at("model"));
    if (cfg.model.d != cfg.domain.dim())
        throw config_error("config: model dimension != domain dimension");

    cfg.T = j.value("T", 1.0);
    if (!(cfg.T > 0.0)) throw config_error("config: T must be positive");
    cfg.r = j.value("r", 0.0);

    if (!j.at("model").contains("Cq") && cfg.model.constant_coefficients)
        cfg.model.Cq = calibrate_Cq(cfg.model, cfg.T);

    // payoff families resolve against the domain (barrier coordinate)
    const json jp = j.contains("payoff") ? j.at("payoff") : json{{"family", "constant"}};
    const std::string pf = jp.value("family", "constant");
    const json pp = jp.contains("params") ? jp.at("params") : json::object();
    if (pf == "constant") {
        cfg.payoff = make_constant_payoff(pp.value("amount", 1.0));
    } else if (pf == "digital") {
        cfg.payoff = make_digital_payoff(cfg.domain, pp.value("strike", cfg.domain.k()),
                                         pp.value("amount", 1.0));
    } else if (pf == "capped_call") {
        cfg.payoff = make_capped_call_payoff(cfg.domain, pp.value("strike", cfg.domain.k()),
                                             pp.value("cap", 10.0));
    } else {
        throw config_error("payoff: unknown family '" + pf + "'");
    }

    if (j.contains("quadrature")) {
        const json& q = j.at("quadrature");
        cfg.quadrature.space_order = q.value("space_order", cfg.quadrature.space_order);
        cfg.quadrature.time_order = q.value("time_order", cfg.quadrature.time_order);
        cfg.quadrature.truncation_sigmas =
            q.value("truncation_sigmas", cfg.quadrature.truncation_sigmas);
        cfg.quadrature.singularity_substitution =
            q.value("singularity_substitution", cfg.quadrature.singularity_substitution);
        cfg.quadrature.max_star_order = q.value("max_star_order", cfg.quadrature.max_star_order);
    }
    if (j.contains("montecarlo")) {
        const json& mc = j.at("montecarlo");
        cfg.montecarlo.n_paths = mc.value("n_paths", cfg.montecarlo.n_paths);
        cfg.montecarlo.n_steps = mc.value("n_steps", cfg.montecarlo.n_steps);
        cfg.montecarlo.seed = mc.value("seed", cfg.montecarlo.seed);
        cfg.montecarlo.bridge_correction =
            mc.value("bridge_correction", cfg.montecarlo.bridge_correction);
        cfg.montecarlo.scheme = mc.value("scheme", cfg.montecarlo.scheme);
        cfg.dump_paths = mc.value("dump_paths", false);
        cfg.montecarlo.validate();
    }
    if (j.contains("hedge")) {
        cfg.hedge_order = j.at("hedge").value("n_max", cfg.hedge_order);
        if (cfg.hedge_order < 1 || cfg.hedge_order > cfg.quadrature.max_star_order)
            throw config_error("hedge: n_max out of range");
    }
    if (j.contains("convergence"))
        cfg.commutator_scales =
            j.at("convergence").value("commutator_scales", std::vector<double>{});
    cfg.tolerance_scale = j.value("tolerance_scale", 1.0);
    cfg.verify_samples = j.value("verify_samples", 10000L);

    cfg.ledger = LedgerParams::for_dim(cfg.model.d);
    if (j.contains("ledger")) {
        const json& L = j.at("ledger");
        cfg.ledger.u_nodes = L.value("u_nodes", cfg.ledger.u_nodes);
        cfg.ledger.s_nodes = L.value("s_nodes", cfg.ledger.s_nodes);
        cfg.ledger.grid_points = L.value("grid_points", cfg.ledger.grid_points);
        cfg.ledger.value_grid_points = L.value("value_grid_points", cfg.ledger.value_grid_points);
        cfg.ledger.grid_cap = L.value("grid_cap", cfg.ledger.grid_cap);
    }

    if (j.contains("x0")) {
        cfg.x0 = cfgdetail::get_vec(j, "x0");
    } else {
        cfg.x0 = cfg.domain.gamma() * (cfg.domain.k() + 1.0);
    }
    if (!cfg.domain.contains(cfg.x0))
        throw config_error("config: x0 must lie inside the knock-out region D");

    // materialize effective values
    json m;
    m["experiment"] = experiment;
    m["domain"] = {{"gamma", std::vector<double>(cfg.domain.gamma().data(),
                                                 cfg.domain.gamma().data() + cfg.domain.dim())},
                   {"k", cfg.domain.k()}};
    m["model"] = {{"family", cfg.model.family}, {"m", cfg.model.m},     {"M", cfg.model.M},
                  {"a_inf", cfg.model.a_inf},   {"b_inf", cfg.model.b_inf},
                  {"M0", cfg.model.M0},         {"Cq", cfg.model.Cq}};
    if (j.at("model").contains("params")) m["model"]["params"] = j.at("model").at("params");
    m["payoff"] = {{"family", pf}, {"params", pp}};
    m["T"] = cfg.T;
    m["r"] = cfg.r;
    m["x0"] = std::vector<double>(cfg.x0.data(), cfg.x0.data() + cfg.x0.size());
    m["quadrature"] = {{"space_order", cfg.quadrature.space_order},
                       {"time_order", cfg.quadrature.time_order},
                       {"truncation_sigmas", cfg.quadrature.truncation_sigmas},
                       {"singularity_substitution", cfg.quadrature.singularity_substitution},
                       {"max_star_order", cfg.quadrature.max_star_order}};
    m["montecarlo"] = {{"n_paths", cfg.montecarlo.n_paths},
                       {"n_steps", cfg.montecarlo.n_steps},
                       {"seed", cfg.montecarlo.seed},
                       {"bridge_correction", cfg.montecarlo.bridge_correction},
                       {"scheme", cfg.montecarlo.scheme}};
    m["hedge"] = {{"n_max", cfg.hedge_order}};
    m["ledger"] = {{"u_nodes", cfg.ledger.u_nodes},
                   {"s_nodes", cfg.ledger.s_nodes},
                   {"grid_points", cfg.ledger.grid_points},
                   {"value_grid_points", cfg.ledger.value_grid_points},
                   {"grid_cap", cfg.ledger.grid_cap}};
    if (!cfg.commutator_scales.empty()) m["convergence"] = {{"commutator_scales", cfg.commutator_scales}};
    m["tolerance_scale"] = cfg.tolerance_scale;
    m["verify_samples"] = cfg.verify_samples;
    if (cfg.domain_warning) m["warnings"] = {*cfg.domain_warning};
    cfg.materialized = m;
    return cfg;
}

inline RunConfig load_config(const std::string& path, const std::string& experiment) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw config_error("config parse error in '" + path + "': " + e.what());
    }
    return parse_config(j, experiment);
}

}  // namespace parahedge

#endif
