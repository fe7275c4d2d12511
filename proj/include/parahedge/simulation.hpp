#ifndef PARAHEDGE_SIMULATION_HPP
#define PARAHEDGE_SIMULATION_HPP

#include "parahedge/operators.hpp"

namespace parahedge {

struct PathConfig {
    long n_paths = 10000;
    int n_steps = 256;  // per unit time
    std::uint64_t seed = 12345;
    bool bridge_correction = true;
    std::string scheme = "euler";

    void validate() const {
        if (n_paths < 100) throw config_error("montecarlo: n_paths must be >= 100");
        if (n_steps < 16) throw config_error("montecarlo: n_steps must be >= 16");
        if (scheme != "euler") throw config_error("montecarlo: unknown scheme '" + scheme + "'");
    }
};

struct MCEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    long n_effective = 0;
};

/// Mean and std/sqrt(n) of per-path values, fixed-order reduction.
inline MCEstimate mc_from_samples(std::span<const double> v) {
    MCEstimate e;
    e.n_effective = static_cast<long>(v.size());
    if (v.empty()) return e;
    e.mean = pairwise_sum(v) / static_cast<double>(v.size());
    if (v.size() > 1) {
        std::vector<double> sq(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) sq[i] = sqr(v[i] - e.mean);
        const double var = pairwise_sum(sq) / static_cast<double>(v.size() - 1);
        e.std_error = std::sqrt(var / static_cast<double>(v.size()));
    }
    return e;
}

/// Euler-Maruyama ensemble with first-exit detection against the half-space
/// boundary. Exit is flagged when the barrier coordinate drops to k, plus an
/// optional Brownian-bridge crossing draw per step for the 1-D projection:
///     P(cross) = exp( -2 (c_i - k)(c_{i+1} - k) / (<gamma, A gamma> dt) ).
/// Draws are keyed by (seed, path, step, axis); the extra bridge draw uses
/// axis slot d. Paths keep evolving after exit so knock-in payoffs can read
/// the post-exit states.
class PathEnsemble {
public:
    PathEnsemble(long n_paths, int n_steps_total, int d, double T)
        : n_paths_(n_paths), n_steps_(n_steps_total), d_(d), T_(T),
          dt_(T / n_steps_total),
          states_(static_cast<std::size_t>(n_paths) * (n_steps_total + 1) * d),
          tau_(n_paths, std::numeric_limits<double>::infinity()),
          exit_step_(n_paths, -1) {}

    long n_paths() const { return n_paths_; }
    int n_steps() const { return n_steps_; }
    int dim() const { return d_; }
    double horizon() const { return T_; }
    double dt() const { return dt_; }

    Eigen::Map<const Vec> state(long path, int step) const {
        return Eigen::Map<const Vec>(
            states_.data() + (static_cast<std::size_t>(path) * (n_steps_ + 1) + step) * d_, d_);
    }

    Eigen::Map<Vec> state(long path, int step) {
        return Eigen::Map<Vec>(
            states_.data() + (static_cast<std::size_t>(path) * (n_steps_ + 1) + step) * d_, d_);
    }

    /// Left state of the step grid at time t (adapted read).
    Eigen::Map<const Vec> state_at(long path, double t) const {
        int step = static_cast<int>(t / dt_);
        step = std::clamp(step, 0, n_steps_);
        return state(path, step);
    }

    bool exited(long path) const { return exit_step_[path] >= 0; }
    double tau(long path) const { return tau_[path]; }

    /// Exit state with the barrier coordinate clamped to k (the boundary
    /// point the error formulas evaluate kernels at).
    Vec exit_state_clamped(long path, const HalfSpaceDomain& dom) const {
        const Vec x = state(path, std::max(exit_step_[path], 0));
        return x - dom.signed_coord(x) * dom.gamma();
    }

    Vec exit_state_raw(long path) const { return state(path, std::max(exit_step_[path], 0)); }

    void record_exit(long path, int step, double t) {
        if (exit_step_[path] < 0) {
            exit_step_[path] = step;
            tau_[path] = t;
        }
    }

private:
    long n_paths_;
    int n_steps_;
    int d_;
    double T_, dt_;
    std::vector<double> states_;
    std::vector<double> tau_;
    std::vector<int> exit_step_;
};

inline PathEnsemble simulate_paths(const DiffusionModel& model, const HalfSpaceDomain& dom,
                                   const Vec& x0, double T, const PathConfig& cfg) {
    cfg.validate();
    if (!dom.contains(x0)) throw contract_error("simulate_paths: x0 must lie in D");
    if (x0.size() != model.d) throw contract_error("simulate_paths: x0 dimension mismatch");

    const int steps = std::max(16, static_cast<int>(std::ceil(cfg.n_steps * T)));
    PathEnsemble ens(cfg.n_paths, steps, model.d, T);
    const double dt = ens.dt();
    const double sqdt = std::sqrt(dt);
    const CounterRng rng(cfg.seed);
    const int d = model.d;

    Mat chol0;
    double gAg0 = 0.0;
    if (model.constant_coefficients) {
        chol0 = Eigen::LLT<Mat>(model.A0).matrixL();
        gAg0 = dom.gamma().dot(model.A0 * dom.gamma());
    }

    parallel_for(static_cast<std::size_t>(cfg.n_paths), [&](std::size_t p) {
        Vec x = x0;
        Vec xn(d), noise(d);
        ens.state(p, 0) = x;
        double c_prev = dom.signed_coord(x);
        for (int step = 0; step < steps; ++step) {
            Mat L = model.constant_coefficients ? chol0
                                                : Mat(Eigen::LLT<Mat>(model.A(x)).matrixL());
            const double gAg =
                model.constant_coefficients ? gAg0 : dom.gamma().dot(model.A(x) * dom.gamma());
            for (int a = 0; a < d; ++a) noise[a] = rng.normal(p, step, a);
            xn = x + model.b(x) * dt + sqdt * (L * noise);
            ens.state(p, step + 1) = xn;

            const double c_next = dom.signed_coord(xn);
            const double t_next = (step + 1) * dt;
            if (!ens.exited(p)) {
                if (c_next <= 0.0) {
                    ens.record_exit(p, step + 1, t_next);
                } else if (cfg.bridge_correction && c_prev > 0.0) {
                    const double p_cross = std::exp(-2.0 * c_prev * c_next / (gAg * dt));
                    if (rng.uniform(p, step, d) < p_cross) ens.record_exit(p, step + 1, t_next);
                }
            }
            x.swap(xn);
            c_prev = c_next;
        }
    });
    return ens;
}

/// e^{-rT} E[ g(X_T) ], no barrier logic.
template <class G>
MCEstimate price_plain(const PathEnsemble& ens, const G& g, double r) {
    std::vector<double> v(ens.n_paths());
    const double disc = std::exp(-r * ens.horizon());
    for (long p = 0; p < ens.n_paths(); ++p) v[p] = disc * g(ens.state(p, ens.n_steps()));
    return mc_from_samples(v);
}

/// e^{-rT} E[ f(X_T) 1_{tau > T} ].
inline MCEstimate price_knock_out(const PathEnsemble& ens, const PayoffFunction& f, double r) {
    std::vector<double> v(ens.n_paths());
    const double disc = std::exp(-r * ens.horizon());
    for (long p = 0; p < ens.n_paths(); ++p)
        v[p] = ens.exited(p) ? 0.0 : disc * f(ens.state(p, ens.n_steps()));
    return mc_from_samples(v);
}

/// e^{-rT} E[ f(X_T) 1_{tau <= T} ]; complements the knock-out path by path.
inline MCEstimate price_knock_in(const PathEnsemble& ens, const PayoffFunction& f, double r) {
    std::vector<double> v(ens.n_paths());
    const double disc = std::exp(-r * ens.horizon());
    for (long p = 0; p < ens.n_paths(); ++p)
        v[p] = ens.exited(p) ? disc * f(ens.state(p, ens.n_steps())) : 0.0;
    return mc_from_samples(v);
}

/// Left side of the first-order error identity at t = 0:
///     E[ 1_{tau < T} pi(f)(X_T) ].
inline MCEstimate error_lhs_mc(const PathEnsemble& ens, const PayoffFunction& f,
                               const HalfSpaceDomain& dom) {
    std::vector<double> v(ens.n_paths());
    for (long p = 0; p < ens.n_paths(); ++p)
        v[p] = ens.exited(p) ? project_pi(f, dom, ens.state(p, ens.n_steps())) : 0.0;
    return mc_from_samples(v);
}

namespace detail {

/// Frame-coordinate box covering every stored path state and its
/// reflection, padded; grids for path-facing functionals live on it.
inline void path_box(const PathEnsemble& ens, const HalfSpaceDomain& dom, Vec& lo, Vec& hi,
                     double pad) {
    const int d = ens.dim();
    lo = Vec::Constant(d, std::numeric_limits<double>::infinity());
    hi = Vec::Constant(d, -std::numeric_limits<double>::infinity());
    for (long p = 0; p < ens.n_paths(); ++p) {
        for (int s = 0; s <= ens.n_steps(); ++s) {
            const Vec u = dom.to_frame(ens.state(p, s));
            for (int i = 0; i < d; ++i) {
                lo[i] = std::min(lo[i], u[i]);
                hi[i] = std::max(hi[i], u[i]);
            }
        }
    }
    // reflection closure along the barrier axis
    const double k = dom.k();
    const double lo0 = std::min(lo[0], 2.0 * k - hi[0]);
    const double hi0 = std::max(hi[0], 2.0 * k - lo[0]);
    lo[0] = lo0;
    hi[0] = hi0;
    for (int i = 0; i < d; ++i) {
        lo[i] -= pad;
        hi[i] += pad;
    }
}

/// True when a uniform grid of `pts` per axis over [lo, hi] resolves a
/// function whose spatial scale is `scale`.
inline bool grid_resolves(const Vec& lo, const Vec& hi, int pts, double scale) {
    double spacing = 0.0;
    for (int i = 0; i < lo.size(); ++i) spacing = std::max(spacing, (hi[i] - lo[i]) / (pts - 1));
    return spacing <= 0.3 * scale;
}

inline int grid_cap_for_dim(int d) { return d == 1 ? 1024 : (d == 2 ? 64 : 24); }

/// Tabulate y -> S*^m_u f(y) over a frame box by grid-level recursion of
///     S*^m_u = int_0^u S_sigma S*^{(m-1)}_{u-sigma} dsigma,
/// sharing each sigma-node memo across the whole output grid. Memo
/// resolution follows the inner iterate's spatial scale up to `cap` points
/// per axis; past the cap the endpoint nodes degrade gracefully (their
/// singular-substitution weights are already small).
inline GridFn star_grid(const KernelEval& kern, int m, double u, const PayoffFunction& f,
                        const Vec& lo, const Vec& hi, int grid_points,
                        const QuadratureScheme& quad, int cap = 0) {
    GridFn out(lo, hi, std::vector<int>(kern.dim(), grid_points));
    const HalfSpaceDomain& dom = kern.domain();
    if (m == 1) {
        out.fill([&](const Vec& uf) { return apply_S(kern, u, f, dom.from_frame(uf), quad); });
        return out;
    }
    // expanded box the S_sigma quadrature can reach from `out`'s nodes
    const double w = quad.truncation_sigmas * std::sqrt(2.0 * kern.model().M * u);
    Vec xlo = lo, xhi = hi;
    xhi[0] = std::max(hi[0], 2.0 * dom.k() - lo[0]) + w;
    xlo[0] = std::max(dom.k(), std::min(lo[0], 2.0 * dom.k() - hi[0]) - w);
    for (int i = 1; i < kern.dim(); ++i) {
        xlo[i] -= w;
        xhi[i] += w;
    }
    if (cap <= 0) cap = grid_cap_for_dim(kern.dim());

    const Rule1d srule = quad.time_rule(0.0, u);
    std::vector<double> acc(out.size(), 0.0);
    for (std::size_t j = 0; j < srule.size(); ++j) {
        const double sg = srule.nodes[j];
        const double rest = u - sg;
        if (!(sg > 0.0) || !(rest > 0.0)) continue;
        const double inner_scale = std::sqrt(2.0 * kern.model().M * rest);
        int pts = grid_points;
        while (pts < cap && !grid_resolves(xlo, xhi, pts, inner_scale)) pts *= 2;
        const GridFn inner =
            star_grid(kern, m - 1, rest, f, xlo, xhi, std::min(pts, cap), quad, cap);
        parallel_for(out.size(), [&](std::size_t i) {
            const Vec y = dom.from_frame(out.node(i));
            acc[i] += srule.weights[j] * apply_S_grid(kern, sg, inner, y, quad);
        });
    }
    for (std::size_t i = 0; i < out.size(); ++i) out.set(i, acc[i]);
    return out;
}

}  // namespace detail

/// Right side of the first-order identity at t = 0:
///     int_0^T E[ 1_{tau < s} S_{T-s} f(X_s) ] ds,
/// time nodes from the singular substitution, spatial values from a per-node
/// grid memo, standard error propagated from the per-path time-integrated
/// functional.
inline MCEstimate error_rhs_quadmc(const PathEnsemble& ens, const KernelEval& kern,
                                   const PayoffFunction& f, const QuadratureScheme& quad,
                                   int grid_points = 96) {
    const HalfSpaceDomain& dom = kern.domain();
    const double T = ens.horizon();
    Vec lo, hi;
    detail::path_box(ens, dom, lo, hi, 1e-6);

    std::vector<double> v(ens.n_paths(), 0.0);
    const Rule1d srule = quad.time_rule(0.0, T);
    for (std::size_t j = 0; j < srule.size(); ++j) {
        const double s = srule.nodes[j];
        const double rest = T - s;
        if (!(s > 0.0) || !(rest > 0.0)) continue;
        const double scale = std::sqrt(2.0 * kern.model().M * rest);
        if (!detail::grid_resolves(lo, hi, grid_points, scale)) {
            // near-maturity spike: evaluate per path instead of via the grid
            parallel_for(static_cast<std::size_t>(ens.n_paths()), [&](std::size_t p) {
                if (!(ens.tau(p) < s)) return;
                v[p] += srule.weights[j] *
                        apply_S(kern, rest, f, Vec(ens.state_at(p, s)), quad);
            });
            continue;
        }
        GridFn grid(lo, hi, std::vector<int>(ens.dim(), grid_points));
        grid.fill([&](const Vec& uf) {
            return apply_S(kern, rest, f, dom.from_frame(uf), quad);
        });
        for (long p = 0; p < ens.n_paths(); ++p) {
            if (!(ens.tau(p) < s)) continue;
            v[p] += srule.weights[j] * grid(dom.to_frame(ens.state_at(p, s)));
        }
    }
    return mc_from_samples(v);
}

struct LedgerParams {
    int u_nodes = 12;
    int s_nodes = 12;
    int grid_points = 64;
    int value_grid_points = 96;
    int grid_cap = 0;  // 0: dimension default

    static LedgerParams for_dim(int d) {
        LedgerParams lp;
        if (d >= 2) {
            lp.u_nodes = 10;
            lp.s_nodes = 10;
            lp.grid_points = 24;
            lp.value_grid_points = 32;
        }
        return lp;
    }
};

struct HedgeReport {
    MCEstimate knock_out;
    MCEstimate plain_pi;                 // order-0 value E[pi(f)(X_T)]
    MCEstimate order1;                   // int E[pi_perp S_{T-s} f(X_s)] ds
    std::vector<MCEstimate> higher;      // orders 2..n_max
    std::vector<MCEstimate> residuals;   // residual(n), n = 1..n_max
    MCEstimate defect;                   // identity defect, should be 0 in MC error
    double discount = 1.0;               // e^{-rT} applied to reported values
    int n_max = 1;
};

/// Assembles the iterated-hedge ledger at t = 0 on one path ensemble:
/// knock-out price, the order-0..n_max hedge values, the order-n residual
/// estimates, and the identity defect
///     (plain - sum of corrections) - knock_out - residual(n_max),
/// whose expectation vanishes when the decomposition holds.
inline HedgeReport hedge_ledger(const PathEnsemble& ens, const KernelEval& kern,
                                const PayoffFunction& f, double r,
                                const QuadratureScheme& quad, const LedgerParams& params,
                                int n_max) {
    if (n_max < 1) throw contract_error("hedge_ledger: n_max >= 1");
    if (n_max > quad.max_star_order)
        throw config_error("hedge_ledger: n_max exceeds configured cap");
    const HalfSpaceDomain& dom = kern.domain();
    const double T = ens.horizon();
    const long N = ens.n_paths();
    const int d = ens.dim();

    HedgeReport rep;
    rep.n_max = n_max;
    rep.discount = std::exp(-r * T);

    std::vector<double> ko(N), p0(N), v1(N, 0.0);
    std::vector<std::vector<double>> vh(n_max + 1, std::vector<double>(N, 0.0));
    std::vector<std::vector<double>> res(n_max + 1, std::vector<double>(N, 0.0));

    for (long p = 0; p < N; ++p) {
        const Vec xT = ens.state(p, ens.n_steps());
        ko[p] = ens.exited(p) ? 0.0 : f(xT);
        p0[p] = project_pi(f, dom, xT);
    }

    Vec lo, hi;
    detail::path_box(ens, dom, lo, hi, 1e-6);
    const std::vector<int> vshape(d, params.value_grid_points);

    // order-1 value
    {
        QuadratureScheme tq = quad;
        tq.time_order = params.s_nodes;
        const Rule1d srule = tq.time_rule(0.0, T);
        for (std::size_t j = 0; j < srule.size(); ++j) {
            const double s = srule.nodes[j];
            const double rest = T - s;
            if (!(s > 0.0) || !(rest > 0.0)) continue;
            const double scale = std::sqrt(2.0 * kern.model().M * rest);
            if (!detail::grid_resolves(lo, hi, params.value_grid_points, scale)) {
                parallel_for(static_cast<std::size_t>(N), [&](std::size_t p) {
                    const Vec xs = ens.state_at(p, s);
                    if (dom.contains(xs)) return;
                    v1[p] += srule.weights[j] *
                             (apply_S(kern, rest, f, xs, quad) +
                              apply_S(kern, rest, f, dom.reflect(xs), quad));
                });
                continue;
            }
            GridFn grid(lo, hi, vshape);
            grid.fill([&](const Vec& uf) {
                return apply_S(kern, rest, f, dom.from_frame(uf), quad);
            });
            for (long p = 0; p < N; ++p) {
                const Vec xs = ens.state_at(p, s);
                if (dom.contains(xs)) continue;
                const Vec uf = dom.to_frame(xs);
                Vec ur = uf;
                ur[0] = 2.0 * dom.k() - uf[0];
                v1[p] += srule.weights[j] * (grid(uf) + grid(ur));
            }
        }
    }

    // orders >= 2 and residual estimates share the (u, s) simplex nodes.
    // The inner iterate S*^m_{T-s} f is memoized on an adaptively refined
    // grid over the reach of S_{s-u}; the outer convolution is evaluated
    // directly at each path point, so no second interpolation level exists.
    {
        QuadratureScheme uq = quad;
        uq.time_order = params.u_nodes;
        QuadratureScheme sq = quad;
        sq.time_order = params.s_nodes;
        const int cap =
            params.grid_cap > 0 ? params.grid_cap : detail::grid_cap_for_dim(d);
        const Rule1d urule = uq.time_rule(0.0, T);
        for (std::size_t ju = 0; ju < urule.size(); ++ju) {
            const double u = urule.nodes[ju];
            if (!(u > 0.0) || !(u < T)) continue;
            const Rule1d srule = sq.time_rule(u, T);
            for (std::size_t js = 0; js < srule.size(); ++js) {
                const double s = srule.nodes[js];
                if (!(s > u) || !(s < T)) continue;
                const double wus = urule.weights[ju] * srule.weights[js];

                // inner grids S*^m_{T-s} f over the reach of S_{s-u}
                const double w =
                    quad.truncation_sigmas * std::sqrt(2.0 * kern.model().M * (s - u));
                Vec ylo = lo, yhi = hi;
                yhi[0] = std::max(hi[0], 2.0 * dom.k() - lo[0]) + w;
                ylo[0] = std::max(dom.k(), std::min(lo[0], 2.0 * dom.k() - hi[0]) - w);
                for (int i = 1; i < d; ++i) {
                    ylo[i] -= w;
                    yhi[i] += w;
                }
                const double scale_inner = std::sqrt(2.0 * kern.model().M * (T - s));
                int inner_pts = params.grid_points;
                while (inner_pts < cap && !detail::grid_resolves(ylo, yhi, inner_pts, scale_inner))
                    inner_pts *= 2;
                inner_pts = std::min(inner_pts, cap);

                for (int m = 1; m <= n_max; ++m) {
                    const GridFn inner = detail::star_grid(kern, m, T - s, f, ylo, yhi,
                                                           inner_pts, quad, cap);
                    parallel_for(static_cast<std::size_t>(N), [&](std::size_t p) {
                        const Vec xu = ens.state_at(p, u);
                        const bool want_vh = (m + 1 <= n_max) && !dom.contains(xu);
                        const bool want_res = ens.tau(p) <= u;
                        if (!want_vh && !want_res) return;
                        const double phi = apply_S_grid(kern, s - u, inner, xu, quad);
                        if (want_vh) {
                            const double phir =
                                apply_S_grid(kern, s - u, inner, dom.reflect(xu), quad);
                            vh[m + 1][p] += wus * (phi + phir);
                        }
                        if (want_res) res[m][p] += wus * phi;
                    });
                }
            }
        }
    }

    rep.knock_out = mc_from_samples(ko);
    rep.plain_pi = mc_from_samples(p0);
    rep.order1 = mc_from_samples(v1);
    for (int h = 2; h <= n_max; ++h) rep.higher.push_back(mc_from_samples(vh[h]));
    for (int n = 1; n <= n_max; ++n) rep.residuals.push_back(mc_from_samples(res[n]));

    std::vector<double> defect(N);
    for (long p = 0; p < N; ++p) {
        double corrections = v1[p];
        for (int h = 2; h <= n_max; ++h) corrections += vh[h][p];
        defect[p] = (p0[p] - corrections) - ko[p] - res[n_max][p];
    }
    rep.defect = mc_from_samples(defect);
    return rep;
}

}  // namespace parahedge

#endif
