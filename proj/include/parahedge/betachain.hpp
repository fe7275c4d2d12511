#ifndef PARAHEDGE_BETACHAIN_HPP
#define PARAHEDGE_BETACHAIN_HPP

#include "parahedge/quadrature.hpp"

namespace parahedge {

/// The two simplex operators behind the time-variable estimates, acting on
/// f(u, s) = (s-u)^{-eps} u^{-1+beta}:
///     T0(f)(s,t) = int_0^s (s-u)^{-1/2} f(u,s) du
///     T1(f)(s,t) = int_0^s (t-u)^{-1/2} (s-u)^{-1/2} f(u,s) du
/// Iterating T0 stays inside the same power family:
///     T0^m(f)(s,.) = s^{-1+m/2-eps+beta} B(1/2-eps, beta)
///                      prod_{k=2}^m B(1/2, (k-1)/2 - eps + beta),
/// while T1 picks up a (t-s)^{-1/4} factor with a uniform constant C8.
namespace betachain {

struct Params {
    double eps = 0.0;   // in [0, 1/4]
    double beta = 0.5;  // > 0
    void validate() const {
        if (!(eps >= 0.0) || !(eps <= 0.25)) throw contract_error("betachain: eps in [0, 1/4]");
        if (!(beta > 0.0)) throw contract_error("betachain: beta > 0");
    }
};

inline double seed_f(const Params& p, double u, double s) {
    return std::pow(s - u, -p.eps) * std::pow(u, -1.0 + p.beta);
}

/// m-fold T0 iterate by nested singular quadrature; no closed forms used.
/// Endpoint distances feed the power factors directly so the u -> 0 and
/// u -> s singularities stay exact. Each level below the outermost is
/// memoized on a log-spaced grid with log-log cubic interpolation (the
/// iterates are smooth positive functions with power-law behavior, which
/// that representation captures to near machine precision), keeping the
/// nesting cost linear in the depth.
class T0Iterates {
public:
    T0Iterates(const Params& p, double s_max, double rel_tol = 1e-10, int grid = 120)
        : p_(p), rel_tol_(rel_tol) {
        p.validate();
        log_lo_ = std::log(s_max) - 26.0;  // covers u down to ~ 5e-12 s_max
        log_step_ = 26.0 / (grid - 1);
        levels_.push_back({});  // level 0 unused
        std::vector<double> base(grid);
        for (int i = 0; i < grid; ++i) base[i] = 0.0;
        (void)base;
        grid_ = grid;
    }

    /// Value of T0^m(f)(s, .), building memo levels on demand.
    double value(int m, double s) {
        if (m < 1) throw contract_error("betachain: m >= 1");
        ensure_levels(m - 1);
        return integrate_level(m, s);
    }

private:
    double seed(double dl, double dr) const {
        return std::pow(dr, -p_.eps) * std::pow(dl, -1.0 + p_.beta);
    }

    /// One application of T0 with the inner values taken from level lvl-1.
    double integrate_level(int lvl, double ss) {
        auto g = [&](double u, double dl, double dr) {
            const double inner = (lvl == 1) ? seed(dl, dr) : eval_level(lvl - 1, dl);
            return std::pow(dr, -0.5) * inner;
        };
        return tanh_sinh(g, 0.0, ss, rel_tol_);
    }

    void ensure_levels(int up_to) {
        while (static_cast<int>(levels_.size()) - 1 < up_to) {
            const int lvl = static_cast<int>(levels_.size());
            std::vector<double> vals(grid_);
            for (int i = 0; i < grid_; ++i) {
                const double u = std::exp(log_lo_ + i * log_step_);
                vals[i] = std::log(integrate_level(lvl, u));
            }
            levels_.push_back(std::move(vals));
        }
    }

    /// Log-log Catmull-Rom read of a memoized level; linear continuation of
    /// the end slopes outside the covered range (pure power behavior there).
    double eval_level(int lvl, double u) const {
        const std::vector<double>& v = levels_[lvl];
        const double pos = (std::log(u) - log_lo_) / log_step_;
        const int n = grid_;
        if (pos <= 0.0) return std::exp(v[0] + (v[1] - v[0]) * pos);
        if (pos >= n - 1)
            return std::exp(v[n - 1] + (v[n - 1] - v[n - 2]) * (pos - (n - 1)));
        int j = std::min(static_cast<int>(pos), n - 2);
        const double t = pos - j;
        const double t2 = t * t, t3 = t2 * t;
        double c0 = -0.5 * t + t2 - 0.5 * t3;
        double c1 = 1.0 - 2.5 * t2 + 1.5 * t3;
        double c2 = 0.5 * t + 2.0 * t2 - 1.5 * t3;
        double c3 = -0.5 * t2 + 0.5 * t3;
        // edge cells: substitute linearly extended virtual neighbors so the
        // stencil still reproduces linear data exactly
        int j0 = j - 1, j3 = j + 2;
        if (j == 0) {
            j0 = 0;
            c1 += 2.0 * c0;
            c2 -= c0;
            c0 = 0.0;
        }
        if (j == n - 2) {
            j3 = n - 1;
            c2 += 2.0 * c3;
            c1 -= c3;
            c3 = 0.0;
        }
        return std::exp(c0 * v[j0] + c1 * v[j] + c2 * v[j + 1] + c3 * v[j3]);
    }

    Params p_;
    double rel_tol_;
    double log_lo_ = 0.0, log_step_ = 1.0;
    int grid_ = 120;
    std::vector<std::vector<double>> levels_;
};

inline double t0_iterate_quad(const Params& p, int m, double s, double rel_tol = 1e-9) {
    T0Iterates it(p, s, rel_tol * 0.1);
    return it.value(m, s);
}

/// Closed form of the same iterate.
inline double t0_iterate_closed(const Params& p, int m, double s) {
    double val = beta_fn(0.5 - p.eps, p.beta);
    for (int k = 2; k <= m; ++k) val *= beta_fn(0.5, 0.5 * (k - 1) - p.eps + p.beta);
    return std::pow(s, -1.0 + 0.5 * m - p.eps + p.beta) * val;
}

inline double t1_quad(const Params& p, double s, double t, double rel_tol = 1e-9) {
    if (!(s > 0.0) || !(t > s)) throw contract_error("betachain: need 0 < s < t");
    const double gap = t - s;
    auto g = [&](double, double dl, double dr) {
        return std::pow(gap + dr, -0.5) * std::pow(dr, -0.5 - p.eps) *
               std::pow(dl, -1.0 + p.beta);
    };
    return tanh_sinh(g, 0.0, s, rel_tol);
}

/// Envelope the T1 estimate must satisfy: C8 (t-s)^{-1/4} s^{-3/4+beta-eps}.
inline double t1_envelope(const Params& p, double C8, double s, double t) {
    return C8 * std::pow(t - s, -0.25) * std::pow(s, -0.75 + p.beta - p.eps);
}

/// Binomial-times-Beta ratio whose supremum defines C8:
///     r(k) = [ C(-1/2, k) / C(-1/4, k) ] B(1/2-eps, beta+k)
///          = [ G(1/2+k) G(1/4) / (G(1/4+k) G(1/2)) ] B(1/2-eps, beta+k).
inline double binom_beta_ratio(int k, double eps, double beta) {
    const double lg = std::lgamma(0.5 + k) + std::lgamma(0.25) - std::lgamma(0.25 + k) -
                      std::lgamma(0.5);
    const double lb = std::lgamma(0.5 - eps) + std::lgamma(beta + k) -
                      std::lgamma(0.5 - eps + beta + k);
    return std::exp(lg + lb);
}

/// Stirling-form envelope g(k) of the ratio at the extreme (eps, beta).
inline double stirling_envelope(int k) {
    if (k == 0) return beta_fn(0.25, 0.25);
    const double lg = 2.0 * std::lgamma(0.25) - std::lgamma(0.5) +
                      k * std::log(0.5 + k) + 2.0 * (0.25 - k) * std::log(0.25 + k) +
                      (k - 0.5) * std::log(static_cast<double>(k));
    return std::exp(lg);
}

/// Certified C8 over the declared range eps in [0,1/4], beta >= 1/4:
/// maximum of the Stirling envelope over k, floored by B(1/4, 1/4).
struct C8Estimate {
    double value = 0.0;
    double beta_floor = 0.25;
    int k_max_scanned = 0;
    double exact_ratio_sup = 0.0;  // max of r(k) at the extreme corner
};

inline C8Estimate estimate_C8(int k_scan = 4096) {
    C8Estimate est;
    est.k_max_scanned = k_scan;
    const double floor_val = beta_fn(0.25, 0.25);
    double g_max = floor_val, r_max = 0.0;
    for (int k = 0; k <= k_scan; ++k) {
        g_max = std::max(g_max, stirling_envelope(k));
        r_max = std::max(r_max, binom_beta_ratio(k, 0.25, est.beta_floor));
    }
    est.exact_ratio_sup = r_max;
    est.value = std::max(g_max, floor_val);
    return est;
}

/// sup over x in [x_lo, x_hi] of 1 / (Gamma(x) xi^x); finite for xi in (0,1).
struct C10Estimate {
    double value = 0.0;
    double xi = 0.5;
    double x_lo = 1e-3, x_hi = 50.0;
};

inline C10Estimate estimate_C10(double xi, double x_lo = 1e-3, double x_hi = 50.0,
                                int scan = 200000) {
    if (!(xi > 0.0) || !(xi < 1.0)) throw contract_error("C10: xi must lie in (0,1)");
    C10Estimate est;
    est.xi = xi;
    est.x_lo = x_lo;
    est.x_hi = x_hi;
    double best = 0.0;
    for (int i = 0; i <= scan; ++i) {
        const double x = x_lo * std::pow(x_hi / x_lo, static_cast<double>(i) / scan);
        best = std::max(best, std::exp(-std::lgamma(x) - x * std::log(xi)));
    }
    est.value = best;
    return est;
}

}  // namespace betachain

}  // namespace parahedge

#endif
