#ifndef PARAHEDGE_QUADRATURE_HPP
#define PARAHEDGE_QUADRATURE_HPP

#include "parahedge/common.hpp"

#include <map>
#include <mutex>
#include <string>
#include <type_traits>

namespace parahedge {

struct Rule1d {
    std::vector<double> nodes;
    std::vector<double> weights;
    std::size_t size() const { return nodes.size(); }
};

/// Gauss-Legendre rule on [-1, 1], nodes by Newton iteration on P_n.
/// Cached per order behind a lock; the tables are immutable once built.
inline const Rule1d& gauss_legendre(int n) {
    static std::mutex mtx;
    static std::map<int, Rule1d> cache;
    std::lock_guard<std::mutex> lock(mtx);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;

    Rule1d rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    const int m = (n + 1) / 2;
    for (int i = 0; i < m; ++i) {
        double x = std::cos(pi * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
            }
            pp = n * (x * p0 - p1) / (x * x - 1.0);
            const double dx = p0 / pp;
            x -= dx;
            if (std::fabs(dx) < 1e-15) break;
        }
        rule.nodes[i] = -x;
        rule.nodes[n - 1 - i] = x;
        rule.weights[i] = 2.0 / ((1.0 - x * x) * pp * pp);
        rule.weights[n - 1 - i] = rule.weights[i];
    }
    auto [pos, _] = cache.emplace(n, std::move(rule));
    return pos->second;
}

/// Gauss-Legendre rule mapped to [a, b].
inline Rule1d gauss_legendre_on(double a, double b, int n) {
    const Rule1d& base = gauss_legendre(n);
    Rule1d rule;
    rule.nodes.resize(base.size());
    rule.weights.resize(base.size());
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    for (std::size_t i = 0; i < base.size(); ++i) {
        rule.nodes[i] = mid + half * base.nodes[i];
        rule.weights[i] = half * base.weights[i];
    }
    return rule;
}

/// Rule for int_a^b g(s) ds where g may carry inverse-square-root
/// singularities at both endpoints. The substitution
///     s = a + (b-a) sin^2(pi theta / 2)
/// has ds = (b-a) (pi/2) sin(pi theta) dtheta, whose endpoint zeros cancel
/// (s-a)^{-1/2} and (b-s)^{-1/2} exactly.
inline Rule1d sin2_rule(double a, double b, int n) {
    const Rule1d theta = gauss_legendre_on(0.0, 1.0, n);
    Rule1d rule;
    rule.nodes.resize(theta.size());
    rule.weights.resize(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double th = theta.nodes[i];
        const double si = std::sin(0.5 * pi * th);
        rule.nodes[i] = a + (b - a) * si * si;
        rule.weights[i] = theta.weights[i] * (b - a) * 0.5 * pi * std::sin(pi * th);
    }
    return rule;
}

/// Truncated tensor-product grids plus the singular time substitution that
/// realize the operator integrals.
struct QuadratureScheme {
    int space_order = 48;          // Gauss-Legendre points per axis
    int time_order = 32;           // points for time integrals
    double truncation_sigmas = 8.6;  // Gaussian half-width multiplier
    std::string singularity_substitution = "sin2";
    int max_star_order = 4;

    Rule1d time_rule(double a, double b) const {
        if (singularity_substitution == "none")
            return gauss_legendre_on(a, b, time_order);
        return sin2_rule(a, b, time_order);
    }
};

/// Axis-aligned box in frame coordinates with a tensor Gauss-Legendre rule.
struct BoxRule {
    std::vector<Rule1d> axes;

    bool empty() const {
        for (const auto& ax : axes)
            if (ax.size() == 0) return true;
        return axes.empty();
    }

    /// Visit every tensor node. `body(u, w)` gets the frame-coordinate point
    /// and the product weight; iteration order is fixed (row-major).
    template <class Body>
    void for_each(Body&& body) const {
        const int d = static_cast<int>(axes.size());
        std::vector<std::size_t> idx(d, 0);
        Vec u(d);
        for (;;) {
            double w = 1.0;
            for (int i = 0; i < d; ++i) {
                u[i] = axes[i].nodes[idx[i]];
                w *= axes[i].weights[idx[i]];
            }
            body(u, w);
            int i = d - 1;
            while (i >= 0 && ++idx[i] == axes[i].size()) {
                idx[i] = 0;
                --i;
            }
            if (i < 0) break;
        }
    }

    std::size_t size() const {
        std::size_t n = 1;
        for (const auto& ax : axes) n *= ax.size();
        return n;
    }
};

inline BoxRule box_rule(const Vec& lo, const Vec& hi, int order) {
    BoxRule box;
    box.axes.reserve(lo.size());
    for (int i = 0; i < lo.size(); ++i)
        box.axes.push_back(gauss_legendre_on(lo[i], hi[i], order));
    return box;
}

/// Double-exponential (tanh-sinh) quadrature on (a, b). Handles integrable
/// endpoint singularities; levels are doubled until the estimate settles.
/// Endpoint distances are tracked directly so x^{-3/4}-type mass hiding
/// below 1 ulp of the endpoints is not lost to cancellation.
template <class F>
double tanh_sinh(F&& f, double a, double b, double rel_tol = 1e-12, int max_level = 12) {
    const double half = 0.5 * (b - a);
    const double tmax = 6.1;  // endpoint distance underflows past this

    // Integrands may take (x) or (x, dist_left, dist_right); the distance
    // form keeps endpoint power singularities exact where x rounds onto the
    // endpoint itself.
    auto eval = [&](double x, double dl, double dr) -> double {
        if constexpr (std::is_invocable_v<F, double, double, double>) {
            return f(x, dl, dr);
        } else {
            return f(x);
        }
    };

    const double length = b - a;
    auto contrib = [&](double t) -> double {
        const double u = 0.5 * pi * std::sinh(t);
        const double w = 0.5 * pi * std::cosh(t) / sqr(std::cosh(u));
        const double dist = half * 2.0 / (1.0 + std::exp(2.0 * u));  // half*(1 - tanh u)
        if (dist <= 0.0) return 0.0;
        const double vl = eval(a + dist, dist, length - dist);
        const double vr = eval(b - dist, length - dist, dist);
        double v = 0.0;
        if (std::isfinite(vl)) v += vl;
        if (std::isfinite(vr)) v += vr;
        return v * w * half;
    };

    double h = 1.0;
    double sum = 0.5 * pi * eval(a + half, half, half) * half;  // t = 0 node
    for (int k = 1; k * h <= tmax; ++k) sum += contrib(k * h);
    double value = h * sum;

    for (int level = 1; level <= max_level; ++level) {
        h *= 0.5;
        double add = 0.0;
        for (int k = 1; k * h <= tmax; k += 2) add += contrib(k * h);
        sum += add;
        const double next = h * sum;
        if (level >= 3 && std::fabs(next - value) <= rel_tol * std::max(1e-300, std::fabs(next))) {
            return next;
        }
        value = next;
    }
    return value;
}

}  // namespace parahedge

#endif
