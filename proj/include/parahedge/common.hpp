#ifndef PARAHEDGE_COMMON_HPP
#define PARAHEDGE_COMMON_HPP

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace parahedge {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

constexpr double pi = std::numbers::pi;

/// Contract violation on caller input (dimension mismatch, bad precondition).
struct contract_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Operation asked of a model family that does not support it
/// (e.g. a closed-form transition density for non-constant coefficients).
struct unsupported_model : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Configuration problem (unknown family name, out-of-range order, ...).
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline double sqr(double x) { return x * x; }

/// ln Gamma based Beta function, positive arguments.
inline double beta_fn(double a, double b) {
    return std::exp(std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
}

/// sup_{x>=0} x^beta e^{-x} = (beta/e)^beta, with the beta=0 limit equal to 1.
inline double k_beta(double beta) {
    if (beta <= 0.0) return 1.0;
    return std::pow(beta / std::numbers::e, beta);
}

inline double std_normal_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * pi);
}

inline double std_normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

/// Fixed-order pairwise summation. Used for every statistic that must be
/// bitwise independent of the execution schedule.
inline double pairwise_sum(std::span<const double> v) {
    const std::size_t n = v.size();
    if (n == 0) return 0.0;
    if (n <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

inline int thread_count() {
    if (const char* env = std::getenv("PARAHEDGE_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

/// Parallel loop over [0, n). Work items write to disjoint slots only, so the
/// result is independent of how indices are distributed over threads.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
    const int nt = thread_count();
    if (nt <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    pool.reserve(static_cast<std::size_t>(nt));
    for (int t = 0; t < nt; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= n) break;
                body(i);
            }
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace parahedge

#endif
