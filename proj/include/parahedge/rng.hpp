#ifndef PARAHEDGE_RNG_HPP
#define PARAHEDGE_RNG_HPP

#include <cmath>
#include <cstdint>

namespace parahedge {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace detail

/// Inverse of the standard normal CDF (Wichura's PPND16), |error| < 1e-15
/// over the full open unit interval.
inline double inv_normal_cdf(double p) {
    const double q = p - 0.5;
    if (std::fabs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q *
               (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                     6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
                   1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
                 1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
               (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                     3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
                   5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
                 4.2313330701600911252e1) * r + 1.0);
    }
    double r = (q < 0.0) ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double x;
    if (r <= 5.0) {
        r -= 1.6;
        x = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                  2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
                3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
              4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                  1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
              2.05319162663775882187e0) * r + 1.0);
    } else {
        r -= 5.0;
        x = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
              5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                  1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
              5.99832206555887937690e-1) * r + 1.0);
    }
    return (q < 0.0) ? -x : x;
}

/// Counter-based random source keyed by (seed, path, step, axis). Every draw
/// is a pure function of its coordinates, so parallel path simulation is
/// reproducible regardless of scheduling, and any draw can be replayed.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t bits(std::uint64_t path, std::uint64_t step, std::uint64_t axis) const {
        std::uint64_t h = detail::splitmix64(seed_ ^ 0x5851f42d4c957f2dull);
        h = detail::splitmix64(h ^ (path * 0x9e3779b97f4a7c15ull + 0x01ull));
        h = detail::splitmix64(h ^ (step * 0xc2b2ae3d27d4eb4full + 0x02ull));
        h = detail::splitmix64(h ^ (axis * 0x165667b19e3779f9ull + 0x03ull));
        return h;
    }

    /// Uniform draw in the open interval (0, 1).
    double uniform(std::uint64_t path, std::uint64_t step, std::uint64_t axis) const {
        const std::uint64_t b = bits(path, step, axis);
        return (static_cast<double>(b >> 11) + 0.5) * 0x1.0p-53;
    }

    double normal(std::uint64_t path, std::uint64_t step, std::uint64_t axis) const {
        return inv_normal_cdf(uniform(path, step, axis));
    }

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
};

/// Sequential stream view over a CounterRng, for sampling loops where only a
/// deterministic per-(seed,index) sequence is needed.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream) : rng_(seed), stream_(stream) {}

    double uniform() { return rng_.uniform(stream_, n_++, 0); }
    double uniform(double a, double b) { return a + (b - a) * uniform(); }
    double normal() { return inv_normal_cdf(uniform()); }

private:
    CounterRng rng_;
    std::uint64_t stream_;
    std::uint64_t n_ = 0;
};

}  // namespace parahedge

#endif
