#ifndef PARAHEDGE_GEOMETRY_HPP
#define PARAHEDGE_GEOMETRY_HPP

#include "parahedge/common.hpp"

#include <optional>

namespace parahedge {

/// Knock-out region D = { x : <x, gamma> > k } with |gamma| = 1, together
/// with the mirror map across its boundary hyperplane,
///     theta(x) = (I - 2 gamma (x) gamma) x + 2 k gamma,
/// and the reflector Psi = I - 2 gamma (x) gamma (symmetric orthogonal).
class HalfSpaceDomain {
public:
    /// Classification tolerance at the boundary: points with
    /// |<x,gamma> - k| <= 1e-12 count as boundary and are NOT in D,
    /// matching the strict inequality in D's definition.
    static constexpr double boundary_tol = 1e-12;

    HalfSpaceDomain(Vec gamma, double k) : gamma_(std::move(gamma)), k_(k) {
        if (gamma_.size() < 1) throw contract_error("domain: dimension must be >= 1");
        const double nrm = gamma_.norm();
        if (std::fabs(nrm - 1.0) > 1e-14)
            throw contract_error("domain: gamma must be a unit vector");
        build_frame();
    }

    /// Construct from a raw direction: normalizes, and reports (via the
    /// optional warning) if the input deviated from unit length by > 1e-6.
    static HalfSpaceDomain normalized(const Vec& gamma_raw, double k,
                                      std::optional<std::string>* warning = nullptr) {
        const double nrm = gamma_raw.norm();
        if (!(nrm > 0.0)) throw contract_error("domain: gamma must be nonzero");
        if (warning && std::fabs(nrm - 1.0) > 1e-6)
            *warning = "gamma renormalized; input norm deviated from 1 by " +
                       std::to_string(std::fabs(nrm - 1.0));
        return HalfSpaceDomain(gamma_raw / nrm, k);
    }

    int dim() const { return static_cast<int>(gamma_.size()); }
    const Vec& gamma() const { return gamma_; }
    double k() const { return k_; }

    /// Signed distance along gamma: positive strictly inside D.
    double signed_coord(const Vec& x) const {
        check_dim(x);
        return gamma_.dot(x) - k_;
    }

    bool contains(const Vec& x) const { return signed_coord(x) > boundary_tol; }
    bool on_boundary(const Vec& x) const { return std::fabs(signed_coord(x)) <= boundary_tol; }

    /// theta(x) = x - 2(<x,gamma> - k) gamma.
    Vec reflect(const Vec& x) const {
        check_dim(x);
        return x - (2.0 * (gamma_.dot(x) - k_)) * gamma_;
    }

    /// Psi = I - 2 gamma (x) gamma.
    Mat psi_matrix() const {
        return Mat::Identity(dim(), dim()) - 2.0 * gamma_ * gamma_.transpose();
    }

    /// Orthonormal frame with first column gamma. Frame coordinates
    /// u = Q^T x put the boundary at u_1 = k, so tensor grids cut D exactly.
    const Mat& frame() const { return frame_; }

    Vec to_frame(const Vec& x) const { return frame_.transpose() * x; }
    Vec from_frame(const Vec& u) const { return frame_ * u; }

    /// Nearest boundary point plus tangential offsets, in world coordinates.
    Vec boundary_point(const Vec& tangential) const {
        Vec u(dim());
        u[0] = k_;
        for (int i = 1; i < dim(); ++i) u[i] = tangential[i - 1];
        return from_frame(u);
    }

private:
    void check_dim(const Vec& x) const {
        if (x.size() != gamma_.size())
            throw contract_error("domain: dimension mismatch");
    }

    void build_frame() {
        const int d = dim();
        frame_.resize(d, d);
        frame_.col(0) = gamma_;
        // Gram-Schmidt over coordinate axes, skipping near-parallel ones.
        int col = 1;
        for (int axis = 0; axis < d && col < d; ++axis) {
            Vec v = Vec::Unit(d, axis);
            for (int j = 0; j < col; ++j) v -= frame_.col(j).dot(v) * frame_.col(j);
            const double nrm = v.norm();
            if (nrm > 1e-8) frame_.col(col++) = v / nrm;
        }
        if (col != d) throw contract_error("domain: failed to build frame");
    }

    Vec gamma_;
    double k_;
    Mat frame_;
};

/// Bounded measurable payoff with a declared sup bound. Unbounded payoffs
/// are rejected at construction; the bound is spot-checked by property tests.
class PayoffFunction {
public:
    PayoffFunction(std::function<double(const Vec&)> evaluator, double sup_bound,
                   std::string name = "payoff")
        : eval_(std::move(evaluator)), sup_bound_(sup_bound), name_(std::move(name)) {
        if (!eval_) throw contract_error("payoff: missing evaluator");
        if (!(sup_bound_ >= 0.0) || !std::isfinite(sup_bound_))
            throw contract_error("payoff '" + name_ + "': sup bound must be finite and >= 0");
    }

    double operator()(const Vec& x) const { return eval_(x); }
    double sup_bound() const { return sup_bound_; }
    const std::string& name() const { return name_; }

private:
    std::function<double(const Vec&)> eval_;
    double sup_bound_;
    std::string name_;
};

/// pi(f)(x) = f(x) 1_{x in D} - f(theta(x)) 1_{x not in D};
/// the plain-option payoff whose price replicates the knock-out.
inline double project_pi(const PayoffFunction& f, const HalfSpaceDomain& dom, const Vec& x) {
    if (dom.contains(x)) return f(x);
    return -f(dom.reflect(x));
}

/// pi_perp(f)(x) = (f(x) + f(theta(x))) 1_{x not in D};
/// the liquidation payoff. pi + pi_perp restores f away from the boundary.
inline double project_pi_perp(const PayoffFunction& f, const HalfSpaceDomain& dom, const Vec& x) {
    if (dom.contains(x)) return 0.0;
    return f(x) + f(dom.reflect(x));
}

// Payoff families usable from config. All are bounded by construction.

inline PayoffFunction make_constant_payoff(double amount) {
    return PayoffFunction([amount](const Vec&) { return amount; }, std::fabs(amount),
                          "constant");
}

/// amount * 1_{<x,gamma> >= strike}.
inline PayoffFunction make_digital_payoff(const HalfSpaceDomain& dom, double strike,
                                          double amount) {
    Vec gamma = dom.gamma();
    return PayoffFunction(
        [gamma, strike, amount](const Vec& x) {
            return gamma.dot(x) >= strike ? amount : 0.0;
        },
        std::fabs(amount), "digital");
}

/// min(max(<x,gamma> - strike, 0), cap): a call on the barrier coordinate,
/// capped so it stays bounded.
inline PayoffFunction make_capped_call_payoff(const HalfSpaceDomain& dom, double strike,
                                              double cap) {
    if (!(cap > 0.0) || !std::isfinite(cap))
        throw contract_error("capped_call: cap must be finite and positive");
    Vec gamma = dom.gamma();
    return PayoffFunction(
        [gamma, strike, cap](const Vec& x) {
            return std::min(std::max(gamma.dot(x) - strike, 0.0), cap);
        },
        cap, "capped_call");
}

}  // namespace parahedge

#endif
