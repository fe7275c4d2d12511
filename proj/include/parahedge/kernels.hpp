#ifndef PARAHEDGE_KERNELS_HPP
#define PARAHEDGE_KERNELS_HPP

#include "parahedge/models.hpp"
#include "parahedge/quadrature.hpp"

#include <cstring>
#include <memory>
#include <mutex>
#include <unordered_map>

namespace parahedge {

/// Closed-form evaluation of the symmetrized kernel
///     p_t(x,y) = (2 pi)^{-d/2} { det Atilde(y) t }^{-1/2}
///                exp( -<Atilde(y)^{-1}(x-y), x-y> / 2t ),
/// of the reference transition density q for constant coefficients, and of
/// the defect integrand
///     h0(t,z,y) = (1/2t^2) <{A(z)-At(y)} At(y)^{-1}(z-y), At(y)^{-1}(z-y)> p
///               - (1/2t) At(y)^{-1} . ( {A(z)-At(y)} + 2 b(z) (x) (z-y) ) p,
/// together with h(t,x,y) = h0(t,x,y) - h0(t,x,theta(y)).
///
/// Atilde factorizations (inverse, determinant) are computed once per
/// evaluation point and memoized; the memo behaves as a thread-safe table
/// with last-write-wins on identical values.
class KernelEval {
public:
    struct Factor {
        Mat inv;
        double det = 0.0;
        Mat matrix;
    };

    KernelEval(DiffusionModel model, HalfSpaceDomain dom)
        : model_(std::move(model)), dom_(std::move(dom)) {
        model_.validate_declared();
        if (model_.d != dom_.dim()) throw contract_error("kernels: model/domain dimension mismatch");
        if (model_.constant_coefficients) {
            inside_ = make_factor(model_.A0);
            const Mat Psi = dom_.psi_matrix();
            outside_ = make_factor(Psi * model_.A0 * Psi);
        }
    }

    const DiffusionModel& model() const { return model_; }
    const HalfSpaceDomain& domain() const { return dom_; }
    int dim() const { return model_.d; }

    /// Factorization of Atilde(y).
    const Factor& factor(const Vec& y) const {
        if (model_.constant_coefficients) return dom_.contains(y) ? inside_ : outside_;
        return cached_factor(y);
    }

    double p_kernel(double t, const Vec& x, const Vec& y) const {
        require_time(t);
        const Factor& F = factor(y);
        const double q = quad_form(F.inv, x, y);
        const int d = dim();
        return std::pow(2.0 * pi * t, -0.5 * d) / std::sqrt(F.det) * std::exp(-0.5 * q / t);
    }

    /// Transition density of X for constant coefficients: Gaussian with mean
    /// x + t b and covariance t A.
    double q_reference(double t, const Vec& x, const Vec& y) const {
        require_time(t);
        require_constant("q_reference");
        const double q = quad_form(inside_.inv, y, x + t * model_.b0);
        const int d = dim();
        return std::pow(2.0 * pi * t, -0.5 * d) / std::sqrt(inside_.det) * std::exp(-0.5 * q / t);
    }

    double h0(double t, const Vec& z, const Vec& y) const {
        require_time(t);
        const Factor& F = factor(y);
        const int d = dim();

        double w[max_dim], diff[max_dim];
        fill_diff(z, y, diff);
        mat_vec(F.inv, diff, w, d);

        const Vec bz = model_.b(z);
        double b_dot_w = 0.0;
        for (int i = 0; i < d; ++i) b_dot_w += bz[i] * w[i];

        double quad = 0.0, trace = 0.0;
        const bool g_zero = model_.constant_coefficients && dom_.contains(y);
        if (!g_zero) {
            const Mat G = model_.A(z) - F.matrix;
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) {
                    quad += G(i, j) * w[i] * w[j];
                    trace += F.inv(i, j) * G(i, j);
                }
        }

        double q = 0.0;
        for (int i = 0; i < d; ++i) q += diff[i] * w[i];
        const double p = std::pow(2.0 * pi * t, -0.5 * d) / std::sqrt(F.det) * std::exp(-0.5 * q / t);

        return (0.5 * quad / (t * t) - (0.5 * trace + b_dot_w) / t) * p;
    }

    /// h(t,x,y) = h0(t,x,y) - h0(t,x,theta(y)); anti-symmetric in y <-> theta(y).
    double h_sym(double t, const Vec& x, const Vec& y) const {
        return h0(t, x, y) - h0(t, x, dom_.reflect(y));
    }

    /// Isotropic dominating Gaussian (4 pi M t)^{-d/2} exp(-|x-y|^2 / 4Mt).
    double p2M_bound(double t, const Vec& x, const Vec& y) const {
        require_time(t);
        const double r2 = (x - y).squaredNorm();
        return std::pow(4.0 * pi * model_.M * t, -0.5 * dim()) *
               std::exp(-r2 / (4.0 * model_.M * t));
    }

    /// Defect of the parametrix relation
    ///     q_t(x,y) - p_t(x,y) = int_0^t ds int q_s(x,z) h0(t-s,z,y) dz,
    /// with the double integral evaluated on the singular-time substitution
    /// and per-node truncated tensor grids. Near zero when the quadrature
    /// resolves both Gaussian factors.
    double parametrix_residual(double t, const Vec& x, const Vec& y,
                               const QuadratureScheme& quad) const {
        require_time(t);
        require_constant("parametrix_residual");
        const int d = dim();
        const Vec xf = dom_.to_frame(x);
        const Vec yf = dom_.to_frame(y);
        const Vec bf = dom_.to_frame(model_.b0);

        const Rule1d srule = quad.time_rule(0.0, t);
        double integral = 0.0;
        for (std::size_t j = 0; j < srule.size(); ++j) {
            const double s = srule.nodes[j];
            const double u = t - s;
            if (s <= 0.0 || u <= 0.0) continue;
            const double rq = quad.truncation_sigmas * std::sqrt(2.0 * model_.M0 * s);
            const double rp = quad.truncation_sigmas * std::sqrt(2.0 * model_.M * u);

            Vec lo(d), hi(d);
            bool empty = false;
            for (int i = 0; i < d; ++i) {
                const double cq = xf[i] + s * bf[i];
                lo[i] = std::max(cq - rq, yf[i] - rp);
                hi[i] = std::min(cq + rq, yf[i] + rp);
                if (!(lo[i] < hi[i])) empty = true;
            }
            if (empty) continue;

            double inner = 0.0;
            box_rule(lo, hi, quad.space_order).for_each([&](const Vec& uf, double w) {
                const Vec z = dom_.from_frame(uf);
                inner += w * q_reference(s, x, z) * h0(u, z, y);
            });
            integral += srule.weights[j] * inner;
        }
        return q_reference(t, x, y) - p_kernel(t, x, y) - integral;
    }

    static constexpr int max_dim = 16;

private:
    void require_time(double t) const {
        if (!(t > 0.0)) throw std::domain_error("kernels: time must be positive");
    }
    void require_constant(const char* op) const {
        if (!model_.constant_coefficients)
            throw unsupported_model(std::string(op) + ": needs constant coefficients");
    }

    static Factor make_factor(const Mat& A) {
        Factor F;
        F.matrix = A;
        Eigen::SelfAdjointEigenSolver<Mat> es(A);
        if (es.eigenvalues().minCoeff() <= 0.0)
            throw contract_error("kernels: Atilde not positive definite");
        F.inv = es.eigenvectors() *
                es.eigenvalues().cwiseInverse().asDiagonal() *
                es.eigenvectors().transpose();
        F.det = es.eigenvalues().prod();
        return F;
    }

    const Factor& cached_factor(const Vec& y) const {
        const std::string key(reinterpret_cast<const char*>(y.data()),
                              sizeof(double) * y.size());
        {
            std::lock_guard<std::mutex> lock(cache_mutex_);
            auto it = cache_.find(key);
            if (it != cache_.end()) return *it->second;
        }
        auto fresh = std::make_unique<Factor>(make_factor(symmetrize_A(model_, dom_, y)));
        std::lock_guard<std::mutex> lock(cache_mutex_);
        auto [it, inserted] = cache_.try_emplace(key, nullptr);
        if (inserted) it->second = std::move(fresh);  // ties keep the first identical value
        return *it->second;
    }

    void fill_diff(const Vec& a, const Vec& b, double* out) const {
        const int d = dim();
        if (d > max_dim) throw contract_error("kernels: dimension too large");
        for (int i = 0; i < d; ++i) out[i] = a[i] - b[i];
    }

    static void mat_vec(const Mat& A, const double* v, double* out, int d) {
        for (int i = 0; i < d; ++i) {
            double s = 0.0;
            for (int j = 0; j < d; ++j) s += A(i, j) * v[j];
            out[i] = s;
        }
    }

    double quad_form(const Mat& inv, const Vec& a, const Vec& b) const {
        double diff[max_dim];
        fill_diff(a, b, diff);
        const int d = dim();
        double q = 0.0;
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) q += inv(i, j) * diff[i] * diff[j];
        return q;
    }

    DiffusionModel model_;
    HalfSpaceDomain dom_;
    Factor inside_, outside_;

    mutable std::mutex cache_mutex_;
    mutable std::unordered_map<std::string, std::unique_ptr<Factor>> cache_;
};

}  // namespace parahedge

#endif
