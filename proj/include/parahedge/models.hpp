#ifndef PARAHEDGE_MODELS_HPP
#define PARAHEDGE_MODELS_HPP

#include "parahedge/geometry.hpp"
#include "parahedge/rng.hpp"

#include <algorithm>
#include <fstream>
#include <memory>
#include <sstream>

namespace parahedge {

/// Diffusion coefficients A(x), b(x) together with the declared analytic
/// envelope: ellipticity window [m, M], Lipschitz constant a_inf of A,
/// componentwise sup b_inf of the drift, and the Gaussian-bound pair
/// (M0 > M, Cq > 0) for the true transition density.
struct DiffusionModel {
    std::string family;
    int d = 1;
    std::function<Mat(const Vec&)> A;
    std::function<Vec(const Vec&)> b;

    double m = 1.0;
    double M = 1.0;
    double a_inf = 0.0;
    double b_inf = 0.0;
    double M0 = 1.05;
    double Cq = 1.0;

    bool constant_coefficients = false;
    Mat A0;  // set when constant_coefficients
    Vec b0;

    void validate_declared() const {
        if (d < 1) throw config_error("model: dimension must be >= 1");
        if (!(m > 0.0) || !(M >= m)) throw config_error("model: need 0 < m <= M");
        if (!(M0 > M)) throw config_error("model: need M0 > M strictly");
        if (!(Cq > 0.0)) throw config_error("model: need Cq > 0");
        if (a_inf < 0.0 || b_inf < 0.0) throw config_error("model: negative sup constants");
    }
};

/// Axis-aligned sampling region used by the validators. Default half-width
/// follows the reachable-region rule 6 sqrt(M T) around the initial point.
struct SamplingBox {
    Vec center;
    double halfwidth = 1.0;

    static SamplingBox reachable(const Vec& x0, double M, double T) {
        return SamplingBox{x0, 6.0 * std::sqrt(std::max(M * T, 1e-12))};
    }

    Vec sample(RngStream& rs) const {
        Vec x(center.size());
        for (int i = 0; i < center.size(); ++i)
            x[i] = center[i] + rs.uniform(-halfwidth, halfwidth);
        return x;
    }
};

struct ModelReport {
    double delta = 0.0;  // sampled commutator defect, exact for constant A
    bool ellipticity_ok = true;
    double sampled_min_eig = 0.0;
    double sampled_max_eig = 0.0;
    long sample_count = 0;
    bool lipschitz_ok = true;
    double lipschitz_estimate = 0.0;
};

namespace detail {

inline void require_symmetric(const Mat& A) {
    const double scale = std::max(1.0, A.norm());
    if ((A - A.transpose()).norm() > 1e-10 * scale)
        throw contract_error("model: A(x) is not symmetric");
}

}  // namespace detail

/// Eigenvalue extremes of A over points drawn from `box`; flags any
/// excursion outside the declared [m, M]. Deterministic given the seed.
inline ModelReport validate_ellipticity(const DiffusionModel& model, const SamplingBox& box,
                                        long n_samples, std::uint64_t seed) {
    if (n_samples < 1) throw contract_error("validate_ellipticity: n_samples >= 1");
    ModelReport rep;
    rep.sample_count = n_samples;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    RngStream rs(seed, /*stream=*/1);
    Eigen::SelfAdjointEigenSolver<Mat> es;
    for (long i = 0; i < n_samples; ++i) {
        const Vec x = box.sample(rs);
        const Mat Ax = model.A(x);
        detail::require_symmetric(Ax);
        es.compute(Ax, Eigen::EigenvaluesOnly);
        lo = std::min(lo, es.eigenvalues().minCoeff());
        hi = std::max(hi, es.eigenvalues().maxCoeff());
    }
    rep.sampled_min_eig = lo;
    rep.sampled_max_eig = hi;
    const double tol = 1e-10 * std::max(1.0, model.M);
    rep.ellipticity_ok = (lo >= model.m - tol) && (hi <= model.M + tol);
    return rep;
}

/// delta = 2 sup_{x in dD} || [A(x), gamma (x) gamma] ||_F, sampled on the
/// boundary hyperplane. Exact (single matrix) for constant coefficients.
inline double commutator_defect(const DiffusionModel& model, const HalfSpaceDomain& dom,
                                long n_boundary_samples, std::uint64_t seed,
                                double tangential_halfwidth = 6.0) {
    const Mat P = dom.gamma() * dom.gamma().transpose();
    auto defect_at = [&](const Vec& x) {
        const Mat Ax = model.A(x);
        return 2.0 * (Ax * P - P * Ax).norm();
    };
    if (model.constant_coefficients || dom.dim() == 1)
        return defect_at(dom.boundary_point(Vec::Zero(std::max(dom.dim() - 1, 1))));

    double worst = 0.0;
    RngStream rs(seed, /*stream=*/2);
    for (long i = 0; i < n_boundary_samples; ++i) {
        Vec tang(dom.dim() - 1);
        for (int j = 0; j < tang.size(); ++j)
            tang[j] = rs.uniform(-tangential_halfwidth, tangential_halfwidth);
        worst = std::max(worst, defect_at(dom.boundary_point(tang)));
    }
    return worst;
}

/// Atilde(y) = A(y) on D, Psi A(theta(y)) Psi off D.
inline Mat symmetrize_A(const DiffusionModel& model, const HalfSpaceDomain& dom, const Vec& y) {
    if (dom.contains(y)) return model.A(y);
    const Mat Psi = dom.psi_matrix();
    return Psi * model.A(dom.reflect(y)) * Psi;
}

/// max over sampled pairs of ||A(x)-A(y)||_F / |x-y|; sanity check against
/// the declared a_inf.
inline double lipschitz_estimate(const DiffusionModel& model, const SamplingBox& box,
                                 long n_pairs, std::uint64_t seed) {
    if (n_pairs < 1) throw contract_error("lipschitz_estimate: n_pairs >= 1");
    double worst = 0.0;
    RngStream rs(seed, /*stream=*/3);
    for (long i = 0; i < n_pairs; ++i) {
        const Vec x = box.sample(rs);
        const Vec y = box.sample(rs);
        const double dist = (x - y).norm();
        if (dist < 1e-12) continue;
        worst = std::max(worst, (model.A(x) - model.A(y)).norm() / dist);
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Built-in model families
// ---------------------------------------------------------------------------

inline DiffusionModel make_constant_model(Mat A0, Vec b0) {
    detail::require_symmetric(A0);
    DiffusionModel mdl;
    mdl.family = "constant";
    mdl.d = static_cast<int>(A0.rows());
    mdl.constant_coefficients = true;
    mdl.A0 = std::move(A0);
    mdl.b0 = std::move(b0);
    mdl.A = [A = mdl.A0](const Vec&) { return A; };
    mdl.b = [b = mdl.b0](const Vec&) { return b; };
    Eigen::SelfAdjointEigenSolver<Mat> es(mdl.A0, Eigen::EigenvaluesOnly);
    mdl.m = es.eigenvalues().minCoeff();
    mdl.M = es.eigenvalues().maxCoeff();
    mdl.a_inf = 0.0;
    mdl.b_inf = mdl.b0.size() ? mdl.b0.cwiseAbs().maxCoeff() : 0.0;
    mdl.M0 = 1.05 * mdl.M;
    return mdl;
}

/// Diagonal state-dependent family: A_ii(x) = base_i + amp_i * g(x_i) with
/// g = sin^2 or the logistic tanh ramp; drift constant.
inline DiffusionModel make_diagonal_model(Vec base, Vec amp, const std::string& shape, Vec b0) {
    const int d = static_cast<int>(base.size());
    if (amp.size() != d) throw config_error("diagonal model: base/amp size mismatch");
    if (shape != "sin2" && shape != "tanh")
        throw config_error("diagonal model: unknown shape '" + shape + "'");
    const bool is_sin2 = (shape == "sin2");
    DiffusionModel mdl;
    mdl.family = "diagonal";
    mdl.d = d;
    mdl.A = [base, amp, is_sin2, d](const Vec& x) {
        Mat A = Mat::Zero(d, d);
        for (int i = 0; i < d; ++i) {
            const double g = is_sin2 ? sqr(std::sin(x[i])) : std::tanh(x[i]);
            A(i, i) = base[i] + amp[i] * g;
        }
        return A;
    };
    mdl.b = [b0](const Vec&) { return b0; };
    mdl.b0 = b0;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo, slope = 0.0;
    for (int i = 0; i < d; ++i) {
        const double g_lo = is_sin2 ? 0.0 : -1.0;
        lo = std::min(lo, base[i] + std::min(amp[i] * g_lo, amp[i]));
        hi = std::max(hi, base[i] + std::max(amp[i] * g_lo, amp[i]));
        slope = std::max(slope, std::fabs(amp[i]));  // |g'| <= 1 for both shapes
    }
    mdl.m = lo;
    mdl.M = hi;
    // a_inf per the gradient-sup aggregation {sum_ij d max_k (sup|d_k a_ij|)^2}^{1/2}
    double sum = 0.0;
    for (int i = 0; i < d; ++i) sum += d * sqr(amp[i]);
    mdl.a_inf = std::sqrt(sum);
    mdl.b_inf = b0.size() ? b0.cwiseAbs().maxCoeff() : 0.0;
    mdl.M0 = 1.05 * mdl.M;
    return mdl;
}

/// Constant 2-D matrix R(angle)^T diag(lambda1, lambda2) R(angle); the
/// rotation tunes the boundary commutator while keeping the spectrum fixed.
inline DiffusionModel make_rotated_constant_model(double lambda1, double lambda2, double angle,
                                                  Vec b0) {
    Mat R(2, 2);
    R << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
    Mat D = Mat::Zero(2, 2);
    D(0, 0) = lambda1;
    D(1, 1) = lambda2;
    DiffusionModel mdl = make_constant_model(R * D * R.transpose(), std::move(b0));
    mdl.family = "rotated_constant";
    return mdl;
}

/// Coefficients tabulated on a regular grid with multilinear interpolation;
/// values are clamped to the grid hull outside it. CSV rows carry
/// (x_1..x_d, A entries row-major, b entries).
class GridCoefficients {
public:
    GridCoefficients(int d, std::vector<std::vector<double>> axes, std::vector<double> a_values,
                     std::vector<double> b_values)
        : d_(d), axes_(std::move(axes)), a_(std::move(a_values)), b_(std::move(b_values)) {
        n_cells_ = 1;
        for (const auto& ax : axes_) {
            if (ax.size() < 2) throw config_error("grid model: need >= 2 points per axis");
            n_cells_ *= ax.size();
        }
        if (a_.size() != n_cells_ * d_ * d_ || b_.size() != n_cells_ * d_)
            throw config_error("grid model: value table size mismatch");
    }

    static GridCoefficients load_csv(const std::string& path, int d);

    Mat A(const Vec& x) const {
        Mat out(d_, d_);
        interp(x, a_.data(), d_ * d_, out.data());
        return 0.5 * (out + out.transpose());
    }

    Vec b(const Vec& x) const {
        Vec out(d_);
        interp(x, b_.data(), d_, out.data());
        return out;
    }

private:
    void interp(const Vec& x, const double* table, int ncomp, double* out) const {
        std::fill(out, out + ncomp, 0.0);
        std::vector<std::size_t> i0(d_);
        std::vector<double> frac(d_);
        for (int i = 0; i < d_; ++i) {
            const auto& ax = axes_[i];
            double xi = std::clamp(x[i], ax.front(), ax.back());
            auto it = std::upper_bound(ax.begin(), ax.end(), xi);
            std::size_t j = std::min<std::size_t>(
                std::max<std::ptrdiff_t>(it - ax.begin() - 1, 0), ax.size() - 2);
            i0[i] = j;
            frac[i] = (xi - ax[j]) / (ax[j + 1] - ax[j]);
        }
        const int corners = 1 << d_;
        for (int c = 0; c < corners; ++c) {
            double w = 1.0;
            std::size_t cell = 0;
            for (int i = 0; i < d_; ++i) {
                const int bit = (c >> i) & 1;
                w *= bit ? frac[i] : 1.0 - frac[i];
                cell = cell * axes_[i].size() + (i0[i] + bit);
            }
            if (w == 0.0) continue;
            const double* src = table + cell * ncomp;
            for (int i = 0; i < ncomp; ++i) out[i] += w * src[i];
        }
    }

    int d_;
    std::vector<std::vector<double>> axes_;
    std::vector<double> a_;
    std::vector<double> b_;
    std::size_t n_cells_;
};

inline GridCoefficients GridCoefficients::load_csv(const std::string& path, int d) {
    std::ifstream in(path);
    if (!in) throw config_error("grid model: cannot open '" + path + "'");
    struct Row {
        std::vector<double> x, a, b;
    };
    std::vector<Row> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::vector<double> vals;
        std::string tok;
        while (std::getline(ss, tok, ',')) vals.push_back(std::stod(tok));
        const std::size_t want = d + d * d + d;
        if (vals.size() != want)
            throw config_error("grid model: row with " + std::to_string(vals.size()) +
                               " fields, expected " + std::to_string(want));
        Row r;
        r.x.assign(vals.begin(), vals.begin() + d);
        r.a.assign(vals.begin() + d, vals.begin() + d + d * d);
        r.b.assign(vals.begin() + d + d * d, vals.end());
        rows.push_back(std::move(r));
    }
    std::vector<std::vector<double>> axes(d);
    for (const auto& r : rows)
        for (int i = 0; i < d; ++i) axes[i].push_back(r.x[i]);
    for (auto& ax : axes) {
        std::sort(ax.begin(), ax.end());
        ax.erase(std::unique(ax.begin(), ax.end(),
                             [](double a, double b) { return std::fabs(a - b) < 1e-12; }),
                 ax.end());
    }
    std::size_t n_cells = 1;
    for (const auto& ax : axes) n_cells *= ax.size();
    if (n_cells != rows.size())
        throw config_error("grid model: points do not form a full tensor grid");

    std::vector<double> a_vals(n_cells * d * d, 0.0), b_vals(n_cells * d, 0.0);
    for (const auto& r : rows) {
        std::size_t cell = 0;
        for (int i = 0; i < d; ++i) {
            auto it = std::lower_bound(axes[i].begin(), axes[i].end(), r.x[i] - 1e-12);
            cell = cell * axes[i].size() + static_cast<std::size_t>(it - axes[i].begin());
        }
        std::copy(r.a.begin(), r.a.end(), a_vals.begin() + cell * d * d);
        std::copy(r.b.begin(), r.b.end(), b_vals.begin() + cell * d);
    }
    return GridCoefficients(d, std::move(axes), std::move(a_vals), std::move(b_vals));
}

inline DiffusionModel make_grid_model(const std::string& csv_path, int d) {
    auto coeffs = std::make_shared<GridCoefficients>(GridCoefficients::load_csv(csv_path, d));
    DiffusionModel mdl;
    mdl.family = "grid";
    mdl.d = d;
    mdl.A = [coeffs](const Vec& x) { return coeffs->A(x); };
    mdl.b = [coeffs](const Vec& x) { return coeffs->b(x); };
    return mdl;  // m, M, a_inf, b_inf stay caller-declared for grid models
}

}  // namespace parahedge

#endif
