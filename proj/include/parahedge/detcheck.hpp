#ifndef PARAHEDGE_DETCHECK_HPP
#define PARAHEDGE_DETCHECK_HPP

#include "parahedge/common.hpp"

namespace parahedge {

/// One instance of the Gaussian-chain matrix H_A: chain length n, subset A
/// of {1..n} (membership of n only matters for the cofactor inequality), and
/// positive time increments s_1..s_n. Entries:
///     H_11 = 1/s_1,  H_ii = 1/s_{i-1} + 1/s_i (i >= 2),
///     H_{i,i+1} = H_{i+1,i} = -1/s_i exactly when i is in A^c \ {n}.
struct DetCase {
    int n = 2;
    std::uint32_t a_mask = 0;  // bit i-1 set  <=>  i in A
    std::vector<double> s;

    bool in_A(int i) const { return (a_mask >> (i - 1)) & 1u; }

    void validate() const {
        if (n < 1 || static_cast<int>(s.size()) != n) throw contract_error("DetCase: bad sizes");
        for (double si : s)
            if (!(si > 0.0)) throw contract_error("DetCase: increments must be positive");
        if (a_mask >> n) throw contract_error("DetCase: subset out of range");
    }
};

inline Mat build_H(const DetCase& c) {
    c.validate();
    Mat H = Mat::Zero(c.n, c.n);
    H(0, 0) = 1.0 / c.s[0];
    for (int i = 2; i <= c.n; ++i) H(i - 1, i - 1) = 1.0 / c.s[i - 2] + 1.0 / c.s[i - 1];
    for (int i = 1; i <= c.n - 1; ++i)
        if (!c.in_A(i)) H(i - 1, i) = H(i, i - 1) = -1.0 / c.s[i - 1];
    return H;
}

/// Block decomposition: the couplings vanish after every index in A, so H_A
/// splits into maximal consecutive runs [a..b] with all of a..b-1 outside A.
struct DetBlock {
    int a = 1, b = 1;  // 1-based inclusive index range
};

inline std::vector<DetBlock> decompose_blocks(const DetCase& c) {
    std::vector<DetBlock> blocks;
    int start = 1;
    for (int i = 1; i <= c.n; ++i) {
        const bool cut = (i == c.n) || c.in_A(i);
        if (cut) {
            blocks.push_back({start, i});
            start = i + 1;
        }
    }
    return blocks;
}

/// Closed-form determinant of one block:
///   starts at index 1:        prod_{j=1}^{b} 1/s_j
///   interior block [a..b]:    ( prod_{j=a-1}^{b} 1/s_j ) * sum_{j=a-1}^{b} s_j
/// Diagonal singletons are the degenerate interior case.
inline double block_det_closed_form(const DetCase& c, const DetBlock& blk) {
    if (blk.a == 1) {
        double prod = 1.0;
        for (int j = 1; j <= blk.b; ++j) prod /= c.s[j - 1];
        return prod;
    }
    double prod = 1.0, sum = 0.0;
    for (int j = blk.a - 1; j <= blk.b; ++j) {
        prod /= c.s[j - 1];
        sum += c.s[j - 1];
    }
    return prod * sum;
}

/// Lower bound on det H_A:
///     prod_{i in A, i<n} (s_i + s_{i+1}) / s_i^2  *  prod_{j in A^c or j=n} 1/s_j.
inline double det_lower_bound(const DetCase& c) {
    double bound = 1.0;
    for (int i = 1; i <= c.n - 1; ++i)
        if (c.in_A(i)) bound *= (c.s[i - 1] + c.s[i]) / sqr(c.s[i - 1]);
    for (int j = 1; j <= c.n; ++j)
        if (j == c.n || !c.in_A(j)) bound /= c.s[j - 1];
    return bound;
}

struct DetCheckResult {
    bool skipped = false;       // numerically singular case
    double cond = 0.0;
    double det_numeric = 0.0;
    double det_block_product = 0.0;
    double rel_err_decomposition = 0.0;  // |det - prod blocks| / det
    double max_rel_err_blocks = 0.0;     // worst block closed-form mismatch
    double lower_bound = 0.0;
    bool lower_bound_ok = false;
    double cofactor_ratio = 0.0;  // (H^{-1})_{nn} / s_n, must be <= 1
    bool cofactor_ok = false;

    bool ok(double rel_tol = 1e-10) const {
        return skipped || (rel_err_decomposition <= rel_tol && max_rel_err_blocks <= rel_tol &&
                           lower_bound_ok && cofactor_ok);
    }
};

/// Numerically verifies, for one case, (a) the block-product factorization of
/// det H_A, (b) the closed forms for the block determinants, (c) the lower
/// bound on det H_A, and (d) the cofactor inequality (H_A^{-1})_{nn} <= s_n
/// that closes the Gaussian-chain estimate.
inline DetCheckResult det_identity_check(const DetCase& c) {
    DetCheckResult r;
    const Mat H = build_H(c);

    Eigen::FullPivLU<Mat> lu(H);
    Eigen::JacobiSVD<Mat> svd(H);
    const double smin = svd.singularValues().minCoeff();
    const double smax = svd.singularValues().maxCoeff();
    r.cond = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
    if (!(smin > 0.0) || r.cond > 1e12) {
        r.skipped = true;
        return r;
    }

    r.det_numeric = lu.determinant();

    double prod = 1.0;
    for (const DetBlock& blk : decompose_blocks(c)) {
        const int sz = blk.b - blk.a + 1;
        const Mat sub = H.block(blk.a - 1, blk.a - 1, sz, sz);
        const double det_sub = sub.fullPivLu().determinant();
        const double closed = block_det_closed_form(c, blk);
        r.max_rel_err_blocks = std::max(
            r.max_rel_err_blocks, std::fabs(det_sub - closed) / std::max(1e-300, std::fabs(closed)));
        prod *= det_sub;
    }
    r.det_block_product = prod;
    r.rel_err_decomposition =
        std::fabs(r.det_numeric - prod) / std::max(1e-300, std::fabs(r.det_numeric));

    r.lower_bound = det_lower_bound(c);
    r.lower_bound_ok = r.det_numeric >= r.lower_bound * (1.0 - 1e-10);

    const Mat Hinv = lu.inverse();
    r.cofactor_ratio = Hinv(c.n - 1, c.n - 1) / c.s[c.n - 1];
    r.cofactor_ok = r.cofactor_ratio <= 1.0 + 1e-12;
    return r;
}

}  // namespace parahedge

#endif
