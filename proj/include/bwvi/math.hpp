#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

namespace bwvi {

inline constexpr double kLog2Pi = 1.8378770664093454836;

/// log(sum_i exp(x_i)) with max-shift. Returns -inf for an empty or all -inf input.
inline double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& x) {
    if (x.size() == 0) return -std::numeric_limits<double>::infinity();
    const double mx = x.maxCoeff();
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) s += std::exp(x[i] - mx);
    return mx + std::log(s);
}

/// Same as log_sum_exp but summed in ascending order, so the result is
/// bitwise invariant to any permutation of the input.
inline double log_sum_exp_sorted(const Eigen::Ref<const Eigen::VectorXd>& x) {
    std::vector<double> v(x.data(), x.data() + x.size());
    if (v.empty()) return -std::numeric_limits<double>::infinity();
    std::sort(v.begin(), v.end());
    const double mx = v.back();
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (double xi : v) s += std::exp(xi - mx);
    return mx + std::log(s);
}

/// log sigma(u), branch-split on the sign of u.
inline double log_sigmoid(double u) {
    return u >= 0.0 ? -std::log1p(std::exp(-u)) : u - std::log1p(std::exp(u));
}

inline double sigmoid(double u) {
    if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
    const double e = std::exp(u);
    return e / (1.0 + e);
}

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

/// Inverse of softplus for y > 0.
inline double softplus_inv(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

inline Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& a) { return 0.5 * (a + a.transpose()); }

inline double spectral_norm_sym(const Eigen::MatrixXd& s) {
    if (s.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Sample mean and standard deviation (n-1 denominator) of a sequence.
struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;
};

inline MeanSd mean_sd(const Eigen::Ref<const Eigen::VectorXd>& x) {
    MeanSd r;
    const auto n = x.size();
    if (n == 0) return r;
    r.mean = x.mean();
    if (n > 1) r.sd = std::sqrt((x.array() - r.mean).square().sum() / static_cast<double>(n - 1));
    return r;
}

}  // namespace bwvi
