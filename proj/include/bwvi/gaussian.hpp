#pragma once

#include "bwvi/error.hpp"
#include "bwvi/math.hpp"
#include "bwvi/random.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>

namespace bwvi {

/// Full-covariance Gaussian N(mean, covariance) with a cached lower Cholesky factor.
///
/// Immutable after construction. Every density evaluation goes through the
/// factor; no explicit inverse is ever formed.
class GaussianState {
public:
    GaussianState(Eigen::VectorXd mean, const Eigen::MatrixXd& covariance)
        : mean_(std::move(mean)), cov_(covariance) {
        const auto d = mean_.size();
        if (d < 1) throw InvalidState("GaussianState: dimension must be positive");
        if (cov_.rows() != d || cov_.cols() != d)
            throw InvalidState("GaussianState: covariance is " + std::to_string(cov_.rows()) + "x" +
                               std::to_string(cov_.cols()) + ", mean has length " + std::to_string(d));
        if (!mean_.allFinite() || !cov_.allFinite()) throw InvalidState("GaussianState: non-finite parameters");
        const double scale = cov_.cwiseAbs().maxCoeff();
        if ((cov_ - cov_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
            throw InvalidState("GaussianState: covariance is not symmetric");
        factorize();
    }

    static GaussianState from_cholesky(Eigen::VectorXd mean, const Eigen::MatrixXd& lower) {
        Eigen::MatrixXd l = lower.triangularView<Eigen::Lower>();
        return GaussianState(std::move(mean), symmetrize(l * l.transpose()));
    }

    static GaussianState standard(Eigen::Index d) {
        return GaussianState(Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Identity(d, d));
    }

    Eigen::Index dim() const { return mean_.size(); }
    const Eigen::VectorXd& mean() const { return mean_; }
    const Eigen::MatrixXd& covariance() const { return cov_; }
    const Eigen::MatrixXd& chol() const { return chol_; }
    double log_det() const { return log_det_; }

    /// Sigma^{-1} v via two triangular solves.
    Eigen::VectorXd precision_times(const Eigen::Ref<const Eigen::VectorXd>& v) const {
        Eigen::VectorXd y = chol_.triangularView<Eigen::Lower>().solve(v);
        return chol_.transpose().triangularView<Eigen::Upper>().solve(y);
    }

    Eigen::MatrixXd precision() const {
        return precision_times_matrix(Eigen::MatrixXd::Identity(dim(), dim()));
    }

    Eigen::MatrixXd precision_times_matrix(const Eigen::MatrixXd& b) const {
        Eigen::MatrixXd y = chol_.triangularView<Eigen::Lower>().solve(b);
        return chol_.transpose().triangularView<Eigen::Upper>().solve(y);
    }

private:
    void factorize() {
        Eigen::LLT<Eigen::MatrixXd> llt(cov_);
        if (llt.info() != Eigen::Success) throw InvalidState("GaussianState: covariance is not positive definite");
        chol_ = llt.matrixL();
        if ((chol_.diagonal().array() <= 0.0).any() || !chol_.allFinite())
            throw InvalidState("GaussianState: covariance is not positive definite");
        log_det_ = 2.0 * chol_.diagonal().array().log().sum();
    }

    Eigen::VectorXd mean_;
    Eigen::MatrixXd cov_;
    Eigen::MatrixXd chol_;
    double log_det_ = 0.0;
};

/// Tangent vector x -> a + S (x - m) at a Gaussian.
struct TangentVector {
    Eigen::VectorXd a;
    Eigen::MatrixXd S;
};

/// z = m + L eps for every row eps of `noise` (n x dim).
inline Eigen::MatrixXd sample_from_noise(const GaussianState& q, const Eigen::MatrixXd& noise) {
    require_dim(q.dim(), noise.cols(), "sample_from_noise");
    Eigen::MatrixXd z = noise * q.chol().transpose();
    z.rowwise() += q.mean().transpose();
    return z;
}

/// n i.i.d. draws from q, one per row.
inline Eigen::MatrixXd sample(const GaussianState& q, Rng& rng, Eigen::Index n) {
    require(n >= 1, "sample: n must be >= 1");
    return sample_from_noise(q, standard_normal(rng, n, q.dim()));
}

inline double log_density(const GaussianState& q, const Eigen::Ref<const Eigen::VectorXd>& z) {
    require_dim(q.dim(), z.size(), "log_density");
    Eigen::VectorXd y = q.chol().triangularView<Eigen::Lower>().solve(z - q.mean());
    return -0.5 * y.squaredNorm() - 0.5 * q.log_det() - 0.5 * static_cast<double>(q.dim()) * kLog2Pi;
}

inline Eigen::VectorXd grad_log_density(const GaussianState& q, const Eigen::Ref<const Eigen::VectorXd>& z) {
    require_dim(q.dim(), z.size(), "grad_log_density");
    return -q.precision_times(z - q.mean());
}

inline Eigen::MatrixXd hess_log_density(const GaussianState& q) { return -symmetrize(q.precision()); }

/// min(eta, 0.9 / ||S||_2), so that ||eta S||_2 <= 0.9.
inline double clip_step(double eta, const Eigen::MatrixXd& S) {
    const double norm = spectral_norm_sym(S);
    if (eta * norm > 0.9) return 0.9 / norm;
    return eta;
}

/// Bures-Wasserstein update: m' = m - eta a, Sigma' = (I - eta S) Sigma (I - eta S).
inline GaussianState retract(const GaussianState& q, const TangentVector& v, double eta) {
    require_dim(q.dim(), v.a.size(), "retract (a)");
    require_dim(q.dim(), v.S.rows(), "retract (S)");
    require(eta >= 0.0, "retract: step size must be non-negative");
    if (eta == 0.0) return q;

    const auto d = q.dim();
    const Eigen::MatrixXd step = Eigen::MatrixXd::Identity(d, d) - eta * v.S;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(step), Eigen::EigenvaluesOnly);
    const double smallest = es.eigenvalues().cwiseAbs().minCoeff();
    if (!(smallest > 1e-12)) throw StepTooLarge("retract: I - eta*S is numerically singular");

    Eigen::VectorXd m = q.mean() - eta * v.a;
    Eigen::MatrixXd cov = symmetrize(step * q.covariance() * step);
    try {
        return GaussianState(std::move(m), cov);
    } catch (const InvalidState& e) {
        throw StepTooLarge(std::string("retract: updated covariance is not positive definite: ") + e.what());
    }
}

/// Symmetric PSD square root via eigendecomposition.
inline Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& a) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(a));
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

/// 2-Wasserstein distance between two Gaussians.
inline double bw_distance(const GaussianState& q1, const GaussianState& q2) {
    require_dim(q1.dim(), q2.dim(), "bw_distance");
    if (q1.mean() == q2.mean() && q1.covariance() == q2.covariance()) return 0.0;
    const Eigen::MatrixXd r2 = sqrtm_psd(q2.covariance());
    const Eigen::MatrixXd cross = sqrtm_psd(r2 * q1.covariance() * r2);
    const double bures = q1.covariance().trace() + q2.covariance().trace() - 2.0 * cross.trace();
    return std::sqrt((q1.mean() - q2.mean()).squaredNorm() + std::max(bures, 0.0));
}

}  // namespace bwvi
