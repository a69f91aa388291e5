#pragma once

#include "bwvi/error.hpp"
#include "bwvi/gaussian.hpp"
#include "bwvi/math.hpp"
#include "bwvi/random.hpp"
#include "bwvi/targets.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace bwvi {

/// Unconstrained Cholesky parameterization of a Gaussian: z = m + L eps, with
/// L lower triangular and L_jj = softplus(raw_jj) > 0. With `diagonal` set, only
/// the diagonal of `raw` is used (mean-field family).
struct CholeskyParams {
    Eigen::VectorXd mean;
    Eigen::MatrixXd raw;
    bool diagonal = false;

    static CholeskyParams from_state(const GaussianState& q, bool diagonal = false) {
        CholeskyParams p;
        p.mean = q.mean();
        p.diagonal = diagonal;
        const auto d = q.dim();
        p.raw = Eigen::MatrixXd::Zero(d, d);
        if (diagonal) {
            for (Eigen::Index j = 0; j < d; ++j) p.raw(j, j) = softplus_inv(std::sqrt(q.covariance()(j, j)));
        } else {
            p.raw = q.chol().triangularView<Eigen::Lower>();
            for (Eigen::Index j = 0; j < d; ++j) p.raw(j, j) = softplus_inv(q.chol()(j, j));
        }
        return p;
    }

    Eigen::Index dim() const { return mean.size(); }

    Eigen::MatrixXd lower() const {
        const auto d = dim();
        Eigen::MatrixXd l = Eigen::MatrixXd::Zero(d, d);
        for (Eigen::Index j = 0; j < d; ++j) {
            l(j, j) = softplus(raw(j, j));
            if (!diagonal)
                for (Eigen::Index i = j + 1; i < d; ++i) l(i, j) = raw(i, j);
        }
        return l;
    }

    GaussianState state() const { return GaussianState::from_cholesky(mean, lower()); }

    /// Number of free parameters: d + d (mean-field) or d + d(d+1)/2 (full).
    Eigen::Index size() const {
        const auto d = dim();
        return diagonal ? 2 * d : d + d * (d + 1) / 2;
    }

    /// Flatten as [mean, lower-triangle of raw by column] (diagonal only when mean-field).
    Eigen::VectorXd pack() const { return pack(mean, raw); }

    Eigen::VectorXd pack(const Eigen::VectorXd& m, const Eigen::MatrixXd& r) const {
        Eigen::VectorXd v(size());
        const auto d = dim();
        v.head(d) = m;
        Eigen::Index k = d;
        for (Eigen::Index j = 0; j < d; ++j) {
            if (diagonal) {
                v[k++] = r(j, j);
            } else {
                for (Eigen::Index i = j; i < d; ++i) v[k++] = r(i, j);
            }
        }
        return v;
    }

    void unpack(const Eigen::VectorXd& v) {
        const auto d = dim();
        mean = v.head(d);
        Eigen::Index k = d;
        for (Eigen::Index j = 0; j < d; ++j) {
            if (diagonal) {
                raw(j, j) = v[k++];
            } else {
                for (Eigen::Index i = j; i < d; ++i) raw(i, j) = v[k++];
            }
        }
    }
};

/// Reparameterized IW-ELBO gradient of one K-batch with respect to (mean, raw).
struct EuclideanGradient {
    Eigen::VectorXd mean;
    Eigen::MatrixXd raw;
    double value = 0.0;  // the batch's IW-ELBO estimate
};

/// For noise rows eps_i and z_i = m + L eps_i, with normalized weights w_i:
///   d/dm    = sum_i w_i grad log p(z_i)
///   d/dL_jk = sum_i w_i (grad log p(z_i))_j eps_ik  (+ 1/L_jj on the diagonal)
/// since log q(z_i) = log N(eps_i; 0, I) - sum_j log L_jj along the reparameterization.
inline EuclideanGradient iwelbo_reparam_grad(const TargetModel& target, const CholeskyParams& params,
                                             const Eigen::MatrixXd& noise) {
    const auto d = params.dim();
    require_dim(d, target.dim(), "iwelbo_reparam_grad");
    require_dim(d, noise.cols(), "iwelbo_reparam_grad noise");
    const auto k = noise.rows();
    const Eigen::MatrixXd l = params.lower();
    const double log_det_l = l.diagonal().array().log().sum();

    Eigen::VectorXd lw(k);
    Eigen::MatrixXd z(k, d);
    for (Eigen::Index i = 0; i < k; ++i) {
        const Eigen::VectorXd eps = noise.row(i).transpose();
        const Eigen::VectorXd zi = params.mean + l * eps;
        z.row(i) = zi.transpose();
        const double log_q = -0.5 * eps.squaredNorm() - 0.5 * static_cast<double>(d) * kLog2Pi - log_det_l;
        lw[i] = target.log_unnorm(zi) - log_q;
        if (std::isnan(lw[i])) throw NonFiniteWeight("log importance weight is NaN");
    }
    const double lse = log_sum_exp(lw);
    const Eigen::VectorXd w = (lw.array() - lse).exp().matrix();

    EuclideanGradient g;
    g.value = lse - std::log(static_cast<double>(k));
    g.mean = Eigen::VectorXd::Zero(d);
    Eigen::MatrixXd gl = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index i = 0; i < k; ++i) {
        if (w[i] == 0.0) continue;
        const Eigen::VectorXd gp = target.grad_log_unnorm(z.row(i).transpose());
        g.mean += w[i] * gp;
        gl.noalias() += w[i] * gp * noise.row(i);
    }
    g.raw = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index j = 0; j < d; ++j) {
        // d softplus(x)/dx = sigmoid(x)
        g.raw(j, j) = (gl(j, j) + 1.0 / l(j, j)) * sigmoid(params.raw(j, j));
        if (!params.diagonal)
            for (Eigen::Index i = j + 1; i < d; ++i) g.raw(i, j) = gl(i, j);
    }
    return g;
}

}  // namespace bwvi
