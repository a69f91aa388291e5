#pragma once

#include "bwvi/error.hpp"
#include "bwvi/gaussian.hpp"
#include "bwvi/math.hpp"
#include "bwvi/objectives.hpp"
#include "bwvi/random.hpp"
#include "bwvi/targets.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string_view>

namespace bwvi {

// Wasserstein and Bures-Wasserstein gradients of the IW-ELBO / VR-IWAE bound.
//
// Notation used throughout: l(z) = log w(z) = log p(z) - log q(z), and for a
// batch z_1..z_K whose evaluation point is z_e,
//     g = w(z_e)^{1-alpha} / sum_i w(z_i)^{1-alpha}
// with z_e's own weight included in the sum. The Wasserstein gradient at z_e is
//     G(z_e) = (alpha g + (1-alpha) g^2) grad l(z_e),
// which for alpha = 0 is g^2 grad l(z_e).

enum class GradMethod { hessian, stein };

inline std::string_view to_string(GradMethod m) { return m == GradMethod::hessian ? "hessian" : "stein"; }

/// K samples with their log weights and tempered self-normalized weights.
struct WeightBatch {
    Eigen::MatrixXd samples;     // K x dim
    Eigen::VectorXd log_w;       // l_k
    Eigen::VectorXd normalized;  // exp((1-alpha) l_k) / sum_j exp((1-alpha) l_j)
    double alpha = 0.0;
};

inline WeightBatch make_weight_batch(const TargetModel& target, const GaussianState& q, Eigen::MatrixXd samples,
                                     double alpha = 0.0) {
    WeightBatch b;
    b.log_w = log_weights(target, q, samples);
    b.samples = std::move(samples);
    b.alpha = alpha;
    const Eigen::VectorXd t = (1.0 - alpha) * b.log_w;
    b.normalized = (t.array() - log_sum_exp_sorted(t)).exp().matrix();
    return b;
}

inline Eigen::VectorXd grad_log_weight(const TargetModel& target, const GaussianState& q, const VecRef& z) {
    return target.grad_log_unnorm(z) - grad_log_density(q, z);
}

inline Eigen::MatrixXd hess_log_weight(const TargetModel& target, const GaussianState& q, const VecRef& z) {
    return target.hess_log_unnorm(z) - hess_log_density(q);
}

/// Scalar weight factors of one batch at its evaluation point.
struct RatioTerms {
    double g = 0.0;      // tempered self-normalized weight of the evaluation point
    double g_sq = 0.0;   // g^2, formed as exp(2 log g)
    double coeff = 0.0;  // alpha g + (1-alpha) g^2
};

inline RatioTerms ratio_terms(const Eigen::VectorXd& log_w, Eigen::Index eval, double alpha) {
    const double tempered = 1.0 - alpha;
    const double log_g = tempered * log_w[eval] - log_sum_exp_sorted((tempered * log_w).eval());
    RatioTerms r;
    r.g = std::exp(log_g);
    r.g_sq = std::exp(2.0 * log_g);
    r.coeff = alpha * r.g + tempered * r.g_sq;
    return r;
}

struct WgradEstimate {
    Eigen::VectorXd mean;       // Monte Carlo average over M replicates
    Eigen::VectorXd std_error;  // per coordinate; zero when M = 1
};

namespace detail {

inline double eval_point_log_weight(const TargetModel& target, const GaussianState& q, const VecRef& z) {
    require_dim(q.dim(), z.size(), "Wasserstein gradient point");
    const double lz = target.log_unnorm(z) - log_density(q, z);
    if (lz == -std::numeric_limits<double>::infinity())
        throw InvalidPoint("Wasserstein gradient evaluated where w(z) = 0");
    if (!std::isfinite(lz)) throw NonFiniteWeight("log weight at the evaluation point is not finite");
    return lz;
}

inline WgradEstimate summarize_rows(const Eigen::MatrixXd& reps) {
    const auto m = static_cast<double>(reps.rows());
    WgradEstimate out;
    out.mean = reps.colwise().mean().transpose();
    out.std_error = Eigen::VectorXd::Zero(reps.cols());
    if (reps.rows() > 1) {
        for (Eigen::Index j = 0; j < reps.cols(); ++j)
            out.std_error[j] = mean_sd(reps.col(j)).sd / std::sqrt(m);
    }
    return out;
}

}  // namespace detail

/// Wasserstein gradient of the IW-ELBO at a fixed point z:
/// average over M replicates of (w(z) / (sum_{i<K} w(z_i) + w(z)))^2 grad log w(z).
inline WgradEstimate wgrad_iwelbo_at(const TargetModel& target, const GaussianState& q, const VecRef& z, int K, int M,
                                     Rng& rng) {
    require(K >= 1 && M >= 1, "wgrad_iwelbo_at: K and M must be >= 1");
    const double lz = detail::eval_point_log_weight(target, q, z);
    const Eigen::VectorXd u = grad_log_weight(target, q, z);
    if (K == 1) return {u, Eigen::VectorXd::Zero(z.size())};  // ratio is exactly 1
    Eigen::MatrixXd reps(M, z.size());
    Eigen::VectorXd lw(K);
    for (int r = 0; r < M; ++r) {
        if (K > 1) lw.head(K - 1) = log_weights(target, q, sample(q, rng, K - 1));
        lw[K - 1] = lz;
        const double log_ratio = lz - log_sum_exp_sorted(lw);
        reps.row(r) = (std::exp(2.0 * log_ratio) * u).transpose();
    }
    return detail::summarize_rows(reps);
}

/// Wasserstein gradient of the VR-IWAE bound at z; equals wgrad_iwelbo_at for alpha = 0
/// under the same stream.
inline WgradEstimate wgrad_vriwae_at(const TargetModel& target, const GaussianState& q, const VecRef& z, int K, int M,
                                     double alpha, Rng& rng) {
    require(K >= 1 && M >= 1, "wgrad_vriwae_at: K and M must be >= 1");
    require(alpha >= 0.0 && alpha < 1.0, "wgrad_vriwae_at: alpha must lie in [0, 1)");
    const double lz = detail::eval_point_log_weight(target, q, z);
    const Eigen::VectorXd u = grad_log_weight(target, q, z);
    if (K == 1) return {u, Eigen::VectorXd::Zero(z.size())};
    Eigen::MatrixXd reps(M, z.size());
    Eigen::VectorXd lw(K);
    for (int r = 0; r < M; ++r) {
        if (K > 1) lw.head(K - 1) = log_weights(target, q, sample(q, rng, K - 1));
        lw[K - 1] = lz;
        reps.row(r) = (ratio_terms(lw, K - 1, alpha).coeff * u).transpose();
    }
    return detail::summarize_rows(reps);
}

/// One batch's contribution to the BW gradient of the negative bound.
struct BatchContribution {
    Eigen::VectorXd a;
    Eigen::MatrixXd S;
    double value = 0.0;  // the batch's bound estimate
};

/// a- and S-integrands of a single batch with evaluation point `eval`.
///
/// Hessian path (product rule on G):
///   S = -[(1-alpha) g (1-g) (alpha + 2 (1-alpha) g) u u^T + (alpha g + (1-alpha) g^2) H_l]
/// Stein path (Gaussian integration by parts, Hessian-free):
///   S = -1/2 [Sigma^{-1} (z_e - m) G^T + G (z_e - m)^T Sigma^{-1}]
inline BatchContribution bw_batch_contribution(const TargetModel& target, const GaussianState& q, const WeightBatch& batch,
                                               Eigen::Index eval, GradMethod method) {
    const double alpha = batch.alpha;
    const Eigen::VectorXd z = batch.samples.row(eval).transpose();
    const RatioTerms rt = ratio_terms(batch.log_w, eval, alpha);
    const Eigen::VectorXd u = grad_log_weight(target, q, z);

    BatchContribution c;
    c.value = vr_iwae_batch_value(batch.log_w, alpha);
    c.a = -rt.coeff * u;
    if (method == GradMethod::hessian) {
        const double outer = (1.0 - alpha) * rt.g * (1.0 - rt.g) * (alpha + 2.0 * (1.0 - alpha) * rt.g);
        c.S = -(outer * (u * u.transpose()) + rt.coeff * hess_log_weight(target, q, z));
    } else {
        const Eigen::VectorXd w_grad = rt.coeff * u;
        const Eigen::VectorXd pz = q.precision_times(z - q.mean());
        const Eigen::MatrixXd b = pz * w_grad.transpose();
        c.S = -0.5 * (b + b.transpose());
    }
    c.S = symmetrize(c.S);
    return c;
}

struct BwGradient {
    Eigen::VectorXd a;
    Eigen::MatrixXd S;
    Eigen::VectorXd mc_std_a;  // per-coordinate standard errors of a
    Eigen::MatrixXd mc_std_S;  // entrywise standard errors of S
    GradMethod method = GradMethod::hessian;
    ObjectiveEstimate objective;  // bound estimate from the same batches
};

/// Monte Carlo BW gradient (a*, S*) of the negative VR-IWAE bound (IW-ELBO at alpha = 0).
/// M independent K-batches are drawn from `rng`; z_K is the evaluation point of each.
inline BwGradient bw_grad(const TargetModel& target, const GaussianState& q, const EstimatorConfig& cfg,
                          GradMethod method, Rng& rng) {
    cfg.validate();
    require(cfg.M >= 2, "bw_grad: M must be >= 2");
    require_dim(q.dim(), target.dim(), "bw_grad");
    if (method == GradMethod::hessian && !target.has_hessian())
        throw HessianUnavailable("bw_grad: target '" + target.name() + "' has no Hessian; use the stein path");

    const auto d = q.dim();
    const double m = cfg.M;
    Eigen::VectorXd sum_a = Eigen::VectorXd::Zero(d), sq_a = Eigen::VectorXd::Zero(d);
    Eigen::MatrixXd sum_s = Eigen::MatrixXd::Zero(d, d), sq_s = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd values(cfg.M);
    for (int r = 0; r < cfg.M; ++r) {
        const WeightBatch batch = make_weight_batch(target, q, sample(q, rng, cfg.K), cfg.alpha);
        const BatchContribution c = bw_batch_contribution(target, q, batch, cfg.K - 1, method);
        sum_a += c.a;
        sq_a += c.a.cwiseAbs2();
        sum_s += c.S;
        sq_s += c.S.cwiseAbs2();
        values[r] = c.value;
    }

    BwGradient out;
    out.method = method;
    out.a = sum_a / m;
    out.S = symmetrize(sum_s / m);
    const auto se = [m](double sum, double sq) {
        const double var = std::max(0.0, (sq - sum * sum / m) / (m - 1.0));
        return std::sqrt(var / m);
    };
    out.mc_std_a.resize(d);
    out.mc_std_S.resize(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        out.mc_std_a[i] = se(sum_a[i], sq_a[i]);
        for (Eigen::Index j = 0; j < d; ++j) out.mc_std_S(i, j) = se(sum_s(i, j), sq_s(i, j));
    }
    out.objective = summarize_replicates(values, cfg.K, cfg.alpha);
    return out;
}

/// Replicate values of the M-averaged Wasserstein gradient estimator at z.
struct SnrSample {
    Eigen::VectorXd z;
    int K = 1;
    int M = 1;
    Eigen::MatrixXd values;  // reps x dim
};

struct SnrEstimate {
    Eigen::VectorXd snr;  // |mean| / sd per coordinate
    Eigen::VectorXd mean;
    Eigen::VectorXd sd;
    int reps = 0;
};

/// Per-coordinate |mean| / sd across replicate rows.
inline SnrEstimate snr_from_replicates(const Eigen::MatrixXd& values) {
    require(values.rows() >= 2, "snr: at least two replicates required");
    SnrEstimate e;
    const auto d = values.cols();
    e.reps = static_cast<int>(values.rows());
    e.snr.resize(d);
    e.mean.resize(d);
    e.sd.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        const auto ms = mean_sd(values.col(j));
        if (!(ms.sd > 0.0))
            throw DegenerateVariance("snr: estimator has zero variance in coordinate " + std::to_string(j));
        e.mean[j] = ms.mean;
        e.sd[j] = ms.sd;
        e.snr[j] = std::abs(ms.mean) / ms.sd;
    }
    return e;
}

inline SnrSample sample_wgrad_replicates(const TargetModel& target, const GaussianState& q, const VecRef& z, int K,
                                         int M, int reps, Rng& rng, double alpha = 0.0) {
    SnrSample s{z, K, M, Eigen::MatrixXd(reps, z.size())};
    for (int r = 0; r < reps; ++r) {
        const auto est = alpha == 0.0 ? wgrad_iwelbo_at(target, q, z, K, M, rng)
                                      : wgrad_vriwae_at(target, q, z, K, M, alpha, rng);
        s.values.row(r) = est.mean.transpose();
    }
    return s;
}

/// SNR of the Wasserstein gradient estimator at z over `reps` independent realizations.
inline SnrEstimate snr_estimate(const TargetModel& target, const GaussianState& q, const VecRef& z, int K, int M,
                                int reps, Rng& rng, double alpha = 0.0) {
    require(reps >= 30, "snr_estimate: reps must be >= 30");
    return snr_from_replicates(sample_wgrad_replicates(target, q, z, K, M, reps, rng, alpha).values);
}

}  // namespace bwvi
