#pragma once

#include "bwvi/error.hpp"
#include "bwvi/gaussian.hpp"
#include "bwvi/math.hpp"
#include "bwvi/random.hpp"
#include "bwvi/targets.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>

namespace bwvi {

struct EstimatorConfig {
    int K = 1;           // importance samples per batch
    int M = 1;           // outer replicates
    double alpha = 0.0;  // 0 selects the IW-ELBO
    std::uint64_t seed = 0;

    void validate() const {
        require(K >= 1, "EstimatorConfig: K must be >= 1");
        require(M >= 1, "EstimatorConfig: M must be >= 1");
        require(alpha >= 0.0 && alpha < 1.0, "EstimatorConfig: alpha must lie in [0, 1)");
    }
};

struct ObjectiveEstimate {
    double value = 0.0;
    double std_error = 0.0;  // replicate sd / sqrt(M); 0 when M = 1
    int K = 1;
    int M = 1;
    double alpha = 0.0;
};

/// Log importance weights log p(z_i) - log q(z_i) for each row of `samples`.
inline Eigen::VectorXd log_weights(const TargetModel& target, const GaussianState& q, const Eigen::MatrixXd& samples) {
    require_dim(q.dim(), target.dim(), "log_weights (target vs q)");
    Eigen::VectorXd lw(samples.rows());
    Eigen::VectorXd z(samples.cols());
    for (Eigen::Index i = 0; i < samples.rows(); ++i) {
        z = samples.row(i).transpose();
        lw[i] = target.log_unnorm(z) - log_density(q, z);
        if (std::isnan(lw[i]) || lw[i] == std::numeric_limits<double>::infinity())
            throw NonFiniteWeight("log importance weight is " + std::to_string(lw[i]));
    }
    return lw;
}

/// (1/(1-alpha)) log((1/K) sum_k exp((1-alpha) l_k)) for one batch of log weights.
inline double vr_iwae_batch_value(const Eigen::Ref<const Eigen::VectorXd>& log_w, double alpha) {
    const double tempered = 1.0 - alpha;
    const double lse = log_sum_exp((tempered * log_w).eval());
    return (lse - std::log(static_cast<double>(log_w.size()))) / tempered;
}

/// Mean and standard error of per-replicate values.
inline ObjectiveEstimate summarize_replicates(const Eigen::VectorXd& values, int K, double alpha) {
    ObjectiveEstimate est;
    const auto ms = mean_sd(values);
    est.value = ms.mean;
    est.std_error = values.size() > 1 ? ms.sd / std::sqrt(static_cast<double>(values.size())) : 0.0;
    est.K = K;
    est.M = static_cast<int>(values.size());
    est.alpha = alpha;
    return est;
}

/// Monte Carlo VR-IWAE bound. Replicate r draws its K samples from the substream
/// keyed by (cfg.seed, r), so the result does not depend on evaluation order.
inline ObjectiveEstimate estimate_vr_iwae(const TargetModel& target, const GaussianState& q, const EstimatorConfig& cfg) {
    cfg.validate();
    require_dim(q.dim(), target.dim(), "estimate_vr_iwae");
    Eigen::VectorXd values(cfg.M);
    for (int r = 0; r < cfg.M; ++r) {
        Rng rng = substream(mix_key(cfg.seed, static_cast<std::uint64_t>(r)));
        const Eigen::MatrixXd z = sample(q, rng, cfg.K);
        values[r] = vr_iwae_batch_value(log_weights(target, q, z), cfg.alpha);
    }
    return summarize_replicates(values, cfg.K, cfg.alpha);
}

/// Monte Carlo IW-ELBO; the alpha = 0 case of estimate_vr_iwae.
inline ObjectiveEstimate estimate_iw_elbo(const TargetModel& target, const GaussianState& q, const EstimatorConfig& cfg) {
    require(cfg.alpha == 0.0, "estimate_iw_elbo: alpha must be 0");
    return estimate_vr_iwae(target, q, cfg);
}

}  // namespace bwvi
