#pragma once

#include "bwvi/error.hpp"
#include "bwvi/euclidean.hpp"
#include "bwvi/gaussian.hpp"
#include "bwvi/gradients.hpp"
#include "bwvi/math.hpp"
#include "bwvi/objectives.hpp"
#include "bwvi/random.hpp"
#include "bwvi/targets.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

namespace bwvi {

// ---------------------------------------------------------------------------
// Importance-sampling diagnostics
// ---------------------------------------------------------------------------

/// Effective sample size (sum w)^2 / sum w^2 from log weights.
inline double ess(const Eigen::Ref<const Eigen::VectorXd>& log_w) {
    require(log_w.size() >= 1, "ess: empty weight vector");
    require(log_w.allFinite(), "ess: log weights must be finite");
    const Eigen::ArrayXd w = (log_w.array() - log_w.maxCoeff()).exp();
    return w.sum() * w.sum() / w.square().sum();
}

struct IsDiagnostics {
    double ess = 0.0;
    double elbo_hat = 0.0;
    double elbo_se = 0.0;
    Eigen::VectorXd is_mean;
    Eigen::MatrixXd is_cov;
    int M = 0;
};

/// Self-normalized importance-sampling moments from samples and their log weights.
inline Moments self_normalized_moments(const Eigen::MatrixXd& samples, const Eigen::VectorXd& log_w) {
    const Eigen::VectorXd w = (log_w.array() - log_sum_exp(log_w)).exp().matrix();
    Moments m;
    m.mean = samples.transpose() * w;
    const Eigen::MatrixXd centred = samples.rowwise() - m.mean.transpose();
    m.cov = symmetrize(centred.transpose() * w.asDiagonal() * centred);
    return m;
}

/// ELBO-hat, ESS and self-normalized moments from one set of M draws from q.
inline IsDiagnostics is_diagnostics(const TargetModel& target, const GaussianState& q, int M, Rng& rng) {
    require(M >= 2, "is_diagnostics: M must be >= 2");
    const Eigen::MatrixXd z = sample(q, rng, M);
    const Eigen::VectorXd lw = log_weights(target, q, z);
    if (!lw.allFinite()) throw NonFiniteWeight("is_diagnostics: a log weight is -inf");
    IsDiagnostics out;
    out.M = M;
    const auto ms = mean_sd(lw);
    out.elbo_hat = ms.mean;
    out.elbo_se = ms.sd / std::sqrt(static_cast<double>(M));
    out.ess = ess(lw);
    const Moments mom = self_normalized_moments(z, lw);
    out.is_mean = mom.mean;
    out.is_cov = mom.cov;
    return out;
}

/// (1/M) sum_i [log p(theta_i) - log q(theta_i)], theta_i ~ q.
inline double elbo_hat(const TargetModel& target, const GaussianState& q, int M, Rng& rng) {
    require(M >= 2, "elbo_hat: M must be >= 2");
    return log_weights(target, q, sample(q, rng, M)).mean();
}

inline Moments is_moments(const TargetModel& target, const GaussianState& q, int M, Rng& rng) {
    require(M >= 2, "is_moments: M must be >= 2");
    const Eigen::MatrixXd z = sample(q, rng, M);
    return self_normalized_moments(z, log_weights(target, q, z));
}

struct MomentMse {
    double mean = 0.0;
    double cov = 0.0;
};

/// Mean squared entrywise errors of an estimated mean and covariance.
inline MomentMse moment_mse(const Eigen::VectorXd& est_mean, const Eigen::MatrixXd& est_cov,
                            const Eigen::VectorXd& ref_mean, const Eigen::MatrixXd& ref_cov) {
    require_dim(ref_mean.size(), est_mean.size(), "moment_mse mean");
    if (est_cov.rows() != ref_cov.rows() || est_cov.cols() != ref_cov.cols() || ref_cov.rows() != ref_mean.size())
        throw DimensionMismatch("moment_mse: covariance shapes differ");
    return {(est_mean - ref_mean).squaredNorm() / static_cast<double>(ref_mean.size()),
            (est_cov - ref_cov).squaredNorm() / static_cast<double>(ref_cov.size())};
}

// ---------------------------------------------------------------------------
// Random-walk Metropolis reference sampler
// ---------------------------------------------------------------------------

struct RwmResult {
    Eigen::MatrixXd chain;  // steps x dim, the state after each step
    double acceptance_rate = 0.0;
    double proposal_sd = 0.0;
};

inline RwmResult rwm_chain(const TargetModel& target, const Eigen::VectorXd& init, int steps, double proposal_sd,
                           Rng& rng) {
    require(steps >= 1, "rwm_chain: steps must be >= 1");
    require(proposal_sd > 0.0, "rwm_chain: proposal_sd must be > 0");
    require_dim(target.dim(), init.size(), "rwm_chain");
    const auto d = init.size();
    RwmResult out;
    out.proposal_sd = proposal_sd;
    out.chain.resize(steps, d);
    Eigen::VectorXd x = init;
    double lx = target.log_unnorm(x);
    long accepted = 0;
    Eigen::VectorXd prop(d);
    for (int s = 0; s < steps; ++s) {
        for (Eigen::Index j = 0; j < d; ++j) prop[j] = x[j] + proposal_sd * standard_normal(rng);
        const double lp = target.log_unnorm(prop);
        if (std::log(uniform01(rng)) < lp - lx) {
            x = prop;
            lx = lp;
            ++accepted;
        }
        out.chain.row(s) = x.transpose();
    }
    out.acceptance_rate = static_cast<double>(accepted) / steps;
    return out;
}

/// Pilot-tunes the isotropic proposal scale toward 25-40% acceptance by
/// repeated halving/doubling over short chains.
inline double tune_rwm_proposal(const TargetModel& target, const Eigen::VectorXd& init, Rng& rng,
                                double initial_sd = 1.0, int pilot_steps = 2000, int max_rounds = 30) {
    double sd = initial_sd;
    Eigen::VectorXd x = init;
    for (int round = 0; round < max_rounds; ++round) {
        const RwmResult pilot = rwm_chain(target, x, pilot_steps, sd, rng);
        x = pilot.chain.bottomRows(1).transpose();
        if (pilot.acceptance_rate < 0.25) {
            sd *= 0.6;
        } else if (pilot.acceptance_rate > 0.40) {
            sd *= 1.5;
        } else {
            break;
        }
    }
    return sd;
}

// ---------------------------------------------------------------------------
// SNR sweeps
// ---------------------------------------------------------------------------

enum class SnrEstimator {
    wasserstein,     // Wasserstein gradient at a fixed point z
    euclidean_mean,  // reparameterized IW-ELBO gradient w.r.t. the mean of q
};

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
    int points = 0;
};

/// Least-squares line through (log x, log y).
inline SlopeFit fit_log_log(const std::vector<double>& x, const std::vector<double>& y) {
    require(x.size() == y.size() && x.size() >= 2, "fit_log_log: need at least two points");
    const auto n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxx += dx * dx;
        sxy += dx * (std::log(y[i]) - my);
    }
    require(sxx > 0.0, "fit_log_log: x values must not all coincide");
    SlopeFit f;
    f.points = static_cast<int>(x.size());
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    if (x.size() > 2) {
        double ssr = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double r = std::log(y[i]) - (f.intercept + f.slope * std::log(x[i]));
            ssr += r * r;
        }
        f.slope_se = std::sqrt(ssr / (n - 2.0) / sxx);
    }
    return f;
}

struct SnrSweepConfig {
    std::vector<int> Ks{10, 31, 100, 316, 1000};
    int reps = 2000;
    int M = 1;
    double alpha = 0.0;
    SnrEstimator estimator = SnrEstimator::wasserstein;
};

struct SnrReport {
    std::vector<int> Ks;
    Eigen::MatrixXd snr;   // |Ks| x dim
    Eigen::MatrixXd mean;  // replicate means
    Eigen::MatrixXd sd;    // replicate standard deviations
    Eigen::MatrixXi excluded;  // 1 where |mean| < 3 sd / sqrt(reps)
    Eigen::VectorXd slopes;    // fitted log-log slope per coordinate (0 when the coordinate is excluded)
    Eigen::VectorXd slope_se;
    std::vector<bool> coordinate_excluded;  // no K with a significant mean
    int reps = 0;
    int M = 1;
    double alpha = 0.0;
    SnrEstimator estimator = SnrEstimator::wasserstein;
};

/// Builds the slope fits of a report from its snr/mean/sd tables. A point is flagged
/// insignificant when |mean| < 3 sd / sqrt(reps); a coordinate whose points are all
/// insignificant has no detectable gradient signal and is left out of the fits.
inline void fit_snr_report(SnrReport& rep) {
    const auto nk = static_cast<Eigen::Index>(rep.Ks.size());
    const auto d = rep.snr.cols();
    rep.excluded = Eigen::MatrixXi::Zero(nk, d);
    rep.slopes = Eigen::VectorXd::Zero(d);
    rep.slope_se = Eigen::VectorXd::Zero(d);
    rep.coordinate_excluded.assign(static_cast<std::size_t>(d), false);
    const double root_reps = std::sqrt(static_cast<double>(rep.reps));
    std::vector<double> ks(rep.Ks.begin(), rep.Ks.end());
    for (Eigen::Index j = 0; j < d; ++j) {
        bool any_signal = false;
        std::vector<double> ys;
        for (Eigen::Index i = 0; i < nk; ++i) {
            const bool weak = std::abs(rep.mean(i, j)) < 3.0 * rep.sd(i, j) / root_reps;
            rep.excluded(i, j) = weak ? 1 : 0;
            any_signal = any_signal || !weak;
            ys.push_back(rep.snr(i, j));
        }
        const bool usable = any_signal && nk >= 2 && std::all_of(ys.begin(), ys.end(), [](double v) { return v > 0.0; });
        if (!usable) {
            rep.coordinate_excluded[static_cast<std::size_t>(j)] = true;
            continue;
        }
        const SlopeFit f = fit_log_log(ks, ys);
        rep.slopes[j] = f.slope;
        rep.slope_se[j] = f.slope_se;
    }
}

/// Reparameterized IW-ELBO mean-gradient realizations at q: reps x dim.
inline Eigen::MatrixXd sample_euclidean_mean_replicates(const TargetModel& target, const GaussianState& q, int K,
                                                        int M, int reps, Rng& rng) {
    const CholeskyParams params = CholeskyParams::from_state(q);
    const auto d = q.dim();
    Eigen::MatrixXd out(reps, d);
    for (int r = 0; r < reps; ++r) {
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(d);
        for (int m = 0; m < M; ++m) acc += iwelbo_reparam_grad(target, params, standard_normal(rng, K, d)).mean;
        out.row(r) = (acc / M).transpose();
    }
    return out;
}

/// SNR against K with a per-coordinate log-log slope.
inline SnrReport snr_sweep(const TargetModel& target, const GaussianState& q, const VecRef& z,
                           const SnrSweepConfig& cfg, Rng& rng) {
    require(!cfg.Ks.empty(), "snr_sweep: Ks must be non-empty");
    for (std::size_t i = 0; i < cfg.Ks.size(); ++i) {
        require(cfg.Ks[i] >= 2, "snr_sweep: every K must be >= 2");
        require(i == 0 || cfg.Ks[i] > cfg.Ks[i - 1], "snr_sweep: Ks must be strictly increasing");
    }
    require(cfg.reps >= 200, "snr_sweep: reps must be >= 200");
    require(cfg.M >= 1, "snr_sweep: M must be >= 1");

    SnrReport rep;
    rep.Ks = cfg.Ks;
    rep.reps = cfg.reps;
    rep.M = cfg.M;
    rep.alpha = cfg.alpha;
    rep.estimator = cfg.estimator;
    const auto nk = static_cast<Eigen::Index>(cfg.Ks.size());
    const auto d = q.dim();
    rep.snr.resize(nk, d);
    rep.mean.resize(nk, d);
    rep.sd.resize(nk, d);
    for (Eigen::Index i = 0; i < nk; ++i) {
        const int K = cfg.Ks[static_cast<std::size_t>(i)];
        const Eigen::MatrixXd values =
            cfg.estimator == SnrEstimator::wasserstein
                ? sample_wgrad_replicates(target, q, z, K, cfg.M, cfg.reps, rng, cfg.alpha).values
                : sample_euclidean_mean_replicates(target, q, K, cfg.M, cfg.reps, rng);
        const SnrEstimate e = snr_from_replicates(values);
        rep.snr.row(i) = e.snr.transpose();
        rep.mean.row(i) = e.mean.transpose();
        rep.sd.row(i) = e.sd.transpose();
    }
    fit_snr_report(rep);
    return rep;
}

}  // namespace bwvi
