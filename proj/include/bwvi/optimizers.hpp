#pragma once

#include "bwvi/error.hpp"
#include "bwvi/euclidean.hpp"
#include "bwvi/gaussian.hpp"
#include "bwvi/gradients.hpp"
#include "bwvi/objectives.hpp"
#include "bwvi/random.hpp"
#include "bwvi/targets.hpp"

#include <Eigen/Dense>

#include <cassert>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bwvi {

enum class Method { bw, adam_full, adam_meanfield };

inline std::string_view to_string(Method m) {
    switch (m) {
        case Method::bw: return "bw";
        case Method::adam_full: return "adam_full";
        case Method::adam_meanfield: return "adam_meanfield";
    }
    return "?";
}

struct AdamSettings {
    double lr = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct OptimizerConfig {
    double eta = 0.1;  // BW step size
    int max_iters = 1000;
    int K = 1;
    int M = 16;
    double alpha = 0.0;
    double stop_tol = 1e-4;  // <= 0 disables the convergence test
    int stop_window = 20;
    std::uint64_t seed = 0;
    Method method = Method::bw;
    AdamSettings adam;
    std::optional<GradMethod> grad_method;  // default: hessian when available, else stein
    bool record_full_cov = false;
    bool record_wallclock = false;

    void validate() const {
        require(eta > 0.0, "OptimizerConfig: eta must be > 0");
        require(max_iters >= 0, "OptimizerConfig: max_iters must be >= 0");
        require(stop_window >= 2, "OptimizerConfig: stop_window must be >= 2");
        require(K >= 1 && M >= 1, "OptimizerConfig: K and M must be >= 1");
        require(alpha >= 0.0 && alpha < 1.0, "OptimizerConfig: alpha must lie in [0, 1)");
        require(adam.lr > 0.0 && adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 &&
                    adam.eps > 0.0,
                "OptimizerConfig: invalid ADAM settings");
    }
};

/// One iteration of a run: the iterate q_t, its objective estimate, and the step taken from it.
struct RunRecord {
    int iter = 0;
    double objective = 0.0;
    double objective_se = 0.0;
    Eigen::VectorXd mean;
    Eigen::VectorXd cov_diag;
    double logdet_cov = 0.0;
    std::optional<Eigen::MatrixXd> cov;
    double grad_a_norm = 0.0;  // ||a|| (BW) or ||d/dm|| (ADAM)
    double grad_S_fro = 0.0;   // ||S||_F (BW) or ||d/dL||_F (ADAM)
    double eta_effective = 0.0;
    bool clipped = false;
    double wallclock_ms = 0.0;
};

struct RunResult {
    GaussianState final_state;
    std::vector<RunRecord> trace;
    bool converged = false;
    std::optional<std::string> failure;  // set when a run aborts on a non-finite weight
};

/// Moving-average plateau test. Compares the mean of the last `window`
/// objectives with the mean of the window before it; the run stops after three
/// consecutive checks whose relative change is below `tol`.
class StoppingRule {
public:
    StoppingRule(double tol, int window) : tol_(tol), window_(window) {}

    bool update(double objective) {
        history_.push_back(objective);
        if (tol_ <= 0.0) return false;
        const auto n = static_cast<int>(history_.size());
        if (n < 2 * window_) return false;
        double now = 0.0, prev = 0.0;
        for (int i = n - window_; i < n; ++i) now += history_[static_cast<std::size_t>(i)];
        for (int i = n - 2 * window_; i < n - window_; ++i) prev += history_[static_cast<std::size_t>(i)];
        now /= window_;
        prev /= window_;
        // Objectives near zero (normalized targets at the optimum) use an absolute scale of 1.
        const double rel = std::abs(now - prev) / std::max(std::abs(prev), 1.0);
        hits_ = rel < tol_ ? hits_ + 1 : 0;
        return hits_ >= 3;
    }

private:
    double tol_;
    int window_;
    int hits_ = 0;
    std::vector<double> history_;
};

/// ADAM for maximization.
class Adam {
public:
    Adam(Eigen::Index n, AdamSettings s) : s_(s), m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)) {}

    void ascend(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
        ++t_;
        m_ = s_.beta1 * m_ + (1.0 - s_.beta1) * grad;
        v_ = s_.beta2 * v_ + (1.0 - s_.beta2) * grad.cwiseAbs2();
        const double c1 = 1.0 - std::pow(s_.beta1, t_);
        const double c2 = 1.0 - std::pow(s_.beta2, t_);
        params.array() += s_.lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + s_.eps);
    }

    int steps() const { return t_; }

private:
    AdamSettings s_;
    Eigen::VectorXd m_, v_;
    int t_ = 0;
};

namespace detail {

inline RunRecord snapshot(int iter, const GaussianState& q, bool full_cov) {
    RunRecord rec;
    rec.iter = iter;
    rec.mean = q.mean();
    rec.cov_diag = q.covariance().diagonal();
    rec.logdet_cov = q.log_det();
    if (full_cov) rec.cov = q.covariance();
    return rec;
}

class Stopwatch {
public:
    double ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline std::uint64_t iteration_key(std::uint64_t seed, int iter) {
    return mix_key(seed, static_cast<std::uint64_t>(iter));
}

}  // namespace detail

/// Bures-Wasserstein descent on the negative IW-ELBO / VR-IWAE bound.
/// Each iteration draws fresh batches, estimates (a, S), clips the step to
/// min(eta, 0.9/||S||_2) and retracts.
inline RunResult run_bw(const TargetModel& target, const GaussianState& init, const OptimizerConfig& cfg) {
    cfg.validate();
    require_dim(init.dim(), target.dim(), "run_bw");
    const GradMethod method =
        cfg.grad_method.value_or(target.has_hessian() ? GradMethod::hessian : GradMethod::stein);
    const EstimatorConfig est{cfg.K, std::max(cfg.M, 2), cfg.alpha, cfg.seed};

    RunResult res{init, {}, false, std::nullopt};
    StoppingRule stop(cfg.stop_tol, cfg.stop_window);
    detail::Stopwatch clock;
    GaussianState q = init;
    for (int t = 0; t < cfg.max_iters; ++t) {
        Rng rng = substream(detail::iteration_key(cfg.seed, t));
        BwGradient grad;
        try {
            grad = bw_grad(target, q, est, method, rng);
        } catch (const NonFiniteWeight& e) {
            res.failure = std::string("non-finite weight at iteration ") + std::to_string(t) + ": " + e.what();
            break;
        }
        RunRecord rec = detail::snapshot(t, q, cfg.record_full_cov);
        rec.objective = grad.objective.value;
        rec.objective_se = grad.objective.std_error;
        rec.grad_a_norm = grad.a.norm();
        rec.grad_S_fro = grad.S.norm();
        rec.eta_effective = clip_step(cfg.eta, grad.S);
        rec.clipped = rec.eta_effective < cfg.eta;

        q = retract(q, TangentVector{grad.a, grad.S}, rec.eta_effective);
        assert((q.chol().diagonal().array() > 0.0).all());
        if (cfg.record_wallclock) rec.wallclock_ms = clock.ms();
        res.trace.push_back(std::move(rec));
        if (stop.update(res.trace.back().objective)) {
            res.converged = true;
            break;
        }
    }
    res.final_state = q;
    return res;
}

namespace detail {

// Shared ADAM loop over the Cholesky parameterization; K importance samples per batch.
inline RunResult run_adam(const TargetModel& target, const GaussianState& init, const OptimizerConfig& cfg, bool diagonal,
                          int K) {
    cfg.validate();
    require_dim(init.dim(), target.dim(), "run_adam");
    CholeskyParams params = CholeskyParams::from_state(init, diagonal);
    const auto d = params.dim();
    Eigen::VectorXd flat = params.pack();
    Adam adam(flat.size(), cfg.adam);

    RunResult res{params.state(), {}, false, std::nullopt};
    StoppingRule stop(cfg.stop_tol, cfg.stop_window);
    Stopwatch clock;
    Eigen::VectorXd values(cfg.M);
    for (int t = 0; t < cfg.max_iters; ++t) {
        Rng rng = substream(iteration_key(cfg.seed, t));
        Eigen::VectorXd gm = Eigen::VectorXd::Zero(d);
        Eigen::MatrixXd gr = Eigen::MatrixXd::Zero(d, d);
        try {
            for (int r = 0; r < cfg.M; ++r) {
                const EuclideanGradient g = iwelbo_reparam_grad(target, params, standard_normal(rng, K, d));
                gm += g.mean;
                gr += g.raw;
                values[r] = g.value;
            }
        } catch (const NonFiniteWeight& e) {
            res.failure = std::string("non-finite weight at iteration ") + std::to_string(t) + ": " + e.what();
            break;
        }
        gm /= cfg.M;
        gr /= cfg.M;

        const GaussianState q = params.state();
        const ObjectiveEstimate obj = summarize_replicates(values, K, 0.0);
        RunRecord rec = snapshot(t, q, cfg.record_full_cov);
        rec.objective = obj.value;
        rec.objective_se = obj.std_error;
        rec.grad_a_norm = gm.norm();
        rec.grad_S_fro = gr.norm();
        rec.eta_effective = cfg.adam.lr;

        adam.ascend(flat, params.pack(gm, gr));
        params.unpack(flat);
        if (cfg.record_wallclock) rec.wallclock_ms = clock.ms();
        res.trace.push_back(std::move(rec));
        if (stop.update(res.trace.back().objective)) {
            res.converged = true;
            break;
        }
    }
    res.final_state = params.state();
    return res;
}

}  // namespace detail

/// Euclidean baseline: ADAM on (m, L) with the reparameterized IW-ELBO_K gradient.
inline RunResult run_adam_full(const TargetModel& target, const GaussianState& init, const OptimizerConfig& cfg) {
    return detail::run_adam(target, init, cfg, false, cfg.K);
}

/// Mean-field baseline: diagonal Gaussian, reparameterized ELBO gradient (K = 1 regardless of cfg.K).
inline RunResult run_mfvb(const TargetModel& target, const GaussianState& init, const OptimizerConfig& cfg) {
    if (cfg.max_iters == 0) {
        Eigen::MatrixXd diag = init.covariance().diagonal().asDiagonal();
        return RunResult{GaussianState(init.mean(), diag), {}, false, std::nullopt};
    }
    return detail::run_adam(target, init, cfg, true, 1);
}

inline RunResult run_method(const TargetModel& target, const GaussianState& init, const OptimizerConfig& cfg) {
    switch (cfg.method) {
        case Method::bw: return run_bw(target, init, cfg);
        case Method::adam_full: return run_adam_full(target, init, cfg);
        case Method::adam_meanfield: return run_mfvb(target, init, cfg);
    }
    throw InvalidArgument("unknown method");
}

}  // namespace bwvi
