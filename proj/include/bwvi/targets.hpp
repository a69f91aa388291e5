#pragma once

#include "bwvi/error.hpp"
#include "bwvi/gaussian.hpp"
#include "bwvi/math.hpp"
#include "bwvi/random.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <string>
#include <vector>

namespace bwvi {

using VecRef = Eigen::Ref<const Eigen::VectorXd>;

/// Unnormalized target log-density log p(x, z) with analytic derivatives.
///
/// Optimizers and estimators only ever call log_unnorm / grad / hess.
/// log_normalizer() exists for test oracles on targets whose evidence is known.
class TargetModel {
public:
    virtual ~TargetModel() = default;

    virtual Eigen::Index dim() const = 0;
    virtual std::string name() const = 0;
    virtual double log_unnorm(const VecRef& z) const = 0;
    virtual Eigen::VectorXd grad_log_unnorm(const VecRef& z) const = 0;

    virtual bool has_hessian() const { return false; }
    virtual Eigen::MatrixXd hess_log_unnorm(const VecRef&) const {
        throw HessianUnavailable(name() + ": Hessian not available");
    }

    virtual bool has_log_normalizer() const { return false; }
    virtual double log_normalizer() const { throw Error(name() + ": log normalizer not available"); }
};

/// c * N(z; mean, cov), i.e. a Gaussian with evidence log c.
class GaussianTarget final : public TargetModel {
public:
    explicit GaussianTarget(GaussianState density, double log_scale = 0.0)
        : density_(std::move(density)), log_scale_(log_scale) {}

    Eigen::Index dim() const override { return density_.dim(); }
    std::string name() const override { return "gaussian"; }
    double log_unnorm(const VecRef& z) const override { return log_density(density_, z) + log_scale_; }
    Eigen::VectorXd grad_log_unnorm(const VecRef& z) const override { return grad_log_density(density_, z); }
    bool has_hessian() const override { return true; }
    Eigen::MatrixXd hess_log_unnorm(const VecRef&) const override { return hess_log_density(density_); }
    bool has_log_normalizer() const override { return true; }
    double log_normalizer() const override { return log_scale_; }

    const GaussianState& density() const { return density_; }

private:
    GaussianState density_;
    double log_scale_;
};

struct Moments {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

/// Finite Gaussian mixture sum_k w_k N(mu_k, Sigma_k). Normalized, so log_normalizer() = 0.
class EggboxGmm final : public TargetModel {
public:
    struct Component {
        double weight;
        GaussianState density;
    };

    explicit EggboxGmm(std::vector<Component> components) : comps_(std::move(components)) {
        require(!comps_.empty(), "EggboxGmm: at least one component required");
        double total = 0.0;
        for (const auto& c : comps_) {
            require(c.weight > 0.0 && c.weight <= 1.0, "EggboxGmm: weights must lie in (0, 1]");
            require_dim(comps_.front().density.dim(), c.density.dim(), "EggboxGmm component");
            total += c.weight;
        }
        require(std::abs(total - 1.0) <= 1e-12, "EggboxGmm: weights must sum to 1");
        for (const auto& c : comps_) log_weights_.push_back(std::log(c.weight));
    }

    /// Four equal components at (+-spacing, +-spacing) with identity covariances.
    static EggboxGmm symmetric(double spacing = 4.0) {
        std::vector<Component> cs;
        for (double sx : {-1.0, 1.0})
            for (double sy : {-1.0, 1.0})
                cs.push_back({0.25, GaussianState(Eigen::Vector2d(sx * spacing, sy * spacing), Eigen::Matrix2d::Identity())});
        return EggboxGmm(std::move(cs));
    }

    Eigen::Index dim() const override { return comps_.front().density.dim(); }
    std::string name() const override { return "eggbox"; }
    const std::vector<Component>& components() const { return comps_; }

    double log_unnorm(const VecRef& z) const override { return log_sum_exp(component_log_terms(z)); }

    Eigen::VectorXd grad_log_unnorm(const VecRef& z) const override {
        const Eigen::VectorXd r = responsibilities(z);
        Eigen::VectorXd g = Eigen::VectorXd::Zero(dim());
        for (std::size_t k = 0; k < comps_.size(); ++k)
            if (r[k] > 0.0) g += r[k] * grad_log_density(comps_[k].density, z);
        return g;
    }

    bool has_hessian() const override { return true; }
    Eigen::MatrixXd hess_log_unnorm(const VecRef& z) const override {
        const Eigen::VectorXd r = responsibilities(z);
        const auto d = dim();
        Eigen::VectorXd g = Eigen::VectorXd::Zero(d);
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
        for (std::size_t k = 0; k < comps_.size(); ++k) {
            if (r[k] == 0.0) continue;
            const Eigen::VectorXd gk = grad_log_density(comps_[k].density, z);
            g += r[k] * gk;
            h += r[k] * (gk * gk.transpose() + hess_log_density(comps_[k].density));
        }
        return symmetrize(h - g * g.transpose());
    }

    bool has_log_normalizer() const override { return true; }
    double log_normalizer() const override { return 0.0; }

private:
    Eigen::VectorXd component_log_terms(const VecRef& z) const {
        require_dim(dim(), z.size(), "eggbox");
        Eigen::VectorXd t(comps_.size());
        for (std::size_t k = 0; k < comps_.size(); ++k)
            t[static_cast<Eigen::Index>(k)] = log_weights_[k] + log_density(comps_[k].density, z);
        return t;
    }

    Eigen::VectorXd responsibilities(const VecRef& z) const {
        const Eigen::VectorXd t = component_log_terms(z);
        return (t.array() - log_sum_exp(t)).exp().matrix();
    }

    std::vector<Component> comps_;
    std::vector<double> log_weights_;
};

/// mu = sum_k w_k mu_k;  Sigma = sum_k w_k Sigma_k + sum_k w_k (mu_k - mu)(mu_k - mu)^T.
inline Moments mixture_moments(const EggboxGmm& t) {
    const auto d = t.dim();
    Moments m{Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Zero(d, d)};
    for (const auto& c : t.components()) m.mean += c.weight * c.density.mean();
    for (const auto& c : t.components()) {
        const Eigen::VectorXd dm = c.density.mean() - m.mean;
        m.cov += c.weight * (c.density.covariance() + dm * dm.transpose());
    }
    return m;
}

/// Banana-shaped density: base N(0, diag(100, 1, ..., 1)) evaluated at
/// phi(z) = (z1, z2 + b z1^2 - 100 b, z3, ...). phi has unit Jacobian, so the
/// target is normalized.
class BananaTarget final : public TargetModel {
public:
    explicit BananaTarget(Eigen::Index dim = 2, double b = 0.03) : base_(make_base(dim)), b_(b) {}

    Eigen::Index dim() const override { return base_.dim(); }
    std::string name() const override { return "banana"; }
    double curvature() const { return b_; }
    const GaussianState& base() const { return base_; }

    Eigen::VectorXd phi(const VecRef& z) const {
        require_dim(dim(), z.size(), "banana");
        Eigen::VectorXd u = z;
        u[1] += b_ * z[0] * z[0] - 100.0 * b_;
        return u;
    }

    double log_unnorm(const VecRef& z) const override { return log_density(base_, phi(z)); }

    Eigen::VectorXd grad_log_unnorm(const VecRef& z) const override {
        Eigen::VectorXd g = grad_log_density(base_, phi(z));
        // J_phi^T g: only d phi_2 / d z_1 = 2 b z_1 is off the identity.
        g[0] += 2.0 * b_ * z[0] * g[1];
        return g;
    }

    bool has_hessian() const override { return true; }
    Eigen::MatrixXd hess_log_unnorm(const VecRef& z) const override {
        const Eigen::VectorXd g = grad_log_density(base_, phi(z));
        Eigen::MatrixXd jac = Eigen::MatrixXd::Identity(dim(), dim());
        jac(1, 0) = 2.0 * b_ * z[0];
        Eigen::MatrixXd h = jac.transpose() * hess_log_density(base_) * jac;
        h(0, 0) += 2.0 * b_ * g[1];
        return symmetrize(h);
    }

    bool has_log_normalizer() const override { return true; }
    double log_normalizer() const override { return 0.0; }

private:
    static GaussianState make_base(Eigen::Index dim) {
        require(dim >= 2, "BananaTarget: dimension must be >= 2");
        Eigen::VectorXd var = Eigen::VectorXd::Ones(dim);
        var[0] = 100.0;
        return GaussianState(Eigen::VectorXd::Zero(dim), var.asDiagonal().toDenseMatrix());
    }

    GaussianState base_;
    double b_;
};

/// Exact moments of the banana: x1 ~ N(0, 100), x2 = u - b x1^2 + 100 b.
inline Moments banana_moments(const BananaTarget& t) {
    const auto d = t.dim();
    const double b = t.curvature();
    Moments m{Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Identity(d, d)};
    m.cov(0, 0) = 100.0;
    m.cov(1, 1) = 1.0 + 2.0 * b * b * 100.0 * 100.0;
    return m;
}

/// Bayesian logistic regression posterior with an isotropic N(0, prior_var I) prior.
class LogisticPosterior final : public TargetModel {
public:
    LogisticPosterior(Eigen::MatrixXd features, Eigen::VectorXd labels, double prior_var = 10.0)
        : x_(std::move(features)), y_(std::move(labels)), prior_var_(prior_var) {
        require(x_.cols() >= 1, "LogisticPosterior: at least one feature required");
        require_dim(x_.rows(), y_.size(), "LogisticPosterior labels");
        require(prior_var_ > 0.0, "LogisticPosterior: prior variance must be positive");
        for (Eigen::Index i = 0; i < y_.size(); ++i)
            require(y_[i] == 0.0 || y_[i] == 1.0, "LogisticPosterior: labels must be 0 or 1");
    }

    Eigen::Index dim() const override { return x_.cols(); }
    std::string name() const override { return "logistic"; }
    const Eigen::MatrixXd& features() const { return x_; }
    const Eigen::VectorXd& labels() const { return y_; }
    double prior_var() const { return prior_var_; }

    double log_unnorm(const VecRef& theta) const override {
        check(theta);
        const Eigen::VectorXd u = x_ * theta;
        double s = 0.0;
        for (Eigen::Index i = 0; i < u.size(); ++i)
            s += y_[i] == 1.0 ? log_sigmoid(u[i]) : log_sigmoid(-u[i]);
        return s - theta.squaredNorm() / (2.0 * prior_var_);
    }

    Eigen::VectorXd grad_log_unnorm(const VecRef& theta) const override {
        check(theta);
        Eigen::VectorXd r = x_ * theta;
        for (Eigen::Index i = 0; i < r.size(); ++i) r[i] = y_[i] - sigmoid(r[i]);
        return x_.transpose() * r - theta / prior_var_;
    }

    bool has_hessian() const override { return true; }
    Eigen::MatrixXd hess_log_unnorm(const VecRef& theta) const override {
        check(theta);
        Eigen::VectorXd wts = x_ * theta;
        for (Eigen::Index i = 0; i < wts.size(); ++i) {
            const double s = sigmoid(wts[i]);
            wts[i] = s * (1.0 - s);
        }
        Eigen::MatrixXd h = -(x_.transpose() * wts.asDiagonal() * x_);
        h.diagonal().array() -= 1.0 / prior_var_;
        return symmetrize(h);
    }

private:
    void check(const VecRef& theta) const { require_dim(x_.cols(), theta.size(), "logistic"); }

    Eigen::MatrixXd x_;
    Eigen::VectorXd y_;
    double prior_var_;
};

/// Synthetic logistic data: i.i.d. N(0, 1) features, labels ~ Bernoulli(sigma(x^T true_theta)).
inline LogisticPosterior synth_logistic(Eigen::Index n, Eigen::Index d, Rng& rng,
                                        const Eigen::VectorXd& true_theta, double prior_var = 10.0) {
    require(n >= 1 && d >= 1, "synth_logistic: n and d must be >= 1");
    require_dim(d, true_theta.size(), "synth_logistic true_theta");
    Eigen::MatrixXd x = standard_normal(rng, n, d);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y[i] = uniform01(rng) < sigmoid(x.row(i).dot(true_theta)) ? 1.0 : 0.0;
    return LogisticPosterior(std::move(x), std::move(y), prior_var);
}

}  // namespace bwvi
