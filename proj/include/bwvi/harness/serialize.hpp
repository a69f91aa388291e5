#pragma once

#include "bwvi/diagnostics.hpp"
#include "bwvi/error.hpp"
#include "bwvi/gaussian.hpp"
#include "bwvi/optimizers.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace bwvi::harness {

using json = nlohmann::ordered_json;

inline json to_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

inline json to_json(const Eigen::MatrixXd& m) {
    json a = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(to_json(Eigen::VectorXd(m.row(i).transpose())));
    return a;
}

inline Eigen::VectorXd vector_from_json(const json& j) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    return v;
}

inline Eigen::MatrixXd matrix_from_json(const json& j) {
    if (j.empty()) return {};
    Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (j[i].size() != static_cast<std::size_t>(m.cols())) throw ParseError("json: ragged matrix");
        m.row(static_cast<Eigen::Index>(i)) = vector_from_json(j[i]).transpose();
    }
    return m;
}

// ---------------------------------------------------------------------------

inline json to_json(const GaussianState& q) { return {{"mean", to_json(q.mean())}, {"cov", to_json(q.covariance())}}; }

inline GaussianState gaussian_from_json(const json& j) {
    return GaussianState(vector_from_json(j.at("mean")), matrix_from_json(j.at("cov")));
}

/// One trace line. The optional full covariance is appended when recorded.
inline json to_json(const RunRecord& r) {
    json j{{"iter", r.iter},
           {"objective", r.objective},
           {"objective_se", r.objective_se},
           {"mean", to_json(r.mean)},
           {"cov_diag", to_json(r.cov_diag)},
           {"logdet_cov", r.logdet_cov},
           {"grad_a_norm", r.grad_a_norm},
           {"grad_S_fro", r.grad_S_fro},
           {"eta_effective", r.eta_effective},
           {"wallclock_ms", r.wallclock_ms}};
    if (r.clipped) j["clipped"] = true;
    if (r.cov) j["cov"] = to_json(*r.cov);
    return j;
}

inline RunRecord run_record_from_json(const json& j) {
    RunRecord r;
    r.iter = j.at("iter").get<int>();
    r.objective = j.at("objective").get<double>();
    r.objective_se = j.at("objective_se").get<double>();
    r.mean = vector_from_json(j.at("mean"));
    r.cov_diag = vector_from_json(j.at("cov_diag"));
    r.logdet_cov = j.at("logdet_cov").get<double>();
    r.grad_a_norm = j.at("grad_a_norm").get<double>();
    r.grad_S_fro = j.at("grad_S_fro").get<double>();
    r.eta_effective = j.at("eta_effective").get<double>();
    r.wallclock_ms = j.at("wallclock_ms").get<double>();
    r.clipped = j.value("clipped", false);
    if (j.contains("cov")) r.cov = matrix_from_json(j.at("cov"));
    return r;
}

inline bool same_record(const RunRecord& a, const RunRecord& b) {
    return a.iter == b.iter && a.objective == b.objective && a.objective_se == b.objective_se && a.mean == b.mean &&
           a.cov_diag == b.cov_diag && a.logdet_cov == b.logdet_cov && a.grad_a_norm == b.grad_a_norm &&
           a.grad_S_fro == b.grad_S_fro && a.eta_effective == b.eta_effective && a.clipped == b.clipped &&
           a.wallclock_ms == b.wallclock_ms && a.cov == b.cov;
}

inline json to_json(const IsDiagnostics& d) {
    return {{"ess", d.ess}, {"elbo_hat", d.elbo_hat}, {"elbo_se", d.elbo_se}, {"M", d.M},
            {"is_mean", to_json(d.is_mean)}, {"is_cov", to_json(d.is_cov)}};
}

inline IsDiagnostics is_diagnostics_from_json(const json& j) {
    IsDiagnostics d;
    d.ess = j.at("ess").get<double>();
    d.elbo_hat = j.at("elbo_hat").get<double>();
    d.elbo_se = j.at("elbo_se").get<double>();
    d.M = j.at("M").get<int>();
    d.is_mean = vector_from_json(j.at("is_mean"));
    d.is_cov = matrix_from_json(j.at("is_cov"));
    return d;
}

inline json to_json(const MomentMse& m) { return {{"mean", m.mean}, {"cov", m.cov}}; }

inline MomentMse moment_mse_from_json(const json& j) { return {j.at("mean").get<double>(), j.at("cov").get<double>()}; }

inline std::string_view to_string(SnrEstimator e) {
    return e == SnrEstimator::wasserstein ? "wasserstein" : "euclidean_mean";
}

inline json to_json(const SnrReport& r) {
    json excluded = json::array();
    for (Eigen::Index i = 0; i < r.excluded.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < r.excluded.cols(); ++j) row.push_back(r.excluded(i, j));
        excluded.push_back(row);
    }
    json coord = json::array();
    for (bool b : r.coordinate_excluded) coord.push_back(b);
    return {{"estimator", to_string(r.estimator)},
            {"Ks", r.Ks},
            {"reps", r.reps},
            {"M", r.M},
            {"alpha", r.alpha},
            {"snr", to_json(r.snr)},
            {"mean", to_json(r.mean)},
            {"sd", to_json(r.sd)},
            {"insignificant", excluded},
            {"slopes", to_json(r.slopes)},
            {"slope_se", to_json(r.slope_se)},
            {"coordinate_excluded", coord}};
}

inline SnrReport snr_report_from_json(const json& j) {
    SnrReport r;
    r.estimator = j.at("estimator").get<std::string>() == "wasserstein" ? SnrEstimator::wasserstein : SnrEstimator::euclidean_mean;
    r.Ks = j.at("Ks").get<std::vector<int>>();
    r.reps = j.at("reps").get<int>();
    r.M = j.at("M").get<int>();
    r.alpha = j.at("alpha").get<double>();
    r.snr = matrix_from_json(j.at("snr"));
    r.mean = matrix_from_json(j.at("mean"));
    r.sd = matrix_from_json(j.at("sd"));
    const json& ex = j.at("insignificant");
    r.excluded.resize(static_cast<Eigen::Index>(ex.size()), ex.empty() ? 0 : static_cast<Eigen::Index>(ex[0].size()));
    for (std::size_t i = 0; i < ex.size(); ++i)
        for (std::size_t k = 0; k < ex[i].size(); ++k)
            r.excluded(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = ex[i][k].get<int>();
    r.slopes = vector_from_json(j.at("slopes"));
    r.slope_se = vector_from_json(j.at("slope_se"));
    r.coordinate_excluded = j.at("coordinate_excluded").get<std::vector<bool>>();
    return r;
}

inline bool same_report(const SnrReport& a, const SnrReport& b) {
    return a.Ks == b.Ks && a.reps == b.reps && a.M == b.M && a.alpha == b.alpha && a.estimator == b.estimator &&
           a.snr == b.snr && a.mean == b.mean && a.sd == b.sd && a.excluded == b.excluded && a.slopes == b.slopes &&
           a.slope_se == b.slope_se && a.coordinate_excluded == b.coordinate_excluded;
}

}  // namespace bwvi::harness
