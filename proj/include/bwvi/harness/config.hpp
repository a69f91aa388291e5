#pragma once

#include "bwvi/dataset.hpp"
#include "bwvi/diagnostics.hpp"
#include "bwvi/error.hpp"
#include "bwvi/optimizers.hpp"
#include "bwvi/random.hpp"

#include <Eigen/Dense>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace bwvi::harness {

inline constexpr const char* kExperiments[] = {"eggbox", "banana", "logistic", "snr_sweep", "trace_compare"};

struct TargetSpec {
    std::string kind = "gaussian";  // gaussian | eggbox | banana | logistic
    // gaussian
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    double log_scale = 0.0;
    // eggbox
    double spacing = 4.0;
    // banana
    int dim = 2;
    double b = 0.03;
    // logistic: synthetic unless `data` names a CSV file
    int n = 2000;
    int d = 8;
    double theta_norm = 2.0;
    double prior_var = 10.0;
    std::string data;
    DatasetConfig dataset;
};

/// Initial q shared by every method of a seed. The mean is jittered per seed
/// by mean_jitter * N(0, I) when mean_jitter > 0.
struct InitSpec {
    std::optional<Eigen::VectorXd> mean;
    std::optional<Eigen::MatrixXd> cov;
    double mean_jitter = 0.0;
};

struct MethodSpec {
    std::string name;
    OptimizerConfig opt;
};

struct SnrSpec {
    SnrSweepConfig sweep;
    std::optional<Eigen::VectorXd> z;  // evaluation point; defaults to the q mean
};

struct ContourSpec {
    double x0 = 0.0, x1 = 0.0, y0 = 0.0, y1 = 0.0;
    int nx = 101, ny = 101;
    bool bounds_given = false;
};

struct ExperimentConfig {
    std::string experiment;
    TargetSpec target;
    InitSpec q;
    std::vector<MethodSpec> methods;
    std::vector<std::uint64_t> seeds;
    std::string output_dir;
    bool emit_json = true;
    bool emit_csv = false;
    bool wallclock = false;
    int is_samples = 10000;
    std::optional<SnrSpec> snr;
    ContourSpec contour;
    std::filesystem::path base_dir;  // directory of the config file, for relative paths
    std::map<std::string, std::string> echo;  // flattened "section.key" -> value, output_dir excluded

    /// FNV-1a of the canonical echo.
    std::uint64_t hash() const {
        std::string canon;
        for (const auto& [k, v] : echo) canon += k + "=" + v + "\n";
        return hash64(canon);
    }
};

namespace detail {

using boost::property_tree::ptree;

inline std::string key_name(const std::string& section, const std::string& key) {
    return section.empty() ? key : section + "." + key;
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',' || c == ';' || c == ' ' || c == '\t') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

inline double to_double(const std::string& key, const std::string& v) {
    double x = 0.0;
    if (!bwvi::detail::parse_double(bwvi::detail::trim(v), x)) throw ConfigError(key + ": expected a number, got '" + v + "'");
    return x;
}

inline long long to_int(const std::string& key, const std::string& v) {
    const double x = to_double(key, v);
    if (x != static_cast<double>(static_cast<long long>(x))) throw ConfigError(key + ": expected an integer, got '" + v + "'");
    return static_cast<long long>(x);
}

inline bool to_bool(const std::string& key, const std::string& v) {
    const std::string t = bwvi::detail::trim(v);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

inline Eigen::VectorXd to_vector(const std::string& key, const std::string& v) {
    const auto parts = split_list(v);
    if (parts.empty()) throw ConfigError(key + ": empty list");
    Eigen::VectorXd out(static_cast<Eigen::Index>(parts.size()));
    for (std::size_t i = 0; i < parts.size(); ++i) out[static_cast<Eigen::Index>(i)] = to_double(key, parts[i]);
    return out;
}

/// A single number (isotropic), d numbers (diagonal) or d*d numbers (row-major).
inline Eigen::MatrixXd to_matrix(const std::string& key, const std::string& v, Eigen::Index d) {
    const Eigen::VectorXd x = to_vector(key, v);
    if (x.size() == 1) return x[0] * Eigen::MatrixXd::Identity(d, d);
    if (x.size() == d) return x.asDiagonal();
    if (x.size() == d * d) return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(x.data(), d, d);
    throw ConfigError(key + ": expected 1, " + std::to_string(d) + " or " + std::to_string(d * d) + " numbers");
}

/// Reads the keys of one section, rejecting unknown ones.
class Section {
public:
    Section(std::string name, const ptree& tree, std::set<std::string> allowed) : name_(std::move(name)) {
        for (const auto& [k, child] : tree) {
            if (!child.empty()) continue;
            if (!allowed.contains(k)) throw ConfigError(key_name(name_, k) + ": unknown key");
            values_[k] = bwvi::detail::trim(child.data());
        }
    }

    bool has(const std::string& k) const { return values_.contains(k); }
    std::string key(const std::string& k) const { return key_name(name_, k); }
    const std::string& str(const std::string& k) const { return values_.at(k); }

    double num(const std::string& k, double fallback) const { return has(k) ? to_double(key(k), str(k)) : fallback; }
    int integer(const std::string& k, int fallback) const {
        return has(k) ? static_cast<int>(to_int(key(k), str(k))) : fallback;
    }
    std::string text(const std::string& k, const std::string& fallback) const { return has(k) ? str(k) : fallback; }

private:
    std::string name_;
    std::map<std::string, std::string> values_;
};

inline Method parse_method_type(const std::string& key, const std::string& v) {
    if (v == "bw") return Method::bw;
    if (v == "adam_full") return Method::adam_full;
    if (v == "adam_meanfield" || v == "mfvb") return Method::adam_meanfield;
    throw ConfigError(key + ": unknown method type '" + v + "' (bw, adam_full, adam_meanfield)");
}

inline MethodSpec parse_method(const std::string& name, const ptree& tree) {
    const Section s("method:" + name, tree,
                    {"type", "K", "M", "alpha", "eta", "max_iters", "stop_tol", "stop_window", "grad", "lr", "beta1",
                     "beta2", "eps", "record_full_cov"});
    if (!s.has("type")) throw ConfigError(s.key("type") + ": missing");
    MethodSpec m;
    m.name = name;
    OptimizerConfig& o = m.opt;
    o.method = parse_method_type(s.key("type"), s.str("type"));
    o.K = s.integer("K", o.K);
    o.M = s.integer("M", o.M);
    o.alpha = s.num("alpha", o.alpha);
    o.eta = s.num("eta", o.eta);
    o.max_iters = s.integer("max_iters", o.max_iters);
    o.stop_tol = s.num("stop_tol", o.stop_tol);
    o.stop_window = s.integer("stop_window", o.stop_window);
    o.adam.lr = s.num("lr", o.adam.lr);
    o.adam.beta1 = s.num("beta1", o.adam.beta1);
    o.adam.beta2 = s.num("beta2", o.adam.beta2);
    o.adam.eps = s.num("eps", o.adam.eps);
    if (s.has("record_full_cov")) o.record_full_cov = to_bool(s.key("record_full_cov"), s.str("record_full_cov"));
    if (s.has("grad")) {
        const std::string g = s.str("grad");
        if (g == "hessian") o.grad_method = GradMethod::hessian;
        else if (g == "stein") o.grad_method = GradMethod::stein;
        else throw ConfigError(s.key("grad") + ": expected hessian or stein");
    }
    if (o.K < 1) throw ConfigError(s.key("K") + ": must be >= 1");
    if (o.M < 1) throw ConfigError(s.key("M") + ": must be >= 1");
    if (!(o.alpha >= 0.0 && o.alpha < 1.0)) throw ConfigError(s.key("alpha") + ": must lie in [0, 1)");
    if (!(o.eta > 0.0)) throw ConfigError(s.key("eta") + ": must be > 0");
    if (o.max_iters < 0) throw ConfigError(s.key("max_iters") + ": must be >= 0");
    if (o.stop_window < 2) throw ConfigError(s.key("stop_window") + ": must be >= 2");
    if (!(o.adam.lr > 0.0)) throw ConfigError(s.key("lr") + ": must be > 0");
    if (!(o.adam.beta1 >= 0.0 && o.adam.beta1 < 1.0)) throw ConfigError(s.key("beta1") + ": must lie in [0, 1)");
    if (!(o.adam.beta2 >= 0.0 && o.adam.beta2 < 1.0)) throw ConfigError(s.key("beta2") + ": must lie in [0, 1)");
    if (!(o.adam.eps > 0.0)) throw ConfigError(s.key("eps") + ": must be > 0");
    return m;
}

inline Eigen::Index target_dim(const TargetSpec& t) {
    if (t.kind == "gaussian") return t.mean.size();
    if (t.kind == "eggbox") return 2;
    if (t.kind == "banana") return t.dim;
    if (t.dataset.pca_components > 0) return t.dataset.pca_components;
    return t.d;  // data-backed dims are checked after loading
}

inline void flatten(const ptree& tree, const std::string& prefix, std::map<std::string, std::string>& out) {
    for (const auto& [k, child] : tree) {
        const std::string name = prefix.empty() ? k : prefix + "." + k;
        if (child.empty()) out[name] = bwvi::detail::trim(child.data());
        else flatten(child, name, out);
    }
}

}  // namespace detail

/// Parses an experiment description from INI text. Top-level keys: experiment,
/// seeds, output_dir, emit, wallclock, is_samples. Sections: [target], [q],
/// [method:NAME] (one per method, file order = method index), [snr], [contour].
inline ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {}) {
    using detail::ptree;
    ptree root;
    try {
        boost::property_tree::ini_parser::read_ini(in, root);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("config syntax: ") + e.message() + " (line " + std::to_string(e.line()) + ")");
    }

    ExperimentConfig cfg;
    cfg.base_dir = base_dir;
    detail::flatten(root, "", cfg.echo);
    cfg.echo.erase("output_dir");

    const detail::Section top("", root, {"experiment", "seeds", "output_dir", "emit", "wallclock", "is_samples"});
    for (const auto& [k, child] : root) {
        if (child.empty()) continue;
        if (k != "target" && k != "q" && k != "snr" && k != "contour" && k.rfind("method:", 0) != 0)
            throw ConfigError(k + ": unknown section");
    }

    if (!top.has("experiment")) throw ConfigError("experiment: missing");
    cfg.experiment = top.str("experiment");
    if (std::none_of(std::begin(kExperiments), std::end(kExperiments), [&](const char* e) { return cfg.experiment == e; }))
        throw ConfigError("experiment: unknown experiment '" + cfg.experiment + "'");

    if (!top.has("seeds")) throw ConfigError("seeds: missing");
    for (const auto& s : detail::split_list(top.str("seeds"))) {
        const long long v = detail::to_int("seeds", s);
        if (v < 0) throw ConfigError("seeds: must be non-negative");
        cfg.seeds.push_back(static_cast<std::uint64_t>(v));
    }
    if (cfg.seeds.empty()) throw ConfigError("seeds: list is empty");
    cfg.output_dir = top.text("output_dir", "out");
    if (top.has("emit")) {
        cfg.emit_json = cfg.emit_csv = false;
        for (const auto& e : detail::split_list(top.str("emit"))) {
            if (e == "json") cfg.emit_json = true;
            else if (e == "csv") cfg.emit_csv = true;
            else throw ConfigError("emit: unknown format '" + e + "' (json, csv)");
        }
        if (!cfg.emit_json) throw ConfigError("emit: json is required (traces and summaries are JSON)");
    }
    if (top.has("wallclock")) cfg.wallclock = detail::to_bool("wallclock", top.str("wallclock"));
    cfg.is_samples = top.integer("is_samples", cfg.is_samples);
    if (cfg.is_samples < 2) throw ConfigError("is_samples: must be >= 2");

    // [target]
    const ptree empty;
    const auto target_tree = root.get_child_optional("target");
    const detail::Section t("target", target_tree ? *target_tree : empty,
                            {"kind", "mean", "cov", "log_scale", "spacing", "dim", "b", "n", "d", "theta_norm",
                             "prior_var", "data", "label_column", "positive_label", "pca_components"});
    TargetSpec& ts = cfg.target;
    const std::map<std::string, std::string> default_kind{
        {"eggbox", "eggbox"}, {"banana", "banana"}, {"logistic", "logistic"}, {"snr_sweep", "banana"}, {"trace_compare", "gaussian"}};
    ts.kind = t.text("kind", default_kind.at(cfg.experiment));
    if (ts.kind != "gaussian" && ts.kind != "eggbox" && ts.kind != "banana" && ts.kind != "logistic")
        throw ConfigError("target.kind: unknown target '" + ts.kind + "'");
    if ((cfg.experiment == "eggbox" || cfg.experiment == "banana" || cfg.experiment == "logistic") && ts.kind != cfg.experiment)
        throw ConfigError("target.kind: experiment '" + cfg.experiment + "' requires target kind '" + cfg.experiment + "'");
    if (ts.kind == "gaussian") {
        ts.mean = t.has("mean") ? detail::to_vector(t.key("mean"), t.str("mean")) : Eigen::VectorXd::Zero(2);
        const auto d = ts.mean.size();
        ts.cov = t.has("cov") ? detail::to_matrix(t.key("cov"), t.str("cov"), d) : Eigen::MatrixXd::Identity(d, d);
        ts.log_scale = t.num("log_scale", 0.0);
        try {
            GaussianState check(ts.mean, ts.cov);
        } catch (const Error& e) {
            throw ConfigError(t.key("cov") + ": " + e.what());
        }
    } else if (ts.kind == "eggbox") {
        ts.spacing = t.num("spacing", ts.spacing);
        if (!(ts.spacing > 0.0)) throw ConfigError(t.key("spacing") + ": must be > 0");
    } else if (ts.kind == "banana") {
        ts.dim = t.integer("dim", ts.dim);
        ts.b = t.num("b", ts.b);
        if (ts.dim < 2) throw ConfigError(t.key("dim") + ": must be >= 2");
    } else {
        ts.n = t.integer("n", ts.n);
        ts.d = t.integer("d", ts.d);
        ts.theta_norm = t.num("theta_norm", ts.theta_norm);
        ts.prior_var = t.num("prior_var", ts.prior_var);
        if (ts.n < 1) throw ConfigError(t.key("n") + ": must be >= 1");
        if (ts.d < 1) throw ConfigError(t.key("d") + ": must be >= 1");
        if (!(ts.prior_var > 0.0)) throw ConfigError(t.key("prior_var") + ": must be > 0");
        if (t.has("data")) {
            ts.data = t.str("data");
            const std::filesystem::path p = base_dir / ts.data;
            if (!std::filesystem::exists(p)) throw ConfigError(t.key("data") + ": file not found: " + p.string());
            if (!t.has("label_column")) throw ConfigError(t.key("label_column") + ": required with target.data");
            ts.dataset.label_column = t.str("label_column");
            ts.dataset.positive_label = t.text("positive_label", "1");
            ts.dataset.pca_components = t.integer("pca_components", 0);
            if (ts.dataset.pca_components < 0) throw ConfigError(t.key("pca_components") + ": must be >= 0");
        }
    }
    const Eigen::Index d = detail::target_dim(ts);

    // [q]
    const auto q_tree = root.get_child_optional("q");
    const detail::Section qs("q", q_tree ? *q_tree : empty, {"mean", "cov", "mean_jitter"});
    if (qs.has("mean")) {
        cfg.q.mean = detail::to_vector(qs.key("mean"), qs.str("mean"));
        if (ts.data.empty() && cfg.q.mean->size() != d)
            throw ConfigError(qs.key("mean") + ": expected " + std::to_string(d) + " entries");
    }
    if (qs.has("cov")) {
        const Eigen::Index qd = cfg.q.mean ? cfg.q.mean->size() : d;
        cfg.q.cov = detail::to_matrix(qs.key("cov"), qs.str("cov"), qd);
        try {
            GaussianState check(Eigen::VectorXd::Zero(qd), *cfg.q.cov);
        } catch (const Error& e) {
            throw ConfigError(qs.key("cov") + ": " + e.what());
        }
    }
    cfg.q.mean_jitter = qs.num("mean_jitter", 0.0);
    if (cfg.q.mean_jitter < 0.0) throw ConfigError(qs.key("mean_jitter") + ": must be >= 0");

    // [method:NAME], in file order
    std::set<std::string> names;
    for (const auto& [k, child] : root) {
        if (k.rfind("method:", 0) != 0) continue;
        const std::string name = k.substr(7);
        if (name.empty() || name.find_first_of("/\\ ") != std::string::npos)
            throw ConfigError(k + ": method name must be non-empty without spaces or slashes");
        if (!names.insert(name).second) throw ConfigError(k + ": duplicate method");
        cfg.methods.push_back(detail::parse_method(name, child));
    }
    if (cfg.methods.empty() && cfg.experiment != "snr_sweep") throw ConfigError("method: at least one [method:NAME] section is required");

    // [snr]
    if (const auto snr_tree = root.get_child_optional("snr")) {
        const detail::Section s("snr", *snr_tree, {"Ks", "reps", "M", "alpha", "estimator", "z"});
        SnrSpec spec;
        if (s.has("Ks")) {
            spec.sweep.Ks.clear();
            for (const auto& v : detail::split_list(s.str("Ks"))) spec.sweep.Ks.push_back(static_cast<int>(detail::to_int(s.key("Ks"), v)));
        }
        for (std::size_t i = 0; i < spec.sweep.Ks.size(); ++i) {
            if (spec.sweep.Ks[i] < 2) throw ConfigError(s.key("Ks") + ": every K must be >= 2");
            if (i > 0 && spec.sweep.Ks[i] <= spec.sweep.Ks[i - 1]) throw ConfigError(s.key("Ks") + ": must be strictly increasing");
        }
        if (spec.sweep.Ks.empty()) throw ConfigError(s.key("Ks") + ": list is empty");
        spec.sweep.reps = s.integer("reps", spec.sweep.reps);
        spec.sweep.M = s.integer("M", spec.sweep.M);
        spec.sweep.alpha = s.num("alpha", spec.sweep.alpha);
        if (spec.sweep.reps < 200) throw ConfigError(s.key("reps") + ": must be >= 200");
        if (spec.sweep.M < 1) throw ConfigError(s.key("M") + ": must be >= 1");
        if (!(spec.sweep.alpha >= 0.0 && spec.sweep.alpha < 1.0)) throw ConfigError(s.key("alpha") + ": must lie in [0, 1)");
        const std::string est = s.text("estimator", "wasserstein");
        if (est == "wasserstein") spec.sweep.estimator = SnrEstimator::wasserstein;
        else if (est == "euclidean_mean") spec.sweep.estimator = SnrEstimator::euclidean_mean;
        else throw ConfigError(s.key("estimator") + ": expected wasserstein or euclidean_mean");
        if (spec.sweep.estimator == SnrEstimator::euclidean_mean && spec.sweep.alpha != 0.0)
            throw ConfigError(s.key("alpha") + ": the euclidean_mean estimator supports alpha = 0 only");
        if (s.has("z")) {
            spec.z = detail::to_vector(s.key("z"), s.str("z"));
            if (ts.data.empty() && spec.z->size() != d) throw ConfigError(s.key("z") + ": expected " + std::to_string(d) + " entries");
        }
        cfg.snr = spec;
    } else if (cfg.experiment == "snr_sweep") {
        throw ConfigError("snr: section required for experiment snr_sweep");
    }

    // [contour]
    if (const auto c_tree = root.get_child_optional("contour")) {
        const detail::Section s("contour", *c_tree, {"x0", "x1", "y0", "y1", "nx", "ny"});
        ContourSpec& c = cfg.contour;
        c.nx = s.integer("nx", c.nx);
        c.ny = s.integer("ny", c.ny);
        if (c.nx < 2) throw ConfigError(s.key("nx") + ": must be >= 2");
        if (c.ny < 2) throw ConfigError(s.key("ny") + ": must be >= 2");
        const int given = s.has("x0") + s.has("x1") + s.has("y0") + s.has("y1");
        if (given != 0 && given != 4) throw ConfigError("contour.x0: give all of x0, x1, y0, y1 or none");
        if (given == 4) {
            c.bounds_given = true;
            c.x0 = s.num("x0", 0.0);
            c.x1 = s.num("x1", 0.0);
            c.y0 = s.num("y0", 0.0);
            c.y1 = s.num("y1", 0.0);
            if (!(c.x1 > c.x0)) throw ConfigError(s.key("x1") + ": must exceed x0");
            if (!(c.y1 > c.y0)) throw ConfigError(s.key("y1") + ": must exceed y0");
        }
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    return parse_config(in, path.parent_path());
}

/// Replaces the seed list (CLI --seed) and refreshes the echo accordingly.
inline void override_seed(ExperimentConfig& cfg, std::uint64_t seed) {
    cfg.seeds = {seed};
    cfg.echo["seeds"] = std::to_string(seed);
}

}  // namespace bwvi::harness
