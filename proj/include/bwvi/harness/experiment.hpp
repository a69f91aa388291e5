#pragma once

#include "bwvi/bwvi.hpp"
#include "bwvi/harness/config.hpp"
#include "bwvi/harness/contour.hpp"
#include "bwvi/harness/serialize.hpp"

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace bwvi::harness {

inline constexpr const char* kVersion = "0.1.0";

/// Refusal to overwrite outputs that were produced by a different config.
class OutputConflict : public Error {
public:
    using Error::Error;
};

enum class Command { run, snr, contour };

struct RunOptions {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    bool force = false;
    int threads = 1;
};

struct RunEntry {
    std::string method;
    std::uint64_t seed = 0;
    std::vector<std::string> files;
    std::optional<std::string> failure;
};

struct ExperimentOutcome {
    std::filesystem::path output_dir;
    std::vector<RunEntry> runs;
    std::vector<std::string> files;  // every file written, relative to output_dir

    bool ok() const {
        for (const auto& r : runs)
            if (r.failure) return false;
        return true;
    }
};

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Runs `fn(i)` for i in [0, n) on up to `threads` workers.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    const auto workers = static_cast<std::size_t>(std::max(1, threads));
    if (workers == 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < std::min(workers, n); ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        std::lock_guard lock(error_mutex);
                        if (!error) error = std::current_exception();
                    }
                }
            });
    }
    if (error) std::rethrow_exception(error);
}

namespace detail {

struct SeedContext {
    std::uint64_t seed = 0;
    std::size_t index = 0;
    std::shared_ptr<const TargetModel> target;
    std::optional<Moments> reference;
    GaussianState init = GaussianState::standard(1);
};

inline std::uint64_t seed_key(const ExperimentConfig& cfg, std::uint64_t seed, std::string_view purpose) {
    return mix_key(seed, {hash64(cfg.experiment), hash64(purpose)});
}

struct LoadedData {
    Eigen::MatrixXd features;
    Eigen::VectorXd labels;
};

inline LoadedData load_logistic_data(const ExperimentConfig& cfg) {
    const TargetSpec& t = cfg.target;
    Dataset ds;
    try {
        ds = load_dataset((cfg.base_dir / t.data).string(), t.dataset);
    } catch (const MissingColumn& e) {
        throw ConfigError(std::string("target.label_column: ") + e.what());
    }
    return {preprocess(ds.features, t.dataset.pca_components, ds.feature_names), ds.labels};
}

inline std::shared_ptr<const TargetModel> make_target(const ExperimentConfig& cfg, std::uint64_t seed,
                                                      const std::optional<LoadedData>& data) {
    const TargetSpec& t = cfg.target;
    if (t.kind == "gaussian") return std::make_shared<GaussianTarget>(GaussianState(t.mean, t.cov), t.log_scale);
    if (t.kind == "eggbox") return std::make_shared<EggboxGmm>(EggboxGmm::symmetric(t.spacing));
    if (t.kind == "banana") return std::make_shared<BananaTarget>(t.dim, t.b);
    if (data) return std::make_shared<LogisticPosterior>(data->features, data->labels, t.prior_var);
    Rng rng = substream(seed_key(cfg, seed, "data"));
    Eigen::VectorXd theta = standard_normal(rng, t.d, 1).col(0);
    theta *= t.theta_norm / theta.norm();
    return std::make_shared<LogisticPosterior>(synth_logistic(t.n, t.d, rng, theta, t.prior_var));
}

inline std::optional<Moments> reference_moments(const TargetModel& target) {
    if (const auto* g = dynamic_cast<const GaussianTarget*>(&target)) return Moments{g->density().mean(), g->density().covariance()};
    if (const auto* e = dynamic_cast<const EggboxGmm*>(&target)) return mixture_moments(*e);
    if (const auto* b = dynamic_cast<const BananaTarget*>(&target)) return banana_moments(*b);
    return std::nullopt;
}

inline GaussianState make_init(const ExperimentConfig& cfg, std::uint64_t seed, Eigen::Index d) {
    Eigen::VectorXd mean = cfg.q.mean.value_or(Eigen::VectorXd::Zero(d));
    if (mean.size() != d) throw ConfigError("q.mean: expected " + std::to_string(d) + " entries");
    Eigen::MatrixXd cov = cfg.q.cov.value_or(Eigen::MatrixXd::Identity(d, d));
    if (cov.rows() != d) throw ConfigError("q.cov: expected dimension " + std::to_string(d));
    if (cfg.q.mean_jitter > 0.0) {
        Rng rng = substream(seed_key(cfg, seed, "init"));
        mean += cfg.q.mean_jitter * standard_normal(rng, d, 1).col(0);
    }
    return GaussianState(mean, cov);
}

inline std::vector<SeedContext> make_contexts(const ExperimentConfig& cfg) {
    std::optional<LoadedData> data;
    if (cfg.target.kind == "logistic" && !cfg.target.data.empty()) data = load_logistic_data(cfg);
    std::vector<SeedContext> out;
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
        SeedContext c;
        c.seed = cfg.seeds[i];
        c.index = i;
        c.target = make_target(cfg, c.seed, data);
        c.reference = reference_moments(*c.target);
        c.init = make_init(cfg, c.seed, c.target->dim());
        out.push_back(std::move(c));
    }
    return out;
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write " + p.string());
    out << s;
}

inline json read_json(const std::filesystem::path& p) {
    std::ifstream in(p);
    return json::parse(in);
}

/// Refuses to touch a directory whose outputs carry a different config hash.
inline void check_overwrite(const std::filesystem::path& dir, const std::string& hash, bool force) {
    if (force || !std::filesystem::exists(dir)) return;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (name != "index.json" && !name.ends_with(".summary.json")) continue;
        std::string found;
        try {
            found = read_json(entry.path()).at("config_hash").get<std::string>();
        } catch (const std::exception&) {
            found = "unreadable";
        }
        if (found != hash)
            throw OutputConflict(entry.path().string() + " was written by config " + found + ", current config is " + hash +
                                 "; pass --force to overwrite");
    }
}

inline json optimizer_json(const OptimizerConfig& o, const TargetModel& target) {
    json j{{"type", to_string(o.method)}, {"max_iters", o.max_iters}, {"M", o.M},
           {"stop_tol", o.stop_tol},     {"stop_window", o.stop_window}};
    if (o.method == Method::bw) {
        const GradMethod g = o.grad_method.value_or(target.has_hessian() ? GradMethod::hessian : GradMethod::stein);
        j["eta"] = o.eta;
        j["K"] = o.K;
        j["alpha"] = o.alpha;
        j["grad"] = to_string(g);
    } else {
        j["K"] = o.method == Method::adam_meanfield ? 1 : o.K;
        j["adam"] = {{"lr", o.adam.lr}, {"beta1", o.adam.beta1}, {"beta2", o.adam.beta2}, {"eps", o.adam.eps}};
    }
    return j;
}

inline json base_json(const ExperimentConfig& cfg, const std::string& hash) {
    json echo = json::object();
    for (const auto& [k, v] : cfg.echo) echo[k] = v;
    return {{"version", kVersion}, {"config_hash", hash}, {"experiment", cfg.experiment}, {"config", echo}};
}

inline json metadata_json(const ExperimentConfig& cfg) {
    json m{{"stopping_rule", "moving-average relative change below stop_tol for 3 consecutive checks"},
           {"step_clipping", "eta_effective = min(eta, 0.9 / ||S||_2)"},
           {"wallclock_recorded", cfg.wallclock}};
    if (cfg.target.kind == "logistic")
        m["preprocessing"] = cfg.target.data.empty() ? "synthetic features, i.i.d. standard normal" : "standardize then PCA";
    return m;
}

inline void write_objective_csv(const std::filesystem::path& p, const std::vector<RunRecord>& trace) {
    std::ostringstream s;
    s.precision(17);
    s << "iter,objective,objective_se\n";
    for (const auto& r : trace) s << r.iter << ',' << r.objective << ',' << r.objective_se << '\n';
    write_text(p, s.str());
}

inline GridBounds contour_bounds(const ExperimentConfig& cfg, const TargetModel& target) {
    if (cfg.contour.bounds_given)
        return {cfg.contour.x0, cfg.contour.x1, cfg.contour.y0, cfg.contour.y1, cfg.contour.nx, cfg.contour.ny};
    return default_bounds(target, cfg.contour.nx, cfg.contour.ny);
}

inline void write_contour(const std::filesystem::path& p, const ContourGrid& g) {
    std::ostringstream s;
    write_contour_csv(s, g);
    write_text(p, s.str());
}

inline RunEntry run_one(const ExperimentConfig& cfg, const SeedContext& ctx, std::size_t method_index,
                        const std::filesystem::path& dir, const std::string& hash) {
    const MethodSpec& spec = cfg.methods[method_index];
    const std::string stem = spec.name + "_seed" + std::to_string(ctx.seed);
    OptimizerConfig opt = spec.opt;
    opt.seed = mix_key(ctx.seed, {hash64(cfg.experiment), static_cast<std::uint64_t>(method_index),
                                  static_cast<std::uint64_t>(ctx.index)});
    opt.record_wallclock = cfg.wallclock;

    RunEntry entry{spec.name, ctx.seed, {}, std::nullopt};
    RunResult res{ctx.init, {}, false, std::nullopt};
    try {
        res = run_method(*ctx.target, ctx.init, opt);
    } catch (const Error& e) {
        res.failure = e.what();
    }

    std::ostringstream trace;
    for (const auto& r : res.trace) trace << to_json(r).dump() << '\n';
    write_text(dir / (stem + ".trace.jsonl"), trace.str());
    entry.files.push_back(stem + ".trace.jsonl");

    json summary = base_json(cfg, hash);
    summary["method"] = spec.name;
    summary["method_index"] = method_index;
    summary["seed"] = ctx.seed;
    summary["seed_index"] = ctx.index;
    summary["substream_key"] = hex64(opt.seed);
    summary["optimizer"] = optimizer_json(spec.opt, *ctx.target);
    summary["metadata"] = metadata_json(cfg);
    summary["iterations"] = res.trace.size();
    summary["converged"] = res.converged;
    summary["final_state"] = to_json(res.final_state);
    if (!res.trace.empty()) {
        summary["final_objective"] = res.trace.back().objective;
        summary["final_objective_se"] = res.trace.back().objective_se;
    }
    if (!res.failure) {
        try {
            Rng rng = substream(mix_key(opt.seed, hash64("diagnostics")));
            summary["is_diagnostics"] = to_json(is_diagnostics(*ctx.target, res.final_state, cfg.is_samples, rng));
        } catch (const Error& e) {
            res.failure = std::string("diagnostics: ") + e.what();
        }
    }
    if (ctx.reference) {
        summary["reference"] = {{"mean", to_json(ctx.reference->mean)}, {"cov", to_json(ctx.reference->cov)}};
        summary["moment_mse"] = to_json(moment_mse(res.final_state.mean(), res.final_state.covariance(),
                                                   ctx.reference->mean, ctx.reference->cov));
    }
    summary["failure"] = res.failure ? json(*res.failure) : json(nullptr);
    write_text(dir / (stem + ".summary.json"), summary.dump(2) + "\n");
    entry.files.push_back(stem + ".summary.json");

    if (cfg.emit_csv) {
        write_objective_csv(dir / (stem + ".objective.csv"), res.trace);
        entry.files.push_back(stem + ".objective.csv");
        if (cfg.target.kind == "eggbox" || cfg.target.kind == "banana") {
            write_contour(dir / (stem + ".contour.csv"), emit_contour_grid(res.final_state, contour_bounds(cfg, *ctx.target)));
            entry.files.push_back(stem + ".contour.csv");
        }
    }
    entry.failure = res.failure;
    return entry;
}

inline void write_snr_csv(const std::filesystem::path& p, const SnrReport& r) {
    std::ostringstream s;
    s.precision(17);
    s << "K,coordinate,snr,mean,sd,insignificant\n";
    for (Eigen::Index i = 0; i < r.snr.rows(); ++i)
        for (Eigen::Index j = 0; j < r.snr.cols(); ++j)
            s << r.Ks[static_cast<std::size_t>(i)] << ',' << j << ',' << r.snr(i, j) << ',' << r.mean(i, j) << ','
              << r.sd(i, j) << ',' << r.excluded(i, j) << '\n';
    write_text(p, s.str());
}

inline RunEntry run_snr_one(const ExperimentConfig& cfg, const SeedContext& ctx, const std::filesystem::path& dir,
                            const std::string& hash) {
    const SnrSpec& spec = *cfg.snr;
    const std::string stem = "snr_seed" + std::to_string(ctx.seed);
    RunEntry entry{"snr", ctx.seed, {}, std::nullopt};
    const Eigen::VectorXd z = spec.z.value_or(ctx.init.mean());
    if (z.size() != ctx.target->dim()) throw ConfigError("snr.z: expected " + std::to_string(ctx.target->dim()) + " entries");
    const std::uint64_t key = mix_key(ctx.seed, {hash64(cfg.experiment), hash64("snr"), static_cast<std::uint64_t>(ctx.index)});
    json out = base_json(cfg, hash);
    out["seed"] = ctx.seed;
    out["seed_index"] = ctx.index;
    out["substream_key"] = hex64(key);
    out["q"] = to_json(ctx.init);
    out["z"] = to_json(z);
    try {
        Rng rng = substream(key);
        const SnrReport rep = snr_sweep(*ctx.target, ctx.init, z, spec.sweep, rng);
        out["report"] = to_json(rep);
        if (cfg.emit_csv) {
            write_snr_csv(dir / (stem + ".csv"), rep);
            entry.files.push_back(stem + ".csv");
        }
    } catch (const Error& e) {
        entry.failure = e.what();
    }
    out["failure"] = entry.failure ? json(*entry.failure) : json(nullptr);
    write_text(dir / (stem + ".summary.json"), out.dump(2) + "\n");
    entry.files.insert(entry.files.begin(), stem + ".summary.json");
    return entry;
}

}  // namespace detail

/// Executes a parsed config. Files go to opts.out (or cfg.output_dir); every
/// summary and the index carry the config hash.
inline ExperimentOutcome run_experiment(ExperimentConfig cfg, Command cmd, const RunOptions& opts = {}) {
    if (opts.seed) override_seed(cfg, *opts.seed);
    const std::filesystem::path dir = opts.out ? std::filesystem::path(*opts.out) : std::filesystem::path(cfg.output_dir);
    const std::string hash = hex64(cfg.hash());
    if (cmd == Command::snr && !cfg.snr) throw ConfigError("snr: section required for the snr command");

    const std::vector<detail::SeedContext> contexts = detail::make_contexts(cfg);
    if (cmd == Command::contour && contexts.front().target->dim() < 2)
        throw ConfigError("target.kind: contour grids need a target of dimension >= 2");

    detail::check_overwrite(dir, hash, opts.force);
    std::filesystem::create_directories(dir);

    ExperimentOutcome outcome;
    outcome.output_dir = dir;
    const bool sweep = cmd == Command::snr || (cmd == Command::run && cfg.experiment == "snr_sweep");
    if (cmd == Command::contour) {
        const auto& ctx = contexts.front();
        const std::string target_file = "target.contour.csv";
        detail::write_contour(dir / target_file, emit_contour_grid(*ctx.target, detail::contour_bounds(cfg, *ctx.target)));
        outcome.files.push_back(target_file);
        for (const auto& c : contexts) {
            const std::string f = "q_init_seed" + std::to_string(c.seed) + ".contour.csv";
            detail::write_contour(dir / f, emit_contour_grid(c.init, detail::contour_bounds(cfg, *c.target)));
            outcome.files.push_back(f);
        }
    } else if (sweep) {
        outcome.runs.resize(contexts.size());
        parallel_for(contexts.size(), opts.threads,
                     [&](std::size_t i) { outcome.runs[i] = detail::run_snr_one(cfg, contexts[i], dir, hash); });
    } else {
        const std::size_t nm = cfg.methods.size();
        outcome.runs.resize(nm * contexts.size());
        parallel_for(outcome.runs.size(), opts.threads, [&](std::size_t i) {
            outcome.runs[i] = detail::run_one(cfg, contexts[i % contexts.size()], i / contexts.size(), dir, hash);
        });
        if (cfg.emit_csv && (cfg.target.kind == "eggbox" || cfg.target.kind == "banana")) {
            const auto& ctx = contexts.front();
            detail::write_contour(dir / "target.contour.csv",
                                  emit_contour_grid(*ctx.target, detail::contour_bounds(cfg, *ctx.target)));
            outcome.files.push_back("target.contour.csv");
        }
    }

    json index = detail::base_json(cfg, hash);
    index["command"] = cmd == Command::run ? "run" : cmd == Command::snr ? "snr" : "contour";
    json runs = json::array();
    for (const auto& r : outcome.runs) {
        runs.push_back({{"method", r.method}, {"seed", r.seed}, {"files", r.files},
                        {"failure", r.failure ? json(*r.failure) : json(nullptr)}});
        outcome.files.insert(outcome.files.end(), r.files.begin(), r.files.end());
    }
    index["runs"] = runs;
    outcome.files.push_back("index.json");
    index["files"] = outcome.files;
    detail::write_text(dir / "index.json", index.dump(2) + "\n");
    return outcome;
}

inline ExperimentOutcome run_experiment(const std::filesystem::path& config_path, Command cmd = Command::run,
                                        const RunOptions& opts = {}) {
    return run_experiment(load_config(config_path), cmd, opts);
}

}  // namespace bwvi::harness
