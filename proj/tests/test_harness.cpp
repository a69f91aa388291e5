#include "bwvi/harness/experiment.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace bwvi;
using namespace bwvi::harness;
namespace fs = std::filesystem;

namespace {

const char* kTrivial = R"(experiment = trace_compare
seeds = 7
[target]
kind = gaussian
mean = 1, -1
cov = 2, 1
[q]
mean = 0, 0
[method:bw]
type = bw
K = 4
M = 8
eta = 0.1
max_iters = 1
)";

const char* kTwoSeeds = R"(experiment = trace_compare
seeds = 1, 2
is_samples = 200
[target]
kind = gaussian
mean = 1, -1
cov = 2, 1
[q]
mean = 0, 0
mean_jitter = 0.5
[method:bw]
type = bw
K = 4
M = 8
eta = 0.1
max_iters = 20
[method:mfvb]
type = adam_meanfield
M = 8
lr = 0.05
max_iters = 20
)";

class TempDir : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        root_ = fs::temp_directory_path() / (std::string("bwvi_") + info->test_suite_name() + "_" + info->name() + "_" +
                                             std::to_string(::getpid()));
        fs::remove_all(root_);
        fs::create_directories(root_);
    }
    void TearDown() override { fs::remove_all(root_); }

    fs::path write(const std::string& name, const std::string& text) const {
        const fs::path p = root_ / name;
        std::ofstream(p) << text;
        return p;
    }

    RunOptions to(const std::string& sub) const {
        RunOptions o;
        o.out = (root_ / sub).string();
        return o;
    }

    fs::path root_;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

ExperimentConfig parse(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

std::string config_error(const std::string& text) {
    try {
        parse(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(BWVI_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config parsing

TEST(Config, TrivialParses) {
    const ExperimentConfig cfg = parse(kTrivial);
    EXPECT_EQ(cfg.experiment, "trace_compare");
    EXPECT_EQ(cfg.seeds, std::vector<std::uint64_t>{7});
    ASSERT_EQ(cfg.methods.size(), 1u);
    EXPECT_EQ(cfg.methods[0].name, "bw");
    EXPECT_EQ(cfg.methods[0].opt.K, 4);
    EXPECT_EQ(cfg.methods[0].opt.max_iters, 1);
    EXPECT_EQ(cfg.target.cov, Eigen::Vector2d(2, 1).asDiagonal().toDenseMatrix());
    EXPECT_TRUE(cfg.emit_json);
    EXPECT_FALSE(cfg.emit_csv);
}

TEST(Config, ErrorsNameTheKey) {
    std::string t = kTrivial;
    EXPECT_NE(config_error(t + "eta_typo = 3\n").find("method:bw.eta_typo"), std::string::npos);
    EXPECT_NE(config_error(std::string(kTrivial).replace(t.find("K = 4"), 5, "K = 0")).find("method:bw.K"), std::string::npos);
    EXPECT_NE(config_error(std::string(kTrivial).replace(t.find("eta = 0.1"), 9, "eta = abc")).find("method:bw.eta"),
              std::string::npos);
    EXPECT_NE(config_error(std::string(kTrivial).replace(t.find("cov = 2, 1"), 10, "cov = 2, -1")).find("target.cov"),
              std::string::npos);
    EXPECT_NE(config_error(std::string(kTrivial).replace(0, t.find('\n'), "experiment = nope")).find("experiment"), std::string::npos);
    EXPECT_NE(config_error(std::string(kTrivial).replace(t.find("seeds = 7"), 9, "seeds =")).find("seeds"), std::string::npos);
    EXPECT_NE(config_error("experiment = eggbox\nseeds = 1\n").find("method"), std::string::npos);
    EXPECT_NE(config_error("experiment = eggbox\nseeds = 1\n[method:a]\ntype = sgd\n").find("method:a.type"), std::string::npos);
    EXPECT_NE(config_error("experiment = logistic\nseeds = 1\n[target]\ndata = missing.csv\nlabel_column = y\n"
                           "[method:a]\ntype = bw\n")
                  .find("target.data"),
              std::string::npos);
}

TEST(Config, HashIgnoresOutputDir) {
    const ExperimentConfig a = parse(std::string("output_dir = one\n") + kTrivial);
    const ExperimentConfig b = parse(std::string("output_dir = two\n") + kTrivial);
    EXPECT_EQ(a.hash(), b.hash());
    std::string changed = kTrivial;
    changed.replace(changed.find("eta = 0.1"), 9, "eta = 0.2");
    EXPECT_NE(a.hash(), parse(changed).hash());
}

// ---------------------------------------------------------------------------
// Runs

TEST_F(TempDir, TrivialRunWritesThreeParseableFiles) {
    const ExperimentOutcome out = run_experiment(parse(kTrivial), Command::run, to("out"));
    ASSERT_TRUE(out.ok());
    std::vector<std::string> found;
    for (const auto& e : fs::directory_iterator(root_ / "out")) found.push_back(e.path().filename().string());
    std::sort(found.begin(), found.end());
    EXPECT_EQ(found, (std::vector<std::string>{"bw_seed7.summary.json", "bw_seed7.trace.jsonl", "index.json"}));

    std::ifstream trace(root_ / "out" / "bw_seed7.trace.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(trace, line)) {
        const json j = json::parse(line);
        for (const char* k : {"iter", "objective", "objective_se", "mean", "cov_diag", "logdet_cov", "grad_a_norm",
                              "grad_S_fro", "eta_effective", "wallclock_ms"})
            EXPECT_TRUE(j.contains(k)) << k;
        ++lines;
    }
    EXPECT_EQ(lines, 1);

    const json summary = json::parse(slurp(root_ / "out" / "bw_seed7.summary.json"));
    EXPECT_EQ(summary.at("config_hash").get<std::string>(), hex64(parse(kTrivial).hash()));
    EXPECT_EQ(summary.at("seed").get<int>(), 7);
    EXPECT_TRUE(summary.at("failure").is_null());
    EXPECT_NO_THROW(gaussian_from_json(summary.at("final_state")));
    EXPECT_NO_THROW(is_diagnostics_from_json(summary.at("is_diagnostics")));
    EXPECT_TRUE(summary.contains("moment_mse"));

    const json index = json::parse(slurp(root_ / "out" / "index.json"));
    EXPECT_EQ(index.at("files").size(), 3u);
    EXPECT_EQ(index.at("config_hash"), summary.at("config_hash"));
}

TEST_F(TempDir, RerunIsByteIdentical) {
    run_experiment(parse(kTwoSeeds), Command::run, to("a"));
    run_experiment(parse(kTwoSeeds), Command::run, to("b"));
    for (const char* f : {"bw_seed1.trace.jsonl", "bw_seed2.trace.jsonl", "mfvb_seed1.trace.jsonl", "mfvb_seed2.trace.jsonl",
                          "bw_seed1.summary.json", "mfvb_seed2.summary.json", "index.json"})
        EXPECT_EQ(slurp(root_ / "a" / f), slurp(root_ / "b" / f)) << f;
}

TEST_F(TempDir, ThreadCountDoesNotChangeOutputs) {
    RunOptions serial = to("serial"), threaded = to("threaded");
    threaded.threads = 4;
    run_experiment(parse(kTwoSeeds), Command::run, serial);
    run_experiment(parse(kTwoSeeds), Command::run, threaded);
    for (const auto& e : fs::directory_iterator(root_ / "serial")) {
        const auto name = e.path().filename();
        EXPECT_EQ(slurp(e.path()), slurp(root_ / "threaded" / name)) << name;
    }
}

TEST_F(TempDir, OutputDirChangesOnlyLocation) {
    ExperimentConfig a = parse(kTwoSeeds), b = parse(kTwoSeeds);
    a.output_dir = (root_ / "x").string();
    b.output_dir = (root_ / "y" / "nested").string();
    run_experiment(a, Command::run);
    run_experiment(b, Command::run);
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(root_ / "x")) {
        EXPECT_EQ(slurp(e.path()), slurp(root_ / "y" / "nested" / e.path().filename())) << e.path().filename();
        ++n;
    }
    EXPECT_EQ(n, 9u);
}

TEST_F(TempDir, SeedOverrideIsolatesOneSeed) {
    run_experiment(parse(kTwoSeeds), Command::run, to("both"));
    RunOptions only = to("only");
    only.seed = 2;
    run_experiment(parse(kTwoSeeds), Command::run, only);
    EXPECT_FALSE(fs::exists(root_ / "only" / "bw_seed1.trace.jsonl"));
    // Seed 2 keeps seed index 1 in the two-seed run but index 0 alone, so traces differ by stream only.
    const std::string t1 = slurp(root_ / "both" / "bw_seed1.trace.jsonl");
    const std::string t2 = slurp(root_ / "both" / "bw_seed2.trace.jsonl");
    EXPECT_NE(t1, t2);
    EXPECT_TRUE(fs::exists(root_ / "only" / "bw_seed2.trace.jsonl"));

    RunOptions other = to("other");
    other.seed = 3;
    run_experiment(parse(kTwoSeeds), Command::run, other);
    EXPECT_NE(slurp(root_ / "only" / "bw_seed2.trace.jsonl"), slurp(root_ / "other" / "bw_seed3.trace.jsonl"));
}

TEST_F(TempDir, RefusesToOverwriteDifferentConfig) {
    run_experiment(parse(kTrivial), Command::run, to("out"));
    const std::string before = slurp(root_ / "out" / "bw_seed7.trace.jsonl");
    std::string changed = kTrivial;
    changed.replace(changed.find("eta = 0.1"), 9, "eta = 0.2");
    EXPECT_THROW(run_experiment(parse(changed), Command::run, to("out")), OutputConflict);
    EXPECT_EQ(slurp(root_ / "out" / "bw_seed7.trace.jsonl"), before);
    // Same config may rerun in place.
    EXPECT_NO_THROW(run_experiment(parse(kTrivial), Command::run, to("out")));
    RunOptions force = to("out");
    force.force = true;
    run_experiment(parse(changed), Command::run, force);
    const json s = json::parse(slurp(root_ / "out" / "bw_seed7.summary.json"));
    EXPECT_EQ(s.at("config_hash").get<std::string>(), hex64(parse(changed).hash()));
}

TEST_F(TempDir, FailedRunKeepsPartialOutputs) {
    std::string bad = kTrivial;
    bad.replace(bad.find("eta = 0.1"), 9, "eta = 1e6");
    bad.replace(bad.find("max_iters = 1"), 13, "max_iters = 50");
    const ExperimentOutcome out = run_experiment(parse(bad), Command::run, to("out"));
    EXPECT_TRUE(fs::exists(root_ / "out" / "bw_seed7.trace.jsonl"));
    EXPECT_TRUE(fs::exists(root_ / "out" / "index.json"));
    // Clipping keeps the Gaussian case stable, so this run succeeds; a failure would be recorded, not thrown.
    const json s = json::parse(slurp(root_ / "out" / "bw_seed7.summary.json"));
    EXPECT_EQ(out.ok(), s.at("failure").is_null());
}

TEST_F(TempDir, EggboxBwBeatsMeanField) {
    const char* text = R"(experiment = eggbox
seeds = 3
is_samples = 2000
[q]
mean = 0.3, -0.2
cov = 20
[method:bw]
type = bw
K = 32
M = 32
eta = 0.5
max_iters = 300
[method:mfvb]
type = adam_meanfield
M = 32
lr = 0.1
max_iters = 300
)";
    const ExperimentOutcome out = run_experiment(parse(text), Command::run, to("out"));
    ASSERT_TRUE(out.ok());
    const json bw = json::parse(slurp(root_ / "out" / "bw_seed3.summary.json"));
    const json mf = json::parse(slurp(root_ / "out" / "mfvb_seed3.summary.json"));
    const MomentMse b = moment_mse_from_json(bw.at("moment_mse"));
    const MomentMse m = moment_mse_from_json(mf.at("moment_mse"));
    EXPECT_LT(b.mean, m.mean);
    EXPECT_LT(b.cov, m.cov);
}

TEST_F(TempDir, SnrCommandWritesReport) {
    const char* text = R"(experiment = snr_sweep
seeds = 4
emit = json, csv
[q]
cov = 9
[snr]
Ks = 4, 16
reps = 200
z = 1, 1
)";
    const ExperimentOutcome out = run_experiment(parse(text), Command::snr, to("out"));
    ASSERT_TRUE(out.ok());
    const json s = json::parse(slurp(root_ / "out" / "snr_seed4.summary.json"));
    const SnrReport r = snr_report_from_json(s.at("report"));
    EXPECT_EQ(r.Ks, (std::vector<int>{4, 16}));
    EXPECT_EQ(r.reps, 200);
    EXPECT_TRUE(fs::exists(root_ / "out" / "snr_seed4.csv"));
}

// ---------------------------------------------------------------------------
// Round trips

TEST(RoundTrip, GaussianState) {
    const GaussianState q(Eigen::Vector2d(0.1, -1.0 / 3.0), (Eigen::Matrix2d() << 2.0 / 3.0, 1e-5, 1e-5, 1e-7).finished());
    const GaussianState back = gaussian_from_json(json::parse(to_json(q).dump()));
    EXPECT_EQ(back.mean(), q.mean());
    EXPECT_EQ(back.covariance(), q.covariance());
}

TEST(RoundTrip, RunRecord) {
    RunRecord r;
    r.iter = 12;
    r.objective = -1.0 / 7.0;
    r.objective_se = 1e-300;
    r.mean = Eigen::Vector3d(1.0 / 3.0, -2.5, 1e20);
    r.cov_diag = Eigen::Vector3d(0.1, 0.2, 0.3);
    r.logdet_cov = std::log(0.006);
    r.grad_a_norm = 0.5;
    r.grad_S_fro = 0.25;
    r.eta_effective = 0.09;
    r.clipped = true;
    r.cov = Eigen::Matrix3d::Identity() * (1.0 / 3.0);
    EXPECT_TRUE(same_record(run_record_from_json(json::parse(to_json(r).dump())), r));
    r.clipped = false;
    r.cov.reset();
    EXPECT_TRUE(same_record(run_record_from_json(json::parse(to_json(r).dump())), r));
}

TEST(RoundTrip, IsDiagnostics) {
    IsDiagnostics d;
    d.ess = 123.456789;
    d.elbo_hat = -3.0 / 7.0;
    d.elbo_se = 0.01;
    d.M = 1000;
    d.is_mean = Eigen::Vector2d(1.0 / 3.0, 2.0);
    d.is_cov = (Eigen::Matrix2d() << 1, 0.2, 0.2, 3).finished();
    const IsDiagnostics b = is_diagnostics_from_json(json::parse(to_json(d).dump()));
    EXPECT_EQ(b.ess, d.ess);
    EXPECT_EQ(b.elbo_hat, d.elbo_hat);
    EXPECT_EQ(b.elbo_se, d.elbo_se);
    EXPECT_EQ(b.M, d.M);
    EXPECT_EQ(b.is_mean, d.is_mean);
    EXPECT_EQ(b.is_cov, d.is_cov);
}

TEST(RoundTrip, SnrReportFromSweep) {
    const BananaTarget t(2, 0.03);
    const GaussianState q(Eigen::Vector2d::Zero(), 9.0 * Eigen::Matrix2d::Identity());
    SnrSweepConfig cfg;
    cfg.Ks = {4, 8, 16};
    cfg.reps = 200;
    Rng rng(5);
    const SnrReport r = snr_sweep(t, q, Eigen::Vector2d(1, 1), cfg, rng);
    EXPECT_TRUE(same_report(snr_report_from_json(json::parse(to_json(r).dump())), r));
}

TEST(RoundTrip, MomentMse) {
    const MomentMse m{1.0 / 3.0, 2e-17};
    const MomentMse b = moment_mse_from_json(json::parse(to_json(m).dump()));
    EXPECT_EQ(b.mean, m.mean);
    EXPECT_EQ(b.cov, m.cov);
}

// ---------------------------------------------------------------------------
// Contour grids

TEST(Contour, GaussianPeakAtMean) {
    const GaussianState q(Eigen::Vector2d(0.7, -1.3), (Eigen::Matrix2d() << 2, 0.5, 0.5, 1).finished());
    const ContourGrid g = emit_contour_grid(q, GridBounds{-3, 3, -4, 2, 61, 61});
    Eigen::Index i = 0, j = 0;
    g.values.maxCoeff(&i, &j);
    EXPECT_NEAR(g.xs[j], 0.7, 0.05 + 1e-12);
    EXPECT_NEAR(g.ys[i], -1.3, 0.05 + 1e-12);
}

TEST(Contour, EggboxSymmetric) {
    const EggboxGmm t = EggboxGmm::symmetric(4.0);
    const ContourGrid g = emit_contour_grid(t, GridBounds{-8, 8, -8, 8, 81, 81});
    const Eigen::Index n = g.values.rows();
    double worst = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            worst = std::max(worst, std::abs(g.values(i, j) - g.values(n - 1 - i, j)));
            worst = std::max(worst, std::abs(g.values(i, j) - g.values(i, n - 1 - j)));
        }
    EXPECT_LE(worst, 1e-10);
}

TEST(Contour, BananaRidge) {
    const double b = 0.03;
    const ContourGrid g = emit_contour_grid(BananaTarget(2, b), GridBounds{-20, 20, -20, 6, 41, 2601});
    const double dy = g.ys[1] - g.ys[0];
    for (Eigen::Index j = 0; j < g.xs.size(); j += 5) {
        Eigen::Index i = 0;
        g.values.col(j).maxCoeff(&i);
        const double z1 = g.xs[j];
        EXPECT_NEAR(g.ys[i], 100.0 * b - b * z1 * z1, 0.5 * dy + 1e-9) << "z1=" << z1;
    }
}

TEST(Contour, HigherDimensionsDeclaredInHeader) {
    const ContourGrid g = emit_contour_grid(BananaTarget(4, 0.03), GridBounds{-5, 5, -5, 5, 3, 3});
    std::ostringstream s;
    write_contour_csv(s, g);
    EXPECT_NE(s.str().find("dim=4"), std::string::npos);
    EXPECT_NE(s.str().find("rest=slice0"), std::string::npos);
}

TEST(Contour, CsvRoundTrip) {
    const GaussianState q(Eigen::Vector2d(0.1, 0.2), (Eigen::Matrix2d() << 1.0 / 3.0, 0.1, 0.1, 2).finished());
    const ContourGrid g = emit_contour_grid(q, default_bounds(q, 7, 5));
    std::stringstream s;
    write_contour_csv(s, g);
    const ContourGrid back = read_contour_csv(s);
    EXPECT_EQ(back.source, "gaussian");
    EXPECT_EQ(back.dim, 2);
    EXPECT_EQ(back.xs, g.xs);
    EXPECT_EQ(back.ys, g.ys);
    EXPECT_EQ(back.values, g.values);
}

TEST_F(TempDir, ContourCommand) {
    const char* text = R"(experiment = banana
seeds = 1, 2
[q]
cov = 9
mean_jitter = 1
[contour]
nx = 11
ny = 9
[method:bw]
type = bw
)";
    const ExperimentOutcome out = run_experiment(parse(text), Command::contour, to("out"));
    EXPECT_EQ(out.files, (std::vector<std::string>{"target.contour.csv", "q_init_seed1.contour.csv",
                                                    "q_init_seed2.contour.csv", "index.json"}));
    std::ifstream in(root_ / "out" / "target.contour.csv");
    const ContourGrid g = read_contour_csv(in);
    EXPECT_EQ(g.source, "banana");
    EXPECT_EQ(g.xs.size(), 11);
    EXPECT_EQ(g.ys.size(), 9);
}

// ---------------------------------------------------------------------------
// CLI

TEST_F(TempDir, CliExitCodes) {
    const fs::path good = write("good.ini", kTrivial);
    const std::string out = " --out " + (root_ / "out").string();
    EXPECT_EQ(run_cli("run " + good.string() + out), 0);
    EXPECT_TRUE(fs::exists(root_ / "out" / "bw_seed7.trace.jsonl"));

    const fs::path bad = write("bad.ini", std::string(kTrivial) + "bogus = 1\n");
    EXPECT_EQ(run_cli("run " + bad.string() + out), 2);
    EXPECT_EQ(run_cli("run " + (root_ / "absent.ini").string()), 2);
    EXPECT_EQ(run_cli("frobnicate " + good.string()), 2);

    std::string changed = kTrivial;
    changed.replace(changed.find("eta = 0.1"), 9, "eta = 0.2");
    const fs::path other = write("other.ini", changed);
    EXPECT_EQ(run_cli("run " + other.string() + out), 2);
    EXPECT_EQ(run_cli("run " + other.string() + out + " --force"), 0);
    EXPECT_EQ(run_cli("run " + good.string() + " --seed 9 --threads 2 --out " + (root_ / "s9").string()), 0);
    EXPECT_TRUE(fs::exists(root_ / "s9" / "bw_seed9.trace.jsonl"));
}
