// Copyright 2026 The marginrates Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mrl/experiment.hpp"

namespace mrl {
namespace {

namespace fs = std::filesystem;

nlohmann::json small_config() {
  return {{"distribution", {{"kind", "affine"}, {"params", {{"d", 1}}}}},
          {"architecture", {{"widths", {1, 2, 1}}}},
          {"train", {{"restarts", 1}, {"max_iters", 100}}},
          {"n_grid", {20, 40, 80}},
          {"eval_m", 2000},
          {"replicates", 2},
          {"master_seed", 3}};
}

fs::path scratch_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("mrl_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<ResultRow> power_law_rows(double c, double alpha, int reps = 3) {
  std::vector<ResultRow> rows;
  for (double n : {100.0, 200.0, 400.0, 800.0, 1600.0}) {
    for (int r = 0; r < reps; ++r) {
      ResultRow row;
      row.n = static_cast<std::uint64_t>(n);
      row.replicate = r;
      row.excess_risk = c * std::pow(n, -alpha);
      row.excess_stderr = 0.0;
      rows.push_back(row);
    }
  }
  return rows;
}

TEST(CellSeed, InjectiveOverCells) {
  std::set<std::uint64_t> seen;
  std::size_t count = 0;
  for (std::uint64_t n : {1ULL, 2ULL, 100ULL, 200ULL, 500ULL, 1000ULL, 2000ULL, (1ULL << 40) - 1}) {
    for (int rep = 0; rep < 200; ++rep) {
      for (auto ph : {SeedPhase::kData, SeedPhase::kTrain, SeedPhase::kEval}) {
        seen.insert(cell_seed(42, n, rep, ph));
        ++count;
      }
    }
  }
  EXPECT_EQ(seen.size(), count);
  EXPECT_NE(cell_seed(1, 100, 0, SeedPhase::kData), cell_seed(2, 100, 0, SeedPhase::kData));
  EXPECT_THROW(cell_seed(0, 1ULL << 40, 0, SeedPhase::kData), InvalidArgument);
}

TEST(ValidateConfig, AcceptsSmallConfig) {
  const auto cfg = validate_config(small_config());
  EXPECT_EQ(cfg.n_grid, (std::vector<std::uint64_t>{20, 40, 80}));
  EXPECT_EQ(cfg.replicates, 2);
  EXPECT_FALSE(cfg.bound_overlay.has_value());
}

TEST(ValidateConfig, ShortGridIsNamed) {
  auto j = small_config();
  j["n_grid"] = {100, 200};
  try {
    validate_config(j);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    ASSERT_EQ(e.problems().size(), 1u);
    EXPECT_NE(e.problems()[0].find(".n_grid"), std::string::npos);
    EXPECT_NE(e.problems()[0].find("length >= 3"), std::string::npos);
  }
}

TEST(ValidateConfig, ListsEveryViolation) {
  auto j = small_config();
  j["replicates"] = 0;
  j["n_grid"] = {100, 50, 200};
  j["eval_m"] = 5;
  j["architecture"] = {{"widths", {3, 2, 1}}};
  j["lambda_rule"] = {{"kind", "geometric"}};
  j["bogus"] = true;
  try {
    validate_config(j);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    std::string all;
    for (const auto& p : e.problems()) all += p + "\n";
    for (const char* path : {".replicates", ".n_grid", ".eval_m", ".architecture.widths", ".lambda_rule.kind", ".bogus"}) {
      EXPECT_NE(all.find(path), std::string::npos) << path << " missing from\n" << all;
    }
  }
}

TEST(ValidateConfig, ShippedConfigsParse) {
  const fs::path dir = fs::path(MRL_SOURCE_DIR) / "configs";
  int parsed = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto j = nlohmann::json::parse(std::ifstream(e.path()));
    if (!j.contains("n_grid")) continue;
    EXPECT_NO_THROW(load_config(e.path())) << e.path();
    ++parsed;
  }
  EXPECT_GE(parsed, 2);
}

TEST(ValidateConfig, BoundOverlayPreconditionsChecked) {
  auto j = small_config();
  j["bound_inputs"] = {{"widths", {1, 2, 1}}, {"delta", 0.2}, {"nu", 0.3}};
  EXPECT_THROW(validate_config(j), ConfigError);
}

TEST(ValidateConfig, MalformedFile) {
  const auto dir = scratch_dir("malformed");
  fs::create_directories(dir);
  std::ofstream(dir / "bad.json") << "{ not json";
  EXPECT_THROW(load_config(dir / "bad.json"), ConfigError);
}

TEST(ValidateConfig, SizingArchitecture) {
  auto j = small_config();
  j["architecture"] = {{"sizing", {{"alpha", 0.01}, {"s", 1}, {"d", 1}, {"L0", 2}}}};
  const auto cfg = validate_config(j);
  const auto arch = cfg.architecture_for(20);
  EXPECT_EQ(arch.depth(), 4u);
  EXPECT_EQ(arch.input_dim(), 1u);
}

TEST(LambdaRule, PowerLaw) {
  auto j = small_config();
  j["lambda_rule"] = {{"kind", "power"}, {"scale", 2.0}, {"exponent", 1.0}};
  const auto cfg = validate_config(j);
  EXPECT_DOUBLE_EQ(cfg.lambda_rule.at(40), 0.05);
}

TEST(RunExperiment, OneCellPerNAndReplicate) {
  auto cfg = validate_config(small_config());
  cfg.n_grid = {100};
  cfg.replicates = 1;
  const auto rows = run_experiment(cfg);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].n, 100u);
  EXPECT_TRUE(rows[0].ok());
  EXPECT_GE(rows[0].wall_time_seconds, 0.0);
  EXPECT_GE(rows[0].excess_risk, -3.0 * rows[0].excess_stderr);
}

TEST(RunExperiment, ConstantEtaIsLearnedExactly) {
  auto j = small_config();
  j["distribution"] = {{"kind", "constant"}, {"params", {{"d", 1}, {"value", 1.0}}}};
  j["train"] = {{"restarts", 2}, {"max_iters", 300}};
  const auto rows = run_experiment(validate_config(j));
  for (const auto& r : rows) {
    EXPECT_TRUE(r.ok());
    EXPECT_EQ(r.excess_risk, 0.0);
  }
}

TEST(RunExperiment, OrderAndContentIndependentOfWorkers) {
  const auto cfg = validate_config(small_config());
  const auto a = results_csv(run_experiment(cfg, 1));
  const auto b = results_csv(run_experiment(cfg, 4));
  EXPECT_EQ(a, b);
  const auto rows = run_experiment(cfg, 3);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_TRUE(rows[i - 1].n < rows[i].n ||
                (rows[i - 1].n == rows[i].n && rows[i - 1].replicate < rows[i].replicate));
  }
}

TEST(RunExperiment, TrainerFailureIsRecorded) {
  auto cfg = validate_config(small_config());
  cfg.train.R = -1.0;  // forces the trainer to reject its config
  const auto rows = run_experiment(cfg, 2);
  ASSERT_EQ(rows.size(), 6u);
  for (const auto& r : rows) {
    EXPECT_FALSE(r.ok());
    EXPECT_EQ(r.status.rfind("error: ", 0), 0u);
  }
  const auto fit = fit_rate(rows);
  EXPECT_EQ(fit.outcome, RateFit::Outcome::kFloor);
  EXPECT_TRUE(fit.points.empty());
}

TEST(FitRate, RecoversPlantedExponents) {
  for (double alpha : {0.5, 1.0, 2.0, 4.0}) {
    const auto fit = fit_rate(power_law_rows(3.0, alpha));
    ASSERT_EQ(fit.outcome, RateFit::Outcome::kFit);
    EXPECT_NEAR(fit.alpha_hat, alpha, 1e-9);
    EXPECT_NEAR(std::exp(fit.intercept), 3.0, 1e-9);
    const auto mean_fit = fit_rate(power_law_rows(0.7, alpha), Aggregation::kMean);
    EXPECT_NEAR(mean_fit.alpha_hat, alpha, 1e-9);
  }
}

TEST(FitRate, AllCensoredGivesFloor) {
  auto rows = power_law_rows(1.0, 1.0);
  for (auto& r : rows) {
    r.excess_risk = 0.0;
    r.excess_stderr = 0.0;
  }
  const auto fit = fit_rate(rows);
  EXPECT_EQ(fit.outcome, RateFit::Outcome::kFloor);
  ASSERT_TRUE(fit.floor_n.has_value());
  EXPECT_EQ(*fit.floor_n, 100.0);
  EXPECT_NE(fit.message.find("noise floor at n = 100"), std::string::npos);
}

TEST(FitRate, CensoredRowsNeverEnterRegression) {
  auto rows = power_law_rows(2.0, 1.0, 1);
  ResultRow noisy;
  noisy.n = 200;
  noisy.replicate = 1;
  noisy.excess_risk = 0.5;     // would wreck the fit
  noisy.excess_stderr = 0.3;   // but sits below 2 stderr
  rows.push_back(noisy);
  const auto fit = fit_rate(rows, Aggregation::kMean);
  EXPECT_NEAR(fit.alpha_hat, 1.0, 1e-9);
}

TEST(FitRate, MedianNeedsHalfTheRows) {
  auto rows = power_law_rows(2.0, 1.0, 3);
  // Two of three rows at n = 1600 on the floor: that n is censored.
  int zeroed = 0;
  for (auto& r : rows) {
    if (r.n == 1600 && zeroed < 2) {
      r.excess_risk = 0.0;
      ++zeroed;
    }
  }
  const auto fit = fit_rate(rows);
  EXPECT_EQ(fit.censored_n, std::vector<double>{1600.0});
  EXPECT_NEAR(fit.alpha_hat, 1.0, 1e-9);
  EXPECT_EQ(fit.points.back().uncensored, 1u);
}

TEST(Report, FilesAndRoundTrips) {
  const auto dir = scratch_dir("report");
  const auto rows = power_law_rows(3.0, 2.0);
  const auto fit = emit_report(rows, std::nullopt, dir, true);
  EXPECT_TRUE(fs::exists(dir / "results.csv"));
  EXPECT_TRUE(fs::exists(dir / "timings.csv"));
  EXPECT_TRUE(fs::exists(dir / "plot.svg"));
  EXPECT_FALSE(fs::exists(dir / "bounds.csv"));
  const auto j = nlohmann::json::parse(slurp(dir / "rates.json"));
  EXPECT_EQ(j["alpha_hat"].get<double>(), fit.alpha_hat);
  EXPECT_EQ(j["stderr"].get<double>(), fit.stderr_alpha);
  const std::string csv = slurp(dir / "results.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kResultsHeader);
  const auto back = read_results_csv(dir / "results.csv");
  ASSERT_EQ(back.size(), rows.size());
  EXPECT_EQ(fit_rate(back).alpha_hat, fit.alpha_hat);
}

TEST(Report, BoundOverlayWritesTable) {
  const auto dir = scratch_dir("overlay");
  BoundOverlay ov;
  ov.inputs.arch = Architecture({2, 3, 1});
  ov.inputs.delta = 0.5;
  ov.inputs.nu = 0.25;
  emit_report(power_law_rows(1.0, 1.0), ov, dir);
  const std::string csv = slurp(dir / "bounds.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "n,generic_total,generic_log_total,ideal_total,ideal_log_total");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
}

TEST(Report, UnwritableDirectory) {
  EXPECT_THROW(emit_report(power_law_rows(1.0, 1.0), std::nullopt, "/proc/mrl_cannot_write"), Error);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MRL_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch_dir("cli");
  fs::create_directories(dir);
  const fs::path src(MRL_SOURCE_DIR);
  EXPECT_EQ(run_cli("bounds eval --inputs " + (src / "configs/bounds_example.json").string()), 0);
  EXPECT_EQ(run_cli("no-such-command"), 1);
  auto bad = small_config();
  bad["replicates"] = 0;
  std::ofstream(dir / "bad.json") << bad.dump();
  EXPECT_EQ(run_cli("experiment run --config " + (dir / "bad.json").string() + " --out " + (dir / "out").string()), 1);
  std::ofstream(dir / "dist.json") << R"({"kind": "affine", "params": {"d": 2}})";
  EXPECT_EQ(run_cli("distribution sample --dist " + (dir / "dist.json").string() + " --n 50 --seed 2 --out " +
                    (dir / "data.csv").string()),
            0);
  EXPECT_EQ(read_dataset_csv(dir / "data.csv").size(), 50u);
  EXPECT_EQ(run_cli("diagnose margin --dist " + (dir / "dist.json").string() + " --m 1000 --seed 1"), 0);
  std::ofstream(dir / "ok.json") << small_config().dump();
  EXPECT_EQ(run_cli("experiment run --config " + (dir / "ok.json").string() + " --out " + (dir / "out").string() +
                    " --plot --quiet"),
            0);
  EXPECT_EQ(run_cli("rates fit " + (dir / "out/results.csv").string()), 0);
}

}  // namespace
}  // namespace mrl
