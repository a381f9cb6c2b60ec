// Copyright 2026 The marginrates Authors.
// SPDX-License-Identifier: Apache-2.0

// mrl: command-line front end for the rate laboratory.
//
//   mrl experiment run --config cfg.json --out dir [--plot] [--workers N]
//   mrl bounds eval --inputs bounds.json
//   mrl diagnose margin --dist dist.json --m 1000000 --seed 1
//   mrl rates fit results.csv
//   mrl distribution sample --dist dist.json --n 500 --seed 3 --out data.csv
//
// Exit status: 0 success, 1 usage or config error, 2 runtime failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mrl/mrl.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw mrl::InvalidArgument("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw mrl::InvalidArgument(path.string() + ": malformed JSON: " + e.what());
  }
}

unsigned resolve_workers(std::optional<unsigned> flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("MRL_WORKERS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
    throw mrl::InvalidArgument(std::string("MRL_WORKERS must be a positive integer, got \"") + env + "\"");
  }
  return 1;
}

std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int k = 0; k <= 20; ++k) t.push_back(std::pow(10.0, -2.0 + 0.1 * k));
  t.back() = 1.0;
  return t;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Excess-risk rate laboratory for clipped ReLU network classifiers"};
  app.require_subcommand(1);

  // experiment run
  auto* experiment = app.add_subcommand("experiment", "Sample-size sweeps");
  experiment->require_subcommand(1);
  auto* run = experiment->add_subcommand("run", "Run a sweep and write its report");
  std::string config_path;
  std::string out_dir;
  bool plot = false;
  std::optional<unsigned> workers;
  std::string aggregation = "median";
  bool quiet = false;
  run->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_flag("--plot", plot, "Also write plot.svg");
  run->add_option("--workers", workers, "Worker threads (default: $MRL_WORKERS or 1)")
      ->check(CLI::PositiveNumber);
  run->add_option("--aggregation", aggregation, "Replicate aggregation for the rate fit")
      ->check(CLI::IsMember({"median", "mean"}));
  run->add_flag("--quiet", quiet, "No per-cell progress on stderr");

  // bounds eval
  auto* bounds = app.add_subcommand("bounds", "Closed-form bounds");
  bounds->require_subcommand(1);
  auto* eval = bounds->add_subcommand("eval", "Evaluate a bounds request");
  std::string inputs_path;
  eval->add_option("--inputs", inputs_path, "Bounds request (JSON)")->required()->check(CLI::ExistingFile);

  // diagnose margin
  auto* diagnose = app.add_subcommand("diagnose", "Distribution diagnostics");
  diagnose->require_subcommand(1);
  auto* margin = diagnose->add_subcommand("margin", "Margin curve, noise exponent and hard-margin check");
  std::string dist_path;
  std::size_t m = 1000000;
  std::uint64_t seed = 0;
  std::vector<double> thresholds;
  std::optional<double> delta;
  std::string curve_out;
  margin->add_option("--dist", dist_path, "Distribution descriptor (JSON)")->required()->check(CLI::ExistingFile);
  margin->add_option("--m", m, "Monte-Carlo draws")->check(CLI::PositiveNumber);
  margin->add_option("--seed", seed, "Seed");
  margin->add_option("--thresholds", thresholds, "Margin thresholds in (0,1], increasing");
  margin->add_option("--delta", delta, "Hard-margin level to certify (default: the family's own)");
  margin->add_option("--curve-out", curve_out, "Write the margin curve as CSV");

  // rates fit
  auto* rates = app.add_subcommand("rates", "Rate fitting");
  rates->require_subcommand(1);
  auto* fit = rates->add_subcommand("fit", "Fit an excess-risk rate from a results CSV");
  std::string results_path;
  std::string fit_aggregation = "median";
  fit->add_option("results", results_path, "results.csv")->required()->check(CLI::ExistingFile);
  fit->add_option("--aggregation", fit_aggregation, "Replicate aggregation")
      ->check(CLI::IsMember({"median", "mean"}));

  // distribution sample
  auto* distribution = app.add_subcommand("distribution", "Synthetic distributions");
  distribution->require_subcommand(1);
  auto* sample = distribution->add_subcommand("sample", "Draw a dataset");
  std::string sample_dist;
  std::size_t n = 0;
  std::uint64_t sample_seed = 0;
  std::string sample_out;
  sample->add_option("--dist", sample_dist, "Distribution descriptor (JSON)")->required()->check(CLI::ExistingFile);
  sample->add_option("--n", n, "Sample size")->required()->check(CLI::PositiveNumber);
  sample->add_option("--seed", sample_seed, "Seed");
  sample->add_option("--out", sample_out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*run) {
      const unsigned w = resolve_workers(workers);
      const mrl::ExperimentConfig cfg = mrl::load_config(config_path);
      std::function<void(const mrl::ResultRow&)> progress;
      if (!quiet) {
        progress = [](const mrl::ResultRow& r) {
          std::cerr << "n=" << r.n << " rep=" << r.replicate << " excess=" << r.excess_risk << " ("
                    << r.wall_time_seconds << " s)" << (r.ok() ? "" : " " + r.status) << '\n';
        };
      }
      const auto rows = mrl::run_experiment(cfg, w, progress);
      const auto fitted = mrl::emit_report(rows, cfg.bound_overlay, out_dir, plot,
                                           mrl::aggregation_from_string(aggregation));
      std::cout << mrl::to_json(fitted).dump(2) << '\n';
    } else if (*eval) {
      std::cout << mrl::evaluate_bounds(read_json(inputs_path)).dump(2) << '\n';
    } else if (*margin) {
      const std::filesystem::path p(dist_path);
      const auto dist = mrl::distribution_from_json(read_json(p), p.parent_path());
      if (thresholds.empty()) thresholds = default_thresholds();
      const auto curve = mrl::margin_curve(dist, thresholds, m, seed);
      nlohmann::json out = {{"distribution", dist.descriptor()},
                            {"margin_curve", mrl::to_json(curve)},
                            {"noise_exponent", mrl::to_json(mrl::fit_noise_exponent(curve))}};
      const std::optional<double> level = delta ? delta : dist.hard_margin();
      if (level) {
        const std::size_t v = mrl::check_hard_margin(dist, *level, m, mrl::split_seed(seed, 1));
        out["hard_margin"] = {{"delta", *level}, {"violations", v}, {"m", m}};
      }
      const auto br = mrl::bayes_risk(dist, m, mrl::split_seed(seed, 2));
      out["bayes_risk"] = {{"value", br.value}, {"std_error", br.std_error}, {"exact", br.exact}};
      if (!curve_out.empty()) mrl::write_text(curve_out, mrl::margin_curve_csv(curve));
      std::cout << out.dump(2) << '\n';
    } else if (*fit) {
      const auto rows = mrl::read_results_csv(results_path);
      std::cout << mrl::to_json(mrl::fit_rate(rows, mrl::aggregation_from_string(fit_aggregation))).dump(2)
                << '\n';
    } else if (*sample) {
      const std::filesystem::path p(sample_dist);
      const nlohmann::json desc = read_json(p);
      const auto dist = mrl::distribution_from_json(desc, p.parent_path());
      const auto data = mrl::sample(dist, n, sample_seed);
      mrl::write_dataset_csv(sample_out, data, desc.at("kind").get<std::string>());
      std::cerr << "wrote " << data.size() << " rows to " << sample_out << '\n';
    }
  } catch (const mrl::ConfigError& e) {
    std::cerr << e.what() << '\n';
    return kExitUsage;
  } catch (const mrl::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
