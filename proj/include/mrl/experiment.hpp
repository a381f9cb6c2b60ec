// Copyright 2026 The marginrates Authors.
// SPDX-License-Identifier: Apache-2.0

// Sample-size sweeps: configuration, the cell runner, rate fitting and the
// on-disk report.

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "mrl/distributions.hpp"
#include "mrl/erm.hpp"
#include "mrl/error.hpp"
#include "mrl/relu_net.hpp"
#include "mrl/risk_metrics.hpp"
#include "mrl/rng.hpp"
#include "mrl/stats.hpp"
#include "mrl/theory_bounds.hpp"

namespace mrl {

/// Thrown by validate_config; carries every problem found, each prefixed by
/// the JSON path it refers to.
class ConfigError : public InvalidArgument {
 public:
  explicit ConfigError(std::vector<std::string> problems)
      : InvalidArgument(join(problems)), problems_(std::move(problems)) {}
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string s = "invalid experiment config:";
    for (const auto& p : v) s += "\n  " + p;
    return s;
  }
  std::vector<std::string> problems_;
};

/// lambda(n) = value, or scale * n^(-exponent).
struct LambdaRule {
  enum class Kind { kConstant, kPower };
  Kind kind = Kind::kConstant;
  double value = 0.0;
  double scale = 0.0;
  double exponent = 0.0;

  double at(std::uint64_t n) const {
    if (kind == Kind::kConstant) return value;
    return scale * std::pow(static_cast<double>(n), -exponent);
  }
};

struct BoundOverlay {
  BoundInputs inputs;
  Regime regime = Regime::kHardMargin;
};

struct ExperimentConfig {
  nlohmann::json distribution;
  std::shared_ptr<const SyntheticDistribution> dist;
  std::optional<std::vector<std::size_t>> widths;
  std::optional<SizingInputs> sizing;
  ClipSpec clip;
  TrainConfig train;
  LambdaRule lambda_rule;
  std::vector<std::uint64_t> n_grid;
  std::size_t eval_m = 100000;
  int replicates = 1;
  std::uint64_t master_seed = 0;
  std::optional<BoundOverlay> bound_overlay;

  /// Student architecture used at sample size n.
  Architecture architecture_for(std::uint64_t n) const {
    if (widths) return Architecture(*widths);
    const Sizing sz(*sizing);
    const auto w = static_cast<std::size_t>(sz.width(static_cast<double>(n)));
    const auto depth = static_cast<std::size_t>(sz.depth());
    std::vector<std::size_t> ws{sizing->d};
    for (std::size_t l = 1; l < depth; ++l) ws.push_back(w);
    ws.push_back(1);
    return Architecture(std::move(ws));
  }
};

inline constexpr std::uint64_t kMaxGridN = (std::uint64_t{1} << 40) - 1;
inline constexpr int kMaxReplicates = (1 << 16) - 1;
inline constexpr double kMaxSizedParams = 1e7;

enum class SeedPhase : std::uint8_t { kData = 0, kTrain = 1, kEval = 2 };

/// Seed of one (n, replicate, phase) cell. The tuple is packed into 64 bits
/// (40 + 16 + 8) and pushed through a bijection keyed by the master seed, so
/// distinct tuples never collide.
inline std::uint64_t cell_seed(std::uint64_t master, std::uint64_t n, int replicate, SeedPhase phase) {
  if (n > kMaxGridN) throw InvalidArgument("n exceeds 2^40 - 1");
  if (replicate < 0 || replicate > kMaxReplicates) throw InvalidArgument("replicate out of range");
  const std::uint64_t packed = (n << 24) | (static_cast<std::uint64_t>(replicate) << 8) |
                               static_cast<std::uint64_t>(phase);
  return mix64(packed ^ mix64(master));
}

namespace detail {

inline bool is_unsigned_int(const nlohmann::json& j) {
  return j.is_number_unsigned() || (j.is_number_integer() && j.get<std::int64_t>() >= 0);
}

inline SizingInputs sizing_from_json(const nlohmann::json& j, const std::string& path,
                                     std::vector<std::string>& problems) {
  SizingInputs s = sizing_inputs_from_json(j);
  try {
    Sizing check(s);
    (void)check;
  } catch (const std::exception& e) {
    problems.push_back(path + ": " + e.what());
  }
  return s;
}

}  // namespace detail

/// Parses and checks an experiment config. Every violation is collected
/// before anything is thrown. Relative teacher_file paths resolve against
/// `base_dir`.
inline ExperimentConfig validate_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  std::vector<std::string> problems;
  ExperimentConfig cfg;
  if (!j.is_object()) throw ConfigError({".: config must be a JSON object"});

  static const std::vector<std::string> kKnown = {"distribution", "architecture", "train",
                                                  "lambda_rule",  "n_grid",       "eval_m",
                                                  "replicates",   "master_seed",  "bound_inputs",
                                                  "clip_D",       "description"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(kKnown.begin(), kKnown.end(), key) == kKnown.end()) {
      problems.push_back("." + key + ": unknown key");
    }
  }

  if (!j.contains("distribution")) {
    problems.push_back(".distribution: required");
  } else {
    cfg.distribution = j.at("distribution");
    try {
      cfg.dist = std::make_shared<const SyntheticDistribution>(distribution_from_json(cfg.distribution, base_dir));
    } catch (const std::exception& e) {
      problems.push_back(".distribution: " + std::string(e.what()));
    }
  }

  if (j.contains("clip_D")) {
    try {
      cfg.clip = ClipSpec(j.at("clip_D").get<double>());
    } catch (const std::exception& e) {
      problems.push_back(".clip_D: " + std::string(e.what()));
    }
  }

  if (!j.contains("architecture") || !j.at("architecture").is_object()) {
    problems.push_back(".architecture: required object with \"widths\" or \"sizing\"");
  } else {
    const auto& a = j.at("architecture");
    const bool has_w = a.contains("widths");
    const bool has_s = a.contains("sizing");
    if (has_w == has_s) {
      problems.push_back(".architecture: give exactly one of \"widths\" and \"sizing\"");
    } else if (has_w) {
      try {
        Architecture arch(a.at("widths").get<std::vector<std::size_t>>());
        cfg.widths = arch.widths();
        if (arch.widths().back() != 1) problems.push_back(".architecture.widths: output width must be 1");
        if (cfg.dist && arch.input_dim() != cfg.dist->dim()) {
          problems.push_back(".architecture.widths: input width " + std::to_string(arch.input_dim()) +
                             " does not match distribution dimension " + std::to_string(cfg.dist->dim()));
        }
      } catch (const std::exception& e) {
        problems.push_back(".architecture.widths: " + std::string(e.what()));
      }
    } else {
      cfg.sizing = detail::sizing_from_json(a.at("sizing"), ".architecture.sizing", problems);
      if (cfg.dist && cfg.sizing->d != cfg.dist->dim()) {
        problems.push_back(".architecture.sizing.d: does not match distribution dimension");
      }
    }
  }

  if (j.contains("train")) {
    try {
      cfg.train = j.at("train").get<TrainConfig>();
      cfg.train.validate();
    } catch (const std::exception& e) {
      problems.push_back(".train: " + std::string(e.what()));
    }
  }

  cfg.lambda_rule.value = cfg.train.lambda;
  if (j.contains("lambda_rule")) {
    const auto& r = j.at("lambda_rule");
    const std::string kind = r.is_object() ? r.value("kind", "") : "";
    if (kind == "constant") {
      cfg.lambda_rule.value = r.value("value", 0.0);
      if (!(cfg.lambda_rule.value >= 0.0)) problems.push_back(".lambda_rule.value: must be >= 0");
    } else if (kind == "power") {
      cfg.lambda_rule.kind = LambdaRule::Kind::kPower;
      cfg.lambda_rule.scale = r.value("scale", 0.0);
      cfg.lambda_rule.exponent = r.value("exponent", 0.0);
      if (!(cfg.lambda_rule.scale >= 0.0)) problems.push_back(".lambda_rule.scale: must be >= 0");
      if (!std::isfinite(cfg.lambda_rule.exponent)) problems.push_back(".lambda_rule.exponent: must be finite");
    } else {
      problems.push_back(".lambda_rule.kind: must be \"constant\" or \"power\"");
    }
  }

  if (!j.contains("n_grid") || !j.at("n_grid").is_array()) {
    problems.push_back(".n_grid: required array of positive integers");
  } else {
    const auto& g = j.at("n_grid");
    if (g.size() < 3) problems.push_back(".n_grid: length >= 3 required, got " + std::to_string(g.size()));
    for (std::size_t i = 0; i < g.size(); ++i) {
      const std::string path = ".n_grid[" + std::to_string(i) + "]";
      if (!detail::is_unsigned_int(g[i]) || g[i].get<std::uint64_t>() == 0) {
        problems.push_back(path + ": must be a positive integer");
        continue;
      }
      const auto n = g[i].get<std::uint64_t>();
      if (n > kMaxGridN) problems.push_back(path + ": must be < 2^40");
      if (!cfg.n_grid.empty() && n <= cfg.n_grid.back()) {
        problems.push_back(".n_grid: must be strictly increasing (entry " + std::to_string(i) + ")");
      }
      cfg.n_grid.push_back(n);
    }
  }

  if (j.contains("eval_m")) {
    if (!detail::is_unsigned_int(j.at("eval_m")) || j.at("eval_m").get<std::uint64_t>() < 100) {
      problems.push_back(".eval_m: must be an integer >= 100");
    } else {
      cfg.eval_m = j.at("eval_m").get<std::size_t>();
    }
  }

  if (!j.contains("replicates")) {
    problems.push_back(".replicates: required");
  } else if (!j.at("replicates").is_number_integer() || j.at("replicates").get<std::int64_t>() < 1 ||
             j.at("replicates").get<std::int64_t>() > kMaxReplicates) {
    problems.push_back(".replicates: must be an integer in [1, 65535]");
  } else {
    cfg.replicates = j.at("replicates").get<int>();
  }

  if (j.contains("master_seed")) {
    if (!detail::is_unsigned_int(j.at("master_seed"))) {
      problems.push_back(".master_seed: must be a nonnegative integer");
    } else {
      cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
    }
  }

  if (cfg.sizing && problems.empty()) {
    for (std::uint64_t n : cfg.n_grid) {
      const Architecture arch = cfg.architecture_for(n);
      if (static_cast<double>(arch.param_count()) > kMaxSizedParams) {
        problems.push_back(".architecture.sizing: n = " + std::to_string(n) + " gives " +
                           std::to_string(arch.param_count()) + " parameters, above the 1e7 limit");
        break;
      }
    }
  }

  if (j.contains("bound_inputs")) {
    const auto& b = j.at("bound_inputs");
    try {
      BoundOverlay ov;
      ov.inputs = bound_inputs_from_json(b);
      ov.regime = regime_from_string(b.value("regime", "hard-margin"));
      for (std::uint64_t n : cfg.n_grid) {
        BoundInputs at = ov.inputs;
        at.n = static_cast<double>(n);
        (void)generic_bound(at, ov.regime);
      }
      cfg.bound_overlay = ov;
    } catch (const std::exception& e) {
      problems.push_back(".bound_inputs: " + std::string(e.what()));
    }
  }

  if (!problems.empty()) throw ConfigError(std::move(problems));
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({".: cannot open " + path.string()});
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError({".: malformed JSON: " + std::string(e.what())});
  }
  return validate_config(j, path.parent_path());
}

struct ResultRow {
  std::uint64_t n = 0;
  int replicate = 0;
  std::uint64_t seed = 0;  // dataset seed
  double lambda = 0.0;
  double train_objective = 0.0;
  double grad_norm = 0.0;
  double excess_risk = 0.0;
  double excess_stderr = 0.0;
  double bayes_risk = 0.0;
  double wall_time_seconds = 0.0;
  std::string status = "ok";

  bool ok() const { return status == "ok"; }
};

/// One (n, replicate) cell: sample, train, evaluate. Trainer and evaluation
/// failures land in `status`; they never abort the sweep.
inline ResultRow run_cell(const ExperimentConfig& cfg, std::uint64_t n, int replicate) {
  const auto t0 = std::chrono::steady_clock::now();
  ResultRow row;
  row.n = n;
  row.replicate = replicate;
  row.seed = cell_seed(cfg.master_seed, n, replicate, SeedPhase::kData);
  row.lambda = cfg.lambda_rule.at(n);
  try {
    const Dataset data = sample(*cfg.dist, static_cast<std::size_t>(n), row.seed);
    TrainConfig tc = cfg.train;
    tc.lambda = row.lambda;
    tc.seed = cell_seed(cfg.master_seed, n, replicate, SeedPhase::kTrain);
    const TrainResult tr = solve_lambda_erm(cfg.architecture_for(n), cfg.clip, data, tc);
    row.train_objective = tr.objective;
    row.grad_norm = tr.grad_norm;
    const ExcessEstimate ex = excess_risk(network_classifier(tr.params, cfg.clip), *cfg.dist, cfg.eval_m,
                                          cell_seed(cfg.master_seed, n, replicate, SeedPhase::kEval));
    row.excess_risk = ex.value;
    row.excess_stderr = ex.std_error;
    row.bayes_risk = ex.bayes_risk;
  } catch (const std::exception& e) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    row.train_objective = row.grad_norm = row.excess_risk = row.excess_stderr = row.bayes_risk = nan;
    row.status = std::string("error: ") + e.what();
  }
  row.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

/// Runs every (n, replicate) cell on up to `workers` threads. Rows come back
/// ordered by (n, replicate) whatever the scheduling.
inline std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg, unsigned workers = 1,
                                             const std::function<void(const ResultRow&)>& on_row = {}) {
  if (!cfg.dist) throw InvalidArgument("run_experiment: config has no distribution");
  const std::size_t reps = static_cast<std::size_t>(cfg.replicates);
  const std::size_t cells = cfg.n_grid.size() * reps;
  std::vector<ResultRow> rows(cells);
  std::atomic<std::size_t> next{0};
  std::mutex report_mu;
  auto work = [&] {
    for (std::size_t c = next++; c < cells; c = next++) {
      rows[c] = run_cell(cfg, cfg.n_grid[c / reps], static_cast<int>(c % reps));
      if (on_row) {
        std::lock_guard<std::mutex> lock(report_mu);
        on_row(rows[c]);
      }
    }
  };
  workers = std::clamp<unsigned>(workers, 1, static_cast<unsigned>(std::max<std::size_t>(cells, 1)));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  return rows;
}

// ---- rate fitting --------------------------------------------------------

enum class Aggregation { kMedian, kMean };

inline std::string to_string(Aggregation a) { return a == Aggregation::kMedian ? "median" : "mean"; }

inline Aggregation aggregation_from_string(const std::string& s) {
  if (s == "median") return Aggregation::kMedian;
  if (s == "mean") return Aggregation::kMean;
  throw InvalidArgument("aggregation must be \"median\" or \"mean\"");
}

struct RatePoint {
  double n = 0.0;
  double aggregated = 0.0;     // NaN when censored
  std::size_t rows = 0;        // successful rows at this n
  std::size_t uncensored = 0;  // rows above the noise floor
  bool censored = false;
};

struct RateFit {
  enum class Outcome { kFit, kFloor };
  Outcome outcome = Outcome::kFloor;
  Aggregation aggregation = Aggregation::kMedian;
  double alpha_hat = std::numeric_limits<double>::quiet_NaN();
  double stderr_alpha = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  std::vector<RatePoint> points;
  std::vector<double> censored_n;
  std::optional<double> floor_n;  // smallest censored n
  std::string message;
};

/// A row sits at the noise floor when excess <= 2 * stderr.
inline bool is_censored(const ResultRow& r) { return !(r.excess_risk > 2.0 * r.excess_stderr); }

/// Fits log(aggregated excess) = c - alpha log n over the n values that are
/// not at the noise floor. An n is censored when fewer than half of its rows
/// (median) or none of them (mean) clear the floor; aggregation uses the
/// uncensored rows only. With fewer than three usable n the outcome is kFloor.
inline RateFit fit_rate(const std::vector<ResultRow>& rows, Aggregation agg = Aggregation::kMedian) {
  std::vector<double> ns;
  for (const auto& r : rows) {
    if (r.ok()) ns.push_back(static_cast<double>(r.n));
  }
  std::sort(ns.begin(), ns.end());
  ns.erase(std::unique(ns.begin(), ns.end()), ns.end());

  RateFit fit;
  fit.aggregation = agg;
  std::vector<double> lx;
  std::vector<double> ly;
  for (double n : ns) {
    RatePoint pt;
    pt.n = n;
    std::vector<double> vals;
    for (const auto& r : rows) {
      if (!r.ok() || static_cast<double>(r.n) != n) continue;
      ++pt.rows;
      if (!is_censored(r)) vals.push_back(r.excess_risk);
    }
    pt.uncensored = vals.size();
    const std::size_t need = agg == Aggregation::kMedian ? (pt.rows + 1) / 2 : 1;
    pt.censored = vals.empty() || vals.size() < need;
    if (pt.censored) {
      pt.aggregated = std::numeric_limits<double>::quiet_NaN();
      fit.censored_n.push_back(n);
    } else {
      pt.aggregated = agg == Aggregation::kMedian ? median(vals) : mean(vals);
      lx.push_back(std::log(n));
      ly.push_back(std::log(pt.aggregated));
    }
    fit.points.push_back(pt);
  }
  if (!fit.censored_n.empty()) fit.floor_n = fit.censored_n.front();

  std::ostringstream msg;
  if (lx.size() >= 3) {
    const LinearFit lf = linear_fit(lx, ly);
    fit.outcome = RateFit::Outcome::kFit;
    fit.alpha_hat = -lf.slope;
    fit.stderr_alpha = lf.slope_stderr;
    fit.intercept = lf.intercept;
    msg << "fitted on " << lx.size() << " sample sizes";
  } else {
    fit.outcome = RateFit::Outcome::kFloor;
    msg << "decayed below measurement floor (" << lx.size() << " usable sample sizes)";
  }
  if (fit.floor_n) {
    msg << "; reached noise floor at n =";
    for (std::size_t i = 0; i < fit.censored_n.size(); ++i) {
      msg << (i ? ", " : " ") << format_double(fit.censored_n[i]);
    }
  }
  fit.message = msg.str();
  return fit;
}

inline nlohmann::json to_json(const RateFit& f) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : f.points) {
    pts.push_back({{"n", static_cast<std::uint64_t>(p.n)},
                   {"aggregated_excess", num(p.aggregated)},
                   {"rows", p.rows},
                   {"uncensored", p.uncensored},
                   {"censored", p.censored}});
  }
  nlohmann::json censored = nlohmann::json::array();
  for (double n : f.censored_n) censored.push_back(static_cast<std::uint64_t>(n));
  return {{"outcome", f.outcome == RateFit::Outcome::kFit ? "fit" : "floor"},
          {"aggregation", to_string(f.aggregation)},
          {"alpha_hat", num(f.alpha_hat)},
          {"stderr", num(f.stderr_alpha)},
          {"intercept", num(f.intercept)},
          {"points", pts},
          {"censored_n", censored},
          {"floor_n", f.floor_n ? nlohmann::json(static_cast<std::uint64_t>(*f.floor_n)) : nlohmann::json(nullptr)},
          {"message", f.message}};
}

// ---- results files -------------------------------------------------------

/// Column order of results.csv. Wall time is kept out so the file depends
/// only on the config; it goes to timings.csv instead.
inline const char* kResultsHeader =
    "n,replicate,seed,lambda,train_objective,grad_norm,excess_risk,excess_stderr,bayes_risk,status";

inline std::string results_csv(const std::vector<ResultRow>& rows) {
  std::ostringstream os;
  os << kResultsHeader << '\n';
  for (const auto& r : rows) {
    std::string status = r.status;
    std::replace(status.begin(), status.end(), ',', ';');
    std::replace(status.begin(), status.end(), '\n', ' ');
    os << r.n << ',' << r.replicate << ',' << r.seed << ',' << format_double(r.lambda) << ','
       << format_double(r.train_objective) << ',' << format_double(r.grad_norm) << ','
       << format_double(r.excess_risk) << ',' << format_double(r.excess_stderr) << ','
       << format_double(r.bayes_risk) << ',' << status << '\n';
  }
  return os.str();
}

inline std::string timings_csv(const std::vector<ResultRow>& rows) {
  std::ostringstream os;
  os << "n,replicate,wall_time_seconds\n";
  for (const auto& r : rows) os << r.n << ',' << r.replicate << ',' << format_double(r.wall_time_seconds) << '\n';
  return os.str();
}

/// Reads a results.csv written by results_csv. A missing status column counts as "ok".
inline std::vector<ResultRow> read_results_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument(path.string() + " is empty");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string h;
    while (std::getline(ss, h, ',')) header.push_back(h);
  }
  auto col = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto cn = col("n");
  const auto ce = col("excess_risk");
  const auto cs = col("excess_stderr");
  if (!cn || !ce || !cs) throw InvalidArgument(path.string() + ": needs n, excess_risk and excess_stderr columns");
  std::vector<ResultRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    if (cells.size() < header.size() - (col("status") ? 1 : 0)) {
      throw InvalidArgument(path.string() + ":" + std::to_string(lineno) + ": too few columns");
    }
    auto get = [&](std::optional<std::size_t> k) -> std::string { return k && *k < cells.size() ? cells[*k] : ""; };
    ResultRow r;
    try {
      r.n = std::stoull(get(cn));
      r.excess_risk = std::stod(get(ce));
      r.excess_stderr = std::stod(get(cs));
      if (auto k = col("replicate")) r.replicate = std::stoi(get(k));
      if (auto k = col("seed")) r.seed = std::stoull(get(k));
      if (auto k = col("lambda")) r.lambda = std::stod(get(k));
      if (auto k = col("train_objective")) r.train_objective = std::stod(get(k));
      if (auto k = col("grad_norm")) r.grad_norm = std::stod(get(k));
      if (auto k = col("bayes_risk")) r.bayes_risk = std::stod(get(k));
    } catch (const std::logic_error&) {
      throw InvalidArgument(path.string() + ":" + std::to_string(lineno) + ": unparsable number");
    }
    if (auto k = col("status")) r.status = get(k).empty() ? "ok" : get(k);
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---- report --------------------------------------------------------------

struct BoundRow {
  std::uint64_t n = 0;
  LogValue generic_total;
  std::optional<LogValue> ideal_total;
};

/// Bound totals along the n grid. The ideal (teacher-student) bound is added
/// when the overlay is in the hard-margin regime.
inline std::vector<BoundRow> bound_table(const BoundOverlay& ov, const std::vector<std::uint64_t>& ns) {
  std::vector<BoundRow> out;
  for (std::uint64_t n : ns) {
    BoundInputs in = ov.inputs;
    in.n = static_cast<double>(n);
    BoundRow row;
    row.n = n;
    row.generic_total = generic_bound(in, ov.regime).total;
    if (ov.regime == Regime::kHardMargin && in.delta <= 1.0) {
      row.ideal_total = ideal_bound(in.arch, in.R, in.delta, in.K, in.r, in.p, in.n).total;
    }
    out.push_back(row);
  }
  return out;
}

inline std::string bounds_csv(const std::vector<BoundRow>& rows) {
  std::ostringstream os;
  os << "n,generic_total,generic_log_total,ideal_total,ideal_log_total\n";
  auto lin = [](const LogValue& v) { return v.overflows() ? std::string("inf") : format_double(v.value()); };
  for (const auto& r : rows) {
    os << r.n << ',' << lin(r.generic_total) << ',' << format_double(r.generic_total.log) << ',';
    if (r.ideal_total) {
      os << lin(*r.ideal_total) << ',' << format_double(r.ideal_total->log);
    } else {
      os << ',';
    }
    os << '\n';
  }
  return os.str();
}

/// Log-log plot: per-row excess (light), aggregated points (dark), fitted
/// line and, when given, the generic bound curve.
inline std::string rate_plot_svg(const std::vector<ResultRow>& rows, const RateFit& fit,
                                 const std::vector<BoundRow>& bounds) {
  constexpr double kW = 640, kH = 440, kL = 70, kR = 20, kT = 20, kB = 50;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  auto extend_y = [&](double ly) {
    ymin = std::min(ymin, ly);
    ymax = std::max(ymax, ly);
  };
  for (const auto& r : rows) {
    if (!r.ok()) continue;
    xmin = std::min(xmin, std::log10(static_cast<double>(r.n)));
    xmax = std::max(xmax, std::log10(static_cast<double>(r.n)));
    if (r.excess_risk > 0.0) extend_y(std::log10(r.excess_risk));
  }
  for (const auto& b : bounds) {
    const double ly = b.generic_total.log / std::log(10.0);
    if (ly < 1.0) extend_y(ly);
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1;
  if (!std::isfinite(ymin)) ymin = -4, ymax = 0;
  if (xmax - xmin < 1e-9) xmax = xmin + 1;
  if (ymax - ymin < 1e-9) ymax = ymin + 1;
  ymin = std::floor(ymin), ymax = std::ceil(ymax);
  auto px = [&](double lx) { return kL + (lx - xmin) / (xmax - xmin) * (kW - kL - kR); };
  auto py = [&](double ly) { return kT + (ymax - ly) / (ymax - ymin) * (kH - kT - kB); };

  std::ostringstream os;
  os << std::setprecision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<rect x=\"" << kL << "\" y=\"" << kT << "\" width=\"" << kW - kL - kR << "\" height=\""
     << kH - kT - kB << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int e = static_cast<int>(ymin); e <= static_cast<int>(ymax); ++e) {
    os << "<text x=\"" << kL - 8 << "\" y=\"" << py(e) + 4 << "\" text-anchor=\"end\">1e" << e << "</text>\n";
  }
  os << "<text x=\"" << px(xmin) << "\" y=\"" << kH - kB + 18 << "\">n=" << format_double(std::pow(10, xmin))
     << "</text>\n";
  os << "<text x=\"" << px(xmax) << "\" y=\"" << kH - kB + 18 << "\" text-anchor=\"end\">n="
     << format_double(std::round(std::pow(10, xmax))) << "</text>\n";
  os << "<text x=\"" << (kW + kL) / 2 << "\" y=\"" << kH - 10 << "\" text-anchor=\"middle\">sample size n (log)</text>\n";
  os << "<text x=\"16\" y=\"" << kH / 2 << "\" transform=\"rotate(-90 16 " << kH / 2
     << ")\" text-anchor=\"middle\">excess risk (log)</text>\n";
  for (const auto& r : rows) {
    if (!r.ok() || !(r.excess_risk > 0.0)) continue;
    os << "<circle cx=\"" << px(std::log10(static_cast<double>(r.n))) << "\" cy=\""
       << py(std::log10(r.excess_risk)) << "\" r=\"2.5\" fill=\"#9ab\"/>\n";
  }
  for (const auto& p : fit.points) {
    if (p.censored) continue;
    os << "<circle cx=\"" << px(std::log10(p.n)) << "\" cy=\"" << py(std::log10(p.aggregated))
       << "\" r=\"5\" fill=\"#135\"/>\n";
  }
  if (fit.outcome == RateFit::Outcome::kFit) {
    auto line_y = [&](double lx10) {
      return (fit.intercept - fit.alpha_hat * lx10 * std::log(10.0)) / std::log(10.0);
    };
    os << "<line x1=\"" << px(xmin) << "\" y1=\"" << py(line_y(xmin)) << "\" x2=\"" << px(xmax)
       << "\" y2=\"" << py(line_y(xmax)) << "\" stroke=\"#c33\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << kW - kR - 8 << "\" y=\"" << kT + 16 << "\" text-anchor=\"end\" fill=\"#c33\">"
       << "fitted rate " << fit.alpha_hat << "</text>\n";
  }
  if (!bounds.empty()) {
    os << "<polyline fill=\"none\" stroke=\"#393\" stroke-dasharray=\"6 4\" points=\"";
    for (const auto& b : bounds) {
      const double ly = std::clamp(b.generic_total.log / std::log(10.0), ymin, ymax);
      os << px(std::log10(static_cast<double>(b.n))) << ',' << py(ly) << ' ';
    }
    os << "\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

/// Writes results.csv, timings.csv and rates.json into `out_dir`, plus
/// bounds.csv when an overlay is given and plot.svg when `plot` is set.
inline RateFit emit_report(const std::vector<ResultRow>& rows, const std::optional<BoundOverlay>& overlay,
                           const std::filesystem::path& out_dir, bool plot = false,
                           Aggregation agg = Aggregation::kMedian) {
  if (rows.empty()) throw InvalidArgument("emit_report: no results");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error("cannot create output directory " + out_dir.string() + ": " + ec.message());
  write_text(out_dir / "results.csv", results_csv(rows));
  write_text(out_dir / "timings.csv", timings_csv(rows));
  const RateFit fit = fit_rate(rows, agg);
  write_text(out_dir / "rates.json", to_json(fit).dump(2) + "\n");
  std::vector<BoundRow> bounds;
  if (overlay) {
    std::vector<std::uint64_t> ns;
    for (const auto& r : rows) {
      if (ns.empty() || ns.back() != r.n) ns.push_back(r.n);
    }
    bounds = bound_table(*overlay, ns);
    write_text(out_dir / "bounds.csv", bounds_csv(bounds));
  }
  if (plot) write_text(out_dir / "plot.svg", rate_plot_svg(rows, fit, bounds));
  return fit;
}

}  // namespace mrl
