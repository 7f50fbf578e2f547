#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lever/metrics.hpp"
#include "lever/worldgen.hpp"

namespace lever {

inline constexpr const char* kRunFormat = "lever-run/1";

// Everything a learning-curve sweep needs. Metric values are a function of
// the world, the estimator configs, the schedule and the master seed alone;
// workers and out_dir are runtime details and never influence results.
struct ExperimentConfig {
  WorldSpec world;
  std::vector<nlohmann::json> estimators;  // make_estimator configs
  std::vector<std::int64_t> sizes;         // strictly increasing training sizes
  std::int64_t seeds_per_point = 5;
  EvalMode eval = EvalMode::enumerate_all;
  std::int64_t mc_draws = 10'000;          // monte carlo evaluation only
  std::int64_t perturbations = 1'000;      // structure-score probe count
  std::uint64_t master_seed = 1;
  int workers = 1;
  std::filesystem::path out_dir;           // empty: run without persistence
};

// The default training-size schedule: nine roughly half-decade steps.
std::vector<std::int64_t> default_sizes();

// Parses a config document. The "world" entry is either a path to a world
// file, an inline world document, or {"seed": ..., ...} generator settings.
// Relative world paths resolve against base_dir. Throws
// std::invalid_argument on malformed input.
ExperimentConfig experiment_config_from_json(const nlohmann::json& doc,
                                             const std::filesystem::path& base_dir = {});

// Inverse of the above with the world inlined; out_dir is omitted.
nlohmann::json experiment_config_to_json(const ExperimentConfig& config);

// Stable 64-bit hex digest of the result-relevant part of the config
// (workers and out_dir excluded). Guards journal resumption.
std::string config_hash(const ExperimentConfig& config);

// The dataset seed for one (train size, seed index) cell. Shared by every
// estimator so curves are compared on identical data.
std::int64_t curve_data_seed(std::uint64_t master_seed, std::int64_t n_train,
                             std::int64_t seed_index);

struct CellResult {
  std::size_t estimator_index = 0;
  std::size_t size_index = 0;
  std::int64_t seed_index = 0;
  std::string estimator_id;
  std::int64_t n_train = 0;
  bool ok = false;
  std::string error;       // failure reason when !ok
  TvEstimate tv;
  double score = 0.0;      // structure score
  std::int64_t wall_ms = 0;
};

struct RunRecord {
  ExperimentConfig config;
  std::string hash;
  std::vector<CellResult> cells;  // (estimator, size, seed) order, always complete
};

// Runs every (estimator, size, seed) cell: sample, fit, expected TV,
// structure score. A failing cell is recorded and never aborts the sweep.
// Cells execute on a bounded worker pool and merge in schedule order, so any
// worker count yields the same record. With an out_dir set, each finished
// cell is appended to <out_dir>/journal.jsonl and a rerun of the same config
// resumes from it; a journal written by a different config is rejected.
RunRecord run_learning_curve(const ExperimentConfig& config);

// The whole record as CSV. Header:
//   schema_version,world,estimator,n_train,seed,eval_mode,mc_draws,
//   expected_tv,tv_std_error,structure_score,status
// Metric fields are empty on failed cells. No timing columns: re-running an
// identical config reproduces the bytes exactly.
std::string csv_text(const RunRecord& record);

// results.csv plus run.json (config, hash, cells with timings) under dir.
void write_outputs(const RunRecord& record, const std::filesystem::path& dir);

struct CurvePoint {
  std::string estimator;
  std::int64_t n_train = 0;
  double mean_tv = 0.0;
  double mean_score = 0.0;
  int count = 0;  // cells contributing (failed ones drop out)
};

// Per-(estimator, size) means over seeds, in schedule order.
std::vector<CurvePoint> summarize(const RunRecord& record);

// tv_vs_n.svg, score_vs_n.svg (log-scaled N axis) and tradeoff.svg
// (TV against structure score) under dir.
void emit_plots(const RunRecord& record, const std::filesystem::path& dir);

}  // namespace lever
