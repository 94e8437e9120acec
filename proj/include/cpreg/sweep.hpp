#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cpreg/dataset.hpp"
#include "cpreg/evaluation.hpp"
#include "cpreg/execution.hpp"
#include "cpreg/pipeline.hpp"

namespace cpreg {

struct EstimatorVariant {
  EstimatorKind kind;
  Variant variant;
};

/// Where the sweep's tables come from: CSV files, or synthetic generators.
/// The calibration set is drawn from the training pool for every seed.
struct SweepData {
  std::optional<std::filesystem::path> train_path;
  std::optional<std::filesystem::path> test_path;
  std::optional<SynthSpec> synth_train;
  std::optional<SynthSpec> synth_test;
  NanPolicy nan_policy = NanPolicy::drop_rows;
};

/// Calibration sizes below this trigger a warning.
inline constexpr std::size_t kAdvisedMinCalibration = 1000;

struct SweepConfig {
  std::string block = "default";
  std::string units_label;
  std::vector<std::size_t> k_grid;     ///< default 10..100 step 10
  std::vector<std::size_t> bins_grid;  ///< default 10..bins_max step 10
  std::size_t bins_max = 100;
  std::vector<EstimatorVariant> estimators;  ///< default: two plain and three Mondrian configurations
  std::vector<std::uint64_t> seeds;          ///< default 0..4
  std::vector<double> confidences;           ///< default {0.90, 0.95}
  std::size_t n_cal = 1000;
  double beta = kDefaultBeta;
  BinAttribute mondrian_attribute = BinAttribute::difficulty;
  std::size_t min_bin_size = kDefaultMinBinSize;
  bool normalize_mondrian = false;
  Predictor predictor = Predictor::cps;
  SweepData data;
};

/// Fills every empty grid with its default.
SweepConfig with_defaults(SweepConfig config);

/// Throws UsageError for unknown keys, bad values or empty grids.
SweepConfig parse_sweep_config(const nlohmann::json& doc);
SweepConfig load_sweep_config(const std::filesystem::path& path);

/// Number of cells the resolved grid expands to.
std::size_t grid_cardinality(const SweepConfig& config);

// ---------------------------------------------------------------------------
// Ledger

/// One JSON object per line, keys in the order config_id, block, estimator,
/// k, bins, seed, confidence, mean_width, coverage, n_test, status. Absent
/// numbers are null; bins is null for the plain variant.
std::string format_ledger_line(const RunResult& r);
RunResult parse_ledger_line(const std::string& line);
std::vector<RunResult> read_ledger(const std::filesystem::path& path);

/// Append-only result ledger keyed by config_id. Opening an existing file
/// loads its rows so a rerun can skip completed cells.
class Ledger {
 public:
  explicit Ledger(std::filesystem::path path);

  bool contains(const std::string& config_id) const { return rows_.count(config_id) != 0; }
  const RunResult& at(const std::string& config_id) const { return rows_.at(config_id); }
  std::size_t size() const noexcept { return rows_.size(); }
  const std::map<std::string, RunResult>& rows() const noexcept { return rows_; }
  void append(const RunResult& r);

 private:
  std::filesystem::path path_;
  std::map<std::string, RunResult> rows_;
};

/// Runs the grid over in-memory tables. Results come back in canonical order
/// (seed, estimator, k, bins, confidence) regardless of `exec`; cells that
/// cannot be fitted are returned with RunStatus::infeasible. With a ledger,
/// cells already present are reused and new ones appended in canonical order.
std::vector<RunResult> run_sweep(const SweepConfig& config, const PredictionTable& pool,
                                 const PredictionTable& test, Execution exec = Execution::parallel,
                                 Ledger* ledger = nullptr);

/// Loads or generates the configured data, then runs the grid.
std::vector<RunResult> run_sweep(const SweepConfig& config, Execution exec = Execution::parallel,
                                 Ledger* ledger = nullptr);

}  // namespace cpreg
