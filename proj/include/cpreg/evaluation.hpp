#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cpreg/conformal.hpp"
#include "cpreg/difficulty.hpp"

namespace cpreg {

/// Fraction of targets inside their closed interval; infinite endpoints cover.
double effective_coverage(std::span<const PredictionInterval> intervals, std::span<const double> targets);

/// Covered indicator for one instance, the same rule effective_coverage counts.
inline bool covers(const PredictionInterval& pi, double y) noexcept { return pi.lower <= y && y <= pi.upper; }

struct MeanWidth {
  double value;  ///< +inf when any interval is unbounded
  bool bounded;
};

MeanWidth mean_width(std::span<const PredictionInterval> intervals);

enum class Variant { plain, mondrian };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view label);

/// Everything identifying one sweep cell except the seed.
struct ConfigKey {
  std::string block;  ///< data / feature configuration label
  EstimatorKind estimator = EstimatorKind::knn_target_std;
  Variant variant = Variant::plain;
  std::size_t k = 10;
  std::size_t bins = 0;  ///< 0 for the plain variant
  double confidence = 0.9;

  /// "block|estimator|variant|k=..|bins=..|conf=.."
  std::string id() const;
  friend bool operator==(const ConfigKey&, const ConfigKey&) = default;
};

enum class RunStatus {
  ok,          ///< bounded intervals, numbers valid
  unbounded,   ///< at least one interval infinite; mean_width absent
  infeasible,  ///< cell could not be fitted (e.g. Mondrian bin underflow)
};

std::string_view to_string(RunStatus s);
RunStatus parse_run_status(std::string_view label);

struct RunResult {
  ConfigKey config;
  std::uint64_t seed = 0;
  std::optional<double> mean_width;
  std::optional<double> coverage;
  std::size_t n_test = 0;
  RunStatus status = RunStatus::ok;

  /// Seeded key: ConfigKey::id() + "|seed=.."
  std::string config_id() const;
};

struct SummaryStats {
  double mean_of_widths;
  double std_of_widths;  ///< population std; 0 for a single survivor
  double mean_coverage;
};

struct EvaluationSummary {
  ConfigKey config;
  std::optional<SummaryStats> stats;  ///< absent when no run met the floor
  std::size_t n_runs_aggregated = 0;
  std::size_t n_runs_total = 0;
  std::size_t n_excluded_unbounded = 0;
  std::size_t n_excluded_infeasible = 0;

  bool recorded() const noexcept { return stats.has_value(); }
};

inline constexpr double kDefaultCoverageFloor = 0.89;

/// Groups runs by seedless config (first-appearance order) and averages the
/// survivors: runs with coverage strictly above `coverage_floor` and a
/// bounded width.
std::vector<EvaluationSummary> aggregate_runs(std::span<const RunResult> results,
                                              double coverage_floor = kDefaultCoverageFloor);

/// Narrowest recorded summary per (block, estimator, variant), in
/// first-appearance order. Ties go to smaller k, then fewer bins.
std::vector<EvaluationSummary> select_best(std::span<const EvaluationSummary> summaries);

}  // namespace cpreg
