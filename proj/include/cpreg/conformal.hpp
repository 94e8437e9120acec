#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "cpreg/dataset.hpp"
#include "cpreg/difficulty.hpp"
#include "cpreg/execution.hpp"

namespace cpreg {

/// Absolute slack used when turning (n+1)*level into an integer rank, so a
/// product that is an integer in exact arithmetic is not pushed past it by
/// floating-point rounding.
inline constexpr double kRankSlack = 1e-9;

/// Ascending calibration scores.
struct NonconformityScores {
  std::vector<double> values;
  bool normalized = false;

  std::size_t size() const noexcept { return values.size(); }
};

/// Sorts `values` and checks they are finite.
NonconformityScores make_scores(std::vector<double> values, bool normalized);

enum class QuantileMode {
  finite_sample,  ///< rank ceil((n+1)c); +inf when it exceeds n
  clamp_to_max,   ///< as above but returns the largest score instead of +inf (reporting only)
};

struct QuantileResult {
  double value;
  bool bounded;
};

/// ceil((n+1) * confidence), the 1-based rank of the conformal quantile.
std::size_t quantile_rank(std::size_t n, double confidence);

QuantileResult conformal_quantile(const NonconformityScores& scores, double confidence,
                                  QuantileMode mode = QuantileMode::finite_sample);

struct PredictionInterval {
  double lower;
  double upper;
  double confidence;

  bool bounded() const noexcept;
  double width() const noexcept { return upper - lower; }
};

// ---------------------------------------------------------------------------
// Mondrian categories

enum class BinAttribute { difficulty, prediction };

std::string_view to_string(BinAttribute attr);
BinAttribute parse_bin_attribute(std::string_view label);

inline constexpr std::size_t kDefaultMinBinSize = 20;

/// Equal-frequency partition of the real line into right-closed bins
/// (-inf, b1], (b1, b2], ..., (b_last, +inf).
struct MondrianPartition {
  std::vector<double> boundaries;
  std::size_t requested_bins = 1;

  std::size_t bin_count() const noexcept { return boundaries.size() + 1; }
  bool reduced() const noexcept { return bin_count() < requested_bins; }
};

/// Boundaries at the j/n_bins quantiles (linear interpolation) of `values`.
/// Duplicate boundaries, and boundaries that would leave the top bin empty,
/// are dropped with a warning. Throws InfeasibleError if any remaining bin
/// holds fewer than `min_bin_size` values.
MondrianPartition mondrian_bins(std::span<const double> values, std::size_t n_bins,
                                std::size_t min_bin_size = kDefaultMinBinSize);

std::size_t assign_bin(const MondrianPartition& partition, double value);

struct MondrianSpec {
  BinAttribute attribute = BinAttribute::difficulty;
  std::size_t n_bins = 10;
  std::size_t min_bin_size = kDefaultMinBinSize;
};

// ---------------------------------------------------------------------------
// Conformal regressor

class ConformalRegressor {
 public:
  ConformalRegressor(NonconformityScores global, std::optional<MondrianPartition> partition,
                     std::vector<NonconformityScores> per_bin);

  bool normalized() const noexcept { return global_.normalized; }
  bool mondrian() const noexcept { return partition_.has_value(); }
  const NonconformityScores& scores() const noexcept { return global_; }
  const std::optional<MondrianPartition>& partition() const noexcept { return partition_; }
  const NonconformityScores& bin_scores(std::size_t bin) const { return per_bin_.at(bin); }

  /// Scores applicable to an instance: the assigned bin's, or the global set.
  const NonconformityScores& scores_for(std::optional<double> bin_value) const;

 private:
  NonconformityScores global_;
  std::optional<MondrianPartition> partition_;
  std::vector<NonconformityScores> per_bin_;
};

/// Fits from absolute calibration residuals. `sigmas` empty means
/// unnormalized; otherwise scores are residual / sigma. With `mondrian`,
/// `bin_values` (one per row) drive the partition.
ConformalRegressor fit_regressor(std::span<const double> abs_residuals, std::span<const double> sigmas,
                                 const std::optional<MondrianSpec>& mondrian = std::nullopt,
                                 std::span<const double> bin_values = {});

/// Table-level fit. With an estimator, calibration sigmas come from it and
/// (when `normalize` is set) divide the residuals; Mondrian bins use the
/// sigmas or the predictions per MondrianSpec::attribute.
ConformalRegressor fit_regressor(const PredictionTable& cal, const FittedEstimator* estimator,
                                 const std::optional<MondrianSpec>& mondrian = std::nullopt,
                                 bool normalize = true);

/// `sigma` must be present iff the regressor is normalized and `bin_value`
/// iff it is Mondrian. Unbounded quantiles yield infinite endpoints.
PredictionInterval predict_interval(const ConformalRegressor& cr, double prediction,
                                    std::optional<DifficultyEstimate> sigma, std::optional<double> bin_value,
                                    double confidence);

/// Vectorized predict_interval; empty `sigmas` / `bin_values` mean absent.
std::vector<PredictionInterval> predict_intervals(const ConformalRegressor& cr,
                                                  std::span<const double> predictions,
                                                  std::span<const double> sigmas,
                                                  std::span<const double> bin_values, double confidence,
                                                  Execution exec = Execution::parallel);

// ---------------------------------------------------------------------------
// Conformal predictive system

inline constexpr double kDefaultTieTau = 0.5;

class ConformalPredictiveSystem {
 public:
  ConformalPredictiveSystem(NonconformityScores global, std::optional<MondrianPartition> partition,
                            std::vector<NonconformityScores> per_bin, double tie_tau);

  bool normalized() const noexcept { return global_.normalized; }
  bool mondrian() const noexcept { return partition_.has_value(); }
  double tie_tau() const noexcept { return tie_tau_; }
  /// Ascending signed scores (y - yhat) / sigma.
  const NonconformityScores& signed_scores() const noexcept { return global_; }
  const std::optional<MondrianPartition>& partition() const noexcept { return partition_; }
  const NonconformityScores& scores_for(std::optional<double> bin_value) const;

 private:
  NonconformityScores global_;
  std::optional<MondrianPartition> partition_;
  std::vector<NonconformityScores> per_bin_;
  double tie_tau_;
};

/// Fits from signed calibration residuals y - yhat. Conventions for
/// `sigmas`, `mondrian` and `bin_values` follow fit_regressor.
ConformalPredictiveSystem fit_cps(std::span<const double> signed_residuals, std::span<const double> sigmas,
                                  double tie_tau = kDefaultTieTau,
                                  const std::optional<MondrianSpec>& mondrian = std::nullopt,
                                  std::span<const double> bin_values = {});

ConformalPredictiveSystem fit_cps(const PredictionTable& cal, const FittedEstimator* estimator,
                                  double tie_tau = kDefaultTieTau,
                                  const std::optional<MondrianSpec>& mondrian = std::nullopt,
                                  bool normalize = true);

/// Conformal predictive CDF at y using the system's fixed tie_tau:
/// (#{t_i < y} + tau * (#{t_i == y} + 1)) / (n + 1), t_i = yhat + sigma * C_i.
double cps_cdf(const ConformalPredictiveSystem& cps, double prediction, std::optional<DifficultyEstimate> sigma,
               double y, std::optional<double> bin_value = std::nullopt);

/// As cps_cdf with an explicit tie-breaking value tau in [0, 1].
double cps_cdf_with_tau(const ConformalPredictiveSystem& cps, double prediction,
                        std::optional<DifficultyEstimate> sigma, double y, double tau,
                        std::optional<double> bin_value = std::nullopt);

/// Seeded source of uniform tau draws for randomized (exactly valid) CDFs.
class RandomTau {
 public:
  explicit RandomTau(std::uint64_t seed) : rng_(seed) {}
  /// Uniform on [0, 1) from the top 53 bits of one mt19937_64 draw.
  double next() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 rng_;
};

/// Two-tailed interval with eps = 1 - confidence: lower knot rank
/// floor((n+1) eps/2) (-inf below 1), upper rank ceil((n+1)(1-eps/2))
/// (+inf above n).
PredictionInterval cps_interval(const ConformalPredictiveSystem& cps, double prediction,
                                std::optional<DifficultyEstimate> sigma, double confidence,
                                std::optional<double> bin_value = std::nullopt);

std::vector<PredictionInterval> cps_intervals(const ConformalPredictiveSystem& cps,
                                              std::span<const double> predictions,
                                              std::span<const double> sigmas,
                                              std::span<const double> bin_values, double confidence,
                                              Execution exec = Execution::parallel);

}  // namespace cpreg
