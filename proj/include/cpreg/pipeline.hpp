#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "cpreg/conformal.hpp"
#include "cpreg/dataset.hpp"
#include "cpreg/difficulty.hpp"
#include "cpreg/evaluation.hpp"
#include "cpreg/execution.hpp"

namespace cpreg {

/// How intervals are extracted: two-tailed from a conformal predictive
/// system, or symmetric from a conformal regressor.
enum class Predictor { cps, cr };

std::string_view to_string(Predictor p);
Predictor parse_predictor(std::string_view label);

/// One conformal method: difficulty estimator, variant and extraction.
struct MethodOptions {
  std::optional<EstimatorSpec> estimator;  ///< none: unnormalized residual scores
  Variant variant = Variant::plain;
  MondrianSpec mondrian;                   ///< read only for Variant::mondrian
  /// Mondrian scores are plain residuals unless this is set, in which case
  /// they are also divided by sigma.
  bool normalize_mondrian = false;
  Predictor predictor = Predictor::cps;
  double tie_tau = kDefaultTieTau;
};

/// A fitted CR or CPS plus the wiring that decides which of sigma and the
/// Mondrian bin value each query needs.
class CalibratedModel {
 public:
  /// `cal_sigmas` holds one difficulty per calibration row, or is empty when
  /// the method has no estimator.
  static CalibratedModel fit(const PredictionTable& cal, std::span<const double> cal_sigmas,
                             const MethodOptions& method);

  std::vector<PredictionInterval> predict(std::span<const double> predictions, std::span<const double> sigmas,
                                          double confidence, Execution exec = Execution::parallel) const;

  bool normalized() const noexcept;
  bool mondrian() const noexcept { return mondrian_.has_value(); }
  /// Bins in use after duplicate merging (1 when not Mondrian).
  std::size_t bin_count() const noexcept;

 private:
  CalibratedModel(std::variant<ConformalRegressor, ConformalPredictiveSystem> model,
                  std::optional<MondrianSpec> mondrian)
      : model_(std::move(model)), mondrian_(mondrian) {}

  std::variant<ConformalRegressor, ConformalPredictiveSystem> model_;
  std::optional<MondrianSpec> mondrian_;
};

struct PipelineResult {
  std::vector<PredictionInterval> intervals;
  double coverage = 0.0;
  MeanWidth width{0.0, true};
  std::size_t bins_used = 1;
};

/// Fit scaler and index on `train`, difficulty on cal/test, calibrate, and
/// evaluate the test intervals. Tables must share one feature dimension.
PipelineResult run_pipeline(const PredictionTable& train, const PredictionTable& cal, const PredictionTable& test,
                            const MethodOptions& method, double confidence, Execution exec = Execution::parallel);

}  // namespace cpreg
