#include "cpreg/pipeline.hpp"

#include <memory>
#include <string>

#include "cpreg/error.hpp"
#include "cpreg/neighbors.hpp"

namespace cpreg {

std::string_view to_string(Predictor p) { return p == Predictor::cps ? "cps" : "cr"; }

Predictor parse_predictor(std::string_view label) {
  if (label == "cps") return Predictor::cps;
  if (label == "cr") return Predictor::cr;
  throw UsageError("unknown predictor '" + std::string(label) + "' (expected cps or cr)");
}

namespace {

bool uses_sigma_for_scores(const MethodOptions& m) {
  if (!m.estimator) return false;
  return m.variant == Variant::plain || m.normalize_mondrian;
}

}  // namespace

CalibratedModel CalibratedModel::fit(const PredictionTable& cal, std::span<const double> cal_sigmas,
                                     const MethodOptions& method) {
  if (cal.empty()) throw UsageError("calibration set is empty");
  if (method.estimator && cal_sigmas.size() != cal.size()) {
    throw UsageError("calibration sigmas missing or of the wrong length");
  }
  if (!method.estimator && !cal_sigmas.empty()) {
    throw UsageError("calibration sigmas given for a method without an estimator");
  }

  const std::span<const double> score_sigmas = uses_sigma_for_scores(method) ? cal_sigmas : std::span<const double>{};
  std::optional<MondrianSpec> mondrian;
  std::vector<double> bin_values;
  if (method.variant == Variant::mondrian) {
    mondrian = method.mondrian;
    if (mondrian->attribute == BinAttribute::difficulty) {
      if (!method.estimator) throw UsageError("Mondrian binning on difficulty requires an estimator");
      bin_values.assign(cal_sigmas.begin(), cal_sigmas.end());
    } else {
      bin_values = cal.predictions();
    }
  }

  if (method.predictor == Predictor::cr) {
    const auto residuals = cal.abs_residuals();
    return CalibratedModel(fit_regressor(residuals, score_sigmas, mondrian, bin_values), mondrian);
  }
  const auto residuals = cal.signed_residuals();
  return CalibratedModel(fit_cps(residuals, score_sigmas, method.tie_tau, mondrian, bin_values), mondrian);
}

bool CalibratedModel::normalized() const noexcept {
  return std::visit([](const auto& m) { return m.normalized(); }, model_);
}

std::size_t CalibratedModel::bin_count() const noexcept {
  return std::visit([](const auto& m) { return m.partition() ? m.partition()->bin_count() : std::size_t{1}; },
                    model_);
}

std::vector<PredictionInterval> CalibratedModel::predict(std::span<const double> predictions,
                                                         std::span<const double> sigmas, double confidence,
                                                         Execution exec) const {
  const bool need_sigmas = normalized() || (mondrian_ && mondrian_->attribute == BinAttribute::difficulty);
  if (need_sigmas && sigmas.size() != predictions.size()) {
    throw UsageError("test sigmas missing or of the wrong length");
  }
  const std::span<const double> score_sigmas = normalized() ? sigmas : std::span<const double>{};
  std::span<const double> bin_values;
  if (mondrian_) bin_values = mondrian_->attribute == BinAttribute::difficulty ? sigmas : predictions;

  if (const auto* cr = std::get_if<ConformalRegressor>(&model_)) {
    return predict_intervals(*cr, predictions, score_sigmas, bin_values, confidence, exec);
  }
  return cps_intervals(std::get<ConformalPredictiveSystem>(model_), predictions, score_sigmas, bin_values,
                       confidence, exec);
}

PipelineResult run_pipeline(const PredictionTable& train, const PredictionTable& cal, const PredictionTable& test,
                            const MethodOptions& method, double confidence, Execution exec) {
  if (cal.dimension() != train.dimension() || test.dimension() != train.dimension()) {
    throw DataError("train, calibration and test tables differ in feature dimension (" +
                    std::to_string(train.dimension()) + ", " + std::to_string(cal.dimension()) + ", " +
                    std::to_string(test.dimension()) + ")");
  }
  if (test.empty()) throw DataError("test table is empty");

  std::vector<double> cal_sigmas;
  std::vector<double> test_sigmas;
  if (method.estimator) {
    auto index = std::make_shared<const NeighborIndex>(build_index(train, fit_scaler(train)));
    const auto fitted = fit_estimator(*method.estimator, std::move(index));
    cal_sigmas = estimate_table(fitted, cal, exec);
    test_sigmas = estimate_table(fitted, test, exec);
  }

  const auto model = CalibratedModel::fit(cal, cal_sigmas, method);
  const auto preds = test.predictions();
  const auto targets = test.targets();

  PipelineResult out;
  out.intervals = model.predict(preds, test_sigmas, confidence, exec);
  out.coverage = effective_coverage(out.intervals, targets);
  out.width = mean_width(out.intervals);
  out.bins_used = model.bin_count();
  return out;
}

}  // namespace cpreg
