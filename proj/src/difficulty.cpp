#include "cpreg/difficulty.hpp"

#include <cmath>
#include <string>

#include "cpreg/error.hpp"

namespace cpreg {

std::string_view estimator_label(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::knn_target_std: return "norm_std";
    case EstimatorKind::knn_residual: return "norm_res";
    case EstimatorKind::target_strangeness: return "norm_targ_strng";
  }
  return "unknown";
}

EstimatorKind parse_estimator_kind(std::string_view label) {
  for (auto kind : kAllEstimatorKinds) {
    if (estimator_label(kind) == label) return kind;
  }
  throw UsageError("unknown estimator '" + std::string(label) +
                   "' (expected norm_std, norm_res or norm_targ_strng)");
}

FittedEstimator::FittedEstimator(EstimatorSpec spec, std::shared_ptr<const NeighborIndex> index)
    : spec_(spec), index_(std::move(index)) {}

FittedEstimator fit_estimator(const EstimatorSpec& spec, std::shared_ptr<const NeighborIndex> index) {
  if (!index) throw UsageError("estimator needs a neighbor index");
  if (spec.k < 1 || spec.k > index->size()) {
    throw UsageError("estimator k=" + std::to_string(spec.k) + " outside [1, " +
                     std::to_string(index->size()) + "]");
  }
  if (!(spec.beta >= 0.0) || !std::isfinite(spec.beta)) {
    throw UsageError("estimator beta must be a finite nonnegative number");
  }
  return FittedEstimator(spec, std::move(index));
}

double sigma_from_neighbors(const EstimatorSpec& spec, const NeighborIndex& index,
                            std::span<const Neighbor> neighbors, double predicted_target) {
  const auto targets = index.targets();
  const auto k = static_cast<double>(neighbors.size());
  double raw = 0.0;
  switch (spec.kind) {
    case EstimatorKind::knn_target_std: {
      double mean = 0.0;
      for (const auto& nb : neighbors) mean += targets[nb.position];
      mean /= k;
      double ss = 0.0;
      for (const auto& nb : neighbors) {
        const double dev = targets[nb.position] - mean;
        ss += dev * dev;
      }
      raw = std::sqrt(ss / k);
      break;
    }
    case EstimatorKind::knn_residual: {
      const auto residuals = index.residuals();
      for (const auto& nb : neighbors) raw += residuals[nb.position];
      raw /= k;
      break;
    }
    case EstimatorKind::target_strangeness: {
      for (const auto& nb : neighbors) raw += std::abs(predicted_target - targets[nb.position]);
      raw /= k;
      break;
    }
  }
  return raw + spec.beta;
}

DifficultyEstimate estimate(const FittedEstimator& fitted, std::span<const double> scaled_query,
                            double predicted_target) {
  if (!std::isfinite(predicted_target)) throw UsageError("predicted target is not finite");
  for (double v : scaled_query) {
    if (!std::isfinite(v)) throw UsageError("query features are not finite");
  }
  const auto nbrs = knn_query(fitted.index(), scaled_query, fitted.spec().k);
  return {sigma_from_neighbors(fitted.spec(), fitted.index(), nbrs, predicted_target)};
}

std::vector<double> estimate_batch(const FittedEstimator& fitted, std::span<const double> scaled_queries,
                                   std::span<const double> predictions, Execution exec) {
  const std::size_t d = fitted.index().dimension();
  if (scaled_queries.size() != predictions.size() * d) {
    throw UsageError("estimate_batch: query matrix and prediction vector disagree in length");
  }
  for (double v : predictions) {
    if (!std::isfinite(v)) throw UsageError("predicted target is not finite");
  }
  const auto batch = knn_query_batch(fitted.index(), scaled_queries, fitted.spec().k, exec);
  std::vector<double> sigmas(predictions.size());
  const auto n = static_cast<std::ptrdiff_t>(predictions.size());
  if (exec == Execution::serial) {
    for (std::ptrdiff_t q = 0; q < n; ++q) {
      sigmas[q] = sigma_from_neighbors(fitted.spec(), fitted.index(), batch.row(q), predictions[q]);
    }
  } else {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t q = 0; q < n; ++q) {
      sigmas[q] = sigma_from_neighbors(fitted.spec(), fitted.index(), batch.row(q), predictions[q]);
    }
  }
  return sigmas;
}

std::vector<double> estimate_table(const FittedEstimator& fitted, const PredictionTable& table,
                                   Execution exec) {
  const auto scaled = scale_features(fitted.index().scaler(), table);
  const auto preds = table.predictions();
  return estimate_batch(fitted, scaled, preds, exec);
}

}  // namespace cpreg
