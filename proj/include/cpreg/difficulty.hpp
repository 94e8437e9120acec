#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "cpreg/dataset.hpp"
#include "cpreg/execution.hpp"
#include "cpreg/neighbors.hpp"

namespace cpreg {

/// KNN difficulty estimators. CLI labels: norm_std, norm_res, norm_targ_strng.
enum class EstimatorKind {
  knn_target_std,      ///< population std of the neighbors' targets
  knn_residual,        ///< mean absolute residual of the neighbors
  target_strangeness,  ///< mean |prediction - neighbor target|
};

inline constexpr EstimatorKind kAllEstimatorKinds[] = {
    EstimatorKind::knn_target_std, EstimatorKind::knn_residual, EstimatorKind::target_strangeness};

std::string_view estimator_label(EstimatorKind kind);
/// Accepts the CLI labels; throws UsageError otherwise.
EstimatorKind parse_estimator_kind(std::string_view label);

inline constexpr double kDefaultBeta = 0.01;

struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::knn_target_std;
  std::size_t k = 10;
  double beta = kDefaultBeta;
};

struct DifficultyEstimate {
  double sigma;  ///< raw estimate + beta, in target units
};

/// An EstimatorSpec bound to the CP-train neighbor index it reads from.
class FittedEstimator {
 public:
  FittedEstimator(EstimatorSpec spec, std::shared_ptr<const NeighborIndex> index);

  const EstimatorSpec& spec() const noexcept { return spec_; }
  const NeighborIndex& index() const noexcept { return *index_; }
  std::shared_ptr<const NeighborIndex> shared_index() const noexcept { return index_; }

 private:
  EstimatorSpec spec_;
  std::shared_ptr<const NeighborIndex> index_;
};

/// Throws UsageError when k is outside [1, index size] or beta is negative.
FittedEstimator fit_estimator(const EstimatorSpec& spec, std::shared_ptr<const NeighborIndex> index);

/// Difficulty for one query whose features are already scaled by the
/// index's scaler. `predicted_target` is only read by target_strangeness.
DifficultyEstimate estimate(const FittedEstimator& fitted, std::span<const double> scaled_query,
                            double predicted_target);

/// Raw-estimate kernel over an already computed neighbor list (beta added).
double sigma_from_neighbors(const EstimatorSpec& spec, const NeighborIndex& index,
                            std::span<const Neighbor> neighbors, double predicted_target);

/// Sigmas for a row-major matrix of scaled queries.
std::vector<double> estimate_batch(const FittedEstimator& fitted, std::span<const double> scaled_queries,
                                   std::span<const double> predictions, Execution exec = Execution::parallel);

/// Scales `table` with the index's scaler and returns one sigma per row.
std::vector<double> estimate_table(const FittedEstimator& fitted, const PredictionTable& table,
                                   Execution exec = Execution::parallel);

}  // namespace cpreg
