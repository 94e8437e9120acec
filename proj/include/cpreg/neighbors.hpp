#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cpreg/dataset.hpp"
#include "cpreg/execution.hpp"

namespace cpreg {

/// Lower bound applied to per-dimension spreads so constant columns scale to 0.
inline constexpr double kSpreadFloor = 1e-12;

/// Per-dimension z-score standardization (population standard deviation).
struct Scaler {
  std::vector<double> means;
  std::vector<double> spreads;

  std::size_t dimension() const noexcept { return means.size(); }
};

Scaler fit_scaler(const PredictionTable& table);

/// (x[j] - means[j]) / spreads[j]; throws UsageError on dimension mismatch.
std::vector<double> apply_scaler(const Scaler& scaler, std::span<const double> features);

/// Scales every row of `table`, returning a row-major n x d matrix.
std::vector<double> scale_features(const Scaler& scaler, const PredictionTable& table);

/// Brute-force Euclidean neighbor index over a scaled CP-train table.
class NeighborIndex {
 public:
  NeighborIndex(Scaler scaler, std::vector<double> points, std::vector<double> targets,
                std::vector<double> residuals);

  std::size_t size() const noexcept { return targets_.size(); }
  std::size_t dimension() const noexcept { return scaler_.dimension(); }
  const Scaler& scaler() const noexcept { return scaler_; }

  std::span<const double> point(std::size_t i) const {
    return {points_.data() + i * dimension(), dimension()};
  }
  std::span<const double> points() const noexcept { return points_; }
  std::span<const double> targets() const noexcept { return targets_; }
  /// |target - prediction| of each stored point.
  std::span<const double> residuals() const noexcept { return residuals_; }

 private:
  Scaler scaler_;
  std::vector<double> points_;
  std::vector<double> targets_;
  std::vector<double> residuals_;
};

NeighborIndex build_index(const PredictionTable& table, const Scaler& scaler);

struct Neighbor {
  std::size_t position;
  double distance;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// The k stored points nearest to an already-scaled query, ascending by
/// distance with ties broken by ascending position.
std::vector<Neighbor> knn_query(const NeighborIndex& index, std::span<const double> query,
                                std::size_t k);

/// k neighbors for each of `n_queries` rows of a row-major query matrix.
class KnnBatch {
 public:
  KnnBatch(std::size_t n_queries, std::size_t k) : k_(k), neighbors_(n_queries * k) {}

  std::size_t size() const noexcept { return k_ == 0 ? 0 : neighbors_.size() / k_; }
  std::size_t k() const noexcept { return k_; }
  std::span<const Neighbor> row(std::size_t q) const { return {neighbors_.data() + q * k_, k_}; }
  std::span<Neighbor> row(std::size_t q) { return {neighbors_.data() + q * k_, k_}; }

  friend bool operator==(const KnnBatch&, const KnnBatch&) = default;

 private:
  std::size_t k_;
  std::vector<Neighbor> neighbors_;
};

KnnBatch knn_query_batch(const NeighborIndex& index, std::span<const double> queries, std::size_t k,
                         Execution exec = Execution::parallel);

}  // namespace cpreg
