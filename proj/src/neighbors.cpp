#include "cpreg/neighbors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "cpreg/error.hpp"

namespace cpreg {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

Scaler fit_scaler(const PredictionTable& table) {
  if (table.empty()) throw UsageError("cannot fit a scaler on an empty table");
  const std::size_t d = table.dimension();
  const auto n = static_cast<double>(table.size());
  Scaler s;
  s.means.assign(d, 0.0);
  s.spreads.assign(d, 0.0);
  for (const auto& r : table.records()) {
    for (std::size_t j = 0; j < d; ++j) s.means[j] += r.features[j];
  }
  for (auto& m : s.means) m /= n;
  for (const auto& r : table.records()) {
    for (std::size_t j = 0; j < d; ++j) {
      const double dev = r.features[j] - s.means[j];
      s.spreads[j] += dev * dev;
    }
  }
  for (auto& sp : s.spreads) sp = std::max(std::sqrt(sp / n), kSpreadFloor);
  return s;
}

std::vector<double> apply_scaler(const Scaler& scaler, std::span<const double> features) {
  if (features.size() != scaler.dimension()) {
    throw UsageError("scaler dimension " + std::to_string(scaler.dimension()) +
                     " does not match feature vector of size " + std::to_string(features.size()));
  }
  std::vector<double> out(features.size());
  for (std::size_t j = 0; j < features.size(); ++j) {
    out[j] = (features[j] - scaler.means[j]) / scaler.spreads[j];
  }
  return out;
}

std::vector<double> scale_features(const Scaler& scaler, const PredictionTable& table) {
  if (table.dimension() != scaler.dimension()) {
    throw UsageError("scaler dimension " + std::to_string(scaler.dimension()) +
                     " does not match table dimension " + std::to_string(table.dimension()));
  }
  const std::size_t d = table.dimension();
  std::vector<double> out(table.size() * d);
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& x = table[i].features;
    for (std::size_t j = 0; j < d; ++j) {
      out[i * d + j] = (x[j] - scaler.means[j]) / scaler.spreads[j];
    }
  }
  return out;
}

NeighborIndex::NeighborIndex(Scaler scaler, std::vector<double> points, std::vector<double> targets,
                             std::vector<double> residuals)
    : scaler_(std::move(scaler)),
      points_(std::move(points)),
      targets_(std::move(targets)),
      residuals_(std::move(residuals)) {
  if (targets_.empty()) throw UsageError("neighbor index needs at least one point");
  if (dimension() == 0) throw UsageError("neighbor index needs at least one feature");
  if (residuals_.size() != targets_.size() || points_.size() != targets_.size() * dimension()) {
    throw UsageError("neighbor index arrays have inconsistent lengths");
  }
  auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  if (!finite(points_) || !finite(targets_) || !finite(residuals_)) {
    throw UsageError("neighbor index values must be finite");
  }
}

NeighborIndex build_index(const PredictionTable& table, const Scaler& scaler) {
  if (table.empty()) throw UsageError("cannot index an empty table");
  return NeighborIndex(scaler, scale_features(scaler, table), table.targets(), table.abs_residuals());
}

namespace {

// Total order used for selection: distance first, then stored position.
inline bool closer(const Neighbor& a, const Neighbor& b) {
  return a.distance < b.distance || (a.distance == b.distance && a.position < b.position);
}

inline double euclidean(const double* a, const double* b, std::size_t d) {
  double acc = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double diff = a[j] - b[j];
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

// Bounded max-heap selection; `out` receives k neighbors in ascending order.
void select_k(const NeighborIndex& index, const double* query, std::size_t k, std::span<Neighbor> out,
              std::vector<Neighbor>& heap) {
  const std::size_t d = index.dimension();
  const double* pts = index.points().data();
  heap.clear();
  for (std::size_t i = 0; i < index.size(); ++i) {
    const Neighbor cand{i, euclidean(pts + i * d, query, d)};
    if (heap.size() < k) {
      heap.push_back(cand);
      std::push_heap(heap.begin(), heap.end(), closer);
    } else if (closer(cand, heap.front())) {
      std::pop_heap(heap.begin(), heap.end(), closer);
      heap.back() = cand;
      std::push_heap(heap.begin(), heap.end(), closer);
    }
  }
  std::sort_heap(heap.begin(), heap.end(), closer);
  std::copy(heap.begin(), heap.end(), out.begin());
}

void check_query(const NeighborIndex& index, std::size_t query_len, std::size_t k) {
  if (k < 1 || k > index.size()) {
    throw UsageError("k must satisfy 1 <= k <= " + std::to_string(index.size()) + ", got " +
                     std::to_string(k));
  }
  if (query_len != index.dimension()) {
    throw UsageError("query dimension " + std::to_string(query_len) + " does not match index dimension " +
                     std::to_string(index.dimension()));
  }
}

}  // namespace

std::vector<Neighbor> knn_query(const NeighborIndex& index, std::span<const double> query, std::size_t k) {
  check_query(index, query.size(), k);
  std::vector<Neighbor> out(k);
  std::vector<Neighbor> heap;
  heap.reserve(k);
  select_k(index, query.data(), k, out, heap);
  return out;
}

KnnBatch knn_query_batch(const NeighborIndex& index, std::span<const double> queries, std::size_t k,
                         Execution exec) {
  const std::size_t d = index.dimension();
  if (queries.size() % d != 0) {
    throw UsageError("query matrix size is not a multiple of the index dimension");
  }
  check_query(index, d, k);
  const std::size_t n_queries = queries.size() / d;
  KnnBatch batch(n_queries, k);

  if (exec == Execution::serial) {
    std::vector<Neighbor> heap;
    heap.reserve(k);
    for (std::size_t q = 0; q < n_queries; ++q) select_k(index, queries.data() + q * d, k, batch.row(q), heap);
    return batch;
  }

#pragma omp parallel
  {
    std::vector<Neighbor> heap;
    heap.reserve(k);
#pragma omp for schedule(static)
    for (std::ptrdiff_t q = 0; q < static_cast<std::ptrdiff_t>(n_queries); ++q) {
      const auto row = static_cast<std::size_t>(q);
      select_k(index, queries.data() + row * d, k, batch.row(row), heap);
    }
  }
  return batch;
}

}  // namespace cpreg
