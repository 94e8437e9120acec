#include "cpreg/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <spdlog/spdlog.h>

#include "cpreg/error.hpp"

namespace cpreg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_confidence(double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0)) {
    throw UsageError("confidence must lie in (0, 1), got " + std::to_string(confidence));
  }
}

// 1-based ranks of the CPS interval endpoints; 0 and n+1 mean unbounded.
std::size_t lower_rank(std::size_t n, double confidence) {
  const double eps = 1.0 - confidence;
  const double x = static_cast<double>(n + 1) * eps / 2.0;
  return static_cast<std::size_t>(std::floor(x + kRankSlack));
}

std::size_t upper_rank(std::size_t n, double confidence) {
  const double eps = 1.0 - confidence;
  const double x = static_cast<double>(n + 1) * (1.0 - eps / 2.0);
  return static_cast<std::size_t>(std::ceil(x - kRankSlack));
}

double checked_sigma(std::optional<DifficultyEstimate> sigma, bool normalized, const char* who) {
  if (normalized != sigma.has_value()) {
    throw UsageError(std::string(who) +
                     (normalized ? ": normalized model requires a difficulty estimate"
                                 : ": unnormalized model takes no difficulty estimate"));
  }
  if (!sigma) return 1.0;
  if (!(sigma->sigma > 0.0) || !std::isfinite(sigma->sigma)) {
    throw UsageError(std::string(who) + ": difficulty estimate must be finite and positive");
  }
  return sigma->sigma;
}

void check_bin_value(std::optional<double> bin_value, bool mondrian, const char* who) {
  if (mondrian != bin_value.has_value()) {
    throw UsageError(std::string(who) + (mondrian ? ": Mondrian model requires a bin value"
                                                  : ": non-Mondrian model takes no bin value"));
  }
}

// Batch kernels validate up front so no exception is raised inside a
// parallel region.
void check_batch_sigmas(std::span<const double> sigmas) {
  for (double v : sigmas) {
    if (!(v > 0.0) || !std::isfinite(v)) throw UsageError("difficulty estimates must be finite and positive");
  }
}

// Scores (residual / sigma) plus an optional partition with per-bin scores.
struct FittedScores {
  NonconformityScores global;
  std::optional<MondrianPartition> partition;
  std::vector<NonconformityScores> per_bin;
};

FittedScores fit_scores(std::span<const double> residuals, std::span<const double> sigmas,
                        const std::optional<MondrianSpec>& mondrian, std::span<const double> bin_values) {
  if (residuals.empty()) throw UsageError("calibration set is empty");
  const bool normalized = !sigmas.empty();
  if (normalized && sigmas.size() != residuals.size()) {
    throw UsageError("calibration sigmas and residuals differ in length");
  }
  std::vector<double> raw(residuals.begin(), residuals.end());
  if (normalized) {
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (!(sigmas[i] > 0.0) || !std::isfinite(sigmas[i])) {
        throw UsageError("calibration sigma at row " + std::to_string(i) + " is not finite and positive");
      }
      raw[i] /= sigmas[i];
    }
  }

  FittedScores out;
  if (mondrian) {
    if (bin_values.size() != residuals.size()) {
      throw UsageError("Mondrian bin values and calibration residuals differ in length");
    }
    out.partition = mondrian_bins(bin_values, mondrian->n_bins, mondrian->min_bin_size);
    std::vector<std::vector<double>> buckets(out.partition->bin_count());
    for (std::size_t i = 0; i < raw.size(); ++i) buckets[assign_bin(*out.partition, bin_values[i])].push_back(raw[i]);
    out.per_bin.reserve(buckets.size());
    for (auto& b : buckets) out.per_bin.push_back(make_scores(std::move(b), normalized));
  }
  out.global = make_scores(std::move(raw), normalized);
  return out;
}

struct TableInputs {
  std::vector<double> sigmas;
  std::vector<double> bin_values;
};

TableInputs table_inputs(const PredictionTable& cal, const FittedEstimator* estimator,
                         const std::optional<MondrianSpec>& mondrian, bool normalize) {
  if (cal.empty()) throw UsageError("calibration set is empty");
  if (estimator && estimator->index().dimension() != cal.dimension()) {
    throw UsageError("estimator index dimension does not match the calibration table");
  }
  std::vector<double> sigmas;
  if (estimator) sigmas = estimate_table(*estimator, cal);
  TableInputs in;
  if (mondrian) {
    if (mondrian->attribute == BinAttribute::difficulty) {
      if (!estimator) throw UsageError("Mondrian binning on difficulty requires a difficulty estimator");
      in.bin_values = sigmas;
    } else {
      in.bin_values = cal.predictions();
    }
  }
  if (estimator && normalize) in.sigmas = std::move(sigmas);
  return in;
}

const NonconformityScores& pick_scores(const NonconformityScores& global,
                                       const std::optional<MondrianPartition>& partition,
                                       const std::vector<NonconformityScores>& per_bin,
                                       std::optional<double> bin_value) {
  if (!partition) return global;
  if (!bin_value) throw UsageError("Mondrian model requires a bin value");
  return per_bin[assign_bin(*partition, *bin_value)];
}

}  // namespace

// ---------------------------------------------------------------------------

NonconformityScores make_scores(std::vector<double> values, bool normalized) {
  for (double v : values) {
    if (!std::isfinite(v)) throw UsageError("nonconformity scores must be finite");
  }
  std::sort(values.begin(), values.end());
  return NonconformityScores{std::move(values), normalized};
}

std::size_t quantile_rank(std::size_t n, double confidence) {
  check_confidence(confidence);
  const double x = static_cast<double>(n + 1) * confidence;
  return static_cast<std::size_t>(std::ceil(x - kRankSlack));
}

QuantileResult conformal_quantile(const NonconformityScores& scores, double confidence, QuantileMode mode) {
  if (scores.values.empty()) throw UsageError("conformal quantile of an empty score set");
  const std::size_t n = scores.size();
  const std::size_t s = quantile_rank(n, confidence);
  if (s <= n) return {scores.values[std::max<std::size_t>(s, 1) - 1], true};
  if (mode == QuantileMode::clamp_to_max) return {scores.values.back(), false};
  return {kInf, false};
}

bool PredictionInterval::bounded() const noexcept { return std::isfinite(lower) && std::isfinite(upper); }

// ---------------------------------------------------------------------------
// Mondrian

std::string_view to_string(BinAttribute attr) {
  return attr == BinAttribute::difficulty ? "difficulty" : "prediction";
}

BinAttribute parse_bin_attribute(std::string_view label) {
  if (label == "difficulty") return BinAttribute::difficulty;
  if (label == "prediction") return BinAttribute::prediction;
  throw UsageError("unknown Mondrian attribute '" + std::string(label) + "' (expected difficulty or prediction)");
}

MondrianPartition mondrian_bins(std::span<const double> values, std::size_t n_bins, std::size_t min_bin_size) {
  if (n_bins < 1) throw UsageError("Mondrian partition needs n_bins >= 1");
  if (values.empty()) throw UsageError("Mondrian partition of an empty value set");
  std::vector<double> sorted(values.begin(), values.end());
  for (double v : sorted) {
    if (!std::isfinite(v)) throw UsageError("Mondrian bin values must be finite");
  }
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();

  MondrianPartition part;
  part.requested_bins = n_bins;
  for (std::size_t j = 1; j < n_bins; ++j) {
    const double h = static_cast<double>(n - 1) * static_cast<double>(j) / static_cast<double>(n_bins);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double frac = h - static_cast<double>(lo);
    const double b = sorted[lo] + frac * (sorted[hi] - sorted[lo]);
    if (b >= sorted.back()) continue;  // would leave the top bin empty
    if (!part.boundaries.empty() && b <= part.boundaries.back()) continue;
    part.boundaries.push_back(b);
  }
  if (part.reduced()) {
    spdlog::warn("Mondrian partition: {} bins requested, {} remain after merging duplicate boundaries",
                 n_bins, part.bin_count());
  }

  std::vector<std::size_t> counts(part.bin_count(), 0);
  for (double v : sorted) ++counts[assign_bin(part, v)];
  for (std::size_t b = 0; b < counts.size(); ++b) {
    if (counts[b] < min_bin_size) {
      throw InfeasibleError("insufficient data: Mondrian bin " + std::to_string(b) + " holds " +
                            std::to_string(counts[b]) + " calibration values, minimum is " +
                            std::to_string(min_bin_size));
    }
  }
  return part;
}

std::size_t assign_bin(const MondrianPartition& partition, double value) {
  const auto& b = partition.boundaries;
  return static_cast<std::size_t>(std::lower_bound(b.begin(), b.end(), value) - b.begin());
}

// ---------------------------------------------------------------------------
// Conformal regressor

ConformalRegressor::ConformalRegressor(NonconformityScores global, std::optional<MondrianPartition> partition,
                                       std::vector<NonconformityScores> per_bin)
    : global_(std::move(global)), partition_(std::move(partition)), per_bin_(std::move(per_bin)) {
  if (global_.values.empty()) throw UsageError("conformal regressor needs calibration scores");
  if (partition_ && per_bin_.size() != partition_->bin_count()) {
    throw UsageError("per-bin score sets do not match the Mondrian partition");
  }
  for (const auto& b : per_bin_) {
    if (b.values.empty()) throw InfeasibleError("empty Mondrian bin in conformal regressor");
  }
}

const NonconformityScores& ConformalRegressor::scores_for(std::optional<double> bin_value) const {
  return pick_scores(global_, partition_, per_bin_, bin_value);
}

ConformalRegressor fit_regressor(std::span<const double> abs_residuals, std::span<const double> sigmas,
                                 const std::optional<MondrianSpec>& mondrian, std::span<const double> bin_values) {
  for (double r : abs_residuals) {
    if (r < 0.0) throw UsageError("absolute residuals must be nonnegative");
  }
  auto fitted = fit_scores(abs_residuals, sigmas, mondrian, bin_values);
  return ConformalRegressor(std::move(fitted.global), std::move(fitted.partition), std::move(fitted.per_bin));
}

ConformalRegressor fit_regressor(const PredictionTable& cal, const FittedEstimator* estimator,
                                 const std::optional<MondrianSpec>& mondrian, bool normalize) {
  const auto in = table_inputs(cal, estimator, mondrian, normalize);
  const auto residuals = cal.abs_residuals();
  return fit_regressor(residuals, in.sigmas, mondrian, in.bin_values);
}

PredictionInterval predict_interval(const ConformalRegressor& cr, double prediction,
                                    std::optional<DifficultyEstimate> sigma, std::optional<double> bin_value,
                                    double confidence) {
  const double s = checked_sigma(sigma, cr.normalized(), "predict_interval");
  check_bin_value(bin_value, cr.mondrian(), "predict_interval");
  const auto q = conformal_quantile(cr.scores_for(bin_value), confidence);
  if (!q.bounded) return {-kInf, kInf, confidence};
  const double half = q.value * s;
  return {prediction - half, prediction + half, confidence};
}

std::vector<PredictionInterval> predict_intervals(const ConformalRegressor& cr, std::span<const double> predictions,
                                                  std::span<const double> sigmas,
                                                  std::span<const double> bin_values, double confidence,
                                                  Execution exec) {
  const std::size_t n = predictions.size();
  if ((!sigmas.empty() && sigmas.size() != n) || (!bin_values.empty() && bin_values.size() != n)) {
    throw UsageError("predict_intervals: input lengths differ");
  }
  check_confidence(confidence);
  check_batch_sigmas(sigmas);
  std::vector<PredictionInterval> out(n);
  auto one = [&](std::size_t i) {
    std::optional<DifficultyEstimate> sigma;
    if (!sigmas.empty()) sigma = DifficultyEstimate{sigmas[i]};
    std::optional<double> bin;
    if (!bin_values.empty()) bin = bin_values[i];
    out[i] = predict_interval(cr, predictions[i], sigma, bin, confidence);
  };
  if (exec == Execution::serial || n == 0) {
    for (std::size_t i = 0; i < n; ++i) one(i);
    return out;
  }
  // Validate once serially so exceptions never escape the parallel region.
  one(0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 1; i < static_cast<std::ptrdiff_t>(n); ++i) one(static_cast<std::size_t>(i));
  return out;
}

// ---------------------------------------------------------------------------
// Conformal predictive system

ConformalPredictiveSystem::ConformalPredictiveSystem(NonconformityScores global,
                                                     std::optional<MondrianPartition> partition,
                                                     std::vector<NonconformityScores> per_bin, double tie_tau)
    : global_(std::move(global)),
      partition_(std::move(partition)),
      per_bin_(std::move(per_bin)),
      tie_tau_(tie_tau) {
  if (global_.values.empty()) throw UsageError("conformal predictive system needs calibration scores");
  if (!(tie_tau_ >= 0.0 && tie_tau_ <= 1.0)) throw UsageError("tie_tau must lie in [0, 1]");
  if (partition_ && per_bin_.size() != partition_->bin_count()) {
    throw UsageError("per-bin score sets do not match the Mondrian partition");
  }
  for (const auto& b : per_bin_) {
    if (b.values.empty()) throw InfeasibleError("empty Mondrian bin in conformal predictive system");
  }
}

const NonconformityScores& ConformalPredictiveSystem::scores_for(std::optional<double> bin_value) const {
  return pick_scores(global_, partition_, per_bin_, bin_value);
}

ConformalPredictiveSystem fit_cps(std::span<const double> signed_residuals, std::span<const double> sigmas,
                                  double tie_tau, const std::optional<MondrianSpec>& mondrian,
                                  std::span<const double> bin_values) {
  auto fitted = fit_scores(signed_residuals, sigmas, mondrian, bin_values);
  return ConformalPredictiveSystem(std::move(fitted.global), std::move(fitted.partition),
                                   std::move(fitted.per_bin), tie_tau);
}

ConformalPredictiveSystem fit_cps(const PredictionTable& cal, const FittedEstimator* estimator, double tie_tau,
                                  const std::optional<MondrianSpec>& mondrian, bool normalize) {
  const auto in = table_inputs(cal, estimator, mondrian, normalize);
  const auto residuals = cal.signed_residuals();
  return fit_cps(residuals, in.sigmas, tie_tau, mondrian, in.bin_values);
}

double cps_cdf_with_tau(const ConformalPredictiveSystem& cps, double prediction,
                        std::optional<DifficultyEstimate> sigma, double y, double tau,
                        std::optional<double> bin_value) {
  if (!std::isfinite(y)) throw UsageError("cps_cdf: y must be finite");
  if (!(tau >= 0.0 && tau <= 1.0)) throw UsageError("cps_cdf: tau must lie in [0, 1]");
  const double s = checked_sigma(sigma, cps.normalized(), "cps_cdf");
  check_bin_value(bin_value, cps.mondrian(), "cps_cdf");
  const auto& c = cps.scores_for(bin_value).values;

  // Knots are nondecreasing in C because s > 0, so counts come from bisection.
  auto knot_less = [&](double ci, double v) { return prediction + s * ci < v; };
  auto less_knot = [&](double v, double ci) { return v < prediction + s * ci; };
  const auto lo = std::lower_bound(c.begin(), c.end(), y, knot_less);
  const auto hi = std::upper_bound(lo, c.end(), y, less_knot);
  const auto below = static_cast<double>(lo - c.begin());
  const auto equal = static_cast<double>(hi - lo);
  return (below + tau * (equal + 1.0)) / static_cast<double>(c.size() + 1);
}

double cps_cdf(const ConformalPredictiveSystem& cps, double prediction, std::optional<DifficultyEstimate> sigma,
               double y, std::optional<double> bin_value) {
  return cps_cdf_with_tau(cps, prediction, sigma, y, cps.tie_tau(), bin_value);
}

PredictionInterval cps_interval(const ConformalPredictiveSystem& cps, double prediction,
                                std::optional<DifficultyEstimate> sigma, double confidence,
                                std::optional<double> bin_value) {
  check_confidence(confidence);
  const double s = checked_sigma(sigma, cps.normalized(), "cps_interval");
  check_bin_value(bin_value, cps.mondrian(), "cps_interval");
  const auto& c = cps.scores_for(bin_value).values;
  const std::size_t n = c.size();
  const std::size_t l = lower_rank(n, confidence);
  const std::size_t u = upper_rank(n, confidence);
  const double lower = l < 1 ? -kInf : prediction + s * c[l - 1];
  const double upper = u > n ? kInf : prediction + s * c[u - 1];
  return {lower, upper, confidence};
}

std::vector<PredictionInterval> cps_intervals(const ConformalPredictiveSystem& cps,
                                              std::span<const double> predictions, std::span<const double> sigmas,
                                              std::span<const double> bin_values, double confidence,
                                              Execution exec) {
  const std::size_t n = predictions.size();
  if ((!sigmas.empty() && sigmas.size() != n) || (!bin_values.empty() && bin_values.size() != n)) {
    throw UsageError("cps_intervals: input lengths differ");
  }
  check_confidence(confidence);
  check_batch_sigmas(sigmas);
  std::vector<PredictionInterval> out(n);
  auto one = [&](std::size_t i) {
    std::optional<DifficultyEstimate> sigma;
    if (!sigmas.empty()) sigma = DifficultyEstimate{sigmas[i]};
    std::optional<double> bin;
    if (!bin_values.empty()) bin = bin_values[i];
    out[i] = cps_interval(cps, predictions[i], sigma, confidence, bin);
  };
  if (exec == Execution::serial || n == 0) {
    for (std::size_t i = 0; i < n; ++i) one(i);
    return out;
  }
  one(0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 1; i < static_cast<std::ptrdiff_t>(n); ++i) one(static_cast<std::size_t>(i));
  return out;
}

}  // namespace cpreg
