#include "cpreg/evaluation.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "cpreg/error.hpp"

namespace cpreg {

double effective_coverage(std::span<const PredictionInterval> intervals, std::span<const double> targets) {
  if (intervals.size() != targets.size()) throw UsageError("effective_coverage: length mismatch");
  if (intervals.empty()) throw UsageError("effective_coverage: no instances");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < intervals.size(); ++i) hit += covers(intervals[i], targets[i]) ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(intervals.size());
}

MeanWidth mean_width(std::span<const PredictionInterval> intervals) {
  if (intervals.empty()) throw UsageError("mean_width: no intervals");
  double sum = 0.0;
  for (const auto& pi : intervals) {
    if (!pi.bounded()) return {std::numeric_limits<double>::infinity(), false};
    sum += pi.width();
  }
  return {sum / static_cast<double>(intervals.size()), true};
}

std::string_view to_string(Variant v) { return v == Variant::plain ? "plain" : "mondrian"; }

Variant parse_variant(std::string_view label) {
  if (label == "plain") return Variant::plain;
  if (label == "mondrian") return Variant::mondrian;
  throw UsageError("unknown variant '" + std::string(label) + "' (expected plain or mondrian)");
}

namespace {

std::string shortest(double v) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  (void)ec;
  return std::string(buf.data(), ptr);
}

}  // namespace

std::string ConfigKey::id() const {
  std::string out = block;
  out += '|';
  out += estimator_label(estimator);
  out += '|';
  out += to_string(variant);
  out += "|k=" + std::to_string(k);
  out += "|bins=" + (variant == Variant::mondrian ? std::to_string(bins) : std::string("-"));
  out += "|conf=" + shortest(confidence);
  return out;
}

std::string_view to_string(RunStatus s) {
  switch (s) {
    case RunStatus::ok: return "ok";
    case RunStatus::unbounded: return "unbounded";
    case RunStatus::infeasible: return "infeasible";
  }
  return "unknown";
}

RunStatus parse_run_status(std::string_view label) {
  if (label == "ok") return RunStatus::ok;
  if (label == "unbounded") return RunStatus::unbounded;
  if (label == "infeasible") return RunStatus::infeasible;
  throw DataError("unknown run status '" + std::string(label) + "'");
}

std::string RunResult::config_id() const { return config.id() + "|seed=" + std::to_string(seed); }

std::vector<EvaluationSummary> aggregate_runs(std::span<const RunResult> results, double coverage_floor) {
  std::vector<EvaluationSummary> out;
  std::vector<std::vector<double>> widths;
  std::vector<std::vector<double>> coverages;
  std::map<std::string, std::size_t> slot;

  for (const auto& r : results) {
    auto [it, fresh] = slot.emplace(r.config.id(), out.size());
    if (fresh) {
      out.push_back(EvaluationSummary{r.config, std::nullopt, 0, 0, 0, 0});
      widths.emplace_back();
      coverages.emplace_back();
    }
    const std::size_t g = it->second;
    auto& s = out[g];
    ++s.n_runs_total;
    if (r.status == RunStatus::infeasible || !r.coverage) {
      ++s.n_excluded_infeasible;
      continue;
    }
    if (r.status == RunStatus::unbounded || !r.mean_width || !std::isfinite(*r.mean_width)) {
      ++s.n_excluded_unbounded;
      continue;
    }
    if (!(*r.coverage > coverage_floor)) continue;
    widths[g].push_back(*r.mean_width);
    coverages[g].push_back(*r.coverage);
  }

  for (std::size_t g = 0; g < out.size(); ++g) {
    const auto& w = widths[g];
    if (w.empty()) continue;
    const auto n = static_cast<double>(w.size());
    double mean = 0.0;
    for (double v : w) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : w) ss += (v - mean) * (v - mean);
    double cov = 0.0;
    for (double c : coverages[g]) cov += c;
    out[g].stats = SummaryStats{mean, std::sqrt(ss / n), cov / n};
    out[g].n_runs_aggregated = w.size();
  }
  return out;
}

std::vector<EvaluationSummary> select_best(std::span<const EvaluationSummary> summaries) {
  std::vector<EvaluationSummary> winners;
  std::map<std::string, std::size_t> slot;
  auto better = [](const EvaluationSummary& a, const EvaluationSummary& b) {
    if (a.stats->mean_of_widths != b.stats->mean_of_widths) return a.stats->mean_of_widths < b.stats->mean_of_widths;
    if (a.config.k != b.config.k) return a.config.k < b.config.k;
    return a.config.bins < b.config.bins;
  };
  for (const auto& s : summaries) {
    if (!s.recorded()) continue;
    std::string group = s.config.block;
    group += '|';
    group += estimator_label(s.config.estimator);
    group += '|';
    group += to_string(s.config.variant);
    auto [it, fresh] = slot.emplace(group, winners.size());
    if (fresh) {
      winners.push_back(s);
    } else if (better(s, winners[it->second])) {
      winners[it->second] = s;
    }
  }
  return winners;
}

}  // namespace cpreg
