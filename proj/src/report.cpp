#include "cpreg/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "cpreg/error.hpp"
#include "cpreg/sweep.hpp"
#include "csv.hpp"

namespace cpreg {

std::string format_number(double v) { return csv::format_double(v); }

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Results tables

std::string ReportRow::configuration() const {
  std::string label(estimator_label(estimator));
  return variant == Variant::mondrian ? "Mondrian " + label : label;
}

namespace {

std::string one_decimal(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

std::string opt_decimal(const std::optional<double>& v) { return v ? one_decimal(*v) : std::string(); }

std::string opt_count(const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : std::string(); }

std::string width_header(const std::string& units) {
  return units.empty() ? "Mean PI Width" : "Mean PI Width [" + units + "]";
}

}  // namespace

std::vector<ReportRow> build_report(std::span<const RunResult> results, double coverage_floor) {
  const auto summaries = aggregate_runs(results, coverage_floor);
  const auto winners = select_best(summaries);

  std::vector<std::string> blocks;
  std::set<std::tuple<std::string, Variant, EstimatorKind>> present;
  for (const auto& r : results) {
    if (std::find(blocks.begin(), blocks.end(), r.config.block) == blocks.end()) blocks.push_back(r.config.block);
    present.emplace(r.config.block, r.config.variant, r.config.estimator);
  }

  std::vector<ReportRow> rows;
  for (const auto& block : blocks) {
    const std::size_t first = rows.size();
    for (auto variant : {Variant::plain, Variant::mondrian}) {
      for (auto kind : kAllEstimatorKinds) {
        if (!present.count({block, variant, kind})) continue;
        ReportRow row;
        row.block = block;
        row.estimator = kind;
        row.variant = variant;
        auto it = std::find_if(winners.begin(), winners.end(), [&](const EvaluationSummary& w) {
          return w.config.block == block && w.config.variant == variant && w.config.estimator == kind;
        });
        if (it != winners.end()) {
          row.mean_width = it->stats->mean_of_widths;
          row.coverage_percent = it->stats->mean_coverage * 100.0;
          row.knn = it->config.k;
          if (variant == Variant::mondrian) row.bins = it->config.bins;
          row.n_runs_aggregated = it->n_runs_aggregated;
        }
        rows.push_back(row);
      }
    }
    // Highlight the narrowest recorded row in the block.
    std::optional<std::size_t> best;
    for (std::size_t i = first; i < rows.size(); ++i) {
      if (!rows[i].mean_width) continue;
      if (!best) {
        best = i;
        continue;
      }
      const auto& a = rows[i];
      const auto& b = rows[*best];
      if (*a.mean_width < *b.mean_width ||
          (*a.mean_width == *b.mean_width &&
           (*a.knn < *b.knn || (*a.knn == *b.knn && a.bins.value_or(0) < b.bins.value_or(0))))) {
        best = i;
      }
    }
    if (best) rows[*best].highlight = true;
  }
  return rows;
}

std::string format_report_csv(std::span<const ReportRow> rows, const std::string& units_label) {
  std::string out = "Configuration," + csv::quote(width_header(units_label)) +
                    ",Effective Coverage [%],kNN,Bins,Block,Highlight\n";
  for (const auto& r : rows) {
    out += csv::quote(r.configuration()) + ',' + opt_decimal(r.mean_width) + ',' + opt_decimal(r.coverage_percent) +
           ',' + opt_count(r.knn) + ',' + opt_count(r.bins) + ',' + csv::quote(r.block) + ',' +
           (r.highlight ? "1" : "0") + '\n';
  }
  return out;
}

std::string format_report_text(std::span<const ReportRow> rows, const std::string& units_label) {
  const std::string wh = width_header(units_label);
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof buf, "  %-36s %20s %24s %5s %5s\n", "Configuration (data and CP method)", wh.c_str(),
                "Effective Coverage [%]", "kNN", "Bins");
  out += buf;
  const std::string rule(96, '-');
  std::string block;
  bool in_mondrian = false;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (i == 0 || r.block != block) {
      out += rule + "\n" + r.block + "\n";
      block = r.block;
      in_mondrian = false;
    }
    if (r.variant == Variant::mondrian && !in_mondrian) {
      out += "  Mondrians\n";
      in_mondrian = true;
    }
    std::snprintf(buf, sizeof buf, "%c %-36s %20s %24s %5s %5s\n", r.highlight ? '*' : ' ',
                  std::string(estimator_label(r.estimator)).c_str(), opt_decimal(r.mean_width).c_str(),
                  opt_decimal(r.coverage_percent).c_str(), opt_count(r.knn).c_str(), opt_count(r.bins).c_str());
    out += buf;
  }
  out += rule + "\n";
  return out;
}

ReportFiles cmd_report(const std::filesystem::path& ledger_path, double coverage_floor,
                       const std::filesystem::path& out_prefix, const std::string& units_label) {
  const auto results = read_ledger(ledger_path);
  if (results.empty()) throw DataError("ledger '" + ledger_path.string() + "' holds no rows");
  const auto rows = build_report(results, coverage_floor);
  ReportFiles files;
  files.csv = out_prefix;
  files.csv += ".csv";
  files.text = out_prefix;
  files.text += ".txt";
  files.rows = rows.size();
  write_text_file(files.csv, format_report_csv(rows, units_label));
  write_text_file(files.text, format_report_text(rows, units_label));
  return files;
}

// ---------------------------------------------------------------------------
// Interval files

std::vector<IntervalRow> make_interval_rows(const PredictionTable& test,
                                            std::span<const PredictionInterval> intervals) {
  if (intervals.size() != test.size()) throw UsageError("interval count does not match the test table");
  std::vector<IntervalRow> rows;
  rows.reserve(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    rows.push_back(IntervalRow{test[i].id, test[i].prediction, intervals[i], test[i].target});
  }
  return rows;
}

std::string format_intervals_csv(std::span<const IntervalRow> rows) {
  std::string out = "id,prediction,lower,upper,target,covered\n";
  for (const auto& r : rows) {
    out += csv::quote(r.id) + ',' + format_number(r.prediction) + ',' + format_number(r.interval.lower) + ',' +
           format_number(r.interval.upper) + ',' + format_number(r.target) + ',' +
           (covers(r.interval, r.target) ? "1" : "0") + '\n';
  }
  return out;
}

std::vector<IntervalRow> parse_intervals_csv(std::string_view text, std::string_view source) {
  const auto lines = csv::lines(text);
  const std::string where(source);
  if (lines.empty()) throw DataError(where + ": missing header row");
  const auto header = csv::split_line(lines.front());
  const std::vector<std::string> expected{"id", "prediction", "lower", "upper", "target", "covered"};
  if (header != expected) throw DataError(where + ": expected header id,prediction,lower,upper,target,covered");
  std::vector<IntervalRow> rows;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto cells = csv::split_line(lines[li]);
    const std::string tag = where + ":" + std::to_string(li + 1);
    if (cells.size() != expected.size()) throw DataError(tag + ": wrong number of cells");
    auto num = [&](std::size_t c) {
      auto v = csv::parse_number(cells[c]);
      if (!v) throw DataError(tag + ": non-numeric cell '" + cells[c] + "'");
      return *v;
    };
    IntervalRow r{cells[0], num(1), PredictionInterval{num(2), num(3), 0.0}, num(4)};
    if (!std::isfinite(r.prediction) || !std::isfinite(r.target)) {
      throw DataError(tag + ": prediction and target must be finite");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<IntervalRow> read_intervals_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_intervals_csv(buf.str(), path.string());
}

std::string format_plot_data(std::span<const PredictionInterval> intervals, std::span<const double> predictions,
                             std::span<const double> targets) {
  if (intervals.size() != predictions.size() || intervals.size() != targets.size()) {
    throw UsageError("plot data: intervals, predictions and targets differ in length");
  }
  std::vector<std::size_t> order(predictions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return predictions[a] < predictions[b]; });
  std::string out = "rank,prediction,lower,upper,target,covered\n";
  for (std::size_t r = 0; r < order.size(); ++r) {
    const std::size_t i = order[r];
    out += std::to_string(r) + ',' + format_number(predictions[i]) + ',' + format_number(intervals[i].lower) + ',' +
           format_number(intervals[i].upper) + ',' + format_number(targets[i]) + ',' +
           (covers(intervals[i], targets[i]) ? "1" : "0") + '\n';
  }
  return out;
}

void emit_plot_data(std::span<const PredictionInterval> intervals, std::span<const double> predictions,
                    std::span<const double> targets, const std::filesystem::path& out) {
  write_text_file(out, format_plot_data(intervals, predictions, targets));
}

}  // namespace cpreg
