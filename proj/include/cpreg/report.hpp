#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cpreg/conformal.hpp"
#include "cpreg/dataset.hpp"
#include "cpreg/evaluation.hpp"

namespace cpreg {

// ---------------------------------------------------------------------------
// Results tables

/// One line of a results table: the winning hyperparameters of one
/// estimator/variant within a data block, or blanks when nothing qualified.
struct ReportRow {
  std::string block;
  EstimatorKind estimator = EstimatorKind::knn_target_std;
  Variant variant = Variant::plain;
  std::optional<double> mean_width;
  std::optional<double> coverage_percent;
  std::optional<std::size_t> knn;
  std::optional<std::size_t> bins;  ///< blank for the plain variant
  std::size_t n_runs_aggregated = 0;
  bool highlight = false;           ///< narrowest recorded row of its block

  /// "norm_std" or "Mondrian norm_std".
  std::string configuration() const;
};

/// Aggregates ledger rows and lays out one block per data configuration:
/// plain rows first, then Mondrian rows, estimators in a fixed order.
std::vector<ReportRow> build_report(std::span<const RunResult> results,
                                    double coverage_floor = kDefaultCoverageFloor);

/// Columns: Configuration, Mean PI Width [units], Effective Coverage [%],
/// kNN, Bins, Block, Highlight. Numbers use one decimal; blanks are empty.
std::string format_report_csv(std::span<const ReportRow> rows, const std::string& units_label);
/// Aligned text rendering with block headings and a "Mondrians" section;
/// highlighted rows are prefixed with '*'.
std::string format_report_text(std::span<const ReportRow> rows, const std::string& units_label);

struct ReportFiles {
  std::filesystem::path csv;
  std::filesystem::path text;
  std::size_t rows = 0;
};

/// Reads the ledger and writes `<out_prefix>.csv` and `<out_prefix>.txt`.
/// Throws DataError for an empty ledger.
ReportFiles cmd_report(const std::filesystem::path& ledger_path, double coverage_floor,
                       const std::filesystem::path& out_prefix, const std::string& units_label = {});

// ---------------------------------------------------------------------------
// Interval files

struct IntervalRow {
  std::string id;
  double prediction;
  PredictionInterval interval;
  double target;
};

std::vector<IntervalRow> make_interval_rows(const PredictionTable& test,
                                            std::span<const PredictionInterval> intervals);

/// Columns id, prediction, lower, upper, target, covered; infinities as
/// "inf" / "-inf".
std::string format_intervals_csv(std::span<const IntervalRow> rows);
std::vector<IntervalRow> parse_intervals_csv(std::string_view text, std::string_view source = "<memory>");
std::vector<IntervalRow> read_intervals_csv(const std::filesystem::path& path);

/// Plot-ready rows sorted ascending by prediction (stable on input order):
/// rank, prediction, lower, upper, target, covered.
std::string format_plot_data(std::span<const PredictionInterval> intervals, std::span<const double> predictions,
                             std::span<const double> targets);
void emit_plot_data(std::span<const PredictionInterval> intervals, std::span<const double> predictions,
                    std::span<const double> targets, const std::filesystem::path& out);

/// Shortest round-trip text for a double; infinities as "inf" / "-inf".
std::string format_number(double v);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace cpreg
