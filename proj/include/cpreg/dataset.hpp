#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cpreg {

/// Which stage of the inductive conformal workflow a table feeds.
enum class TableRole { cp_train, calibration, test };

std::string_view to_string(TableRole role);

/// One row: a feature vector plus the underlying model's prediction and the
/// observed target (both in target units).
struct PredictionRecord {
  std::string id;
  std::vector<double> features;
  double prediction = 0.0;
  double target = 0.0;
};

/// Immutable table of prediction records sharing one feature dimension.
///
/// Construction validates that every record has the declared dimension, all
/// values are finite and ids are unique; violations throw DataError.
class PredictionTable {
 public:
  PredictionTable(std::vector<PredictionRecord> records, std::size_t dimension,
                  TableRole role = TableRole::test, std::string units_label = {});

  const std::vector<PredictionRecord>& records() const noexcept { return records_; }
  const PredictionRecord& operator[](std::size_t i) const { return records_[i]; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  std::size_t dimension() const noexcept { return dimension_; }
  TableRole role() const noexcept { return role_; }
  const std::string& units_label() const noexcept { return units_label_; }

  /// Same records under a different role tag.
  PredictionTable with_role(TableRole role) const;

  std::vector<double> predictions() const;
  std::vector<double> targets() const;
  /// |target - prediction| per row.
  std::vector<double> abs_residuals() const;
  /// target - prediction per row.
  std::vector<double> signed_residuals() const;

 private:
  std::vector<PredictionRecord> records_;
  std::size_t dimension_;
  TableRole role_;
  std::string units_label_;
};

enum class NanPolicy { drop_rows, fail };

/// Column mapping for CSV ingestion.
///
/// When `feature_columns` is empty, every column other than the id,
/// prediction and target columns is a feature, in header order.
struct TableSchema {
  std::string id_column = "id";
  std::string prediction_column = "prediction";
  std::string target_column = "target";
  std::vector<std::string> feature_columns;
  TableRole role = TableRole::test;
  std::string units_label;
};

struct LoadResult {
  PredictionTable table;
  std::size_t dropped_rows = 0;
};

/// True for the tokens treated as missing values: the empty cell and any
/// case variant of "nan".
bool is_nan_token(std::string_view cell);

/// Reads a comma-delimited UTF-8 file with one header row.
///
/// Rows holding a NaN token (or a non-finite number) are dropped under
/// NanPolicy::drop_rows and rejected under NanPolicy::fail. If the file has
/// no id column, ids are the 0-based indices of the surviving rows.
LoadResult load_table(const std::filesystem::path& path, const TableSchema& schema = {},
                      NanPolicy nan_policy = NanPolicy::drop_rows);

/// Parses CSV text already in memory; `source` names it in error messages.
LoadResult parse_table(std::string_view text, const TableSchema& schema,
                       NanPolicy nan_policy, std::string_view source = "<memory>");

/// Writes `id,f0..f{d-1},prediction,target` with round-trip precision.
void write_table(const PredictionTable& table, const std::filesystem::path& path);
std::string format_table(const PredictionTable& table);

/// Seeded uniform permutation of [0, n): Fisher-Yates driven by mt19937_64,
/// with rejection sampling for unbiased bounded draws.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

struct CalibrationSplit {
  PredictionTable train;
  PredictionTable cal;
};

/// Samples exactly `n_cal` records without replacement as the calibration
/// set; the remainder becomes the CP training set. Both keep the input's
/// relative row order. Requires 1 <= n_cal < table.size().
CalibrationSplit split_calibration(const PredictionTable& table, std::size_t n_cal,
                                   std::uint64_t seed);

/// Synthetic heteroscedastic regression data.
///
/// Features are i.i.d. standard normal. The target is
/// signal(x) + noise_scale(x) * z with z ~ N(0, 1), and the prediction column
/// holds signal(x) + prediction_bias, i.e. the oracle regressor by default.
struct SynthSpec {
  std::size_t n = 1000;
  std::size_t d = 1;
  std::string signal = "zero";
  std::string noise_scale = "unit";
  std::uint64_t seed = 0;
  double prediction_bias = 0.0;
  TableRole role = TableRole::test;
  std::string units_label;
};

/// Known function ids for SynthSpec::signal.
const std::vector<std::string>& synth_signal_ids();
/// Known function ids for SynthSpec::noise_scale.
const std::vector<std::string>& synth_noise_ids();

double synth_signal(std::string_view id, const std::vector<double>& x);
double synth_noise_scale(std::string_view id, const std::vector<double>& x);

PredictionTable synth_heteroscedastic(const SynthSpec& spec);

}  // namespace cpreg
