#include "cpreg/dataset.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "cpreg/error.hpp"
#include "csv.hpp"

namespace cpreg {

std::string_view to_string(TableRole role) {
  switch (role) {
    case TableRole::cp_train: return "cp_train";
    case TableRole::calibration: return "calibration";
    case TableRole::test: return "test";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// PredictionTable

PredictionTable::PredictionTable(std::vector<PredictionRecord> records, std::size_t dimension,
                                 TableRole role, std::string units_label)
    : records_(std::move(records)),
      dimension_(dimension),
      role_(role),
      units_label_(std::move(units_label)) {
  std::unordered_set<std::string> ids;
  ids.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.features.size() != dimension_) {
      throw DataError("record " + std::to_string(i) + " has " + std::to_string(r.features.size()) +
                      " features, table dimension is " + std::to_string(dimension_));
    }
    if (!std::isfinite(r.prediction) || !std::isfinite(r.target) ||
        !std::all_of(r.features.begin(), r.features.end(),
                     [](double v) { return std::isfinite(v); })) {
      throw DataError("record " + std::to_string(i) + " (id '" + r.id + "') holds a non-finite value");
    }
    if (!ids.insert(r.id).second) {
      throw DataError("duplicate record id '" + r.id + "'");
    }
  }
}

PredictionTable PredictionTable::with_role(TableRole role) const {
  PredictionTable copy = *this;
  copy.role_ = role;
  return copy;
}

std::vector<double> PredictionTable::predictions() const {
  std::vector<double> out(records_.size());
  std::transform(records_.begin(), records_.end(), out.begin(),
                 [](const PredictionRecord& r) { return r.prediction; });
  return out;
}

std::vector<double> PredictionTable::targets() const {
  std::vector<double> out(records_.size());
  std::transform(records_.begin(), records_.end(), out.begin(),
                 [](const PredictionRecord& r) { return r.target; });
  return out;
}

std::vector<double> PredictionTable::abs_residuals() const {
  std::vector<double> out(records_.size());
  std::transform(records_.begin(), records_.end(), out.begin(),
                 [](const PredictionRecord& r) { return std::abs(r.target - r.prediction); });
  return out;
}

std::vector<double> PredictionTable::signed_residuals() const {
  std::vector<double> out(records_.size());
  std::transform(records_.begin(), records_.end(), out.begin(),
                 [](const PredictionRecord& r) { return r.target - r.prediction; });
  return out;
}

// ---------------------------------------------------------------------------
// CSV ingestion

using csv::format_double;
using csv::parse_number;
using csv::split_line;
using csv::trim;

bool is_nan_token(std::string_view cell) {
  cell = trim(cell);
  if (cell.empty()) return true;
  if (cell.size() != 3) return false;
  auto lower = [](char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); };
  return lower(cell[0]) == 'n' && lower(cell[1]) == 'a' && lower(cell[2]) == 'n';
}

LoadResult parse_table(std::string_view text, const TableSchema& schema, NanPolicy nan_policy,
                       std::string_view source) {
  auto lines = csv::lines(text);
  const std::string where(source);
  if (lines.empty()) throw DataError(where + ": missing header row");

  // Strip a UTF-8 byte order mark if present.
  if (lines.front().substr(0, 3) == "\xEF\xBB\xBF") lines.front().remove_prefix(3);

  const auto header = split_line(lines.front());
  std::unordered_map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (!column.emplace(header[i], i).second) {
      throw DataError(where + ": duplicate column '" + header[i] + "'");
    }
  }
  auto require = [&](const std::string& name) {
    auto it = column.find(name);
    if (it == column.end()) throw DataError(where + ": header lacks required column '" + name + "'");
    return it->second;
  };
  const std::size_t pred_col = require(schema.prediction_column);
  const std::size_t target_col = require(schema.target_column);
  std::optional<std::size_t> id_col;
  if (!schema.id_column.empty()) {
    if (auto it = column.find(schema.id_column); it != column.end()) id_col = it->second;
  }

  std::vector<std::size_t> feature_cols;
  if (!schema.feature_columns.empty()) {
    for (const auto& name : schema.feature_columns) feature_cols.push_back(require(name));
  } else {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i == pred_col || i == target_col || (id_col && i == *id_col)) continue;
      feature_cols.push_back(i);
    }
  }

  if (lines.size() < 2) throw DataError(where + ": no data rows");

  std::vector<PredictionRecord> records;
  records.reserve(lines.size() - 1);
  std::size_t dropped = 0;

  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto cells = split_line(lines[li]);
    const std::string row_tag = where + ":" + std::to_string(li + 1);
    if (cells.size() != header.size()) {
      throw DataError(row_tag + ": expected " + std::to_string(header.size()) + " cells, found " +
                      std::to_string(cells.size()));
    }
    bool missing = false;
    auto numeric = [&](std::size_t col) -> double {
      const std::string& cell = cells[col];
      if (is_nan_token(cell)) {
        missing = true;
        return 0.0;
      }
      auto v = parse_number(cell);
      if (!v) throw DataError(row_tag + ": non-numeric cell '" + cell + "' in column '" + header[col] + "'");
      if (!std::isfinite(*v)) missing = true;
      return *v;
    };

    PredictionRecord rec;
    rec.features.reserve(feature_cols.size());
    for (auto col : feature_cols) rec.features.push_back(numeric(col));
    rec.prediction = numeric(pred_col);
    rec.target = numeric(target_col);

    if (missing) {
      if (nan_policy == NanPolicy::fail) throw DataError(row_tag + ": NaN or non-finite value");
      ++dropped;
      continue;
    }
    if (id_col) {
      rec.id = cells[*id_col];
      if (rec.id.empty()) throw DataError(row_tag + ": empty id");
    } else {
      rec.id = std::to_string(records.size());
    }
    records.push_back(std::move(rec));
  }

  if (records.empty()) throw DataError(where + ": empty table after NaN policy (" + std::to_string(dropped) + " rows dropped)");
  if (dropped > 0) spdlog::info("{}: dropped {} rows containing NaN values", where, dropped);

  return LoadResult{PredictionTable(std::move(records), feature_cols.size(), schema.role, schema.units_label),
                    dropped};
}

LoadResult load_table(const std::filesystem::path& path, const TableSchema& schema, NanPolicy nan_policy) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_table(buf.str(), schema, nan_policy, path.string());
}

std::string format_table(const PredictionTable& table) {
  std::string out = "id";
  for (std::size_t j = 0; j < table.dimension(); ++j) out += ",f" + std::to_string(j);
  out += ",prediction,target\n";
  for (const auto& r : table.records()) {
    out += csv::quote(r.id);
    for (double v : r.features) out += "," + format_double(v);
    out += "," + format_double(r.prediction) + "," + format_double(r.target) + "\n";
  }
  return out;
}

void write_table(const PredictionTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << format_table(table);
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Calibration split

namespace {

// Unbiased draw from [0, bound) by rejecting the tail of the 64-bit range.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

}  // namespace

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

CalibrationSplit split_calibration(const PredictionTable& table, std::size_t n_cal, std::uint64_t seed) {
  if (n_cal < 1 || n_cal >= table.size()) {
    throw UsageError("n_cal must satisfy 1 <= n_cal < " + std::to_string(table.size()) + ", got " +
                     std::to_string(n_cal));
  }
  const auto perm = seeded_permutation(table.size(), seed);
  std::vector<char> in_cal(table.size(), 0);
  for (std::size_t i = 0; i < n_cal; ++i) in_cal[perm[i]] = 1;

  std::vector<PredictionRecord> train, cal;
  train.reserve(table.size() - n_cal);
  cal.reserve(n_cal);
  for (std::size_t i = 0; i < table.size(); ++i) {
    (in_cal[i] ? cal : train).push_back(table[i]);
  }
  return CalibrationSplit{
      PredictionTable(std::move(train), table.dimension(), TableRole::cp_train, table.units_label()),
      PredictionTable(std::move(cal), table.dimension(), TableRole::calibration, table.units_label())};
}

// ---------------------------------------------------------------------------
// Synthetic data

const std::vector<std::string>& synth_signal_ids() {
  static const std::vector<std::string> ids{"zero", "linear", "sine", "quadratic"};
  return ids;
}

const std::vector<std::string>& synth_noise_ids() {
  static const std::vector<std::string> ids{"zero", "unit", "one_plus_abs_x0", "exp_x0"};
  return ids;
}

double synth_signal(std::string_view id, const std::vector<double>& x) {
  if (id == "zero") return 0.0;
  if (id == "linear") return std::accumulate(x.begin(), x.end(), 0.0);
  if (id == "sine") return 2.0 * std::sin(x.at(0));
  if (id == "quadratic") return x.at(0) * x.at(0);
  throw UsageError("unknown signal id '" + std::string(id) + "'");
}

double synth_noise_scale(std::string_view id, const std::vector<double>& x) {
  if (id == "zero") return 0.0;
  if (id == "unit") return 1.0;
  if (id == "one_plus_abs_x0") return 1.0 + std::abs(x.at(0));
  if (id == "exp_x0") return std::exp(0.5 * x.at(0));
  throw UsageError("unknown noise_scale id '" + std::string(id) + "'");
}

PredictionTable synth_heteroscedastic(const SynthSpec& spec) {
  if (spec.n < 1) throw UsageError("synthetic table needs n >= 1");
  if (spec.d < 1) throw UsageError("synthetic table needs d >= 1");
  // Validate ids before drawing anything.
  const std::vector<double> probe(spec.d, 0.0);
  synth_signal(spec.signal, probe);
  synth_noise_scale(spec.noise_scale, probe);

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<PredictionRecord> records(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    auto& r = records[i];
    r.id = std::to_string(i);
    r.features.resize(spec.d);
    for (auto& v : r.features) v = normal(rng);
    const double z = normal(rng);
    const double signal = synth_signal(spec.signal, r.features);
    r.target = signal + synth_noise_scale(spec.noise_scale, r.features) * z;
    r.prediction = signal + spec.prediction_bias;
  }
  return PredictionTable(std::move(records), spec.d, spec.role, spec.units_label);
}

}  // namespace cpreg
