#pragma once

// Small CSV helpers shared by the table and interval readers/writers.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cpreg::csv {

std::string_view trim(std::string_view s);

/// Splits one record. Double-quoted fields may contain commas; a doubled
/// quote inside a quoted field is a literal quote. Cells are trimmed.
std::vector<std::string> split_line(std::string_view line);

/// Non-empty lines of `text` with any trailing '\r' removed.
std::vector<std::string_view> lines(std::string_view text);

/// Full-cell numeric parse (decimal or scientific, optional sign, "inf").
/// Out-of-range literals become signed infinities.
std::optional<double> parse_number(std::string_view s);

/// Shortest round-trip representation; infinities as "inf" / "-inf".
std::string format_double(double v);

/// Quotes a cell if it contains a comma, quote or newline.
std::string quote(std::string_view cell);

}  // namespace cpreg::csv
