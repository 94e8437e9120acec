#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "cpreg/dataset.hpp"

namespace testsupport {

/// Scratch directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("cpreg_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

/// 1-D table with the given predictions and targets; feature = row index.
inline cpreg::PredictionTable table_1d(const std::vector<double>& preds, const std::vector<double>& targets,
                                       cpreg::TableRole role = cpreg::TableRole::calibration) {
  std::vector<cpreg::PredictionRecord> rows;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    rows.push_back({std::to_string(i), {static_cast<double>(i)}, preds[i], targets[i]});
  }
  return cpreg::PredictionTable(std::move(rows), 1, role);
}

}  // namespace testsupport
