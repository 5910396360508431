#pragma once

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fairaudit/encoding.hpp"
#include "fairaudit/rng.hpp"

namespace fairaudit::testing {

inline std::filesystem::path data_path(const std::string& rel) { return std::filesystem::path(FAIRAUDIT_TEST_DATA) / rel; }

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("fairaudit-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

// Dense random problem with both classes present. Features are a mix of
// binary indicators and values in [0, 1].
inline EncodedDataset random_dataset(Rng& rng, std::size_t n, std::size_t m, bool random_weights = true) {
  std::vector<std::vector<double>> rows(n, std::vector<double>(m, 0.0));
  std::vector<std::uint8_t> y(n);
  std::vector<std::uint8_t> g(n);
  std::vector<double> w(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      rows[i][j] = j % 2 == 0 ? (rng.bernoulli(0.4) ? 1.0 : 0.0) : std::round(rng.uniform() * 8.0) / 8.0;
    }
    y[i] = rng.bernoulli(0.5) ? 1 : 0;
    g[i] = rng.bernoulli(0.5) ? 1 : 0;
    if (random_weights) w[i] = 0.25 + 1.75 * rng.uniform();
  }
  y[0] = 1;
  y[n - 1] = 0;
  g[0] = 0;
  g[n - 1] = 1;
  return EncodedDataset::from_dense(rows, y, g, w);
}

}  // namespace fairaudit::testing
