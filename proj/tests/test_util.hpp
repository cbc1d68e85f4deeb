#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <Eigen/Dense>

namespace testutil {

namespace fs = std::filesystem;

/// Fresh per-test scratch directory under the system temp dir.
inline fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("locepi_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

inline std::string write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  return path.string();
}

inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, int r, int c) {
  std::normal_distribution<double> n;
  Eigen::MatrixXd m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = n(rng);
  return m;
}

inline Eigen::MatrixXd random_binary(std::mt19937_64& rng, int r, int c) {
  std::bernoulli_distribution b(0.5);
  Eigen::MatrixXd m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = b(rng) ? 1.0 : 0.0;
  return m;
}

}  // namespace testutil
