#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "mrsim/core/matrix.hpp"
#include "mrsim/core/random.hpp"

namespace testing {

inline mrsim::Matrix random_matrix(const mrsim::SeedContext& ctx, Eigen::Index r, Eigen::Index c,
                                   double scale = 1.0) {
  const mrsim::RandomStream s(ctx);
  mrsim::Matrix m(r, c);
  for (Eigen::Index i = 0; i < r * c; ++i) {
    m.data()[i] = scale * (2.0 * s.uniform(static_cast<std::uint64_t>(i)) - 1.0);
  }
  return m;
}

// Independent oracle: column-major loop order, so it shares no code path
// with the library kernel.
inline mrsim::Matrix naive_product(const mrsim::Matrix& a, const mrsim::Matrix& b) {
  mrsim::Matrix c(a.rows(), b.cols());
  for (Eigen::Index j = 0; j < b.cols(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      double acc = 0.0;
      for (Eigen::Index p = 0; p < a.cols(); ++p) {
        acc += a(i, p) * b(p, j);
      }
      c(i, j) = acc;
    }
  }
  return c;
}

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Central difference of f along coordinate `x` (mutated in place and restored).
inline double central_diff(double& x, const std::function<double()>& f, double h = 1e-6) {
  const double x0 = x;
  x = x0 + h;
  const double fp = f();
  x = x0 - h;
  const double fm = f();
  x = x0;
  return (fp - fm) / (2.0 * h);
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("mrsim_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

} // namespace testing
