#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>

#include "fdch/dataset.hpp"

namespace testutil {

// Central finite differences of a scalar function of a matrix, with a step
// relative to the entry magnitude. Independent of any analytic gradient path.
inline fdch::Matrix fd_gradient(const std::function<double(const fdch::Matrix&)>& f,
                                fdch::Matrix x, double h = 1e-5) {
  fdch::Matrix grad(x.rows(), x.cols());
  for (fdch::Index c = 0; c < x.cols(); ++c) {
    for (fdch::Index r = 0; r < x.rows(); ++r) {
      const double orig = x(r, c);
      const double step = h * std::max(1.0, std::abs(orig));
      x(r, c) = orig + step;
      const double fp = f(x);
      x(r, c) = orig - step;
      const double fm = f(x);
      x(r, c) = orig;
      grad(r, c) = (fp - fm) / (2.0 * step);
    }
  }
  return grad;
}

// |a-b| / max(1, |a|, |b|), reduced over all entries.
inline double max_rel_error(const fdch::Matrix& a, const fdch::Matrix& b) {
  double worst = 0.0;
  for (fdch::Index c = 0; c < a.cols(); ++c)
    for (fdch::Index r = 0; r < a.rows(); ++r) {
      const double denom = std::max({1.0, std::abs(a(r, c)), std::abs(b(r, c))});
      worst = std::max(worst, std::abs(a(r, c) - b(r, c)) / denom);
    }
  return worst;
}

// Fresh scratch directory under the build tree.
inline std::string scratch_dir(const std::string& name) {
  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() / ("fdch_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

inline std::string read_file(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) return {};
  std::string data;
  char buf[4096];
  std::size_t got;
  while ((got = std::fread(buf, 1, sizeof buf, f)) > 0) data.append(buf, got);
  std::fclose(f);
  return data;
}

}  // namespace testutil
