#pragma once

#include "core/nn/layers.hpp"
#include "core/ssl/losses.hpp"

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include <unistd.h>

namespace testutil {

using sslseg::ssl::Matrix;

inline Matrix random_matrix(std::mt19937_64& rng, int rows, int cols) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline Matrix random_unit(std::mt19937_64& rng, int rows, int cols) {
  Matrix m = random_matrix(rng, rows, cols);
  for (Eigen::Index r = 0; r < m.rows(); ++r) m.row(r) /= m.row(r).norm();
  return m;
}

inline sslseg::nn::Tensor random_tensor(std::mt19937_64& rng, int n, int c, int h = 1, int w = 1) {
  std::normal_distribution<double> d(0.0, 1.0);
  sslseg::nn::Tensor t(n, c, h, w);
  for (auto& v : t.data) v = d(rng);
  return t;
}

// Central difference of f with respect to every entry of x.
inline std::vector<double> numeric_gradient(std::vector<double>& x, const std::function<double()>& f,
                                            double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f();
    x[i] = saved - h;
    const double down = f();
    x[i] = saved;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

// max |a - b| / max(1, |a|, |b|) over entries.
inline double max_rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({1.0, std::abs(a[i]), std::abs(b[i])});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

inline std::vector<double> flat(const Matrix& m) { return {m.data(), m.data() + m.size()}; }

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("sslseg_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
