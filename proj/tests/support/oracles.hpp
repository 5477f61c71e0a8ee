// Deliberately naive reference implementations. Nothing here shares code
// with the library.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <vector>

namespace oracle {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline double dot_rows(const Matrix& a, int i, const Matrix& b, int j) {
  double s = 0.0;
  for (int d = 0; d < a.cols(); ++d) s += a(i, d) * b(j, d);
  return s;
}

// Positive at index 0, then every row of `negatives`.
inline double info_nce_loop(const Matrix& q, const Matrix& k, const Matrix& negatives, double tau) {
  double total = 0.0;
  for (int b = 0; b < q.rows(); ++b) {
    std::vector<double> logits{dot_rows(q, b, k, b) / tau};
    for (int j = 0; j < negatives.rows(); ++j) logits.push_back(dot_rows(q, b, negatives, j) / tau);
    const double mx = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (double l : logits) denom += std::exp(l - mx);
    total += -(logits[0] - mx - std::log(denom));
  }
  return total / static_cast<double>(q.rows());
}

inline double cosine_rows(const Matrix& z, int i, int j) {
  return dot_rows(z, i, z, j) / std::sqrt(dot_rows(z, i, z, i) * dot_rows(z, j, z, j));
}

// 2N rows, row i pairs with i + N (and back).
inline double nt_xent_loop(const Matrix& z, double tau) {
  const int rows = static_cast<int>(z.rows());
  const int n = rows / 2;
  double total = 0.0;
  for (int i = 0; i < rows; ++i) {
    const int j = i < n ? i + n : i - n;
    double denom = 0.0;
    for (int k = 0; k < rows; ++k) {
      if (k != i) denom += std::exp(cosine_rows(z, i, k) / tau);
    }
    total += -std::log(std::exp(cosine_rows(z, i, j) / tau) / denom);
  }
  return total / rows;
}

// Bounded FIFO over row vectors, oldest at the front.
struct ListQueue {
  std::size_t capacity;
  std::deque<std::vector<double>> rows;

  void push(const Matrix& keys) {
    for (int r = 0; r < keys.rows(); ++r) {
      rows.emplace_back(keys.row(r).data(), keys.row(r).data() + keys.cols());
      if (rows.size() > capacity) rows.pop_front();
    }
  }
};

}  // namespace oracle
