#pragma once

#include <array>
#include <cassert>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace sslseg::nn {

// Dense NCHW block of doubles. Matrices are stored as [N, C, 1, 1].
struct Tensor {
  std::array<int, 4> shape{0, 0, 0, 0};
  std::vector<double> data;

  Tensor() = default;
  Tensor(int n, int c, int h = 1, int w = 1, double fill = 0.0)
      : shape{n, c, h, w}, data(static_cast<std::size_t>(n) * c * h * w, fill) {}

  int n() const { return shape[0]; }
  int c() const { return shape[1]; }
  int h() const { return shape[2]; }
  int w() const { return shape[3]; }
  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  std::size_t plane() const { return static_cast<std::size_t>(shape[2]) * shape[3]; }
  std::size_t sample_size() const { return static_cast<std::size_t>(shape[1]) * plane(); }

  double& at(int n, int c, int h, int w) {
    return data[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  double at(int n, int c, int h, int w) const {
    return data[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  std::span<double> sample(int n) { return {data.data() + n * sample_size(), sample_size()}; }
  std::span<const double> sample(int n) const {
    return {data.data() + n * sample_size(), sample_size()};
  }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline Tensor zeros_like(const Tensor& t) { return Tensor(t.n(), t.c(), t.h(), t.w()); }

std::string shape_string(const std::array<int, 4>& shape);

// Elementwise a += b; shapes must match.
void add_inplace(Tensor& a, const Tensor& b);

// Concatenates along the batch axis.
Tensor concat_batch(const Tensor& a, const Tensor& b);
// Rows [begin, end) along the batch axis.
Tensor slice_batch(const Tensor& t, int begin, int end);

}  // namespace sslseg::nn
