#pragma once

#include "core/nn/layers.hpp"

#include <vector>

namespace sslseg::nn {

struct AdamOptions {
  double lr = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adaptive moment estimation with L2 weight decay folded into the gradient.
// Non-trainable entries (running statistics) are skipped.
class Adam {
 public:
  Adam(ParamList params, AdamOptions options);
  void step();
  void zero_grad();
  long steps() const { return t_; }

 private:
  ParamList params_;
  AdamOptions opt_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

}  // namespace sslseg::nn
