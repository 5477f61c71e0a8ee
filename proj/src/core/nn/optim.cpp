#include "core/nn/optim.hpp"

#include <cmath>

namespace sslseg::nn {

Adam::Adam(ParamList params, AdamOptions options) : params_(std::move(params)), opt_(options) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& ref : params_) {
    m_.emplace_back(ref.param->value.size(), 0.0);
    v_.emplace_back(ref.param->value.size(), 0.0);
  }
}

void Adam::zero_grad() { nn::zero_grad(params_); }

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Param& p = *params_[k].param;
    if (!p.trainable) continue;
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad.data[i] + opt_.weight_decay * p.value.data[i];
      m[i] = opt_.beta1 * m[i] + (1 - opt_.beta1) * g;
      v[i] = opt_.beta2 * v[i] + (1 - opt_.beta2) * g * g;
      p.value.data[i] -= opt_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + opt_.eps);
    }
  }
}

}  // namespace sslseg::nn
