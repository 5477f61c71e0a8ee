#include "core/ssl/moco.hpp"

#include "core/common/errors.hpp"

#include <fmt/format.h>

namespace sslseg::ssl {

QueueState::QueueState(int capacity, int dim) : capacity_(capacity), dim_(dim) {
  if (capacity <= 0 || dim <= 0) {
    throw ValidationError(fmt::format("queue needs positive capacity and dim, got {}x{}", capacity, dim));
  }
  keys_ = Matrix::Zero(capacity, dim);
}

Matrix QueueState::negatives() const { return keys_.topRows(filled_); }

Matrix QueueState::fifo_order() const {
  Matrix out(filled_, dim_);
  const int start = filled_ < capacity_ ? 0 : cursor_;
  for (int i = 0; i < filled_; ++i) out.row(i) = keys_.row((start + i) % capacity_);
  return out;
}

void QueueState::push(const Matrix& keys) {
  const int b = static_cast<int>(keys.rows());
  if (b == 0) return;
  if (b > capacity_) {
    throw ValidationError(fmt::format("cannot push {} keys into a queue of capacity {}", b, capacity_));
  }
  if (keys.cols() != dim_) {
    throw ValidationError(fmt::format("queue dim {} but keys have dim {}", dim_, keys.cols()));
  }
  if (!rows_unit_norm(keys)) throw ValidationError("queue keys must be L2-normalised");
  for (int i = 0; i < b; ++i) keys_.row((cursor_ + i) % capacity_) = keys.row(i);
  cursor_ = (cursor_ + b) % capacity_;
  filled_ = std::min(filled_ + b, capacity_);
}

QueueState queue_push(QueueState queue, const Matrix& keys) {
  queue.push(keys);
  return queue;
}

void momentum_update(std::span<double> theta_k, std::span<const double> theta_q, double m) {
  if (theta_k.size() != theta_q.size()) {
    throw ValidationError(fmt::format("momentum update size mismatch: {} vs {}", theta_k.size(), theta_q.size()));
  }
  if (!(m >= 0.0 && m <= 1.0)) throw ValidationError(fmt::format("momentum must lie in [0,1], got {}", m));
  for (std::size_t i = 0; i < theta_k.size(); ++i) theta_k[i] = m * theta_k[i] + (1.0 - m) * theta_q[i];
}

void momentum_update(const nn::ParamList& key, const nn::ParamList& query, double m) {
  if (key.size() != query.size()) throw ValidationError("momentum update: parameter lists differ in length");
  for (std::size_t i = 0; i < key.size(); ++i) {
    if (key[i].name != query[i].name || !key[i].param->value.same_shape(query[i].param->value)) {
      throw ValidationError(fmt::format("momentum update: {} does not match {}", key[i].name, query[i].name));
    }
    if (!query[i].param->trainable) continue;
    momentum_update(key[i].param->value.data, query[i].param->value.data, m);
  }
}

}  // namespace sslseg::ssl
