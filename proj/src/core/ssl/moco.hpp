#pragma once

#include "core/nn/layers.hpp"
#include "core/ssl/losses.hpp"

#include <span>

namespace sslseg::ssl {

// Fixed-capacity ring of unit-norm keys. Rows [0, filled) hold live keys;
// once full, the row at `cursor` is the oldest.
class QueueState {
 public:
  QueueState(int capacity, int dim);

  int capacity() const { return capacity_; }
  int dim() const { return dim_; }
  int filled() const { return filled_; }
  int cursor() const { return cursor_; }
  const Matrix& storage() const { return keys_; }

  // Live keys in storage order.
  Matrix negatives() const;
  // Live keys from oldest to newest.
  Matrix fifo_order() const;

  // Writes B <= capacity normalised keys, evicting the oldest first.
  void push(const Matrix& keys);

 private:
  int capacity_;
  int dim_;
  Matrix keys_;
  int cursor_ = 0;
  int filled_ = 0;
};

QueueState queue_push(QueueState queue, const Matrix& keys);

// theta_k <- m * theta_k + (1 - m) * theta_q, elementwise.
void momentum_update(std::span<double> theta_k, std::span<const double> theta_q, double m);
// Applies the update to every trainable parameter; names and shapes must match.
void momentum_update(const nn::ParamList& key, const nn::ParamList& query, double m);

}  // namespace sslseg::ssl
