#pragma once

#include <Eigen/Dense>

#include <map>
#include <span>
#include <string>
#include <vector>

namespace sslseg::ssl {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class QueueState;

// Rows are embeddings; `normalized` records that every row has unit L2 norm.
struct EmbeddingBatch {
  Matrix vectors;
  bool normalized = false;

  static EmbeddingBatch unit(const Matrix& raw);
};

struct LossValue {
  double value = 0.0;
  // "pos_sim" / "neg_sim": mean similarity of positive and negative pairs.
  std::map<std::string, double> aux;
};

inline constexpr double kUnitNormTolerance = 1e-6;

bool rows_unit_norm(const Matrix& m, double tol = kUnitNormTolerance);
Matrix l2_normalize_rows(const Matrix& m);
// Gradient through row-wise L2 normalisation: given dL/d(x/|x|), returns dL/dx.
Matrix l2_normalize_backward(const Matrix& raw, const Matrix& grad_unit);

// Mean over the batch of -log(exp(q.k+/tau) / sum_i exp(q.k_i/tau)), where
// index 0 is the positive key and the remaining terms are the filled queue
// rows. q and k_pos must be row-normalised. Writes dL/dq when requested.
LossValue info_nce(const Matrix& q, const Matrix& k_pos, const QueueState& queue, double tau,
                   Matrix* grad_q = nullptr);

// Partner map for a batch laid out as [view_a(0..n-1); view_b(0..n-1)].
std::vector<int> two_view_pairing(int n);

// Normalised temperature-scaled cross entropy over 2N embeddings. Uses cosine
// similarity, so rows need not be normalised; partner must be a fixed-point
// free involution. Mean over all 2N anchors.
LossValue nt_xent(const Matrix& z, std::span<const int> partner, double tau,
                  Matrix* grad_z = nullptr);

// Mean over rows of -(p/|p|).(z/|z|).
LossValue neg_cosine(const Matrix& p, const Matrix& z, Matrix* grad_p = nullptr,
                     Matrix* grad_z = nullptr);

struct SimSiamGrads {
  Matrix p1, p2;
  // Always zero: the targets pass through a stop-gradient.
  Matrix z1, z2;
};

// 0.5 * D(p1, sg(z2)) + 0.5 * D(p2, sg(z1)).
LossValue simsiam_loss(const Matrix& p1, const Matrix& z1, const Matrix& p2, const Matrix& z2,
                       SimSiamGrads* grads = nullptr);

}  // namespace sslseg::ssl
