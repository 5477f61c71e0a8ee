#include "core/ssl/losses.hpp"

#include "core/common/errors.hpp"
#include "core/ssl/moco.hpp"

#include <fmt/format.h>

#include <cmath>
#include <limits>

namespace sslseg::ssl {
namespace {

void check_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw ValidationError(fmt::format("temperature must be positive, got {}", tau));
  }
}

void check_nonzero_rows(const Matrix& m, const char* what) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (!(m.row(r).norm() > 0.0)) throw ValidationError(fmt::format("{} row {} has zero norm", what, r));
  }
}

double log_sum_exp(const Eigen::Ref<const Eigen::RowVectorXd>& v) {
  const double mx = v.maxCoeff();
  return mx + std::log((v.array() - mx).exp().sum());
}

}  // namespace

EmbeddingBatch EmbeddingBatch::unit(const Matrix& raw) { return {l2_normalize_rows(raw), true}; }

bool rows_unit_norm(const Matrix& m, double tol) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (std::abs(m.row(r).norm() - 1.0) > tol) return false;
  }
  return m.allFinite();
}

Matrix l2_normalize_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double n = m.row(r).norm();
    if (!(n > 0.0)) throw ValidationError(fmt::format("cannot normalise zero row {}", r));
    out.row(r) = m.row(r) / n;
  }
  return out;
}

Matrix l2_normalize_backward(const Matrix& raw, const Matrix& grad_unit) {
  Matrix out(raw.rows(), raw.cols());
  for (Eigen::Index r = 0; r < raw.rows(); ++r) {
    const double n = raw.row(r).norm();
    const Eigen::RowVectorXd y = raw.row(r) / n;
    out.row(r) = (grad_unit.row(r) - y * y.dot(grad_unit.row(r))) / n;
  }
  return out;
}

LossValue info_nce(const Matrix& q, const Matrix& k_pos, const QueueState& queue, double tau,
                   Matrix* grad_q) {
  check_tau(tau);
  if (q.rows() != k_pos.rows() || q.cols() != k_pos.cols()) {
    throw ValidationError("info_nce: q and k_pos shapes differ");
  }
  if (q.cols() != queue.dim()) throw ValidationError("info_nce: embedding dim differs from queue dim");
  if (!rows_unit_norm(q) || !rows_unit_norm(k_pos)) {
    throw ValidationError("info_nce: q and k_pos must be L2-normalised");
  }
  const Eigen::Index b = q.rows();
  const Matrix negatives = queue.negatives();
  const Eigen::Index k = negatives.rows();
  LossValue out;
  if (grad_q) *grad_q = Matrix::Zero(b, q.cols());
  if (b == 0) return out;

  double total = 0.0, pos_sum = 0.0, neg_sum = 0.0;
  Eigen::RowVectorXd logits(k + 1);
  for (Eigen::Index i = 0; i < b; ++i) {
    const double pos = q.row(i).dot(k_pos.row(i));
    logits(0) = pos / tau;
    if (k > 0) logits.tail(k) = (negatives * q.row(i).transpose()).transpose() / tau;
    const double lse = log_sum_exp(logits);
    total += lse - logits(0);
    pos_sum += pos;
    if (k > 0) neg_sum += logits.tail(k).sum() * tau;
    if (grad_q) {
      const Eigen::RowVectorXd soft = (logits.array() - lse).exp();
      Eigen::RowVectorXd g = (soft(0) - 1.0) * k_pos.row(i);
      if (k > 0) g += soft.tail(k) * negatives;
      grad_q->row(i) = g / (tau * static_cast<double>(b));
    }
  }
  out.value = total / static_cast<double>(b);
  out.aux["pos_sim"] = pos_sum / static_cast<double>(b);
  out.aux["neg_sim"] = k > 0 ? neg_sum / static_cast<double>(b * k) : 0.0;
  return out;
}

std::vector<int> two_view_pairing(int n) {
  std::vector<int> partner(2 * static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    partner[i] = i + n;
    partner[i + n] = i;
  }
  return partner;
}

LossValue nt_xent(const Matrix& z, std::span<const int> partner, double tau, Matrix* grad_z) {
  check_tau(tau);
  const Eigen::Index rows = z.rows();
  if (rows < 2 || rows % 2 != 0) throw ValidationError(fmt::format("nt_xent needs 2N >= 2 rows, got {}", rows));
  if (static_cast<Eigen::Index>(partner.size()) != rows) throw ValidationError("nt_xent: pairing size differs from batch");
  for (Eigen::Index i = 0; i < rows; ++i) {
    const int j = partner[i];
    if (j < 0 || j >= rows || j == i || partner[j] != i) {
      throw ValidationError(fmt::format("nt_xent: invalid pairing at anchor {}", i));
    }
  }
  check_nonzero_rows(z, "nt_xent input");
  const Matrix u = l2_normalize_rows(z);
  const Matrix sim = u * u.transpose();
  Matrix dsim = Matrix::Zero(rows, rows);

  double total = 0.0, pos_sum = 0.0, neg_sum = 0.0;
  Eigen::RowVectorXd logits(rows - 1);
  std::vector<Eigen::Index> others(rows - 1);
  for (Eigen::Index i = 0; i < rows; ++i) {
    Eigen::Index c = 0;
    for (Eigen::Index k = 0; k < rows; ++k) {
      if (k == i) continue;
      others[c] = k;
      logits(c++) = sim(i, k) / tau;
    }
    const Eigen::Index j = partner[i];
    const double lse = log_sum_exp(logits);
    total += lse - sim(i, j) / tau;
    pos_sum += sim(i, j);
    neg_sum += logits.sum() * tau - sim(i, j);
    if (grad_z) {
      for (Eigen::Index c2 = 0; c2 < rows - 1; ++c2) {
        const Eigen::Index k = others[c2];
        dsim(i, k) += std::exp(logits(c2) - lse) - (k == j ? 1.0 : 0.0);
      }
    }
  }
  const double scale = 1.0 / static_cast<double>(rows);
  LossValue out;
  out.value = total * scale;
  out.aux["pos_sim"] = pos_sum * scale;
  out.aux["neg_sim"] = rows > 2 ? neg_sum / static_cast<double>(rows * (rows - 2)) : 0.0;
  if (grad_z) {
    // d sim(i,k) / du_i = u_k and / du_k = u_i
    const Matrix du = ((dsim + dsim.transpose()) * u) * (scale / tau);
    *grad_z = l2_normalize_backward(z, du);
  }
  return out;
}

LossValue neg_cosine(const Matrix& p, const Matrix& z, Matrix* grad_p, Matrix* grad_z) {
  if (p.rows() != z.rows() || p.cols() != z.cols()) throw ValidationError("neg_cosine: shapes differ");
  check_nonzero_rows(p, "neg_cosine p");
  check_nonzero_rows(z, "neg_cosine z");
  const Eigen::Index b = p.rows();
  LossValue out;
  if (b == 0) {
    if (grad_p) *grad_p = Matrix::Zero(0, p.cols());
    if (grad_z) *grad_z = Matrix::Zero(0, z.cols());
    return out;
  }
  const Matrix pu = l2_normalize_rows(p);
  const Matrix zu = l2_normalize_rows(z);
  const double mean_cos = (pu.array() * zu.array()).sum() / static_cast<double>(b);
  out.value = -mean_cos;
  out.aux["pos_sim"] = mean_cos;
  const double scale = -1.0 / static_cast<double>(b);
  if (grad_p) *grad_p = l2_normalize_backward(p, zu * scale);
  if (grad_z) *grad_z = l2_normalize_backward(z, pu * scale);
  return out;
}

LossValue simsiam_loss(const Matrix& p1, const Matrix& z1, const Matrix& p2, const Matrix& z2,
                       SimSiamGrads* grads) {
  Matrix g1, g2;
  const LossValue d12 = neg_cosine(p1, z2, grads ? &g1 : nullptr);
  const LossValue d21 = neg_cosine(p2, z1, grads ? &g2 : nullptr);
  LossValue out;
  out.value = 0.5 * d12.value + 0.5 * d21.value;
  out.aux["pos_sim"] = -out.value;
  if (grads) {
    grads->p1 = 0.5 * g1;
    grads->p2 = 0.5 * g2;
    grads->z1 = Matrix::Zero(z1.rows(), z1.cols());
    grads->z2 = Matrix::Zero(z2.rows(), z2.cols());
  }
  return out;
}

}  // namespace sslseg::ssl
