#include "core/common/errors.hpp"
#include "core/ssl/moco.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace sslseg;
using namespace sslseg::ssl;

namespace {

Matrix basis(int index, int dim) {
  Matrix m = Matrix::Zero(1, dim);
  m(0, index) = 1.0;
  return m;
}

Matrix stack(std::initializer_list<Matrix> rows) {
  Matrix out(static_cast<int>(rows.size()), rows.begin()->cols());
  int r = 0;
  for (const auto& m : rows) out.row(r++) = m.row(0);
  return out;
}

}  // namespace

TEST(Momentum, ScalarExamples) {
  std::vector<double> k{0.5}, q{1.0};
  momentum_update(k, q, 0.999);
  EXPECT_NEAR(k[0], 0.5005, 1e-15);

  std::vector<double> k1{0.25, -3.0}, q1{7.0, 2.0};
  momentum_update(k1, q1, 1.0);
  EXPECT_EQ(k1, (std::vector<double>{0.25, -3.0}));
  momentum_update(k1, q1, 0.0);
  EXPECT_EQ(k1, q1);
}

TEST(Momentum, RejectsMismatchAndBadMomentum) {
  std::vector<double> k{1.0, 2.0}, q{1.0};
  EXPECT_THROW(momentum_update(k, q, 0.5), ValidationError);
  std::vector<double> q2{1.0, 2.0};
  EXPECT_THROW(momentum_update(k, q2, 1.5), ValidationError);
  EXPECT_THROW(momentum_update(k, q2, -0.1), ValidationError);
}

TEST(Momentum, StaysBetweenEndpoints) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> k(6), q(6);
    for (auto& v : k) v = u(rng);
    for (auto& v : q) v = u(rng);
    const auto before = k;
    momentum_update(k, q, std::uniform_real_distribution<double>(0, 1)(rng));
    for (std::size_t i = 0; i < k.size(); ++i) {
      EXPECT_GE(k[i], std::min(before[i], q[i]) - 1e-15);
      EXPECT_LE(k[i], std::max(before[i], q[i]) + 1e-15);
    }
  }
}

TEST(Momentum, GeometricContraction) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0, 1);
  std::vector<double> k(32), q(32);
  for (auto& v : k) v = n(rng);
  for (auto& v : q) v = n(rng);
  const auto distance = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < k.size(); ++i) s += (k[i] - q[i]) * (k[i] - q[i]);
    return std::sqrt(s);
  };
  const double d0 = distance();
  const double m = 0.9;
  for (int t = 1; t <= 50; ++t) {
    momentum_update(k, q, m);
    EXPECT_NEAR(distance(), std::pow(m, t) * d0, 1e-12) << "t=" << t;
  }
}

TEST(Momentum, ParamListFollowsQueryTrainableFlags) {
  nn::Param kw, kr, qw, qr;
  kw.value = nn::Tensor(1, 2, 1, 1, 0.0);
  kr.value = nn::Tensor(1, 2, 1, 1, 0.0);
  qw.value = nn::Tensor(1, 2, 1, 1, 1.0);
  qr.value = nn::Tensor(1, 2, 1, 1, 1.0);
  qr.trainable = false;  // running statistic
  const nn::ParamList key{{"w", &kw}, {"r", &kr}}, query{{"w", &qw}, {"r", &qr}};
  momentum_update(key, query, 0.75);
  EXPECT_DOUBLE_EQ(kw.value.data[0], 0.25);
  EXPECT_DOUBLE_EQ(kr.value.data[0], 0.0);

  const nn::ParamList renamed{{"x", &qw}, {"r", &qr}};
  EXPECT_THROW(momentum_update(key, renamed, 0.5), ValidationError);
}

TEST(Queue, HandTrace) {
  const Matrix a = basis(0, 6), b = basis(1, 6), c = basis(2, 6), d = basis(3, 6), e = basis(4, 6),
               f = basis(5, 6);
  QueueState q(4, 6);
  q.push(stack({a, b}));
  q.push(stack({c, d}));
  q.push(stack({e, f}));
  EXPECT_EQ(q.filled(), 4);
  const Matrix fifo = q.fifo_order();
  EXPECT_TRUE(fifo.row(0).isApprox(c.row(0)));
  EXPECT_TRUE(fifo.row(1).isApprox(d.row(0)));
  EXPECT_TRUE(fifo.row(2).isApprox(e.row(0)));
  EXPECT_TRUE(fifo.row(3).isApprox(f.row(0)));
}

TEST(Queue, FullPushWrapsCursor) {
  QueueState q(4, 4);
  q.push(Matrix::Identity(4, 4));
  EXPECT_EQ(q.filled(), 4);
  EXPECT_EQ(q.cursor(), 0);
}

TEST(Queue, EmptyPushIsIdentity) {
  QueueState q(4, 3);
  q.push(basis(1, 3));
  const Matrix before = q.storage();
  const int cursor = q.cursor(), filled = q.filled();
  q.push(Matrix(0, 3));
  EXPECT_EQ(q.cursor(), cursor);
  EXPECT_EQ(q.filled(), filled);
  EXPECT_EQ(q.storage(), before);
}

TEST(Queue, Errors) {
  QueueState q(2, 3);
  EXPECT_THROW(q.push(Matrix::Identity(3, 3)), ValidationError);
  Matrix raw = Matrix::Ones(1, 3);
  EXPECT_THROW(q.push(raw), ValidationError);
  EXPECT_THROW(q.push(Matrix::Identity(2, 2)), ValidationError);
  EXPECT_THROW(QueueState(0, 3), ValidationError);
}

TEST(Queue, FunctionalPushLeavesInputAlone) {
  const QueueState empty(3, 2);
  Matrix key(1, 2);
  key << 0.6, 0.8;
  const QueueState next = queue_push(empty, key);
  EXPECT_EQ(empty.filled(), 0);
  EXPECT_EQ(next.filled(), 1);
}

TEST(Queue, MatchesListOracleOnRandomSequences) {
  std::mt19937_64 rng(4);
  for (int seq = 0; seq < 2000; ++seq) {
    const int capacity = 1 + static_cast<int>(rng() % 12);
    const int dim = 1 + static_cast<int>(rng() % 4);
    QueueState q(capacity, dim);
    oracle::ListQueue ref{static_cast<std::size_t>(capacity), {}};
    const int pushes = static_cast<int>(rng() % 10);
    for (int p = 0; p < pushes; ++p) {
      const int b = static_cast<int>(rng() % (capacity + 1));
      const Matrix keys = testutil::random_unit(rng, b, dim);
      q.push(keys);
      ref.push(keys);
      ASSERT_EQ(q.filled(), static_cast<int>(ref.rows.size()));
      const Matrix fifo = q.fifo_order();
      for (int r = 0; r < fifo.rows(); ++r) {
        for (int c = 0; c < dim; ++c) ASSERT_EQ(fifo(r, c), ref.rows[r][c]);
      }
    }
  }
}
