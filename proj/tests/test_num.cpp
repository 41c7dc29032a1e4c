#include <doctest.h>

#include <cmath>

#include "viewpulse/num.hpp"

using namespace viewpulse;
using num::SplitMix64;

namespace {

// Straight triple loop, the reference for every matrix-vector product here.
Vec matvec_oracle(const Mat& w, const Vec& x, const Vec& b) {
  Vec out(w.rows());
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    double acc = b[i];
    for (Eigen::Index j = 0; j < w.cols(); ++j) acc += w(i, j) * x[j];
    out[i] = acc;
  }
  return out;
}

Mat random_mat(Eigen::Index rows, Eigen::Index cols, SplitMix64& rng) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-2, 2);
  return m;
}

Vec random_vec(Eigen::Index n, SplitMix64& rng) {
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.uniform(-2, 2);
  return v;
}

}  // namespace

TEST_CASE("affine_forward identity and hand cases") {
  Mat eye = Mat::Identity(2, 2);
  Vec x(2);
  x << 3, -1;
  Vec y = num::affine_forward(x, eye, Vec::Zero(2));
  CHECK(y[0] == 3.0);
  CHECK(y[1] == -1.0);

  Mat w(1, 2);
  w << 1, 1;
  Vec b(1);
  b << 0.5;
  Vec x2(2);
  x2 << 2, 3;
  CHECK(num::affine_forward(x2, w, b)[0] == doctest::Approx(5.5).epsilon(0));
}

TEST_CASE("affine_forward matches the triple-loop oracle on random shapes") {
  SplitMix64 rng(101);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index m = 1 + Eigen::Index(rng.next_u64() % 32);
    const Eigen::Index n = 1 + Eigen::Index(rng.next_u64() % 32);
    Mat w = random_mat(m, n, rng);
    Vec x = random_vec(n, rng);
    Vec b = random_vec(m, rng);
    Vec got = num::affine_forward(x, w, b);
    Vec want = matvec_oracle(w, x, b);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("affine_forward rejects mismatched shapes") {
  Mat w(2, 3);
  w.setZero();
  CHECK_THROWS_AS(num::affine_forward(Vec::Zero(4), w, Vec::Zero(2)),
                  ShapeError);
  CHECK_THROWS_AS(num::affine_forward(Vec::Zero(3), w, Vec::Zero(5)),
                  ShapeError);
}

TEST_CASE("affine_backward hand case and zero upstream") {
  Mat w(1, 2);
  w << 2, 3;
  Vec x(2);
  x << 5, 7;
  Vec up(1);
  up << 1;
  auto g = num::affine_backward(x, w, up);
  CHECK(g.dx[0] == 2.0);
  CHECK(g.dx[1] == 3.0);
  CHECK(g.dweight(0, 0) == 5.0);
  CHECK(g.dweight(0, 1) == 7.0);
  CHECK(g.dbias[0] == 1.0);

  auto gz = num::affine_backward(x, w, Vec::Zero(1));
  CHECK(gz.dx.isZero(0));
  CHECK(gz.dweight.isZero(0));
  CHECK(gz.dbias.isZero(0));
}

TEST_CASE("affine_backward agrees with central differences") {
  SplitMix64 rng(77);
  Mat w = random_mat(4, 3, rng);
  Vec x = random_vec(3, rng);
  Vec b = random_vec(4, rng);
  Vec up = random_vec(4, rng);
  auto g = num::affine_backward(x, w, up);

  const double h = 1e-5;
  auto loss = [&] { return up.dot(num::affine_forward(x, w, b)); };
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double saved = w.data()[i];
    w.data()[i] = saved + h;
    const double lp = loss();
    w.data()[i] = saved - h;
    const double lm = loss();
    w.data()[i] = saved;
    const double numeric = (lp - lm) / (2 * h);
    const double analytic = g.dweight.data()[i];
    CHECK(std::abs(analytic - numeric) /
              std::max({std::abs(analytic), std::abs(numeric), 1e-8}) <
          1e-6);
  }
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double lp = loss();
    x[i] = saved - h;
    const double lm = loss();
    x[i] = saved;
    const double numeric = (lp - lm) / (2 * h);
    CHECK(std::abs(g.dx[i] - numeric) /
              std::max({std::abs(g.dx[i]), std::abs(numeric), 1e-8}) <
          1e-6);
  }
}

TEST_CASE("elementwise maps") {
  Vec zero = Vec::Zero(1);
  CHECK(num::sigmoid_map(zero)[0] == 0.5);
  CHECK(num::tanh_map(zero)[0] == 0.0);

  Vec a(2), b(2);
  a << 1, 2;
  b << 3, 4;
  Vec h = num::hadamard(a, b);
  CHECK(h[0] == 3.0);
  CHECK(h[1] == 8.0);
  CHECK_THROWS_AS(num::hadamard(a, Vec::Zero(3)), ShapeError);
}

TEST_CASE("split of concat is the identity, bit-exact") {
  SplitMix64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index na = 1 + Eigen::Index(rng.next_u64() % 16);
    const Eigen::Index nb = 1 + Eigen::Index(rng.next_u64() % 16);
    Vec a = random_vec(na, rng);
    Vec b = random_vec(nb, rng);
    auto [a2, b2] = num::split(num::concat(a, b), na);
    CHECK(a2.size() == a.size());
    CHECK(b2.size() == b.size());
    for (Eigen::Index i = 0; i < na; ++i) CHECK(a2[i] == a[i]);
    for (Eigen::Index i = 0; i < nb; ++i) CHECK(b2[i] == b[i]);
  }
}

TEST_CASE("split rejects out-of-range index") {
  Vec v = Vec::Zero(3);
  CHECK_THROWS_AS(num::split(v, 3), ShapeError);
  CHECK_THROWS_AS(num::split(v, -1), ShapeError);
}

TEST_CASE("adam with zero gradient and fresh state never moves") {
  num::Param p("w", Mat::Constant(3, 2, 1.5));
  num::AdamState s(3, 2, 0.1);
  for (int i = 0; i < 5; ++i) num::adam_step(p, s);
  CHECK((p.value.array() == 1.5).all());
  CHECK(s.step == 5);
}

TEST_CASE("adam first step moves by about lr per coordinate") {
  num::Param p("w", Mat::Constant(1, 3, 0.0));
  p.grad(0, 0) = 0.3;
  p.grad(0, 1) = -2.0;
  p.grad(0, 2) = 1e-3;
  num::AdamState s(1, 3, 0.05);
  num::adam_step(p, s);
  for (Eigen::Index j = 0; j < 3; ++j) {
    const double g = std::abs(p.grad(0, j));
    const double delta = std::abs(p.value(0, j));
    CHECK(delta <= s.lr);
    CHECK(delta >= 0.999 * s.lr * g / (g + s.eps));
  }
  // grad untouched
  CHECK(p.grad(0, 0) == 0.3);
}

TEST_CASE("adam drives w^2 near zero, matching a scalar oracle") {
  // Oracle: plain scalar Adam on f(w) = w^2, grad 2w.
  double w = 1.0, m = 0, v = 0;
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int t = 1; t <= 100; ++t) {
    const double g = 2.0 * w;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    w -= lr * (m / (1 - std::pow(b1, t))) /
         (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
  }
  CHECK(std::abs(w) < 0.1);

  num::Param p("w", Mat::Constant(1, 1, 1.0));
  num::AdamState s(1, 1, lr);
  for (int t = 1; t <= 100; ++t) {
    p.grad(0, 0) = 2.0 * p.value(0, 0);
    num::adam_step(p, s);
  }
  CHECK(std::abs(p.value(0, 0)) < 0.1);
  CHECK(std::abs(p.value(0, 0) - w) < 1e-12);
}

TEST_CASE("glorot_init is pure and bounded") {
  Mat a = num::glorot_init(512, 512, 7);
  Mat b = num::glorot_init(512, 512, 7);
  CHECK(a == b);
  const double limit = std::sqrt(6.0 / 1024.0);
  CHECK(a.maxCoeff() <= limit);
  CHECK(a.minCoeff() >= -limit);

  Mat tiny = num::glorot_init(1, 1, 0);
  CHECK(std::abs(tiny(0, 0)) <= std::sqrt(3.0));

  CHECK(num::glorot_init(4, 9, 3) != num::glorot_init(4, 9, 4));
  CHECK_THROWS_AS(num::glorot_init(0, 3, 1), ShapeError);
}

TEST_CASE("grad_check on a pure quadratic is near machine precision") {
  num::Param p("x", num::glorot_init(3, 2, 11));
  std::vector<num::Param*> ps = {&p};
  auto f = [&](bool with_grads) {
    if (with_grads) p.grad += p.value;
    return 0.5 * p.value.squaredNorm();
  };
  CHECK(num::grad_check(f, ps) < 1e-9);
}

TEST_CASE("splitmix streams are deterministic and distinct") {
  SplitMix64 a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(SplitMix64::derive(1, 2) == SplitMix64::derive(1, 2));
  CHECK(SplitMix64::derive(1, 2) != SplitMix64::derive(1, 3));
  CHECK(c.next_unit() >= 0.0);
  CHECK(c.next_unit() < 1.0);
}
