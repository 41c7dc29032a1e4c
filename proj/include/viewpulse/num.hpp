#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "viewpulse/errors.hpp"

namespace viewpulse {

// All numeric state is 64-bit: gradient checks at 1e-4 are hopeless in float.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

namespace num {

inline std::string shape_str(Eigen::Index rows, Eigen::Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

template <typename A, typename B>
void require_same_shape(const char* op, const Eigen::MatrixBase<A>& a,
                        const Eigen::MatrixBase<B>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.rows(), a.cols()) + " vs " +
                     shape_str(b.rows(), b.cols()));
  }
}

// ---------------------------------------------------------------------------
// Elementwise maps. Free functions over any dense Eigen expression; they
// evaluate to the argument's plain type.

template <typename Derived>
typename Derived::PlainObject sigmoid_map(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return x.derived().unaryExpr(
      [](Scalar v) { return Scalar(1) / (Scalar(1) + std::exp(-v)); });
}

template <typename Derived>
typename Derived::PlainObject tanh_map(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return x.derived().unaryExpr([](Scalar v) { return std::tanh(v); });
}

template <typename A, typename B>
typename A::PlainObject hadamard(const Eigen::MatrixBase<A>& a,
                                 const Eigen::MatrixBase<B>& b) {
  require_same_shape("hadamard", a, b);
  return a.derived().cwiseProduct(b.derived());
}

Vec concat(const Vec& a, const Vec& b);

/// Splits v into its first n1 entries and the rest; exact inverse of concat.
std::pair<Vec, Vec> split(const Vec& v, Eigen::Index n1);

// ---------------------------------------------------------------------------
// Affine kernel.

Vec affine_forward(const Vec& x, const Mat& weight, const Vec& bias);

struct AffineGrads {
  Vec dx;
  Mat dweight;
  Vec dbias;
};

AffineGrads affine_backward(const Vec& x, const Mat& weight, const Vec& upstream);

// ---------------------------------------------------------------------------
// Trainable parameter: a named value with a same-shaped gradient buffer.

struct Param {
  std::string name;
  Mat value;
  Mat grad;

  Param() = default;
  Param(std::string name_, Mat value_)
      : name(std::move(name_)), value(std::move(value_)) {
    grad = Mat::Zero(value.rows(), value.cols());
  }

  Eigen::Index size() const { return value.size(); }
  void zero_grad() { grad.setZero(); }
};

// Column params (biases) are stored as n-by-1 matrices; these views expose
// them as contiguous vectors (row-major n-by-1 storage is contiguous).
inline Eigen::Map<const Vec> vec_value(const Param& p) {
  return Eigen::Map<const Vec>(p.value.data(), p.value.rows());
}
inline Eigen::Map<Vec> vec_value(Param& p) {
  return Eigen::Map<Vec>(p.value.data(), p.value.rows());
}
inline Eigen::Map<const Vec> vec_grad(const Param& p) {
  return Eigen::Map<const Vec>(p.grad.data(), p.grad.rows());
}
inline Eigen::Map<Vec> vec_grad(Param& p) {
  return Eigen::Map<Vec>(p.grad.data(), p.grad.rows());
}

// ---------------------------------------------------------------------------
// Adam with bias correction.

struct AdamState {
  Mat m;
  Mat v;
  long step = 0;
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  AdamState(Eigen::Index rows, Eigen::Index cols, double lr_)
      : m(Mat::Zero(rows, cols)), v(Mat::Zero(rows, cols)), lr(lr_) {}
};

/// One Adam update from p.grad. The gradient is left untouched; the caller
/// zeroes it.
void adam_step(Param& p, AdamState& s);

// ---------------------------------------------------------------------------
// Deterministic counter-based PRNG (splitmix64). std::mt19937 plus the
// standard distributions is not bit-stable across library versions, and
// checkpoints must be byte-reproducible.

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double next_unit() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  /// Standard normal via Box-Muller (pair cached).
  double normal();

  /// Independent stream derivation, pure in (seed, stream).
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Uniform Glorot fill on +-sqrt(6/(rows+cols)), pure in (rows, cols, seed).
Mat glorot_init(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Finite-difference gradient check harness.

/// Loss closure: f(true) recomputes the loss and accumulates analytic
/// gradients into the params; f(false) computes the loss only.
using LossFn = std::function<double(bool with_grads)>;

/// Central differences with step h against the analytic gradients. Returns
/// the max over coordinates of |analytic - numeric| / max(|analytic|,
/// |numeric|, 1e-8). Restores all param values before returning.
double grad_check(const LossFn& f, std::span<Param* const> params,
                  double h = 1e-5);

inline void ensure_finite(const Mat& m, const char* what) {
  if (!m.allFinite()) {
    throw NumericError(std::string(what) + ": non-finite values");
  }
}
inline void ensure_finite(const Vec& v, const char* what) {
  if (!v.allFinite()) {
    throw NumericError(std::string(what) + ": non-finite values");
  }
}

}  // namespace num
}  // namespace viewpulse
