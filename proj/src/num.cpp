#include "viewpulse/num.hpp"

namespace viewpulse::num {

Vec concat(const Vec& a, const Vec& b) {
  Vec out(a.size() + b.size());
  out.head(a.size()) = a;
  out.tail(b.size()) = b;
  return out;
}

std::pair<Vec, Vec> split(const Vec& v, Eigen::Index n1) {
  if (n1 < 0 || n1 >= v.size()) {
    throw ShapeError("split: index " + std::to_string(n1) +
                     " out of range for length " + std::to_string(v.size()));
  }
  return {v.head(n1), v.tail(v.size() - n1)};
}

Vec affine_forward(const Vec& x, const Mat& weight, const Vec& bias) {
  if (weight.cols() != x.size() || weight.rows() != bias.size()) {
    throw ShapeError("affine_forward: W " +
                     shape_str(weight.rows(), weight.cols()) + " with x " +
                     shape_str(x.size(), 1) + " and b " +
                     shape_str(bias.size(), 1));
  }
  return weight * x + bias;
}

AffineGrads affine_backward(const Vec& x, const Mat& weight,
                            const Vec& upstream) {
  if (weight.cols() != x.size() || weight.rows() != upstream.size()) {
    throw ShapeError("affine_backward: W " +
                     shape_str(weight.rows(), weight.cols()) + " with x " +
                     shape_str(x.size(), 1) + " and upstream " +
                     shape_str(upstream.size(), 1));
  }
  AffineGrads g;
  g.dweight = upstream * x.transpose();
  g.dx = weight.transpose() * upstream;
  g.dbias = upstream;
  return g;
}

void adam_step(Param& p, AdamState& s) {
  if (s.m.rows() != p.value.rows() || s.m.cols() != p.value.cols()) {
    throw ShapeError("adam_step: state shape " + shape_str(s.m.rows(), s.m.cols()) +
                     " does not match param '" + p.name + "' " +
                     shape_str(p.value.rows(), p.value.cols()));
  }
  s.step += 1;
  s.m = s.beta1 * s.m + (1.0 - s.beta1) * p.grad;
  s.v = s.beta2 * s.v + (1.0 - s.beta2) * p.grad.cwiseProduct(p.grad);
  const double m_corr = 1.0 - std::pow(s.beta1, double(s.step));
  const double v_corr = 1.0 - std::pow(s.beta2, double(s.step));
  p.value.array() -=
      s.lr * (s.m.array() / m_corr) / ((s.v.array() / v_corr).sqrt() + s.eps);
  ensure_finite(p.value, "adam_step");
}

double SplitMix64::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  // u1 in (0, 1] so the log never sees zero.
  const double u1 = double((next_u64() >> 11) + 1) * 0x1.0p-53;
  const double u2 = next_unit();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  have_spare_ = true;
  return r * std::cos(theta);
}

std::uint64_t SplitMix64::derive(std::uint64_t seed, std::uint64_t stream) {
  SplitMix64 g(seed ^ (0x94d049bb133111ebULL * (stream + 1)));
  return g.next_u64();
}

Mat glorot_init(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  if (rows < 1 || cols < 1) {
    throw ShapeError("glorot_init: rows and cols must be >= 1, got " +
                     shape_str(rows, cols));
  }
  const double limit = std::sqrt(6.0 / double(rows + cols));
  SplitMix64 rng(seed);
  Mat out(rows, cols);
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out.data()[i] = rng.uniform(-limit, limit);
  }
  return out;
}

double grad_check(const LossFn& f, std::span<Param* const> params, double h) {
  for (Param* p : params) p->zero_grad();
  const double base = f(true);
  if (!std::isfinite(base)) {
    throw NumericError("grad_check: loss is non-finite");
  }
  std::vector<Mat> analytic;
  analytic.reserve(params.size());
  for (Param* p : params) analytic.push_back(p->grad);

  double max_rel = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Param& p = *params[pi];
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      const double saved = p.value.data()[i];
      p.value.data()[i] = saved + h;
      const double up = f(false);
      p.value.data()[i] = saved - h;
      const double down = f(false);
      p.value.data()[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("grad_check: perturbed loss is non-finite");
      }
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[pi].data()[i];
      const double rel = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace viewpulse::num
