#include "viewpulse/layers.hpp"

namespace viewpulse::layers {

using num::shape_str;
using num::SplitMix64;

ContextGating::ContextGating(Eigen::Index dim, std::uint64_t seed,
                             std::string name_prefix)
    : W(name_prefix + ".W", num::glorot_init(dim, dim, SplitMix64::derive(seed, 1))),
      b(name_prefix + ".b", Mat::Zero(dim, 1)) {}

Vec context_gate(const ContextGating& layer, const Vec& x, GateCache* cache) {
  if (x.size() != layer.dim()) {
    throw ShapeError("context_gate: input length " + std::to_string(x.size()) +
                     " does not match gate dim " + std::to_string(layer.dim()));
  }
  Vec s = num::sigmoid_map(Vec(layer.W.value * x + num::vec_value(layer.b)));
  if (cache) {
    cache->x = x;
    cache->s = s;
  }
  return s.cwiseProduct(x);
}

Vec context_gate_backward(ContextGating& layer, const GateCache& cache,
                          const Vec& upstream) {
  if (upstream.size() != layer.dim()) {
    throw ShapeError("context_gate_backward: upstream length " +
                     std::to_string(upstream.size()) + " vs dim " +
                     std::to_string(layer.dim()));
  }
  const Vec& x = cache.x;
  const Vec& s = cache.s;
  // y = s .* x with s = sigmoid(Wx + b)
  Vec dpre = upstream.cwiseProduct(x).cwiseProduct(s).cwiseProduct(
      (Vec::Ones(s.size()) - s).eval());
  layer.W.grad += dpre * x.transpose();
  num::vec_grad(layer.b) += dpre;
  return upstream.cwiseProduct(s) + layer.W.value.transpose() * dpre;
}

LSTMCell::LSTMCell(Eigen::Index input_dim, Eigen::Index hidden_size,
                   std::uint64_t seed, std::string name_prefix)
    : W(name_prefix + ".W",
        num::glorot_init(4 * hidden_size, input_dim + hidden_size,
                         SplitMix64::derive(seed, 1))),
      b(name_prefix + ".b", Mat::Zero(4 * hidden_size, 1)),
      hidden(hidden_size) {
  // Forget-gate bias at 1 keeps early memory open.
  b.value.block(hidden, 0, hidden, 1).setOnes();
}

LSTMState lstm_step(const LSTMCell& cell, const Vec& x, const Vec& h_prev,
                    const Vec& c_prev, LSTMStepCache* cache) {
  const Eigen::Index h = cell.hidden;
  if (x.size() != cell.input_dim() || h_prev.size() != h || c_prev.size() != h) {
    throw ShapeError("lstm_step: got x " + std::to_string(x.size()) +
                     ", h_prev " + std::to_string(h_prev.size()) +
                     ", c_prev " + std::to_string(c_prev.size()) +
                     " for cell with input " + std::to_string(cell.input_dim()) +
                     ", hidden " + std::to_string(h));
  }
  Vec z = num::concat(x, h_prev);
  Vec a = cell.W.value * z + num::vec_value(cell.b);
  Vec i = num::sigmoid_map(Vec(a.segment(0, h)));
  Vec f = num::sigmoid_map(Vec(a.segment(h, h)));
  Vec o = num::sigmoid_map(Vec(a.segment(2 * h, h)));
  Vec g = num::tanh_map(Vec(a.segment(3 * h, h)));
  Vec c = f.cwiseProduct(c_prev) + i.cwiseProduct(g);
  Vec ht = o.cwiseProduct(num::tanh_map(c));
  if (cache) {
    cache->z = std::move(z);
    cache->c_prev = c_prev;
    cache->i = std::move(i);
    cache->f = std::move(f);
    cache->o = std::move(o);
    cache->g = std::move(g);
    cache->c = c;
  }
  return {std::move(ht), std::move(c)};
}

LSTMStepGrads lstm_step_backward(LSTMCell& cell, const LSTMStepCache& cache,
                                 const Vec& dh, const Vec& dc_in) {
  const Eigen::Index h = cell.hidden;
  const Eigen::Index d = cell.input_dim();
  const Vec tc = num::tanh_map(cache.c);
  Vec dout = dh.cwiseProduct(tc);
  Vec dc = dc_in +
           dh.cwiseProduct(cache.o).cwiseProduct(
               (Vec::Ones(h) - tc.cwiseProduct(tc)).eval());
  Vec di = dc.cwiseProduct(cache.g);
  Vec df = dc.cwiseProduct(cache.c_prev);
  Vec dg = dc.cwiseProduct(cache.i);

  Vec da(4 * h);
  da.segment(0, h) =
      di.cwiseProduct(cache.i).cwiseProduct((Vec::Ones(h) - cache.i).eval());
  da.segment(h, h) =
      df.cwiseProduct(cache.f).cwiseProduct((Vec::Ones(h) - cache.f).eval());
  da.segment(2 * h, h) =
      dout.cwiseProduct(cache.o).cwiseProduct((Vec::Ones(h) - cache.o).eval());
  da.segment(3 * h, h) =
      dg.cwiseProduct((Vec::Ones(h) - cache.g.cwiseProduct(cache.g)).eval());

  cell.W.grad += da * cache.z.transpose();
  num::vec_grad(cell.b) += da;
  Vec dz = cell.W.value.transpose() * da;

  LSTMStepGrads out;
  out.dx = dz.head(d);
  out.dh_prev = dz.tail(h);
  out.dc_prev = dc.cwiseProduct(cache.f);
  return out;
}

std::vector<Vec> lstm_backward_through_time(LSTMCell& cell,
                                            std::span<const LSTMStepCache> caches,
                                            std::span<const Vec> upstream_h) {
  if (caches.size() != upstream_h.size()) {
    throw ShapeError("lstm_backward_through_time: " +
                     std::to_string(caches.size()) + " caches vs " +
                     std::to_string(upstream_h.size()) + " upstream grads");
  }
  const Eigen::Index h = cell.hidden;
  std::vector<Vec> dx(caches.size());
  Vec dh_carry = Vec::Zero(h);
  Vec dc_carry = Vec::Zero(h);
  for (std::size_t t = caches.size(); t-- > 0;) {
    Vec dh = upstream_h[t] + dh_carry;
    LSTMStepGrads g = lstm_step_backward(cell, caches[t], dh, dc_carry);
    dx[t] = std::move(g.dx);
    dh_carry = std::move(g.dh_prev);
    dc_carry = std::move(g.dc_prev);
  }
  return dx;
}

Embedding::Embedding(Eigen::Index out_dim, Eigen::Index in_dim,
                     std::uint64_t seed, std::string name_prefix)
    : W(name_prefix + ".W",
        num::glorot_init(out_dim, in_dim, SplitMix64::derive(seed, 1))),
      b(name_prefix + ".b", Mat::Zero(out_dim, 1)) {}

Vec embed(const Embedding& layer, const Vec& x, EmbedCache* cache) {
  if (x.size() != layer.in_dim()) {
    throw ShapeError("embed: input length " + std::to_string(x.size()) +
                     " vs layer input dim " + std::to_string(layer.in_dim()));
  }
  Vec y = num::tanh_map(Vec(layer.W.value * x + num::vec_value(layer.b)));
  if (cache) {
    cache->x = x;
    cache->y = y;
  }
  return y;
}

Vec embed_backward(Embedding& layer, const EmbedCache& cache,
                   const Vec& upstream) {
  if (upstream.size() != layer.out_dim()) {
    throw ShapeError("embed_backward: upstream length " +
                     std::to_string(upstream.size()) + " vs output dim " +
                     std::to_string(layer.out_dim()));
  }
  Vec dpre = upstream.cwiseProduct(
      (Vec::Ones(cache.y.size()) - cache.y.cwiseProduct(cache.y)).eval());
  layer.W.grad += dpre * cache.x.transpose();
  num::vec_grad(layer.b) += dpre;
  return layer.W.value.transpose() * dpre;
}

}  // namespace viewpulse::layers
