#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "viewpulse/num.hpp"

namespace viewpulse::layers {

using num::Param;

// ---------------------------------------------------------------------------
// Context gating: y = sigmoid(W x + b) .* x. A learned per-feature gate that
// keeps or suppresses each input coordinate.

struct ContextGating {
  Param W;  // d x d
  Param b;  // d x 1

  ContextGating() = default;
  ContextGating(Eigen::Index dim, std::uint64_t seed, std::string name_prefix);
  Eigen::Index dim() const { return W.value.rows(); }
};

struct GateCache {
  Vec x;
  Vec s;  // sigmoid(Wx + b)
};

Vec context_gate(const ContextGating& layer, const Vec& x,
                 GateCache* cache = nullptr);

/// Accumulates into layer grads; returns dL/dx.
Vec context_gate_backward(ContextGating& layer, const GateCache& cache,
                          const Vec& upstream);

// ---------------------------------------------------------------------------
// LSTM cell with one fused gate transform over [x; h_prev], gate order
// (input, forget, output, candidate). Forget bias starts at 1.

struct LSTMCell {
  Param W;  // 4h x (d + h)
  Param b;  // 4h x 1
  Eigen::Index hidden = 0;

  LSTMCell() = default;
  LSTMCell(Eigen::Index input_dim, Eigen::Index hidden_size,
           std::uint64_t seed, std::string name_prefix);
  Eigen::Index input_dim() const { return W.value.cols() - hidden; }
};

struct LSTMStepCache {
  Vec z;  // [x; h_prev]
  Vec c_prev;
  Vec i, f, o, g;
  Vec c;
};

struct LSTMState {
  Vec h;
  Vec c;
};

LSTMState lstm_step(const LSTMCell& cell, const Vec& x, const Vec& h_prev,
                    const Vec& c_prev, LSTMStepCache* cache = nullptr);

struct LSTMStepGrads {
  Vec dx;
  Vec dh_prev;
  Vec dc_prev;
};

LSTMStepGrads lstm_step_backward(LSTMCell& cell, const LSTMStepCache& cache,
                                 const Vec& dh, const Vec& dc);

/// Reverse pass over a forward-ordered cache sequence, with one upstream
/// gradient per step's hidden state. Accumulates into cell grads; returns
/// dL/dx_t per step.
std::vector<Vec> lstm_backward_through_time(LSTMCell& cell,
                                            std::span<const LSTMStepCache> caches,
                                            std::span<const Vec> upstream_h);

// ---------------------------------------------------------------------------
// Nonlinear embedding: y = tanh(W x + b).

struct Embedding {
  Param W;  // e x d
  Param b;  // e x 1

  Embedding() = default;
  Embedding(Eigen::Index out_dim, Eigen::Index in_dim, std::uint64_t seed,
            std::string name_prefix);
  Eigen::Index out_dim() const { return W.value.rows(); }
  Eigen::Index in_dim() const { return W.value.cols(); }
};

struct EmbedCache {
  Vec x;
  Vec y;  // tanh output, reused for the derivative
};

Vec embed(const Embedding& layer, const Vec& x, EmbedCache* cache = nullptr);

Vec embed_backward(Embedding& layer, const EmbedCache& cache,
                   const Vec& upstream);

}  // namespace viewpulse::layers
