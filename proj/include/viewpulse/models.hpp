#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "viewpulse/layers.hpp"
#include "viewpulse/num.hpp"

namespace viewpulse::models {

enum class ModelKind : std::uint8_t {
  UnimodalVisual = 0,
  UnimodalAudio = 1,
  LowFusion = 2,
  MidFusion = 3,
  HighFusion = 4,
};

const char* kind_name(ModelKind kind);
ModelKind kind_from_name(const std::string& name);

struct ModelSpec {
  ModelKind kind = ModelKind::LowFusion;
  Eigen::Index visual_dim = 0;
  Eigen::Index audio_dim = 0;
  Eigen::Index embed_dim = 512;
  Eigen::Index hidden = 512;
  bool output_bias = false;

  bool needs_visual() const { return kind != ModelKind::UnimodalAudio; }
  bool needs_audio() const { return kind != ModelKind::UnimodalVisual; }
};

/// A spec plus every trainable parameter, wired per architecture:
///   unimodal    gate -> embedding -> prediction LSTM -> head
///   low         gates -> concat -> embedding -> prediction LSTM -> head
///   mid         gates -> visual/audio/joint embeddings -> concat -> LSTM -> head
///   high        gates -> per-modality encoder LSTMs -> concat -> linear
///               projection -> prediction LSTM -> head
struct ModelState {
  ModelSpec spec;

  std::optional<layers::ContextGating> visual_gate;
  std::optional<layers::ContextGating> audio_gate;
  std::optional<layers::Embedding> embedding;         // unimodal & low
  std::optional<layers::Embedding> visual_embedding;  // mid
  std::optional<layers::Embedding> audio_embedding;   // mid
  std::optional<layers::Embedding> joint_embedding;   // mid
  std::optional<layers::LSTMCell> visual_encoder;     // high
  std::optional<layers::LSTMCell> audio_encoder;      // high
  std::optional<num::Param> projection;               // high: embed x 2h
  layers::LSTMCell predictor;
  num::Param head_w;                    // 1 x hidden
  std::optional<num::Param> head_b;     // 1 x 1, off by default

  std::vector<num::Param*> params();
  std::vector<const num::Param*> params() const;
  void zero_grads();
  std::size_t scalar_count() const;
};

/// Deterministic in (spec, seed).
ModelState build(const ModelSpec& spec, std::uint64_t seed);

struct PredictionSeries {
  std::string episode_id;
  Vec values;
};

struct ForwardCache {
  std::vector<layers::GateCache> visual_gate;
  std::vector<layers::GateCache> audio_gate;
  std::vector<layers::EmbedCache> embedding;
  std::vector<layers::EmbedCache> visual_embedding;
  std::vector<layers::EmbedCache> audio_embedding;
  std::vector<layers::EmbedCache> joint_embedding;
  std::vector<layers::LSTMStepCache> visual_encoder;
  std::vector<layers::LSTMStepCache> audio_encoder;
  std::vector<layers::LSTMStepCache> predictor;
  std::vector<Vec> predictor_h;
  std::vector<Vec> encoder_concat;  // high: [h_vis; h_aud] per step
};

/// Runs the whole sequence; features are T x dim, one row per second.
/// Modalities the spec does not use may be null. Pass a cache to enable
/// backward_sequence.
PredictionSeries forward_sequence(const ModelState& model, const Mat* visual,
                                  const Mat* audio,
                                  const std::string& episode_id = "",
                                  ForwardCache* cache = nullptr);

/// Accumulates parameter gradients from per-step prediction gradients
/// dL/dy'_t.
void backward_sequence(ModelState& model, const ForwardCache& cache,
                       const Vec& prediction_grads);

struct EnsembleMember {
  const ModelState* model = nullptr;
  const Mat* visual = nullptr;
  const Mat* audio = nullptr;
};

/// Per-step arithmetic mean of the members' predictions. A non-empty weight
/// list (one per member, normalized internally) replaces the uniform mean.
PredictionSeries ensemble_predict(std::span<const EnsembleMember> members,
                                  std::span<const double> weights = {},
                                  const std::string& episode_id = "");

// Checkpoint file: magic "VPCKPT1", version u16, spec record, u32 param
// count, then per param: u16 name length, name bytes, u32 rows, u32 cols,
// rows*cols little-endian f64, row-major.
void save_checkpoint(const ModelState& model, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace viewpulse::models
