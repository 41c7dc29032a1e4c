#include "viewpulse/models.hpp"

#include <fstream>
#include <map>

#include "viewpulse/binio.hpp"

namespace viewpulse::models {

using layers::ContextGating;
using layers::Embedding;
using layers::LSTMCell;
using num::Param;
using num::SplitMix64;

const char* kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::UnimodalVisual: return "unimodal-visual";
    case ModelKind::UnimodalAudio: return "unimodal-audio";
    case ModelKind::LowFusion: return "low-fusion";
    case ModelKind::MidFusion: return "mid-fusion";
    case ModelKind::HighFusion: return "high-fusion";
  }
  return "unknown";
}

ModelKind kind_from_name(const std::string& name) {
  if (name == "unimodal-visual") return ModelKind::UnimodalVisual;
  if (name == "unimodal-audio") return ModelKind::UnimodalAudio;
  if (name == "low-fusion" || name == "low") return ModelKind::LowFusion;
  if (name == "mid-fusion" || name == "mid") return ModelKind::MidFusion;
  if (name == "high-fusion" || name == "high") return ModelKind::HighFusion;
  throw DataError("unknown model kind: " + name);
}

namespace {

void validate_spec(const ModelSpec& spec) {
  if (spec.embed_dim < 1 || spec.hidden < 1) {
    throw ShapeError("model spec: embed_dim and hidden must be >= 1");
  }
  switch (spec.kind) {
    case ModelKind::UnimodalVisual:
      if (spec.visual_dim < 1 || spec.audio_dim != 0) {
        throw ShapeError(
            "unimodal-visual spec requires visual_dim > 0 and audio_dim == 0");
      }
      break;
    case ModelKind::UnimodalAudio:
      if (spec.audio_dim < 1 || spec.visual_dim != 0) {
        throw ShapeError(
            "unimodal-audio spec requires audio_dim > 0 and visual_dim == 0");
      }
      break;
    default:
      if (spec.visual_dim < 1 || spec.audio_dim < 1) {
        throw ShapeError(std::string(kind_name(spec.kind)) +
                         " spec requires both modality dims > 0");
      }
  }
}

Eigen::Index predictor_input_dim(const ModelSpec& spec) {
  switch (spec.kind) {
    case ModelKind::MidFusion: return 3 * spec.embed_dim;
    default: return spec.embed_dim;
  }
}

}  // namespace

std::vector<Param*> ModelState::params() {
  std::vector<Param*> out;
  auto add = [&out](Param& p) { out.push_back(&p); };
  if (visual_gate) { add(visual_gate->W); add(visual_gate->b); }
  if (audio_gate) { add(audio_gate->W); add(audio_gate->b); }
  if (embedding) { add(embedding->W); add(embedding->b); }
  if (visual_embedding) { add(visual_embedding->W); add(visual_embedding->b); }
  if (audio_embedding) { add(audio_embedding->W); add(audio_embedding->b); }
  if (joint_embedding) { add(joint_embedding->W); add(joint_embedding->b); }
  if (visual_encoder) { add(visual_encoder->W); add(visual_encoder->b); }
  if (audio_encoder) { add(audio_encoder->W); add(audio_encoder->b); }
  if (projection) add(*projection);
  add(predictor.W);
  add(predictor.b);
  add(head_w);
  if (head_b) add(*head_b);
  return out;
}

std::vector<const Param*> ModelState::params() const {
  auto mutable_params = const_cast<ModelState*>(this)->params();
  return {mutable_params.begin(), mutable_params.end()};
}

void ModelState::zero_grads() {
  for (Param* p : params()) p->zero_grad();
}

std::size_t ModelState::scalar_count() const {
  std::size_t n = 0;
  for (const Param* p : params()) n += std::size_t(p->size());
  return n;
}

ModelState build(const ModelSpec& spec, std::uint64_t seed) {
  validate_spec(spec);
  ModelState m;
  m.spec = spec;
  auto sub = [seed](std::uint64_t stream) {
    return SplitMix64::derive(seed, stream);
  };

  if (spec.needs_visual()) {
    m.visual_gate.emplace(spec.visual_dim, sub(1), "gate.visual");
  }
  if (spec.needs_audio()) {
    m.audio_gate.emplace(spec.audio_dim, sub(2), "gate.audio");
  }

  switch (spec.kind) {
    case ModelKind::UnimodalVisual:
      m.embedding.emplace(spec.embed_dim, spec.visual_dim, sub(3), "embed");
      break;
    case ModelKind::UnimodalAudio:
      m.embedding.emplace(spec.embed_dim, spec.audio_dim, sub(3), "embed");
      break;
    case ModelKind::LowFusion:
      m.embedding.emplace(spec.embed_dim, spec.visual_dim + spec.audio_dim,
                          sub(3), "embed");
      break;
    case ModelKind::MidFusion:
      m.visual_embedding.emplace(spec.embed_dim, spec.visual_dim, sub(4),
                                 "embed.visual");
      m.audio_embedding.emplace(spec.embed_dim, spec.audio_dim, sub(5),
                                "embed.audio");
      m.joint_embedding.emplace(spec.embed_dim,
                                spec.visual_dim + spec.audio_dim, sub(6),
                                "embed.joint");
      break;
    case ModelKind::HighFusion:
      m.visual_encoder.emplace(spec.visual_dim, spec.hidden, sub(7),
                               "enc.visual");
      m.audio_encoder.emplace(spec.audio_dim, spec.hidden, sub(8), "enc.audio");
      m.projection.emplace("proj.W", num::glorot_init(spec.embed_dim,
                                                      2 * spec.hidden, sub(9)));
      break;
  }

  m.predictor = LSTMCell(predictor_input_dim(spec), spec.hidden, sub(10), "pred");
  m.head_w = Param("head.W", num::glorot_init(1, spec.hidden, sub(11)));
  if (spec.output_bias) {
    m.head_b.emplace("head.b", Mat::Zero(1, 1));
  }
  return m;
}

PredictionSeries forward_sequence(const ModelState& model, const Mat* visual,
                                  const Mat* audio,
                                  const std::string& episode_id,
                                  ForwardCache* cache) {
  const ModelSpec& spec = model.spec;
  if (spec.needs_visual() && visual == nullptr) {
    throw DataError("forward_sequence: model '" +
                    std::string(kind_name(spec.kind)) +
                    "' is missing required modality: visual");
  }
  if (spec.needs_audio() && audio == nullptr) {
    throw DataError("forward_sequence: model '" +
                    std::string(kind_name(spec.kind)) +
                    "' is missing required modality: audio");
  }
  if (spec.needs_visual() && visual->cols() != spec.visual_dim) {
    throw ShapeError("forward_sequence: visual dim " +
                     std::to_string(visual->cols()) + " vs spec " +
                     std::to_string(spec.visual_dim));
  }
  if (spec.needs_audio() && audio->cols() != spec.audio_dim) {
    throw ShapeError("forward_sequence: audio dim " +
                     std::to_string(audio->cols()) + " vs spec " +
                     std::to_string(spec.audio_dim));
  }
  if (spec.needs_visual() && spec.needs_audio() &&
      visual->rows() != audio->rows()) {
    throw ShapeError("forward_sequence: modality length mismatch, visual T=" +
                     std::to_string(visual->rows()) + " vs audio T=" +
                     std::to_string(audio->rows()));
  }
  const Eigen::Index T = spec.needs_visual() ? visual->rows() : audio->rows();

  PredictionSeries out;
  out.episode_id = episode_id;
  out.values.resize(T);

  const Eigen::Index h = spec.hidden;
  Vec pred_h = Vec::Zero(h);
  Vec pred_c = Vec::Zero(h);
  Vec venc_h = Vec::Zero(h), venc_c = Vec::Zero(h);
  Vec aenc_h = Vec::Zero(h), aenc_c = Vec::Zero(h);

  auto gate_step = [&](const layers::ContextGating& gate, const Mat& feats,
                       Eigen::Index t,
                       std::vector<layers::GateCache>* caches) {
    Vec x = feats.row(t).transpose();
    if (caches) {
      caches->emplace_back();
      return layers::context_gate(gate, x, &caches->back());
    }
    return layers::context_gate(gate, x);
  };

  for (Eigen::Index t = 0; t < T; ++t) {
    Vec fused;
    switch (spec.kind) {
      case ModelKind::UnimodalVisual:
      case ModelKind::UnimodalAudio: {
        const bool vis = spec.kind == ModelKind::UnimodalVisual;
        Vec gated = gate_step(vis ? *model.visual_gate : *model.audio_gate,
                              vis ? *visual : *audio, t,
                              cache ? (vis ? &cache->visual_gate
                                           : &cache->audio_gate)
                                    : nullptr);
        if (cache) {
          cache->embedding.emplace_back();
          fused = layers::embed(*model.embedding, gated,
                                &cache->embedding.back());
        } else {
          fused = layers::embed(*model.embedding, gated);
        }
        break;
      }
      case ModelKind::LowFusion: {
        Vec gv = gate_step(*model.visual_gate, *visual, t,
                           cache ? &cache->visual_gate : nullptr);
        Vec ga = gate_step(*model.audio_gate, *audio, t,
                           cache ? &cache->audio_gate : nullptr);
        Vec joined = num::concat(gv, ga);
        if (cache) {
          cache->embedding.emplace_back();
          fused = layers::embed(*model.embedding, joined,
                                &cache->embedding.back());
        } else {
          fused = layers::embed(*model.embedding, joined);
        }
        break;
      }
      case ModelKind::MidFusion: {
        Vec gv = gate_step(*model.visual_gate, *visual, t,
                           cache ? &cache->visual_gate : nullptr);
        Vec ga = gate_step(*model.audio_gate, *audio, t,
                           cache ? &cache->audio_gate : nullptr);
        Vec joined = num::concat(gv, ga);
        Vec ve, ae, je;
        if (cache) {
          cache->visual_embedding.emplace_back();
          cache->audio_embedding.emplace_back();
          cache->joint_embedding.emplace_back();
          ve = layers::embed(*model.visual_embedding, gv,
                             &cache->visual_embedding.back());
          ae = layers::embed(*model.audio_embedding, ga,
                             &cache->audio_embedding.back());
          je = layers::embed(*model.joint_embedding, joined,
                             &cache->joint_embedding.back());
        } else {
          ve = layers::embed(*model.visual_embedding, gv);
          ae = layers::embed(*model.audio_embedding, ga);
          je = layers::embed(*model.joint_embedding, joined);
        }
        fused = num::concat(num::concat(ve, ae), je);
        break;
      }
      case ModelKind::HighFusion: {
        Vec gv = gate_step(*model.visual_gate, *visual, t,
                           cache ? &cache->visual_gate : nullptr);
        Vec ga = gate_step(*model.audio_gate, *audio, t,
                           cache ? &cache->audio_gate : nullptr);
        layers::LSTMState vs, as;
        if (cache) {
          cache->visual_encoder.emplace_back();
          cache->audio_encoder.emplace_back();
          vs = layers::lstm_step(*model.visual_encoder, gv, venc_h, venc_c,
                                 &cache->visual_encoder.back());
          as = layers::lstm_step(*model.audio_encoder, ga, aenc_h, aenc_c,
                                 &cache->audio_encoder.back());
        } else {
          vs = layers::lstm_step(*model.visual_encoder, gv, venc_h, venc_c);
          as = layers::lstm_step(*model.audio_encoder, ga, aenc_h, aenc_c);
        }
        venc_h = vs.h;
        venc_c = vs.c;
        aenc_h = as.h;
        aenc_c = as.c;
        Vec joined = num::concat(venc_h, aenc_h);
        if (cache) cache->encoder_concat.push_back(joined);
        fused = model.projection->value * joined;
        break;
      }
    }

    layers::LSTMState ps;
    if (cache) {
      cache->predictor.emplace_back();
      ps = layers::lstm_step(model.predictor, fused, pred_h, pred_c,
                             &cache->predictor.back());
    } else {
      ps = layers::lstm_step(model.predictor, fused, pred_h, pred_c);
    }
    pred_h = ps.h;
    pred_c = ps.c;
    if (cache) cache->predictor_h.push_back(pred_h);

    double y = (model.head_w.value * pred_h)(0);
    if (model.head_b) y += model.head_b->value(0, 0);
    out.values[t] = y;
  }
  num::ensure_finite(out.values, "forward_sequence output");
  return out;
}

void backward_sequence(ModelState& model, const ForwardCache& cache,
                       const Vec& prediction_grads) {
  const std::size_t T = cache.predictor.size();
  if (std::size_t(prediction_grads.size()) != T ||
      cache.predictor_h.size() != T) {
    throw ShapeError("backward_sequence: cache covers " + std::to_string(T) +
                     " steps but got " + std::to_string(prediction_grads.size()) +
                     " prediction grads");
  }
  if (T == 0) return;
  const ModelSpec& spec = model.spec;

  // Head, then BPTT through the prediction LSTM.
  std::vector<Vec> dh(T);
  for (std::size_t t = 0; t < T; ++t) {
    const double dy = prediction_grads[Eigen::Index(t)];
    model.head_w.grad += dy * cache.predictor_h[t].transpose();
    if (model.head_b) model.head_b->grad(0, 0) += dy;
    dh[t] = model.head_w.value.transpose() * dy;
  }
  std::vector<Vec> dfused =
      layers::lstm_backward_through_time(model.predictor, cache.predictor, dh);

  switch (spec.kind) {
    case ModelKind::UnimodalVisual:
    case ModelKind::UnimodalAudio: {
      const bool vis = spec.kind == ModelKind::UnimodalVisual;
      auto& gate = vis ? *model.visual_gate : *model.audio_gate;
      const auto& gate_caches = vis ? cache.visual_gate : cache.audio_gate;
      for (std::size_t t = 0; t < T; ++t) {
        Vec dgated = layers::embed_backward(*model.embedding,
                                            cache.embedding[t], dfused[t]);
        layers::context_gate_backward(gate, gate_caches[t], dgated);
      }
      break;
    }
    case ModelKind::LowFusion: {
      const Eigen::Index dv = spec.visual_dim;
      for (std::size_t t = 0; t < T; ++t) {
        Vec djoined = layers::embed_backward(*model.embedding,
                                             cache.embedding[t], dfused[t]);
        auto [dgv, dga] = num::split(djoined, dv);
        layers::context_gate_backward(*model.visual_gate, cache.visual_gate[t],
                                      dgv);
        layers::context_gate_backward(*model.audio_gate, cache.audio_gate[t],
                                      dga);
      }
      break;
    }
    case ModelKind::MidFusion: {
      const Eigen::Index e = spec.embed_dim;
      const Eigen::Index dv = spec.visual_dim;
      for (std::size_t t = 0; t < T; ++t) {
        Vec dve = dfused[t].segment(0, e);
        Vec dae = dfused[t].segment(e, e);
        Vec dje = dfused[t].segment(2 * e, e);
        Vec dgv = layers::embed_backward(*model.visual_embedding,
                                         cache.visual_embedding[t], dve);
        Vec dga = layers::embed_backward(*model.audio_embedding,
                                         cache.audio_embedding[t], dae);
        Vec djoined = layers::embed_backward(*model.joint_embedding,
                                             cache.joint_embedding[t], dje);
        dgv += djoined.head(dv);
        dga += djoined.tail(spec.audio_dim);
        layers::context_gate_backward(*model.visual_gate, cache.visual_gate[t],
                                      dgv);
        layers::context_gate_backward(*model.audio_gate, cache.audio_gate[t],
                                      dga);
      }
      break;
    }
    case ModelKind::HighFusion: {
      const Eigen::Index h = spec.hidden;
      std::vector<Vec> dvh(T), dah(T);
      for (std::size_t t = 0; t < T; ++t) {
        model.projection->grad += dfused[t] * cache.encoder_concat[t].transpose();
        Vec djoined = model.projection->value.transpose() * dfused[t];
        dvh[t] = djoined.head(h);
        dah[t] = djoined.tail(h);
      }
      std::vector<Vec> dgv = layers::lstm_backward_through_time(
          *model.visual_encoder, cache.visual_encoder, dvh);
      std::vector<Vec> dga = layers::lstm_backward_through_time(
          *model.audio_encoder, cache.audio_encoder, dah);
      for (std::size_t t = 0; t < T; ++t) {
        layers::context_gate_backward(*model.visual_gate, cache.visual_gate[t],
                                      dgv[t]);
        layers::context_gate_backward(*model.audio_gate, cache.audio_gate[t],
                                      dga[t]);
      }
      break;
    }
  }
}

PredictionSeries ensemble_predict(std::span<const EnsembleMember> members,
                                  std::span<const double> weights,
                                  const std::string& episode_id) {
  if (members.empty()) {
    throw DataError("ensemble_predict: no members");
  }
  if (!weights.empty() && weights.size() != members.size()) {
    throw ShapeError("ensemble_predict: " + std::to_string(weights.size()) +
                     " weights for " + std::to_string(members.size()) +
                     " members");
  }
  double total_weight = 0;
  if (!weights.empty()) {
    for (double w : weights) total_weight += w;
    if (total_weight <= 0) {
      throw DataError("ensemble_predict: weights must sum to > 0");
    }
  }

  PredictionSeries mean;
  mean.episode_id = episode_id;
  Vec anchor;
  for (std::size_t k = 0; k < members.size(); ++k) {
    PredictionSeries p = forward_sequence(*members[k].model, members[k].visual,
                                          members[k].audio, episode_id);
    if (k == 0) {
      anchor = p.values;
      // Anchored mean: anchor + sum((p_k - anchor)/n). Identical members
      // reproduce their prediction bit-exactly for any member count.
      mean.values = weights.empty() ? anchor
                                    : Vec((weights[0] / total_weight) * anchor);
      continue;
    }
    if (p.values.size() != anchor.size()) {
      throw ShapeError("ensemble_predict: member " + std::to_string(k) +
                       " produced length " + std::to_string(p.values.size()) +
                       " vs " + std::to_string(anchor.size()));
    }
    if (weights.empty()) {
      mean.values += (p.values - anchor) / double(members.size());
    } else {
      mean.values += (weights[k] / total_weight) * p.values;
    }
  }
  return mean;
}

// ---------------------------------------------------------------------------
// Checkpoints.

namespace {
constexpr char kMagic[] = "VPCKPT1";
constexpr std::size_t kMagicLen = 7;
constexpr std::uint16_t kVersion = 1;
}  // namespace

void save_checkpoint(const ModelState& model,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("save_checkpoint: cannot open " + path.string());
  }
  out.write(kMagic, kMagicLen);
  binio::write_u16(out, kVersion);
  binio::write_u8(out, std::uint8_t(model.spec.kind));
  binio::write_u32(out, std::uint32_t(model.spec.visual_dim));
  binio::write_u32(out, std::uint32_t(model.spec.audio_dim));
  binio::write_u32(out, std::uint32_t(model.spec.embed_dim));
  binio::write_u32(out, std::uint32_t(model.spec.hidden));
  binio::write_u8(out, model.spec.output_bias ? 1 : 0);

  auto params = model.params();
  binio::write_u32(out, std::uint32_t(params.size()));
  for (const Param* p : params) {
    binio::write_u16(out, std::uint16_t(p->name.size()));
    out.write(p->name.data(), std::streamsize(p->name.size()));
    binio::write_u32(out, std::uint32_t(p->value.rows()));
    binio::write_u32(out, std::uint32_t(p->value.cols()));
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      binio::write_f64(out, p->value.data()[i]);  // row-major storage
    }
  }
  if (!out) {
    throw DataError("save_checkpoint: write failed for " + path.string());
  }
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("load_checkpoint: cannot open " + path.string());
  }
  binio::Reader r(in, "checkpoint " + path.string());
  if (r.str(kMagicLen) != kMagic) {
    r.fail("bad magic, expected VPCKPT1");
  }
  const std::uint16_t version = r.u16();
  if (version != kVersion) {
    r.fail("unsupported version " + std::to_string(version));
  }
  ModelSpec spec;
  const std::uint8_t kind = r.u8();
  if (kind > std::uint8_t(ModelKind::HighFusion)) {
    r.fail("invalid model kind " + std::to_string(kind));
  }
  spec.kind = ModelKind(kind);
  spec.visual_dim = r.u32();
  spec.audio_dim = r.u32();
  spec.embed_dim = r.u32();
  spec.hidden = r.u32();
  spec.output_bias = r.u8() != 0;

  ModelState model = build(spec, 0);
  auto params = model.params();
  std::map<std::string, Param*> by_name;
  for (Param* p : params) by_name[p->name] = p;

  const std::uint32_t count = r.u32();
  if (count != params.size()) {
    r.fail("expected " + std::to_string(params.size()) + " params, file has " +
           std::to_string(count));
  }
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint16_t name_len = r.u16();
    const std::string name = r.str(name_len);
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      r.fail("unknown param '" + name + "'");
    }
    Param& p = *it->second;
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    if (Eigen::Index(rows) != p.value.rows() ||
        Eigen::Index(cols) != p.value.cols()) {
      r.fail("param '" + name + "' has shape " + num::shape_str(rows, cols) +
             ", spec requires " +
             num::shape_str(p.value.rows(), p.value.cols()));
    }
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      p.value.data()[i] = r.f64();
    }
  }
  return model;
}

}  // namespace viewpulse::models
