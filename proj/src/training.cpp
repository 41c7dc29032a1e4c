#include "viewpulse/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include "viewpulse/parallel.hpp"

namespace viewpulse::training {

using num::SplitMix64;

// ---------------------------------------------------------------------------
// Splits.

std::vector<std::string> SplitManifest::train_ids() const {
  std::vector<std::string> out;
  for (const auto& c : categories) out.insert(out.end(), c.train.begin(), c.train.end());
  return out;
}
std::vector<std::string> SplitManifest::val_ids() const {
  std::vector<std::string> out;
  for (const auto& c : categories) out.insert(out.end(), c.val.begin(), c.val.end());
  return out;
}
std::vector<std::string> SplitManifest::test_ids() const {
  std::vector<std::string> out;
  for (const auto& c : categories) out.insert(out.end(), c.test.begin(), c.test.end());
  return out;
}

SplitManifest make_splits(std::span<const EpisodeLabel> episodes,
                          std::uint64_t seed) {
  if (episodes.empty()) {
    throw DataError("make_splits: no episodes");
  }
  std::map<std::string, std::vector<std::string>> by_category;
  for (const EpisodeLabel& e : episodes) {
    by_category[e.category].push_back(e.id);
  }

  SplitManifest manifest;
  std::size_t category_index = 0;
  for (auto& [category, ids] : by_category) {
    std::sort(ids.begin(), ids.end());
    SplitMix64 rng(SplitMix64::derive(seed, 0xca7 + category_index++));
    for (std::size_t i = ids.size(); i > 1; --i) {
      std::swap(ids[i - 1], ids[rng.next_u64() % i]);
    }
    const std::size_t n = ids.size();
    const std::size_t n_test = n * 2 / 10;
    const std::size_t n_val = n / 10;
    const std::size_t n_train = n - n_test - n_val;  // remainder to train

    CategorySplit split;
    split.category = category;
    split.train.assign(ids.begin(), ids.begin() + long(n_train));
    split.val.assign(ids.begin() + long(n_train),
                     ids.begin() + long(n_train + n_val));
    split.test.assign(ids.begin() + long(n_train + n_val), ids.end());
    manifest.categories.push_back(std::move(split));
  }
  return manifest;
}

// ---------------------------------------------------------------------------
// Clips.

std::vector<Clip> partition_clips(const data::EpisodeData& episode,
                                  int clip_len_seconds) {
  if (clip_len_seconds < 1) {
    throw DataError("partition_clips: clip length must be >= 1 second");
  }
  const Eigen::Index T = episode.length();
  if (T < 1) {
    throw DataError("partition_clips: episode " + episode.id +
                    " has zero length");
  }
  std::vector<Clip> clips;
  for (Eigen::Index start = 0; start < T; start += clip_len_seconds) {
    const Eigen::Index len = std::min<Eigen::Index>(clip_len_seconds, T - start);
    Clip clip;
    clip.episode_id = episode.id;
    clip.start_second = start;
    if (episode.has_visual()) {
      clip.visual = episode.visual.middleRows(start, len);
    }
    if (episode.has_audio()) {
      clip.audio = episode.audio.middleRows(start, len);
    }
    clip.target = episode.target.segment(start, len);
    clips.push_back(std::move(clip));
  }
  return clips;
}

std::pair<double, Vec> mse_loss(const Vec& pred, const Vec& truth) {
  if (pred.size() != truth.size()) {
    throw ShapeError("mse_loss: length mismatch " + std::to_string(pred.size()) +
                     " vs " + std::to_string(truth.size()));
  }
  if (pred.size() < 1) {
    throw ShapeError("mse_loss: empty series");
  }
  const Vec diff = pred - truth;
  return {diff.squaredNorm(), 2.0 * diff};
}

// ---------------------------------------------------------------------------
// Log.

void write_train_log(const TrainLog& log, std::ostream& out) {
  out << "epoch,loss,mae,rmse,rmsle,srcc,composite\n";
  char buf[256];
  for (const EpochRecord& e : log.epochs) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  e.epoch, e.train_loss, e.validation.mae, e.validation.rmse,
                  e.validation.rmsle, e.validation.srcc, e.composite);
    out << buf;
  }
}

void write_train_log(const TrainLog& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw DataError("write_train_log: cannot open " + path.string());
  }
  write_train_log(log, out);
}

// ---------------------------------------------------------------------------
// Evaluation.

namespace {

const Mat* modality_or_null(const models::ModelSpec& spec, const Mat& m,
                            bool needs, const std::string& id,
                            const char* name) {
  if (!needs) return nullptr;
  if (m.size() == 0) {
    throw DataError("episode " + id + ": model '" +
                    models::kind_name(spec.kind) + "' needs " + name +
                    " features but the store has none");
  }
  return &m;
}

models::PredictionSeries forward_episode(const models::ModelState& model,
                                         const data::EpisodeData& episode,
                                         models::ForwardCache* cache = nullptr) {
  const models::ModelSpec& spec = model.spec;
  const Mat* visual = modality_or_null(spec, episode.visual,
                                       spec.needs_visual(), episode.id,
                                       "visual");
  const Mat* audio = modality_or_null(spec, episode.audio, spec.needs_audio(),
                                      episode.id, "audio");
  return models::forward_sequence(model, visual, audio, episode.id, cache);
}

}  // namespace

metrics::MetricReport evaluate(const models::ModelState& model,
                               std::span<const std::string> episode_ids,
                               const data::DataStore& store,
                               EvalPooling pooling) {
  if (episode_ids.empty()) {
    throw DataError("evaluate: no episodes");
  }
  std::vector<models::PredictionSeries> predictions(episode_ids.size());
  num::parallel_for(episode_ids.size(), [&](std::size_t k) {
    predictions[k] = forward_episode(model, store.get(episode_ids[k]));
  });

  if (pooling == EvalPooling::PerEpisodeMean) {
    metrics::MetricReport mean;
    for (std::size_t k = 0; k < episode_ids.size(); ++k) {
      const data::EpisodeData& ep = store.get(episode_ids[k]);
      metrics::MetricReport r = metrics::report(predictions[k].values, ep.target);
      mean.n += r.n;
      mean.mae += r.mae;
      mean.rmse += r.rmse;
      mean.rmsle += r.rmsle;
      mean.srcc += r.srcc;
      mean.rmsle_clamps += r.rmsle_clamps;
    }
    const double inv = 1.0 / double(episode_ids.size());
    mean.mae *= inv;
    mean.rmse *= inv;
    mean.rmsle *= inv;
    mean.srcc *= inv;
    mean.composite = metrics::composite(mean);
    return mean;
  }

  Eigen::Index total = 0;
  for (const auto& p : predictions) total += p.values.size();
  Vec pred(total), truth(total);
  Eigen::Index at = 0;
  for (std::size_t k = 0; k < episode_ids.size(); ++k) {
    const data::EpisodeData& ep = store.get(episode_ids[k]);
    pred.segment(at, predictions[k].values.size()) = predictions[k].values;
    truth.segment(at, ep.target.size()) = ep.target;
    at += predictions[k].values.size();
  }
  return metrics::report(pred, truth);
}

// ---------------------------------------------------------------------------
// Training loop.

namespace {

struct Optimizer {
  std::vector<num::AdamState> states;

  Optimizer(const std::vector<num::Param*>& params, const TrainConfig& cfg) {
    states.reserve(params.size());
    for (const num::Param* p : params) {
      num::AdamState s(p->value.rows(), p->value.cols(), cfg.lr);
      s.beta1 = cfg.adam_beta1;
      s.beta2 = cfg.adam_beta2;
      s.eps = cfg.adam_eps;
      states.push_back(std::move(s));
    }
  }

  void step(const std::vector<num::Param*>& params) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      num::adam_step(*params[i], states[i]);
      params[i]->zero_grad();
    }
  }
};

void clip_gradients(const std::vector<num::Param*>& params, double max_norm) {
  if (max_norm <= 0) return;
  double sq = 0;
  for (const num::Param* p : params) sq += p->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (num::Param* p : params) p->grad *= scale;
  }
}

}  // namespace

TrainResult train(const models::ModelState& init, const SplitManifest& splits,
                  const data::DataStore& store, const TrainConfig& config) {
  if (config.batch < 1 || config.lr <= 0 || config.max_epochs < 1) {
    throw DataError("train: need batch >= 1, lr > 0, max_epochs >= 1");
  }
  const std::vector<std::string> train_episodes = splits.train_ids();
  const std::vector<std::string> val_episodes = splits.val_ids();
  if (train_episodes.empty()) {
    throw DataError("train: empty training split");
  }
  if (val_episodes.empty()) {
    throw DataError("train: empty validation split; too few episodes per "
                    "category for a 70/20/10 partition");
  }

  std::vector<Clip> clips;
  for (const std::string& id : train_episodes) {
    auto episode_clips = partition_clips(store.get(id), config.clip_len_seconds);
    std::move(episode_clips.begin(), episode_clips.end(),
              std::back_inserter(clips));
  }

  models::ModelState model = init;
  std::vector<num::Param*> params = model.params();
  Optimizer optimizer(params, config);
  model.zero_grads();

  TrainResult result;
  result.model = model;
  double best_composite = -std::numeric_limits<double>::infinity();
  int epochs_since_best = 0;

  std::vector<std::size_t> order(clips.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    SplitMix64 rng(SplitMix64::derive(config.seed, 0xe90c + std::uint64_t(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.next_u64() % i]);
    }

    double epoch_loss = 0;
    for (std::size_t batch_start = 0; batch_start < order.size();
         batch_start += std::size_t(config.batch)) {
      const std::size_t batch_end =
          std::min(order.size(), batch_start + std::size_t(config.batch));
      const double batch_size = double(batch_end - batch_start);

      for (std::size_t k = batch_start; k < batch_end; ++k) {
        const Clip& clip = clips[order[k]];
        models::ForwardCache cache;
        const models::ModelSpec& spec = model.spec;
        const Mat* visual = modality_or_null(spec, clip.visual,
                                             spec.needs_visual(),
                                             clip.episode_id, "visual");
        const Mat* audio = modality_or_null(spec, clip.audio,
                                            spec.needs_audio(),
                                            clip.episode_id, "audio");
        models::PredictionSeries pred = models::forward_sequence(
            model, visual, audio, clip.episode_id, &cache);
        auto [loss, grads] = mse_loss(pred.values, clip.target);
        if (!std::isfinite(loss)) {
          throw NumericError("train: non-finite loss at epoch " +
                             std::to_string(epoch) + ", episode " +
                             clip.episode_id + ", clip second " +
                             std::to_string(clip.start_second));
        }
        epoch_loss += loss;
        models::backward_sequence(model, cache, grads);
      }

      // Batch gradient is the mean over clips so lr is batch-size free.
      for (num::Param* p : params) p->grad /= batch_size;
      clip_gradients(params, config.grad_clip_norm);
      optimizer.step(params);
    }

    metrics::MetricReport val = evaluate(model, val_episodes, store);

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = epoch_loss / double(clips.size());
    record.validation = val;
    record.composite = val.composite;
    if (val.composite > best_composite) {
      best_composite = val.composite;
      record.best = true;
      result.model = model;
      result.log.best_epoch = epoch;
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
    }
    result.log.epochs.push_back(record);

    if (epochs_since_best >= config.patience) break;
  }
  return result;
}

}  // namespace viewpulse::training
