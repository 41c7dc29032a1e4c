#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "viewpulse/data.hpp"
#include "viewpulse/metrics.hpp"
#include "viewpulse/models.hpp"

namespace viewpulse::training {

struct TrainConfig {
  double lr = 5e-4;
  int batch = 16;
  int clip_len_seconds = 300;
  int max_epochs = 100;
  int patience = 5;
  double grad_clip_norm = 5.0;  // <= 0 disables clipping
  std::uint64_t seed = 42;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

enum class EvalPooling { Pooled, PerEpisodeMean };

// ---------------------------------------------------------------------------
// Splits: per category, shuffled by seed, 70% train / 20% test / 10% val by
// episode count, remainders going to train.

struct EpisodeLabel {
  std::string id;
  std::string category;
};

struct CategorySplit {
  std::string category;
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

struct SplitManifest {
  std::vector<CategorySplit> categories;

  std::vector<std::string> train_ids() const;
  std::vector<std::string> val_ids() const;
  std::vector<std::string> test_ids() const;
};

SplitManifest make_splits(std::span<const EpisodeLabel> episodes,
                          std::uint64_t seed);

// ---------------------------------------------------------------------------
// Clips: consecutive disjoint windows; a shorter final remainder is kept.

struct Clip {
  std::string episode_id;
  Eigen::Index start_second = 0;
  Mat visual;  // 0x0 when the episode has no visual features
  Mat audio;
  Vec target;
};

std::vector<Clip> partition_clips(const data::EpisodeData& episode,
                                  int clip_len_seconds);

/// Sum of squared errors and its per-step gradient 2*(pred - truth).
std::pair<double, Vec> mse_loss(const Vec& pred, const Vec& truth);

// ---------------------------------------------------------------------------
// Training loop.

struct EpochRecord {
  int epoch = 0;               // 1-based
  double train_loss = 0;       // mean clip loss over the epoch
  metrics::MetricReport validation;
  double composite = 0;
  bool best = false;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
};

void write_train_log(const TrainLog& log, std::ostream& out);
void write_train_log(const TrainLog& log, const std::filesystem::path& path);

struct TrainResult {
  models::ModelState model;  // parameters from the best epoch
  TrainLog log;
};

/// Epochs of shuffled clip batches (gradient averaged over the batch, Adam
/// updates, optional global-norm clipping), validation on whole episodes
/// after each epoch, early stop when the composite score stops improving for
/// `patience` epochs.
TrainResult train(const models::ModelState& init, const SplitManifest& splits,
                  const data::DataStore& store, const TrainConfig& config);

/// Forwards whole episodes and scores the pooled (or per-episode averaged)
/// prediction/truth pairs.
metrics::MetricReport evaluate(const models::ModelState& model,
                               std::span<const std::string> episode_ids,
                               const data::DataStore& store,
                               EvalPooling pooling = EvalPooling::Pooled);

}  // namespace viewpulse::training
