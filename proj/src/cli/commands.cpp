#include "viewpulse/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "viewpulse/data.hpp"
#include "viewpulse/metrics.hpp"
#include "viewpulse/mfcc.hpp"
#include "viewpulse/models.hpp"
#include "viewpulse/training.hpp"

namespace viewpulse::cli {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot open " + path.string() + " for writing");
  }
  out << text;
}

std::vector<training::EpisodeLabel> episode_labels(
    const std::vector<data::ManifestEntry>& entries) {
  std::vector<training::EpisodeLabel> labels;
  labels.reserve(entries.size());
  for (const auto& e : entries) labels.push_back({e.id, e.category});
  return labels;
}

struct ModalityDims {
  Eigen::Index visual = 0;
  Eigen::Index audio = 0;
};

ModalityDims store_dims(const data::DataStore& store) {
  ModalityDims dims;
  for (const std::string& id : store.ids()) {
    const data::EpisodeData& ep = store.get(id);
    if (ep.has_visual()) {
      if (dims.visual == 0) {
        dims.visual = ep.visual.cols();
      } else if (dims.visual != ep.visual.cols()) {
        throw DataError("episode " + id + ": visual dim " +
                        std::to_string(ep.visual.cols()) +
                        " differs from other episodes (" +
                        std::to_string(dims.visual) + ")");
      }
    }
    if (ep.has_audio()) {
      if (dims.audio == 0) {
        dims.audio = ep.audio.cols();
      } else if (dims.audio != ep.audio.cols()) {
        throw DataError("episode " + id + ": audio dim " +
                        std::to_string(ep.audio.cols()) +
                        " differs from other episodes (" +
                        std::to_string(dims.audio) + ")");
      }
    }
  }
  return dims;
}

models::ModelSpec spec_for(const std::string& model_name,
                           const ModalityDims& dims, Eigen::Index embed_dim,
                           Eigen::Index hidden, bool output_bias) {
  models::ModelSpec spec;
  spec.kind = models::kind_from_name(model_name);
  spec.embed_dim = embed_dim;
  spec.hidden = hidden;
  spec.output_bias = output_bias;
  if (spec.needs_visual()) {
    if (dims.visual == 0) {
      throw DataError("model '" + model_name +
                      "' needs the visual modality but the manifest has no "
                      "visual features");
    }
    spec.visual_dim = dims.visual;
  }
  if (spec.needs_audio()) {
    if (dims.audio == 0) {
      throw DataError("model '" + model_name +
                      "' needs the audio modality but the manifest has no "
                      "audio features");
    }
    spec.audio_dim = dims.audio;
  }
  return spec;
}

std::vector<std::string> split_ids(const training::SplitManifest& splits,
                                   const std::string& which) {
  if (which == "train") return splits.train_ids();
  if (which == "val") return splits.val_ids();
  if (which == "test") return splits.test_ids();
  throw DataError("unknown split '" + which + "', expected train|val|test");
}

training::EvalPooling pooling_from(const std::string& name) {
  if (name == "pooled") return training::EvalPooling::Pooled;
  if (name == "per-episode-mean") return training::EvalPooling::PerEpisodeMean;
  throw DataError("unknown pooling '" + name +
                  "', expected pooled|per-episode-mean");
}

const Mat* maybe_modality(const Mat& m,
                          bool needs) {
  return needs && m.size() > 0 ? &m : nullptr;
}

/// Mean-of-members prediction for one episode.
models::PredictionSeries ensemble_for_episode(
    const std::vector<models::ModelState>& members,
    const data::EpisodeData& ep, const std::vector<double>& weights) {
  std::vector<models::EnsembleMember> handles;
  handles.reserve(members.size());
  for (const models::ModelState& m : members) {
    handles.push_back({&m, maybe_modality(ep.visual, m.spec.needs_visual()),
                       maybe_modality(ep.audio, m.spec.needs_audio())});
  }
  return models::ensemble_predict(handles, weights, ep.id);
}

metrics::MetricReport evaluate_ensemble(
    const std::vector<models::ModelState>& members,
    const std::vector<std::string>& ids, const data::DataStore& store,
    const std::vector<double>& weights, training::EvalPooling pooling) {
  Eigen::Index total = 0;
  std::vector<models::PredictionSeries> preds;
  preds.reserve(ids.size());
  for (const std::string& id : ids) {
    preds.push_back(ensemble_for_episode(members, store.get(id), weights));
    total += preds.back().values.size();
  }
  if (pooling == training::EvalPooling::PerEpisodeMean) {
    metrics::MetricReport mean;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      metrics::MetricReport r =
          metrics::report(preds[k].values, store.get(ids[k]).target);
      mean.n += r.n;
      mean.mae += r.mae;
      mean.rmse += r.rmse;
      mean.rmsle += r.rmsle;
      mean.srcc += r.srcc;
    }
    const double inv = 1.0 / double(ids.size());
    mean.mae *= inv;
    mean.rmse *= inv;
    mean.rmsle *= inv;
    mean.srcc *= inv;
    mean.composite = metrics::composite(mean);
    return mean;
  }
  Vec pred(total), truth(total);
  Eigen::Index at = 0;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    pred.segment(at, preds[k].values.size()) = preds[k].values;
    truth.segment(at, preds[k].values.size()) = store.get(ids[k]).target;
    at += preds[k].values.size();
  }
  return metrics::report(pred, truth);
}

// ---------------------------------------------------------------------------
// Subcommand wiring.

struct GenSynthArgs {
  std::string out;
  std::uint64_t seed = 42;
  int episodes = 20;
  int categories = 2;
  int seconds = 600;
  int visual_dim = 16;
  int audio_dim = 8;
};

void run_gen_synth(const GenSynthArgs& a, CLI::App* sub) {
  if (a.episodes % a.categories != 0) {
    throw CLI::ValidationError("--episodes must be divisible by --categories");
  }
  data::SynthConfig cfg;
  cfg.n_categories = a.categories;
  cfg.episodes_per_category = a.episodes / a.categories;
  cfg.episode_len_seconds = a.seconds;
  cfg.visual_dim = a.visual_dim;
  cfg.audio_dim = a.audio_dim;
  cfg.seed = a.seed;
  data::SynthDataset dataset = data::generate_synthetic(cfg);
  fs::create_directories(a.out);
  data::write_synthetic_dataset(dataset, a.out);
  write_text(fs::path(a.out) / "config.resolved", sub->config_to_str(true, false));
  std::cout << "wrote " << dataset.episodes.size() << " episodes to " << a.out
            << "\n";
}

struct MfccArgs {
  std::string wav;
  std::string out;
  mfcc::MfccConfig cfg;
};

void run_mfcc(const MfccArgs& a) {
  mfcc::AudioClip clip = mfcc::read_wav(a.wav);
  data::FeatureSequence seq =
      mfcc::extract_audio_features(clip, a.cfg, fs::path(a.wav).stem().string());
  data::write_fvseq(seq, a.out);
  std::cout << "wrote " << seq.length() << "x" << seq.dim() << " features to "
            << a.out << "\n";
}

struct TrainArgs {
  std::string manifest;
  std::string model;
  std::string out;
  training::TrainConfig cfg;
  int hidden = 512;
  int embed_dim = 512;
  bool output_bias = false;
  std::string standardize = "per-episode";
};

data::StandardizeScope scope_from(const std::string& name) {
  if (name == "per-episode") return data::StandardizeScope::PerEpisode;
  if (name == "global") return data::StandardizeScope::Global;
  throw DataError("unknown standardize scope '" + name +
                  "', expected per-episode|global");
}

void run_train(const TrainArgs& a, CLI::App* sub) {
  const fs::path manifest_path(a.manifest);
  auto entries = data::read_manifest(manifest_path);
  auto splits = training::make_splits(episode_labels(entries), a.cfg.seed);
  auto store = data::load_data_store(entries, manifest_path.parent_path(),
                                     scope_from(a.standardize));
  models::ModelSpec spec = spec_for(a.model, store_dims(store), a.embed_dim,
                                    a.hidden, a.output_bias);
  models::ModelState model = models::build(spec, a.cfg.seed);
  training::TrainResult result = training::train(model, splits, store, a.cfg);

  fs::create_directories(a.out);
  models::save_checkpoint(result.model, fs::path(a.out) / "model.vpckpt");
  training::write_train_log(result.log, fs::path(a.out) / "trainlog.csv");
  write_text(fs::path(a.out) / "config.resolved", sub->config_to_str(true, false));
  std::cout << "best epoch " << result.log.best_epoch << ", composite "
            << result.log.epochs[std::size_t(result.log.best_epoch - 1)].composite
            << ", checkpoint in " << a.out << "\n";
}

struct EvaluateArgs {
  std::string manifest;
  std::string split = "test";
  std::vector<std::string> checkpoints;
  std::string out;
  std::uint64_t seed = 42;
  std::string pooling = "pooled";
  std::vector<double> ensemble_weights;
  std::string standardize = "per-episode";
};

void run_evaluate(const EvaluateArgs& a) {
  const fs::path manifest_path(a.manifest);
  auto entries = data::read_manifest(manifest_path);
  auto splits = training::make_splits(episode_labels(entries), a.seed);
  auto store = data::load_data_store(entries, manifest_path.parent_path(),
                                     scope_from(a.standardize));
  auto ids = split_ids(splits, a.split);
  const training::EvalPooling pooling = pooling_from(a.pooling);

  std::vector<models::ModelState> members;
  members.reserve(a.checkpoints.size());
  for (const std::string& path : a.checkpoints) {
    members.push_back(models::load_checkpoint(path));
  }

  std::ofstream out(a.out);
  if (!out) {
    throw DataError("cannot open " + a.out + " for writing");
  }
  out << "checkpoint,n,mae,rmse,rmsle,srcc,composite\n";
  long clamps = 0;
  for (std::size_t k = 0; k < members.size(); ++k) {
    metrics::MetricReport r = training::evaluate(members[k], ids, store, pooling);
    clamps += r.rmsle_clamps;
    out << a.checkpoints[k] << ',';
    metrics::write_metric_csv_row(r, out);
  }
  if (members.size() > 1) {
    metrics::MetricReport r =
        evaluate_ensemble(members, ids, store, a.ensemble_weights, pooling);
    clamps += r.rmsle_clamps;
    out << "ensemble,";
    metrics::write_metric_csv_row(r, out);
  }
  if (clamps > 0) {
    std::cerr << "note: rmsle clamped 1+x at the log floor " << clamps
              << " time(s)\n";
  }
  std::cout << "wrote " << a.out << "\n";
}

struct CorrelateArgs {
  std::string manifest;
  std::string out;
};

void run_correlate(const CorrelateArgs& a) {
  const fs::path manifest_path(a.manifest);
  auto entries = data::read_manifest(manifest_path);
  auto records =
      data::load_engagement_records(entries, manifest_path.parent_path());

  Eigen::Index total = 0;
  for (const auto& r : records) total += r.length();

  Vec attractiveness(total);
  Eigen::Index at = 0;
  for (const auto& r : records) {
    attractiveness.segment(at, r.length()) =
        data::standardize(data::duration_normalize(r));
    at += r.length();
  }

  std::vector<std::pair<std::string, Vec>> indicators;
  for (std::size_t k = 0; k < data::kIndicatorCount; ++k) {
    Vec pooled(total);
    at = 0;
    bool defined = true;
    for (const auto& r : records) {
      try {
        pooled.segment(at, r.length()) = data::standardize(r.indicators[k]);
      } catch (const DegenerateSeriesError&) {
        defined = false;
        break;
      }
      at += r.length();
    }
    if (!defined) pooled = Vec::Zero(total);  // constant: row reads undefined
    indicators.emplace_back(data::kIndicatorNames[k], std::move(pooled));
  }

  metrics::CorrelationTable table =
      metrics::correlation_table(attractiveness, indicators);

  std::ofstream out(a.out);
  if (!out) {
    throw DataError("cannot open " + a.out + " for writing");
  }
  metrics::write_correlation_csv(table, out);
  std::cout << "wrote " << a.out << "\n";
}

struct PredictArgs {
  std::string checkpoint;
  std::string manifest;
  std::string episode;
  std::string out;
};

void run_predict(const PredictArgs& a) {
  const fs::path manifest_path(a.manifest);
  auto entries = data::read_manifest(manifest_path);
  const data::ManifestEntry* entry = nullptr;
  for (const auto& e : entries) {
    if (e.id == a.episode) {
      entry = &e;
      break;
    }
  }
  if (!entry) {
    std::string available;
    for (const auto& e : entries) {
      if (!available.empty()) available += ", ";
      available += e.id;
    }
    throw DataError("unknown episode '" + a.episode + "', available: " +
                    available);
  }

  models::ModelState model = models::load_checkpoint(a.checkpoint);
  const fs::path base = manifest_path.parent_path();

  Mat visual, audio;
  if (entry->visual_path != "-") {
    visual = data::read_fvseq(base / entry->visual_path).features;
  }
  if (entry->audio_path != "-") {
    audio = data::read_fvseq(base / entry->audio_path).features;
  }
  models::PredictionSeries pred = models::forward_sequence(
      model, maybe_modality(visual, model.spec.needs_visual()),
      maybe_modality(audio, model.spec.needs_audio()), a.episode);

  std::optional<Vec> truth;
  if (entry->labels_path != "-") {
    data::EngagementRecord record =
        data::read_labels_csv(base / entry->labels_path, entry->id,
                              entry->category, entry->upload_age_days);
    truth = data::standardize(data::duration_normalize(record));
  }

  std::ofstream out(a.out);
  if (!out) {
    throw DataError("cannot open " + a.out + " for writing");
  }
  out << (truth ? "second,predicted,truth\n" : "second,predicted\n");
  char buf[96];
  for (Eigen::Index t = 0; t < pred.values.size(); ++t) {
    if (truth) {
      std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g\n",
                    static_cast<long long>(t), pred.values[t], (*truth)[t]);
    } else {
      std::snprintf(buf, sizeof(buf), "%lld,%.17g\n",
                    static_cast<long long>(t), pred.values[t]);
    }
    out << buf;
  }
  std::cout << "wrote " << a.out << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"viewpulse: per-second video attractiveness prediction from "
               "visual and audio feature sequences"};
  app.require_subcommand(1);

  GenSynthArgs gen;
  CLI::App* gen_sub = app.add_subcommand(
      "gen-synth", "Generate a synthetic dataset (features, labels, manifest)");
  gen_sub->set_config("--config");
  gen_sub->add_option("--out", gen.out, "Output directory")->required();
  gen_sub->add_option("--seed", gen.seed, "RNG seed")->capture_default_str();
  gen_sub->add_option("--episodes", gen.episodes, "Total episode count")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gen_sub->add_option("--categories", gen.categories, "Category count")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gen_sub->add_option("--seconds", gen.seconds, "Episode length in seconds")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gen_sub->add_option("--visual-dim", gen.visual_dim, "Visual feature dim")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gen_sub->add_option("--audio-dim", gen.audio_dim, "Audio feature dim")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  MfccArgs mf;
  CLI::App* mfcc_sub =
      app.add_subcommand("mfcc", "Extract per-second MFCC features from a WAV");
  mfcc_sub->set_config("--config");
  mfcc_sub->add_option("--wav", mf.wav, "Input WAV file")->required();
  mfcc_sub->add_option("--out", mf.out, "Output FVSEQ1 file")->required();
  mfcc_sub->add_option("--window-ms", mf.cfg.window_ms, "Analysis window (ms)")
      ->capture_default_str();
  mfcc_sub->add_option("--hop-ms", mf.cfg.hop_ms, "Hop between windows (ms)")
      ->capture_default_str();
  mfcc_sub->add_option("--n-mels", mf.cfg.n_mels, "Mel filter count")
      ->capture_default_str();
  mfcc_sub->add_option("--n-ceps", mf.cfg.n_ceps, "Cepstra kept per channel")
      ->capture_default_str();
  mfcc_sub->add_option("--preemph", mf.cfg.preemph, "Pre-emphasis coefficient")
      ->capture_default_str();
  mfcc_sub->add_option("--log-floor", mf.cfg.log_floor, "Mel energy floor")
      ->capture_default_str();

  TrainArgs tr;
  CLI::App* train_sub = app.add_subcommand("train", "Train one model");
  train_sub->set_config("--config");
  train_sub->add_option("--manifest", tr.manifest, "Episode manifest")->required();
  train_sub
      ->add_option("--model", tr.model,
                   "unimodal-visual|unimodal-audio|low|mid|high")
      ->required();
  train_sub->add_option("--out", tr.out, "Output directory")->required();
  train_sub->add_option("--lr", tr.cfg.lr, "Adam learning rate")
      ->capture_default_str();
  train_sub->add_option("--batch", tr.cfg.batch, "Clips per batch")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_sub->add_option("--hidden", tr.hidden, "LSTM hidden size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_sub->add_option("--embed-dim", tr.embed_dim, "Embedding size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_sub
      ->add_option("--clip-seconds", tr.cfg.clip_len_seconds,
                   "Training clip length")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_sub->add_option("--patience", tr.cfg.patience, "Early-stopping patience")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  train_sub->add_option("--max-epochs", tr.cfg.max_epochs, "Epoch cap")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_sub
      ->add_option("--grad-clip", tr.cfg.grad_clip_norm,
                   "Global gradient norm cap, <=0 disables")
      ->capture_default_str();
  train_sub->add_option("--seed", tr.cfg.seed, "RNG seed")->capture_default_str();
  train_sub
      ->add_option("--standardize", tr.standardize,
                   "Target standardization: per-episode|global")
      ->capture_default_str();
  train_sub->add_flag("--output-bias", tr.output_bias,
                      "Add a bias term to the prediction head");

  EvaluateArgs ev;
  CLI::App* eval_sub =
      app.add_subcommand("evaluate", "Score checkpoints on a split");
  eval_sub->set_config("--config");
  eval_sub->add_option("--manifest", ev.manifest, "Episode manifest")->required();
  eval_sub->add_option("--split", ev.split, "train|val|test")
      ->capture_default_str();
  eval_sub
      ->add_option("--checkpoints", ev.checkpoints,
                   "Comma-separated checkpoint paths")
      ->required()
      ->delimiter(',');
  eval_sub->add_option("--out", ev.out, "Report CSV path")->required();
  eval_sub->add_option("--seed", ev.seed, "Split seed")->capture_default_str();
  eval_sub->add_option("--pooling", ev.pooling, "pooled|per-episode-mean")
      ->capture_default_str();
  eval_sub
      ->add_option("--ensemble-weights", ev.ensemble_weights,
                   "Member weights, default uniform")
      ->delimiter(',');
  eval_sub
      ->add_option("--standardize", ev.standardize,
                   "Target standardization: per-episode|global")
      ->capture_default_str();

  CorrelateArgs co;
  CLI::App* corr_sub = app.add_subcommand(
      "correlate", "Engagement/attractiveness correlation table");
  corr_sub->set_config("--config");
  corr_sub->add_option("--manifest", co.manifest, "Episode manifest")->required();
  corr_sub->add_option("--out", co.out, "Table CSV path")->required();

  PredictArgs pr;
  CLI::App* pred_sub =
      app.add_subcommand("predict", "Per-second predictions for one episode");
  pred_sub->set_config("--config");
  pred_sub->add_option("--checkpoint", pr.checkpoint, "Model checkpoint")
      ->required();
  pred_sub->add_option("--manifest", pr.manifest, "Episode manifest")->required();
  pred_sub->add_option("--episode", pr.episode, "Episode id")->required();
  pred_sub->add_option("--out", pr.out, "Prediction CSV path")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (gen_sub->parsed()) run_gen_synth(gen, gen_sub);
    if (mfcc_sub->parsed()) run_mfcc(mf);
    if (train_sub->parsed()) run_train(tr, train_sub);
    if (eval_sub->parsed()) run_evaluate(ev);
    if (corr_sub->parsed()) run_correlate(co);
    if (pred_sub->parsed()) run_predict(pr);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  args.reserve(std::size_t(argc > 0 ? argc - 1 : 0));
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace viewpulse::cli
