#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "viewpulse/data.hpp"
#include "viewpulse/metrics.hpp"

using namespace viewpulse;
using num::SplitMix64;

namespace {

namespace fs = std::filesystem;

fs::path temp_path(const char* name) {
  return fs::temp_directory_path() /
         (std::string("viewpulse_data_") + std::to_string(::getpid()) + "_" +
          name);
}

data::FeatureSequence random_sequence(Eigen::Index rows, Eigen::Index cols,
                                      std::uint64_t seed) {
  data::FeatureSequence seq;
  seq.episode_id = "ep_test";
  seq.modality = data::Modality::Audio;
  seq.features = num::glorot_init(rows, cols, seed);
  return seq;
}

}  // namespace

TEST_CASE("fvseq round-trips bit-exactly") {
  const fs::path path = temp_path("seq.fvseq");
  data::FeatureSequence seq = random_sequence(300, 26, 5);
  data::write_fvseq(seq, path);
  data::FeatureSequence back = data::read_fvseq(path);
  CHECK(back.episode_id == seq.episode_id);
  CHECK(back.modality == seq.modality);
  CHECK(back.features == seq.features);
  fs::remove(path);
}

TEST_CASE("fvseq rejects corruption") {
  const fs::path path = temp_path("seq_corrupt.fvseq");
  data::FeatureSequence seq = random_sequence(10, 4, 6);
  data::write_fvseq(seq, path);

  // Payload shorter than the header promises.
  fs::resize_file(path, fs::file_size(path) - 16);
  CHECK_THROWS_WITH_AS(data::read_fvseq(path),
                       doctest::Contains("truncated"), FormatError);

  data::write_fvseq(seq, path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("NOTSEQ", 6);
  }
  CHECK_THROWS_WITH_AS(data::read_fvseq(path), doctest::Contains("magic"),
                       FormatError);
  fs::remove(path);

  CHECK_THROWS_AS(data::read_fvseq(temp_path("missing.fvseq")), DataError);
}

TEST_CASE("duration_normalize divides by upload age") {
  data::EngagementRecord record;
  record.episode_id = "e";
  record.upload_age_days = 10;
  record.views = Vec::Constant(1, 100.0);
  Vec rate = data::duration_normalize(record);
  CHECK(rate[0] == 10.0);

  record.upload_age_days = 1;
  CHECK(data::duration_normalize(record) == record.views);

  data::EngagementRecord doubled = record;
  doubled.upload_age_days = 2;
  CHECK((data::duration_normalize(doubled) * 2 -
         data::duration_normalize(record))
            .cwiseAbs()
            .maxCoeff() < 1e-15);

  record.upload_age_days = 0;
  CHECK_THROWS_AS(data::duration_normalize(record), DataError);
}

TEST_CASE("standardize hand case, idempotence, affine invariance") {
  Vec v(3);
  v << 1, 2, 3;
  Vec z = data::standardize(v);
  CHECK(z[0] == doctest::Approx(-std::sqrt(1.5)).epsilon(1e-12));
  CHECK(z[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(z[2] == doctest::Approx(std::sqrt(1.5)).epsilon(1e-12));

  CHECK((data::standardize(z) - z).cwiseAbs().maxCoeff() < 1e-12);

  SplitMix64 rng(9);
  Vec x(40);
  for (Eigen::Index i = 0; i < 40; ++i) x[i] = rng.uniform(-5, 5);
  Vec affine = 3.5 * x.array() + 11.0;
  CHECK((data::standardize(affine) - data::standardize(x)).cwiseAbs().maxCoeff() <
        1e-12);

  CHECK_THROWS_AS(data::standardize(Vec::Ones(5)), DegenerateSeriesError);
  CHECK_THROWS_AS(data::standardize(Vec::Ones(1)), DegenerateSeriesError);
}

TEST_CASE("standardize output has zero mean and unit variance") {
  SplitMix64 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    Vec x(60);
    for (Eigen::Index i = 0; i < 60; ++i) x[i] = rng.uniform(0, 100);
    Vec z = data::standardize(x);
    CHECK(std::abs(z.mean()) < 1e-9);
    CHECK(std::abs(z.squaredNorm() / 60.0 - 1.0) < 1e-9);
  }
}

TEST_CASE("labels csv round-trips") {
  const fs::path path = temp_path("labels.csv");
  data::EngagementRecord record;
  record.episode_id = "ep0";
  record.category = "cat0";
  record.upload_age_days = 33;
  SplitMix64 rng(12);
  record.views = Vec(5);
  for (Eigen::Index i = 0; i < 5; ++i) record.views[i] = rng.uniform(0, 1000);
  for (auto& series : record.indicators) {
    series = Vec(5);
    for (Eigen::Index i = 0; i < 5; ++i) series[i] = rng.uniform(0, 50);
  }
  data::write_labels_csv(record, path);
  data::EngagementRecord back =
      data::read_labels_csv(path, "ep0", "cat0", 33);
  CHECK(back.views == record.views);
  for (std::size_t k = 0; k < data::kIndicatorCount; ++k) {
    CHECK(back.indicators[k] == record.indicators[k]);
  }
  fs::remove(path);

  CHECK_THROWS_AS(data::read_labels_csv(temp_path("nope.csv"), "epX", "c", 1),
                  DataError);
}

TEST_CASE("manifest round-trips") {
  const fs::path path = temp_path("manifest.tsv");
  std::vector<data::ManifestEntry> entries = {
      {"ep0", "cat0", "features/ep0_v.fvseq", "features/ep0_a.fvseq",
       "labels/ep0.csv", 120},
      {"ep1", "cat1", "-", "features/ep1_a.fvseq", "labels/ep1.csv", 45},
  };
  data::write_manifest(entries, path);
  auto back = data::read_manifest(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].id == "ep0");
  CHECK(back[1].visual_path == "-");
  CHECK(back[1].upload_age_days == 45);
  fs::remove(path);
}

TEST_CASE("generator is pure in its config") {
  data::SynthConfig cfg;
  cfg.n_categories = 1;
  cfg.episodes_per_category = 2;
  cfg.episode_len_seconds = 50;
  cfg.visual_dim = 4;
  cfg.audio_dim = 3;
  cfg.seed = 7;
  auto a = data::generate_synthetic(cfg);
  auto b = data::generate_synthetic(cfg);
  REQUIRE(a.episodes.size() == 2);
  CHECK(a.episodes[0].visual.features == b.episodes[0].visual.features);
  CHECK(a.episodes[1].audio.features == b.episodes[1].audio.features);
  CHECK(a.episodes[0].record.views == b.episodes[0].record.views);
  CHECK(a.episodes[0].latent_u == b.episodes[0].latent_u);

  cfg.seed = 8;
  auto c = data::generate_synthetic(cfg);
  CHECK(a.episodes[0].visual.features != c.episodes[0].visual.features);
}

TEST_CASE("generator latents explain the attractiveness") {
  data::SynthConfig cfg;
  cfg.n_categories = 1;
  cfg.episodes_per_category = 3;
  cfg.episode_len_seconds = 400;
  cfg.visual_dim = 6;
  cfg.audio_dim = 4;
  cfg.seed = 42;
  auto dataset = data::generate_synthetic(cfg);

  for (const auto& ep : dataset.episodes) {
    // Least squares of the standardized rate on [1, u, v].
    Vec y = data::standardize(data::duration_normalize(ep.record));
    const Eigen::Index T = y.size();
    Eigen::MatrixXd design(T, 3);
    design.col(0).setOnes();
    design.col(1) = ep.latent_u;
    design.col(2) = ep.latent_v;
    Vec coef = (design.transpose() * design)
                   .ldlt()
                   .solve(design.transpose() * y);
    Vec residual = y - design * coef;
    const double r2 = 1.0 - residual.squaredNorm() / y.squaredNorm();
    CHECK(r2 > 0.9);
    // Both modal latents carry positive weight.
    CHECK(coef[1] > 0.1);
    CHECK(coef[2] > 0.1);
  }
}

TEST_CASE("generator indicators are positive and sign-structured") {
  data::SynthConfig cfg;
  cfg.n_categories = 1;
  cfg.episodes_per_category = 4;
  cfg.episode_len_seconds = 500;
  cfg.seed = 42;
  auto dataset = data::generate_synthetic(cfg);

  // Pool standardized series across episodes, as the correlation op does.
  const Eigen::Index total = cfg.episodes_per_category * cfg.episode_len_seconds;
  Vec attractiveness(total);
  std::array<Vec, data::kIndicatorCount> pooled;
  for (auto& p : pooled) p.resize(total);
  Eigen::Index at = 0;
  for (const auto& ep : dataset.episodes) {
    for (std::size_t k = 0; k < data::kIndicatorCount; ++k) {
      CHECK(ep.record.indicators[k].minCoeff() >= 0.0);
      pooled[k].segment(at, ep.record.length()) =
          data::standardize(ep.record.indicators[k]);
    }
    attractiveness.segment(at, ep.record.length()) =
        data::standardize(data::duration_normalize(ep.record));
    at += ep.record.length();
  }

  const double sign[data::kIndicatorCount] = {-1, -1, -1, 1, 1, -1, 0, -1, 0};
  for (std::size_t k = 0; k < data::kIndicatorCount; ++k) {
    const double r = metrics::pcc(pooled[k], attractiveness);
    if (sign[k] == 0) {
      CHECK(std::abs(r) < 0.1);
    } else {
      CHECK(r * sign[k] > 0.1);
    }
  }
}

TEST_CASE("write_synthetic_dataset lays out a loadable tree") {
  data::SynthConfig cfg;
  cfg.n_categories = 2;
  cfg.episodes_per_category = 2;
  cfg.episode_len_seconds = 30;
  cfg.visual_dim = 3;
  cfg.audio_dim = 2;
  cfg.seed = 3;
  auto dataset = data::generate_synthetic(cfg);
  const fs::path dir = temp_path("synthdir");
  fs::remove_all(dir);
  data::write_synthetic_dataset(dataset, dir);

  auto entries = data::read_manifest(dir / "manifest.tsv");
  REQUIRE(entries.size() == 4);
  data::DataStore store = data::load_data_store(entries, dir);
  CHECK(store.size() == 4);
  const auto& ep = store.get(entries[0].id);
  CHECK(ep.visual.rows() == 30);
  CHECK(ep.visual.cols() == 3);
  CHECK(ep.audio.cols() == 2);
  CHECK(ep.target.size() == 30);
  CHECK(std::abs(ep.target.mean()) < 1e-9);
  fs::remove_all(dir);
}

TEST_CASE("global standardization shares one scale across episodes") {
  data::SynthConfig cfg;
  cfg.n_categories = 1;
  cfg.episodes_per_category = 2;
  cfg.episode_len_seconds = 40;
  cfg.visual_dim = 2;
  cfg.audio_dim = 2;
  cfg.seed = 4;
  auto dataset = data::generate_synthetic(cfg);
  const fs::path dir = temp_path("synthglobal");
  fs::remove_all(dir);
  data::write_synthetic_dataset(dataset, dir);
  auto entries = data::read_manifest(dir / "manifest.tsv");

  auto per_episode = data::load_data_store(entries, dir);
  auto global = data::load_data_store(entries, dir,
                                      data::StandardizeScope::Global);
  // Per-episode targets each have zero mean; global targets generally don't.
  const Vec& g0 = global.get(entries[0].id).target;
  const Vec& g1 = global.get(entries[1].id).target;
  Vec pooled(g0.size() + g1.size());
  pooled << g0, g1;
  CHECK(std::abs(pooled.mean()) < 1e-9);
  CHECK(std::abs(per_episode.get(entries[0].id).target.mean()) < 1e-9);
  fs::remove_all(dir);
}
