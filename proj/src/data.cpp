#include "viewpulse/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "viewpulse/binio.hpp"

namespace viewpulse::data {

using num::SplitMix64;

const char* modality_name(Modality m) {
  return m == Modality::Visual ? "visual" : "audio";
}

// ---------------------------------------------------------------------------
// FVSEQ1.

namespace {
constexpr char kFvseqMagic[] = "FVSEQ1";
constexpr std::size_t kFvseqMagicLen = 6;
}  // namespace

void write_fvseq(const FeatureSequence& seq,
                 const std::filesystem::path& path) {
  if (seq.length() < 1 || seq.dim() < 1) {
    throw ShapeError("write_fvseq: need T >= 1 and D >= 1, got " +
                     num::shape_str(seq.length(), seq.dim()));
  }
  num::ensure_finite(seq.features, "write_fvseq");
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("write_fvseq: cannot open " + path.string());
  }
  out.write(kFvseqMagic, kFvseqMagicLen);
  binio::write_u8(out, seq.modality == Modality::Visual ? 'V' : 'A');
  binio::write_u16(out, std::uint16_t(seq.episode_id.size()));
  out.write(seq.episode_id.data(), std::streamsize(seq.episode_id.size()));
  binio::write_u32(out, std::uint32_t(seq.length()));
  binio::write_u32(out, std::uint32_t(seq.dim()));
  for (Eigen::Index i = 0; i < seq.features.size(); ++i) {
    binio::write_f64(out, seq.features.data()[i]);  // row-major storage
  }
  if (!out) {
    throw DataError("write_fvseq: write failed for " + path.string());
  }
}

FeatureSequence read_fvseq(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("read_fvseq: cannot open " + path.string());
  }
  binio::Reader r(in, "fvseq " + path.string());
  if (r.str(kFvseqMagicLen) != kFvseqMagic) {
    r.fail("bad magic, expected FVSEQ1");
  }
  FeatureSequence seq;
  const std::uint8_t modality = r.u8();
  if (modality == 'V') {
    seq.modality = Modality::Visual;
  } else if (modality == 'A') {
    seq.modality = Modality::Audio;
  } else {
    r.fail("invalid modality byte " + std::to_string(modality));
  }
  seq.episode_id = r.str(r.u16());
  const std::uint64_t rows = r.u32();
  const std::uint64_t cols = r.u32();
  if (rows < 1 || cols < 1) {
    r.fail("invalid dimensions " + num::shape_str(Eigen::Index(rows),
                                                  Eigen::Index(cols)));
  }
  seq.features.resize(Eigen::Index(rows), Eigen::Index(cols));
  for (Eigen::Index i = 0; i < seq.features.size(); ++i) {
    seq.features.data()[i] = r.f64();
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Labels.

void write_labels_csv(const EngagementRecord& record,
                      const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw DataError("write_labels_csv: cannot open " + path.string());
  }
  out << "second,views";
  for (const char* key : kIndicatorKeys) out << ',' << key;
  out << '\n';
  char buf[32];
  for (Eigen::Index t = 0; t < record.length(); ++t) {
    out << t;
    std::snprintf(buf, sizeof(buf), "%.17g", record.views[t]);
    out << ',' << buf;
    for (const Vec& series : record.indicators) {
      std::snprintf(buf, sizeof(buf), "%.17g", series[t]);
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) {
    throw DataError("write_labels_csv: write failed for " + path.string());
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  return cells;
}

}  // namespace

EngagementRecord read_labels_csv(const std::filesystem::path& path,
                                 const std::string& episode_id,
                                 const std::string& category,
                                 double upload_age_days) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("read_labels_csv: episode " + episode_id +
                    ": cannot open " + path.string());
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError("labels " + path.string() + ": empty file");
  }
  std::string expected = "second,views";
  for (const char* key : kIndicatorKeys) expected += std::string(",") + key;
  if (line != expected) {
    throw FormatError("labels " + path.string() + ": bad header '" + line +
                      "'");
  }
  std::vector<double> views;
  std::array<std::vector<double>, kIndicatorCount> indicators;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 2 + kIndicatorCount) {
      throw FormatError("labels " + path.string() + ": line " +
                        std::to_string(line_no) + " has " +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(2 + kIndicatorCount));
    }
    views.push_back(std::stod(cells[1]));
    for (std::size_t k = 0; k < kIndicatorCount; ++k) {
      indicators[k].push_back(std::stod(cells[2 + k]));
    }
  }
  if (views.empty()) {
    throw FormatError("labels " + path.string() + ": no data rows");
  }
  EngagementRecord record;
  record.episode_id = episode_id;
  record.category = category;
  record.upload_age_days = upload_age_days;
  record.views = Eigen::Map<const Vec>(views.data(), Eigen::Index(views.size()));
  for (std::size_t k = 0; k < kIndicatorCount; ++k) {
    record.indicators[k] = Eigen::Map<const Vec>(
        indicators[k].data(), Eigen::Index(indicators[k].size()));
  }
  return record;
}

Vec duration_normalize(const EngagementRecord& record) {
  if (!(record.upload_age_days > 0)) {
    throw DataError("duration_normalize: episode " + record.episode_id +
                    " has non-positive upload age " +
                    std::to_string(record.upload_age_days));
  }
  return record.views / record.upload_age_days;
}

Vec standardize(const Vec& series) {
  if (series.size() < 2) {
    throw DegenerateSeriesError("standardize: need length >= 2, got " +
                                std::to_string(series.size()));
  }
  const double mean = series.mean();
  const double var = (series.array() - mean).square().sum() / double(series.size());
  if (var == 0.0) {
    throw DegenerateSeriesError("standardize: constant series");
  }
  return (series.array() - mean) / std::sqrt(var);
}

// ---------------------------------------------------------------------------
// Manifest.

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("read_manifest: cannot open " + path.string());
  }
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    ManifestEntry e;
    std::string age;
    if (!std::getline(ss, e.id, '\t') || !std::getline(ss, e.category, '\t') ||
        !std::getline(ss, e.visual_path, '\t') ||
        !std::getline(ss, e.audio_path, '\t') ||
        !std::getline(ss, e.labels_path, '\t') || !std::getline(ss, age)) {
      throw FormatError("manifest " + path.string() + ": line " +
                        std::to_string(line_no) +
                        " needs 6 tab-separated fields");
    }
    e.upload_age_days = std::stod(age);
    entries.push_back(std::move(e));
  }
  if (entries.empty()) {
    throw DataError("read_manifest: no episodes in " + path.string());
  }
  return entries;
}

void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw DataError("write_manifest: cannot open " + path.string());
  }
  out << "# id\tcategory\tvisual\taudio\tlabels\tupload_age_days\n";
  char buf[32];
  for (const ManifestEntry& e : entries) {
    std::snprintf(buf, sizeof(buf), "%.17g", e.upload_age_days);
    out << e.id << '\t' << e.category << '\t' << e.visual_path << '\t'
        << e.audio_path << '\t' << e.labels_path << '\t' << buf << '\n';
  }
}

// ---------------------------------------------------------------------------
// Store.

void DataStore::add(EpisodeData episode) {
  episodes_[episode.id] = std::move(episode);
}

const EpisodeData& DataStore::get(const std::string& id) const {
  auto it = episodes_.find(id);
  if (it == episodes_.end()) {
    throw DataError("data store: unknown episode '" + id + "'");
  }
  return it->second;
}

std::vector<std::string> DataStore::ids() const {
  std::vector<std::string> out;
  out.reserve(episodes_.size());
  for (const auto& [id, _] : episodes_) out.push_back(id);
  return out;
}

DataStore load_data_store(const std::vector<ManifestEntry>& entries,
                          const std::filesystem::path& base_dir,
                          StandardizeScope scope) {
  DataStore store;
  std::vector<Vec> rates(entries.size());
  std::vector<EpisodeData> episodes(entries.size());

  for (std::size_t k = 0; k < entries.size(); ++k) {
    const ManifestEntry& e = entries[k];
    EpisodeData ep;
    ep.id = e.id;
    ep.category = e.category;
    if (e.visual_path != "-") {
      FeatureSequence seq = read_fvseq(base_dir / e.visual_path);
      ep.visual = std::move(seq.features);
    }
    if (e.audio_path != "-") {
      FeatureSequence seq = read_fvseq(base_dir / e.audio_path);
      ep.audio = std::move(seq.features);
    }
    EngagementRecord record = read_labels_csv(base_dir / e.labels_path, e.id,
                                              e.category, e.upload_age_days);
    rates[k] = duration_normalize(record);

    const Eigen::Index T = rates[k].size();
    if (ep.has_visual() && ep.visual.rows() != T) {
      throw DataError("episode " + e.id + ": visual length " +
                      std::to_string(ep.visual.rows()) + " vs labels length " +
                      std::to_string(T));
    }
    if (ep.has_audio() && ep.audio.rows() != T) {
      throw DataError("episode " + e.id + ": audio length " +
                      std::to_string(ep.audio.rows()) + " vs labels length " +
                      std::to_string(T));
    }
    if (!ep.has_visual() && !ep.has_audio()) {
      throw DataError("episode " + e.id + ": no feature files in manifest");
    }
    episodes[k] = std::move(ep);
  }

  if (scope == StandardizeScope::PerEpisode) {
    for (std::size_t k = 0; k < entries.size(); ++k) {
      episodes[k].target = standardize(rates[k]);
    }
  } else {
    Eigen::Index total = 0;
    for (const Vec& r : rates) total += r.size();
    Vec pooled(total);
    Eigen::Index at = 0;
    for (const Vec& r : rates) {
      pooled.segment(at, r.size()) = r;
      at += r.size();
    }
    const Vec z = standardize(pooled);
    at = 0;
    for (std::size_t k = 0; k < entries.size(); ++k) {
      episodes[k].target = z.segment(at, rates[k].size());
      at += rates[k].size();
    }
  }

  for (EpisodeData& ep : episodes) store.add(std::move(ep));
  return store;
}

std::vector<EngagementRecord> load_engagement_records(
    const std::vector<ManifestEntry>& entries,
    const std::filesystem::path& base_dir) {
  std::vector<EngagementRecord> records;
  records.reserve(entries.size());
  for (const ManifestEntry& e : entries) {
    records.push_back(read_labels_csv(base_dir / e.labels_path, e.id,
                                      e.category, e.upload_age_days));
  }
  return records;
}

// ---------------------------------------------------------------------------
// Synthetic generator.

namespace {

// Indicator coupling signs; zero means no coupling beyond noise.
constexpr std::array<double, kIndicatorCount> kIndicatorSigns = {
    -1,  // Exit
    -1,  // Start of Fast-Forward
    -1,  // End of Fast-Forward
    +1,  // Start of Fast-Rewind
    +1,  // End of Fast-Rewind
    -1,  // Bullet Screens
    0,   // Bullet Screen Likes
    -1,  // Fast-Forward Skips
    0    // Fast-Rewind Skips
};

Vec ar1_series(Eigen::Index n, double coeff, SplitMix64& rng) {
  Vec out(n);
  const double innovation = std::sqrt(1.0 - coeff * coeff);
  out[0] = rng.normal();
  for (Eigen::Index t = 1; t < n; ++t) {
    out[t] = coeff * out[t - 1] + innovation * rng.normal();
  }
  return out;
}

// Near-identity mixing keeps the latent linearly recoverable while spreading
// it across all feature dims.
Mat mixing_matrix(Eigen::Index dim, SplitMix64& rng) {
  Mat m(dim, dim);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = 0.25 * rng.uniform(-1.0, 1.0);
  }
  m += Mat::Identity(dim, dim);
  return m;
}

}  // namespace

SynthDataset generate_synthetic(const SynthConfig& cfg) {
  if (cfg.n_categories < 1 || cfg.episodes_per_category < 1 ||
      cfg.episode_len_seconds < 2 || cfg.visual_dim < 1 || cfg.audio_dim < 1) {
    throw DataError("generate_synthetic: all counts must be >= 1 and episode "
                    "length >= 2 seconds");
  }
  const Eigen::Index T = cfg.episode_len_seconds;

  SplitMix64 setup(SplitMix64::derive(cfg.seed, 0x5e7));
  const Mat visual_mix = mixing_matrix(cfg.visual_dim, setup);
  const Mat audio_mix = mixing_matrix(cfg.audio_dim, setup);

  SynthDataset dataset;
  int episode_index = 0;
  for (int c = 0; c < cfg.n_categories; ++c) {
    for (int k = 0; k < cfg.episodes_per_category; ++k, ++episode_index) {
      SplitMix64 rng(SplitMix64::derive(cfg.seed, 1000 + episode_index));
      SynthEpisode ep;

      char id[32];
      std::snprintf(id, sizeof(id), "ep%03d", episode_index);
      char category[32];
      std::snprintf(category, sizeof(category), "cat%02d", c);

      ep.latent_u = ar1_series(T, 0.95, rng);
      ep.latent_v = ar1_series(T, 0.95, rng);

      Vec y(T);
      for (Eigen::Index t = 0; t < T; ++t) {
        y[t] = cfg.visual_weight * ep.latent_u[t] +
               cfg.audio_weight * ep.latent_v[t] +
               cfg.label_noise * rng.normal();
      }

      Mat visual(T, cfg.visual_dim);
      for (Eigen::Index t = 0; t < T; ++t) {
        Vec z(cfg.visual_dim);
        z[0] = ep.latent_u[t];
        for (Eigen::Index d = 1; d < cfg.visual_dim; ++d) z[d] = rng.normal();
        visual.row(t) = (visual_mix * z).transpose();
      }
      Mat audio(T, cfg.audio_dim);
      for (Eigen::Index t = 0; t < T; ++t) {
        Vec z(cfg.audio_dim);
        z[0] = ep.latent_v[t];
        for (Eigen::Index d = 1; d < cfg.audio_dim; ++d) z[d] = rng.normal();
        audio.row(t) = (audio_mix * z).transpose();
      }

      ep.visual = FeatureSequence{id, Modality::Visual, std::move(visual)};
      ep.audio = FeatureSequence{id, Modality::Audio, std::move(audio)};

      EngagementRecord record;
      record.episode_id = id;
      record.category = category;
      record.upload_age_days = std::floor(rng.uniform(30.0, 365.0));

      // Views are affine in y so rate standardization recovers y exactly,
      // modulo rounding.
      record.views.resize(T);
      for (Eigen::Index t = 0; t < T; ++t) {
        const double rate = 100.0 + 20.0 * y[t];
        record.views[t] =
            std::max(0.0, std::round(rate * record.upload_age_days));
      }

      for (std::size_t j = 0; j < kIndicatorCount; ++j) {
        Vec series(T);
        for (Eigen::Index t = 0; t < T; ++t) {
          series[t] = std::exp(kIndicatorSigns[j] * cfg.indicator_gain * y[t] +
                               cfg.indicator_noise * rng.normal());
        }
        record.indicators[j] = std::move(series);
      }

      ep.record = std::move(record);
      dataset.episodes.push_back(std::move(ep));
    }
  }
  return dataset;
}

void write_synthetic_dataset(const SynthDataset& dataset,
                             const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "features");
  fs::create_directories(out_dir / "labels");
  std::vector<ManifestEntry> entries;
  for (const SynthEpisode& ep : dataset.episodes) {
    const std::string& id = ep.record.episode_id;
    ManifestEntry e;
    e.id = id;
    e.category = ep.record.category;
    e.visual_path = "features/" + id + "_visual.fvseq";
    e.audio_path = "features/" + id + "_audio.fvseq";
    e.labels_path = "labels/" + id + ".csv";
    e.upload_age_days = ep.record.upload_age_days;
    write_fvseq(ep.visual, out_dir / e.visual_path);
    write_fvseq(ep.audio, out_dir / e.audio_path);
    write_labels_csv(ep.record, out_dir / e.labels_path);
    entries.push_back(std::move(e));
  }
  write_manifest(entries, out_dir / "manifest.tsv");
}

}  // namespace viewpulse::data
