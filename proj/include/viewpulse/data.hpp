#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "viewpulse/num.hpp"

namespace viewpulse::data {

enum class Modality : std::uint8_t { Visual, Audio };

const char* modality_name(Modality m);

/// Per-second features for one modality of one episode, one row per second.
struct FeatureSequence {
  std::string episode_id;
  Modality modality = Modality::Visual;
  Mat features;  // T x D

  Eigen::Index length() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }
};

// FVSEQ1 binary format: magic "FVSEQ1", modality byte ('V'/'A'), u16 id
// length + UTF-8 id, T u32, D u32, then T*D little-endian f64 row-major.
void write_fvseq(const FeatureSequence& seq, const std::filesystem::path& path);
FeatureSequence read_fvseq(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Labels.

inline constexpr std::size_t kIndicatorCount = 9;

/// Column keys in label CSVs, in file order.
inline constexpr std::array<const char*, kIndicatorCount> kIndicatorKeys = {
    "exit",    "start_ff",     "end_ff",   "start_fr", "end_fr",
    "bullets", "bullet_likes", "ff_skips", "fr_skips"};

/// Human-readable indicator names, same order.
inline constexpr std::array<const char*, kIndicatorCount> kIndicatorNames = {
    "Exit",
    "Start of Fast-Forward",
    "End of Fast-Forward",
    "Start of Fast-Rewind",
    "End of Fast-Rewind",
    "Bullet Screens",
    "Bullet Screen Likes",
    "Fast-Forward Skips",
    "Fast-Rewind Skips"};

struct EngagementRecord {
  std::string episode_id;
  std::string category;
  double upload_age_days = 0;
  Vec views;
  std::array<Vec, kIndicatorCount> indicators;

  Eigen::Index length() const { return views.size(); }
};

// Label CSV: header second,views,exit,...,fr_skips; one row per second.
void write_labels_csv(const EngagementRecord& record,
                      const std::filesystem::path& path);
/// id/category/upload age live in the manifest, not the CSV.
EngagementRecord read_labels_csv(const std::filesystem::path& path,
                                 const std::string& episode_id,
                                 const std::string& category,
                                 double upload_age_days);

/// Views divided by days since upload, removing accumulation-time effects.
Vec duration_normalize(const EngagementRecord& record);

/// Per-series z-score with population (1/n) variance.
Vec standardize(const Vec& series);

// ---------------------------------------------------------------------------
// Episode manifest: tab-separated lines
//   id  category  visual_path  audio_path  labels_path  upload_age_days
// with "-" for an absent modality. Paths are relative to the manifest.

struct ManifestEntry {
  std::string id;
  std::string category;
  std::string visual_path;  // "-" if absent
  std::string audio_path;   // "-" if absent
  std::string labels_path;
  double upload_age_days = 0;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// In-memory store binding modalities and targets per episode.

struct EpisodeData {
  std::string id;
  std::string category;
  Mat visual;  // T x Dv, 0x0 when absent
  Mat audio;   // T x Da, 0x0 when absent
  Vec target;  // standardized attractiveness

  bool has_visual() const { return visual.size() > 0; }
  bool has_audio() const { return audio.size() > 0; }
  Eigen::Index length() const { return target.size(); }
};

class DataStore {
 public:
  void add(EpisodeData episode);
  const EpisodeData& get(const std::string& id) const;
  bool has(const std::string& id) const { return episodes_.count(id) > 0; }
  std::vector<std::string> ids() const;
  std::size_t size() const { return episodes_.size(); }

 private:
  std::map<std::string, EpisodeData> episodes_;
};

enum class StandardizeScope { PerEpisode, Global };

/// Loads features and labels for every manifest entry; the target is
/// standardize(duration_normalize(views)).
DataStore load_data_store(const std::vector<ManifestEntry>& entries,
                          const std::filesystem::path& base_dir,
                          StandardizeScope scope = StandardizeScope::PerEpisode);

/// Engagement records for every entry, for correlation analysis.
std::vector<EngagementRecord> load_engagement_records(
    const std::vector<ManifestEntry>& entries,
    const std::filesystem::path& base_dir);

// ---------------------------------------------------------------------------
// Synthetic stand-in dataset. Two smooth per-episode latents drive the two
// modalities separately, so each modality sees only half the signal and
// bimodal models have strictly more to work with.

struct SynthConfig {
  int n_categories = 2;
  int episodes_per_category = 10;
  int episode_len_seconds = 600;
  Eigen::Index visual_dim = 16;
  Eigen::Index audio_dim = 8;
  double visual_weight = 0.5;   // attractiveness share of the visual latent
  double audio_weight = 0.5;    // attractiveness share of the audio latent
  double label_noise = 0.1;
  double indicator_gain = 0.75;
  double indicator_noise = 0.5;
  std::uint64_t seed = 42;
};

struct SynthEpisode {
  FeatureSequence visual;
  FeatureSequence audio;
  EngagementRecord record;
  Vec latent_u;  // drives visual
  Vec latent_v;  // drives audio
};

struct SynthDataset {
  std::vector<SynthEpisode> episodes;
};

/// Pure in cfg.
SynthDataset generate_synthetic(const SynthConfig& cfg);

/// Writes manifest + FVSEQ1 pairs + label CSVs under out_dir.
void write_synthetic_dataset(const SynthDataset& dataset,
                             const std::filesystem::path& out_dir);

}  // namespace viewpulse::data
