#pragma once

#include <complex>
#include <filesystem>
#include <string>
#include <vector>

#include "viewpulse/data.hpp"
#include "viewpulse/num.hpp"

namespace viewpulse::mfcc {

struct AudioClip {
  int sample_rate = 0;
  std::vector<Vec> channels;  // 1 or 2, equal lengths, samples in [-1, 1]

  Eigen::Index length() const {
    return channels.empty() ? 0 : channels[0].size();
  }
  double duration_seconds() const {
    return sample_rate > 0 ? double(length()) / sample_rate : 0.0;
  }
};

struct MfccConfig {
  int window_ms = 25;
  int hop_ms = 10;
  int n_mels = 26;
  int n_ceps = 13;
  double preemph = 0.97;
  double log_floor = 1e-10;
};

enum class WavEncoding { Pcm16, Float32 };

/// RIFF/WAVE reader for PCM 16-bit and IEEE float32, 1 or 2 channels.
AudioClip read_wav(const std::filesystem::path& path);

void write_wav(const AudioClip& clip, const std::filesystem::path& path,
               WavEncoding encoding = WavEncoding::Pcm16);

/// In-place radix-2 FFT; size must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& buf);

/// One channel to a frames x n_ceps matrix: pre-emphasis, Hamming-windowed
/// 25 ms frames every 10 ms, power spectrum, mel filterbank, log, orthonormal
/// DCT-II, first n_ceps coefficients.
Mat mfcc_channel(const Vec& samples, int sample_rate, const MfccConfig& cfg);

/// Frame starts are averaged per whole second and the two channels
/// concatenated into a T x 2*n_ceps sequence; a final partial second is
/// dropped. Mono input is duplicated to both channels.
data::FeatureSequence extract_audio_features(const AudioClip& clip,
                                             const MfccConfig& cfg,
                                             const std::string& episode_id = "");

}  // namespace viewpulse::mfcc
