#include "viewpulse/mfcc.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "viewpulse/binio.hpp"

namespace viewpulse::mfcc {

// ---------------------------------------------------------------------------
// WAV.

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;

struct FmtChunk {
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits = 0;
};

}  // namespace

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("read_wav: cannot open " + path.string());
  }
  binio::Reader r(in, "wav " + path.string());
  if (r.str(4) != "RIFF") r.fail("not a RIFF file");
  r.u32();  // riff size; chunk walking below validates the rest
  if (r.str(4) != "WAVE") r.fail("not a WAVE file");

  FmtChunk fmt;
  bool have_fmt = false;
  std::vector<char> payload;

  while (!r.at_eof()) {
    const std::string chunk_id = r.str(4);
    const std::uint32_t chunk_size = r.u32();
    if (chunk_id == "fmt ") {
      if (chunk_size < 16) r.fail("fmt chunk too small");
      fmt.format = r.u16();
      fmt.channels = r.u16();
      fmt.sample_rate = r.u32();
      r.u32();  // byte rate
      r.u16();  // block align
      fmt.bits = r.u16();
      r.str(chunk_size - 16);
      have_fmt = true;
    } else if (chunk_id == "data") {
      payload.resize(chunk_size);
      if (chunk_size > 0) r.bytes(payload.data(), chunk_size);
      break;
    } else {
      r.str(chunk_size + (chunk_size % 2));  // chunks are even-padded
    }
  }
  if (!have_fmt) r.fail("missing fmt chunk");
  if (payload.empty()) r.fail("missing or empty data chunk");

  if (fmt.channels != 1 && fmt.channels != 2) {
    throw FormatError("read_wav: " + path.string() + ": unsupported channel count " +
                      std::to_string(fmt.channels));
  }
  if (fmt.sample_rate == 0) {
    throw FormatError("read_wav: " + path.string() + ": zero sample rate");
  }

  std::size_t bytes_per_sample;
  if (fmt.format == kFormatPcm && fmt.bits == 16) {
    bytes_per_sample = 2;
  } else if (fmt.format == kFormatFloat && fmt.bits == 32) {
    bytes_per_sample = 4;
  } else {
    throw FormatError("read_wav: " + path.string() + ": unsupported encoding: format tag " +
                      std::to_string(fmt.format) + " with " +
                      std::to_string(fmt.bits) + " bits (supported: PCM16, float32)");
  }

  const std::size_t frame_bytes = bytes_per_sample * fmt.channels;
  const std::size_t n_frames = payload.size() / frame_bytes;
  AudioClip clip;
  clip.sample_rate = int(fmt.sample_rate);
  clip.channels.assign(fmt.channels, Vec(Eigen::Index(n_frames)));

  const unsigned char* raw = reinterpret_cast<const unsigned char*>(payload.data());
  for (std::size_t i = 0; i < n_frames; ++i) {
    for (std::uint16_t ch = 0; ch < fmt.channels; ++ch) {
      const unsigned char* at = raw + i * frame_bytes + ch * bytes_per_sample;
      double v;
      if (bytes_per_sample == 2) {
        const std::int16_t s = std::int16_t(std::uint16_t(at[0]) |
                                            (std::uint16_t(at[1]) << 8));
        v = double(s) / 32768.0;
      } else {
        std::uint32_t u = 0;
        for (int b = 3; b >= 0; --b) u = (u << 8) | at[b];
        v = double(std::bit_cast<float>(u));
      }
      clip.channels[ch][Eigen::Index(i)] = v;
    }
  }
  return clip;
}

void write_wav(const AudioClip& clip, const std::filesystem::path& path,
               WavEncoding encoding) {
  if (clip.channels.empty() || clip.channels.size() > 2) {
    throw DataError("write_wav: need 1 or 2 channels");
  }
  for (const Vec& ch : clip.channels) {
    if (ch.size() != clip.length()) {
      throw ShapeError("write_wav: channel length mismatch");
    }
  }
  const std::uint16_t channels = std::uint16_t(clip.channels.size());
  const std::uint16_t bits = encoding == WavEncoding::Pcm16 ? 16 : 32;
  const std::uint16_t block = channels * (bits / 8);
  const std::uint32_t data_size = std::uint32_t(clip.length()) * block;

  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("write_wav: cannot open " + path.string());
  }
  out.write("RIFF", 4);
  binio::write_u32(out, 36 + data_size);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  binio::write_u32(out, 16);
  binio::write_u16(out, encoding == WavEncoding::Pcm16 ? kFormatPcm : kFormatFloat);
  binio::write_u16(out, channels);
  binio::write_u32(out, std::uint32_t(clip.sample_rate));
  binio::write_u32(out, std::uint32_t(clip.sample_rate) * block);
  binio::write_u16(out, block);
  binio::write_u16(out, bits);
  out.write("data", 4);
  binio::write_u32(out, data_size);
  for (Eigen::Index i = 0; i < clip.length(); ++i) {
    for (std::uint16_t ch = 0; ch < channels; ++ch) {
      const double v = clip.channels[ch][i];
      if (encoding == WavEncoding::Pcm16) {
        const double scaled = std::clamp(v * 32768.0, -32768.0, 32767.0);
        const std::int16_t s = std::int16_t(std::lrint(scaled));
        binio::write_u16(out, std::uint16_t(s));
      } else {
        binio::write_u32(out, std::bit_cast<std::uint32_t>(float(v)));
      }
    }
  }
  if (!out) {
    throw DataError("write_wav: write failed for " + path.string());
  }
}

// ---------------------------------------------------------------------------
// FFT.

void fft_radix2(std::vector<std::complex<double>>& buf) {
  const std::size_t n = buf.size();
  if (n == 0 || (n & (n - 1)) != 0) {
    throw ShapeError("fft_radix2: size " + std::to_string(n) +
                     " is not a power of two");
  }
  // Bit-reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(buf[i], buf[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = -2.0 * M_PI / double(len);
    const std::complex<double> wn(std::cos(angle), std::sin(angle));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> even = buf[i + k];
        const std::complex<double> odd = buf[i + k + len / 2] * w;
        buf[i + k] = even + odd;
        buf[i + k + len / 2] = even - odd;
        w *= wn;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// MFCC.

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// Triangular filters evaluated at bin center frequencies, n_mels x n_bins.
Mat mel_filterbank(int n_mels, std::size_t nfft, int sample_rate) {
  const std::size_t n_bins = nfft / 2 + 1;
  const double mel_max = hz_to_mel(double(sample_rate) / 2.0);
  std::vector<double> edges(std::size_t(n_mels) + 2);
  for (std::size_t j = 0; j < edges.size(); ++j) {
    edges[j] = mel_to_hz(mel_max * double(j) / double(n_mels + 1));
  }
  Mat fb = Mat::Zero(n_mels, Eigen::Index(n_bins));
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[std::size_t(m)];
    const double mid = edges[std::size_t(m) + 1];
    const double hi = edges[std::size_t(m) + 2];
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = double(k) * sample_rate / double(nfft);
      if (f > lo && f < mid) {
        fb(m, Eigen::Index(k)) = (f - lo) / (mid - lo);
      } else if (f >= mid && f < hi) {
        fb(m, Eigen::Index(k)) = (hi - f) / (hi - mid);
      }
    }
  }
  return fb;
}

/// Orthonormal DCT-II basis, n_ceps x n_mels.
Mat dct_basis(int n_ceps, int n_mels) {
  Mat basis(n_ceps, n_mels);
  const double norm0 = std::sqrt(1.0 / n_mels);
  const double norm = std::sqrt(2.0 / n_mels);
  for (int k = 0; k < n_ceps; ++k) {
    for (int j = 0; j < n_mels; ++j) {
      basis(k, j) = (k == 0 ? norm0 : norm) *
                    std::cos(M_PI * k * (2.0 * j + 1.0) / (2.0 * n_mels));
    }
  }
  return basis;
}

void validate_config(const MfccConfig& cfg) {
  if (cfg.window_ms < cfg.hop_ms || cfg.hop_ms < 1) {
    throw ShapeError("mfcc: window must be >= hop and hop >= 1 ms");
  }
  if (cfg.n_ceps > cfg.n_mels || cfg.n_ceps < 1) {
    throw ShapeError("mfcc: need 1 <= n_ceps <= n_mels");
  }
}

}  // namespace

Mat mfcc_channel(const Vec& samples, int sample_rate, const MfccConfig& cfg) {
  validate_config(cfg);
  const Eigen::Index window = Eigen::Index(sample_rate) * cfg.window_ms / 1000;
  const Eigen::Index hop = Eigen::Index(sample_rate) * cfg.hop_ms / 1000;
  if (samples.size() < window) {
    throw DataError("mfcc_channel: clip of " + std::to_string(samples.size()) +
                    " samples is shorter than one " + std::to_string(window) +
                    "-sample window");
  }

  Vec emphasized(samples.size());
  emphasized[0] = samples[0];
  for (Eigen::Index i = 1; i < samples.size(); ++i) {
    emphasized[i] = samples[i] - cfg.preemph * samples[i - 1];
  }

  Vec hamming(window);
  for (Eigen::Index i = 0; i < window; ++i) {
    hamming[i] = 0.54 - 0.46 * std::cos(2.0 * M_PI * i / double(window - 1));
  }

  const std::size_t nfft = next_pow2(std::size_t(window));
  const std::size_t n_bins = nfft / 2 + 1;
  const Mat fb = mel_filterbank(cfg.n_mels, nfft, sample_rate);
  const Mat dct = dct_basis(cfg.n_ceps, cfg.n_mels);

  const Eigen::Index n_frames = (samples.size() - window) / hop + 1;
  Mat out(n_frames, cfg.n_ceps);
  std::vector<std::complex<double>> buf(nfft);
  Vec power(static_cast<Eigen::Index>(n_bins));
  for (Eigen::Index frame = 0; frame < n_frames; ++frame) {
    const Eigen::Index start = frame * hop;
    for (Eigen::Index i = 0; i < window; ++i) {
      buf[std::size_t(i)] = emphasized[start + i] * hamming[i];
    }
    for (std::size_t i = std::size_t(window); i < nfft; ++i) buf[i] = 0.0;
    fft_radix2(buf);
    for (std::size_t k = 0; k < n_bins; ++k) {
      power[Eigen::Index(k)] = std::norm(buf[k]);
    }
    Vec mel_energy = fb * power;
    Vec log_energy(cfg.n_mels);
    for (int m = 0; m < cfg.n_mels; ++m) {
      log_energy[m] = std::log(std::max(mel_energy[m], cfg.log_floor));
    }
    out.row(frame) = (dct * log_energy).transpose();
  }
  return out;
}

data::FeatureSequence extract_audio_features(const AudioClip& clip,
                                             const MfccConfig& cfg,
                                             const std::string& episode_id) {
  validate_config(cfg);
  if (clip.sample_rate < 1 || clip.channels.empty()) {
    throw DataError("extract_audio_features: empty clip");
  }
  const Eigen::Index T = clip.length() / clip.sample_rate;
  if (T < 1) {
    throw DataError("extract_audio_features: clip shorter than one second");
  }

  // Mono is duplicated so the output is always two channel blocks wide.
  const Vec& left = clip.channels[0];
  const Vec& right = clip.channels.size() > 1 ? clip.channels[1] : left;

  const Eigen::Index hop = Eigen::Index(clip.sample_rate) * cfg.hop_ms / 1000;
  Mat per_channel[2] = {mfcc_channel(left, clip.sample_rate, cfg),
                        mfcc_channel(right, clip.sample_rate, cfg)};

  Mat features = Mat::Zero(T, 2 * cfg.n_ceps);
  for (int ch = 0; ch < 2; ++ch) {
    const Mat& frames = per_channel[ch];
    Eigen::Index frame = 0;
    for (Eigen::Index second = 0; second < T; ++second) {
      Vec acc = Vec::Zero(cfg.n_ceps);
      Eigen::Index count = 0;
      // Frames whose start sample falls inside [second, second + 1).
      while (frame < frames.rows() &&
             frame * hop < (second + 1) * clip.sample_rate) {
        acc += frames.row(frame).transpose();
        ++count;
        ++frame;
      }
      if (count == 0) {
        throw DataError("extract_audio_features: no frames in second " +
                        std::to_string(second));
      }
      features.block(second, ch * cfg.n_ceps, 1, cfg.n_ceps) =
          (acc / double(count)).transpose();
    }
  }

  data::FeatureSequence seq;
  seq.episode_id = episode_id;
  seq.modality = data::Modality::Audio;
  seq.features = std::move(features);
  return seq;
}

}  // namespace viewpulse::mfcc
