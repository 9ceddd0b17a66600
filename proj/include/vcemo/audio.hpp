#pragma once

#include <complex>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "vcemo/autograd.hpp"

namespace vcemo {

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
  /// Throws EmptyAudio / NonFiniteSample.
  void validate() const;
};

struct FrontendConfig {
  int target_rate = 16000;
  int win_length = 400;
  int hop_length = 160;
  int fft_size = 512;
  int mel_bins = 80;
  double log_floor = 1e-6;

  void validate() const;
  bool operator==(const FrontendConfig&) const = default;
};

struct MelSpectrogram {
  Matrix values;  // frames x mel_bins, natural-log energies
  double frame_hop_s = 0.0;
  FrontendConfig params;

  Index frames() const { return values.rows(); }
  Index bins() const { return values.cols(); }
};

/// Reads RIFF/WAVE with 16-bit PCM or 32-bit float samples. Multi-channel
/// audio is downmixed by averaging.
Waveform read_wav(const std::filesystem::path& path);
/// Writes mono 16-bit PCM; samples are clipped to [-1, 1].
void write_wav(const std::filesystem::path& path, const Waveform& w);

/// Band-limited (windowed-sinc) resampling by an arbitrary ratio
/// out_rate / in_rate. Output length is round(n * ratio).
std::vector<double> resample_ratio(std::span<const double> x, double ratio);
Waveform resample(const Waveform& w, int target_rate);

double hz_to_mel(double hz);
double mel_to_hz(double mel);
/// Triangular filters with unit peak on the HTK mel scale, spanning
/// 0..sample_rate/2. Shape mel_bins x (fft_size/2 + 1).
Matrix mel_filterbank(int mel_bins, int fft_size, int sample_rate);
/// Center frequency in Hz of each mel filter.
std::vector<double> mel_center_frequencies(int mel_bins, int sample_rate);

/// Periodic Hann window of `length` samples.
std::vector<double> hann_window(int length);

/// Complex STFT with centered (zero-padded) frames. Result is
/// (fft_size/2 + 1) x frames.
Eigen::MatrixXcd stft(std::span<const double> x, int fft_size, int hop, int win_length);
/// Inverse of stft() by windowed overlap-add, trimmed/padded to `length`.
std::vector<double> istft(const Eigen::MatrixXcd& spec, int fft_size, int hop, int win_length,
                          std::size_t length);

/// Power spectrum |X|^2 of every centered frame: frames x (fft_size/2 + 1).
Matrix power_spectrogram(std::span<const double> x, const FrontendConfig& cfg);

MelSpectrogram compute_mel_spectrogram(const Waveform& w, const FrontendConfig& cfg = {});

// Augmentations. All keep the input sample rate.

/// Adds zero-mean Gaussian noise at the requested signal-to-noise ratio.
/// The result is clipped to [-1, 1] unless `clip` is false.
Waveform add_noise_snr(const Waveform& w, double snr_db, std::mt19937_64& rng, bool clip = true);

struct VocoderConfig {
  int fft_size = 2048;
  int hop = 512;
};

/// Phase-vocoder time stretch; output length round(n / rate), pitch kept.
Waveform time_stretch(const Waveform& w, double rate, const VocoderConfig& cfg = {});
/// Stretch followed by resampling; duration kept, pitch scaled by
/// 2^(semitones / 12).
Waveform pitch_shift(const Waveform& w, double semitones, const VocoderConfig& cfg = {});

struct AugmentPolicy {
  struct Noise {
    bool enabled = false;
    double probability = 1.0;
    double snr_db = 30.0;
  } noise;
  struct Pitch {
    bool enabled = false;
    double probability = 1.0;
    double min_semitones = -2.0;
    double max_semitones = 2.0;
  } pitch;
  struct Stretch {
    bool enabled = false;
    double probability = 1.0;
    double min_rate = 0.9;
    double max_rate = 1.1;
  } stretch;

  bool any_enabled() const { return noise.enabled || pitch.enabled || stretch.enabled; }
};

/// Parameters sampled for one augmentation call.
struct AugmentDraw {
  bool noise = false;
  bool pitch = false;
  double semitones = 0.0;
  bool stretch = false;
  double rate = 1.0;
};

AugmentDraw draw_augmentation(const AugmentPolicy& policy, std::mt19937_64& rng);
/// Applies the drawn transforms in the order noise, pitch, stretch.
Waveform apply_augmentation(const Waveform& w, const AugmentDraw& draw, const AugmentPolicy& policy,
                            std::mt19937_64& rng);
Waveform augment(const Waveform& w, const AugmentPolicy& policy, std::mt19937_64& rng);

}  // namespace vcemo
