#include <algorithm>
#include <cmath>
#include <numbers>

#include "vcemo/audio.hpp"
#include "vcemo/error.hpp"

namespace vcemo {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_phase(double x) { return x - kTwoPi * std::round(x / kTwoPi); }

Eigen::MatrixXcd phase_vocoder(const Eigen::MatrixXcd& spec, double rate, int hop, int fft_size) {
  const Index bins = spec.rows();
  const Index frames = spec.cols();
  std::vector<double> steps;
  for (double s = 0.0; s < static_cast<double>(frames); s += rate) steps.push_back(s);

  Eigen::MatrixXcd padded = Eigen::MatrixXcd::Zero(bins, frames + 2);
  padded.leftCols(frames) = spec;

  Eigen::VectorXd advance(bins);
  for (Index k = 0; k < bins; ++k) advance(k) = kTwoPi * hop * static_cast<double>(k) / fft_size;

  Eigen::VectorXd phase(bins);
  for (Index k = 0; k < bins; ++k) phase(k) = std::arg(spec(k, 0));

  Eigen::MatrixXcd out(bins, static_cast<Index>(steps.size()));
  for (std::size_t t = 0; t < steps.size(); ++t) {
    const auto left = static_cast<Index>(steps[t]);
    const double alpha = steps[t] - static_cast<double>(left);
    for (Index k = 0; k < bins; ++k) {
      const auto a = padded(k, left);
      const auto b = padded(k, left + 1);
      const double mag = (1.0 - alpha) * std::abs(a) + alpha * std::abs(b);
      out(k, static_cast<Index>(t)) = std::polar(mag, phase(k));
      const double dphase = wrap_phase(std::arg(b) - std::arg(a) - advance(k));
      phase(k) += advance(k) + dphase;
    }
  }
  return out;
}

}  // namespace

Waveform add_noise_snr(const Waveform& w, double snr_db, std::mt19937_64& rng, bool clip) {
  w.validate();
  double power = 0.0;
  for (double v : w.samples) power += v * v;
  power /= static_cast<double>(w.samples.size());
  if (power <= 0.0) throw Error(Errc::SilentSignal, "signal power is zero; SNR undefined");

  const double noise_std = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
  std::normal_distribution<double> noise(0.0, noise_std);
  Waveform out = w;
  for (double& v : out.samples) {
    v += noise(rng);
    if (clip) v = std::clamp(v, -1.0, 1.0);
  }
  return out;
}

Waveform time_stretch(const Waveform& w, double rate, const VocoderConfig& cfg) {
  if (!(rate >= 0.5 && rate <= 2.0)) {
    throw Error(Errc::OutOfRangeRate, "stretch rate must lie in [0.5, 2], got " + std::to_string(rate));
  }
  w.validate();
  const auto length = static_cast<std::size_t>(std::llround(static_cast<double>(w.samples.size()) / rate));
  Waveform out;
  out.sample_rate = w.sample_rate;
  if (rate == 1.0) {
    out.samples = w.samples;
    return out;
  }
  const auto spec = stft(w.samples, cfg.fft_size, cfg.hop, cfg.fft_size);
  const auto stretched = phase_vocoder(spec, rate, cfg.hop, cfg.fft_size);
  out.samples = istft(stretched, cfg.fft_size, cfg.hop, cfg.fft_size, length);
  return out;
}

Waveform pitch_shift(const Waveform& w, double semitones, const VocoderConfig& cfg) {
  if (!(std::abs(semitones) <= 12.0)) {
    throw Error(Errc::OutOfRangeShift, "pitch shift must lie in [-12, 12] semitones, got " +
                                           std::to_string(semitones));
  }
  w.validate();
  if (semitones == 0.0) return w;
  // Stretch by 1/factor (pitch kept), then resample by 1/factor so the
  // duration returns to the original and every frequency scales by factor.
  const double factor = std::pow(2.0, semitones / 12.0);
  const Waveform stretched = time_stretch(w, 1.0 / factor, cfg);
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples = resample_ratio(stretched.samples, 1.0 / factor);
  out.samples.resize(w.samples.size(), 0.0);
  return out;
}

AugmentDraw draw_augmentation(const AugmentPolicy& policy, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AugmentDraw draw;
  // Every draw consumes the same number of variates so later draws stay aligned.
  const double u_noise = unit(rng);
  const double u_pitch = unit(rng);
  const double v_pitch = unit(rng);
  const double u_stretch = unit(rng);
  const double v_stretch = unit(rng);
  draw.noise = policy.noise.enabled && u_noise < policy.noise.probability;
  draw.pitch = policy.pitch.enabled && u_pitch < policy.pitch.probability;
  if (draw.pitch) {
    draw.semitones = policy.pitch.min_semitones +
                     v_pitch * (policy.pitch.max_semitones - policy.pitch.min_semitones);
  }
  draw.stretch = policy.stretch.enabled && u_stretch < policy.stretch.probability;
  if (draw.stretch) {
    draw.rate = policy.stretch.min_rate + v_stretch * (policy.stretch.max_rate - policy.stretch.min_rate);
  }
  return draw;
}

Waveform apply_augmentation(const Waveform& w, const AugmentDraw& draw, const AugmentPolicy& policy,
                            std::mt19937_64& rng) {
  Waveform out = w;
  if (draw.noise) out = add_noise_snr(out, policy.noise.snr_db, rng);
  if (draw.pitch) out = pitch_shift(out, draw.semitones);
  if (draw.stretch) out = time_stretch(out, draw.rate);
  return out;
}

Waveform augment(const Waveform& w, const AugmentPolicy& policy, std::mt19937_64& rng) {
  const AugmentDraw draw = draw_augmentation(policy, rng);
  return apply_augmentation(w, draw, policy, rng);
}

}  // namespace vcemo
