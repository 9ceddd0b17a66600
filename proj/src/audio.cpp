#include "vcemo/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>

#include <unsupported/Eigen/FFT>

#include "vcemo/error.hpp"

namespace vcemo {

namespace {

constexpr double kPi = std::numbers::pi;

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u16(std::ostream& out, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  return std::sin(kPi * x) / (kPi * x);
}

std::vector<double> pad_centered(std::span<const double> x, int fft_size) {
  const std::size_t pad = static_cast<std::size_t>(fft_size / 2);
  std::vector<double> padded(x.size() + 2 * pad, 0.0);
  std::copy(x.begin(), x.end(), padded.begin() + static_cast<std::ptrdiff_t>(pad));
  return padded;
}

/// Analysis window of win_length, zero-padded to fft_size and centered.
std::vector<double> framed_window(int fft_size, int win_length) {
  std::vector<double> window(static_cast<std::size_t>(fft_size), 0.0);
  const auto hann = hann_window(win_length);
  const int offset = (fft_size - win_length) / 2;
  for (int i = 0; i < win_length; ++i) window[static_cast<std::size_t>(offset + i)] = hann[static_cast<std::size_t>(i)];
  return window;
}

}  // namespace

void Waveform::validate() const {
  if (samples.empty()) throw Error(Errc::EmptyAudio, "waveform has no samples");
  if (sample_rate <= 0) throw Error(Errc::UnsupportedAudio, "sample rate must be positive");
  for (double v : samples)
    if (!std::isfinite(v)) throw Error(Errc::NonFiniteSample, "waveform contains NaN or Inf");
}

void FrontendConfig::validate() const {
  if (target_rate <= 0 || win_length <= 0 || hop_length <= 0 || fft_size <= 0 || mel_bins < 1 ||
      !(log_floor > 0.0)) {
    throw Error(Errc::InvalidConfig, "frontend parameters must be positive");
  }
  if (win_length > fft_size) throw Error(Errc::InvalidConfig, "win_length must not exceed fft_size");
  if (hop_length > win_length) throw Error(Errc::InvalidConfig, "hop_length must not exceed win_length");
}

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::MissingFile, path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw Error(Errc::UnsupportedAudio, path.string() + " is not a RIFF/WAVE file");
  }

  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t bits = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::size_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min(size, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0 && avail >= 16) {
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = read_u32(chunk + 12);
      bits = read_u16(chunk + 22);
      if (format == 0xFFFE && avail >= 26) format = read_u16(chunk + 8 + 24);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = avail;
    }
    pos = body + size + (size & 1);
  }
  if (data == nullptr || channels == 0 || rate == 0) {
    throw Error(Errc::UnsupportedAudio, path.string() + ": missing fmt or data chunk");
  }
  const bool pcm16 = format == 1 && bits == 16;
  const bool float32 = format == 3 && bits == 32;
  if (!pcm16 && !float32) {
    throw Error(Errc::UnsupportedAudio, path.string() + ": only 16-bit PCM or 32-bit float supported");
  }

  const std::size_t frame_bytes = static_cast<std::size_t>(bits / 8) * channels;
  const std::size_t frames = data_size / frame_bytes;
  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + i * frame_bytes + c * (bits / 8);
      if (pcm16) {
        acc += static_cast<std::int16_t>(read_u16(p)) / 32768.0;
      } else {
        float f;
        std::uint32_t u = read_u32(p);
        std::memcpy(&f, &u, 4);
        acc += f;
      }
    }
    w.samples[i] = acc / channels;
  }
  return w;
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  const auto n = static_cast<std::uint32_t>(w.samples.size());
  out.write("RIFF", 4);
  put_u32(out, 36 + 2 * n);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.write("data", 4);
  put_u32(out, 2 * n);
  for (double v : w.samples) {
    const double c = std::clamp(v, -1.0, 1.0);
    const long q = std::clamp<long>(std::lround(c * 32768.0), -32768, 32767);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
}

std::vector<double> resample_ratio(std::span<const double> x, double ratio) {
  if (!(ratio > 0.0)) throw Error(Errc::InvalidConfig, "resample ratio must be positive");
  const auto n_out = static_cast<std::size_t>(std::llround(static_cast<double>(x.size()) * ratio));
  if (std::abs(ratio - 1.0) < 1e-12) return std::vector<double>(x.begin(), x.end());

  constexpr double kZeroCrossings = 16.0;
  const double cutoff = std::min(1.0, ratio);
  const double half_width = kZeroCrossings / cutoff;
  const auto n_in = static_cast<std::ptrdiff_t>(x.size());
  std::vector<double> y(n_out, 0.0);
  for (std::size_t j = 0; j < n_out; ++j) {
    const double center = static_cast<double>(j) / ratio;
    const auto lo = static_cast<std::ptrdiff_t>(std::ceil(center - half_width));
    const auto hi = static_cast<std::ptrdiff_t>(std::floor(center + half_width));
    double acc = 0.0;
    for (std::ptrdiff_t i = std::max<std::ptrdiff_t>(lo, 0); i <= std::min(hi, n_in - 1); ++i) {
      const double t = static_cast<double>(i) - center;
      const double window = 0.5 + 0.5 * std::cos(kPi * t / half_width);
      acc += x[static_cast<std::size_t>(i)] * cutoff * sinc(cutoff * t) * window;
    }
    y[j] = acc;
  }
  return y;
}

Waveform resample(const Waveform& w, int target_rate) {
  if (target_rate <= 0) throw Error(Errc::InvalidConfig, "target rate must be positive");
  if (w.sample_rate == target_rate) return w;
  Waveform out;
  out.sample_rate = target_rate;
  out.samples = resample_ratio(w.samples, static_cast<double>(target_rate) / w.sample_rate);
  return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_center_frequencies(int mel_bins, int sample_rate) {
  const double top = hz_to_mel(sample_rate / 2.0);
  std::vector<double> centers(static_cast<std::size_t>(mel_bins));
  for (int m = 0; m < mel_bins; ++m) centers[static_cast<std::size_t>(m)] = mel_to_hz(top * (m + 1) / (mel_bins + 1));
  return centers;
}

Matrix mel_filterbank(int mel_bins, int fft_size, int sample_rate) {
  const int bins = fft_size / 2 + 1;
  const double top = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(static_cast<std::size_t>(mel_bins + 2));
  for (int m = 0; m < mel_bins + 2; ++m) edges[static_cast<std::size_t>(m)] = mel_to_hz(top * m / (mel_bins + 1));
  Matrix fb = Matrix::Zero(mel_bins, bins);
  for (int m = 0; m < mel_bins; ++m) {
    const double lower = edges[static_cast<std::size_t>(m)];
    const double center = edges[static_cast<std::size_t>(m + 1)];
    const double upper = edges[static_cast<std::size_t>(m + 2)];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / fft_size;
      const double rise = (f - lower) / (center - lower);
      const double fall = (upper - f) / (upper - center);
      fb(m, k) = std::max(0.0, std::min(rise, fall));
    }
  }
  return fb;
}

std::vector<double> hann_window(int length) {
  std::vector<double> w(static_cast<std::size_t>(length));
  for (int i = 0; i < length; ++i) w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / length);
  return w;
}

Eigen::MatrixXcd stft(std::span<const double> x, int fft_size, int hop, int win_length) {
  const auto padded = pad_centered(x, fft_size);
  const auto window = framed_window(fft_size, win_length);
  const Index frames = 1 + static_cast<Index>(x.size()) / hop;
  const Index bins = fft_size / 2 + 1;

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  Eigen::MatrixXcd spec(bins, frames);
  std::vector<double> frame(static_cast<std::size_t>(fft_size));
  std::vector<std::complex<double>> out;
  for (Index t = 0; t < frames; ++t) {
    const std::size_t start = static_cast<std::size_t>(t * hop);
    for (int i = 0; i < fft_size; ++i) {
      frame[static_cast<std::size_t>(i)] = padded[start + static_cast<std::size_t>(i)] * window[static_cast<std::size_t>(i)];
    }
    fft.fwd(out, frame);
    for (Index k = 0; k < bins; ++k) spec(k, t) = out[static_cast<std::size_t>(k)];
  }
  return spec;
}

std::vector<double> istft(const Eigen::MatrixXcd& spec, int fft_size, int hop, int win_length,
                          std::size_t length) {
  const auto window = framed_window(fft_size, win_length);
  const Index frames = spec.cols();
  const std::size_t total = static_cast<std::size_t>(fft_size + hop * (frames - 1));
  std::vector<double> y(total, 0.0);
  std::vector<double> norm(total, 0.0);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<std::complex<double>> half(static_cast<std::size_t>(spec.rows()));
  std::vector<double> frame;
  for (Index t = 0; t < frames; ++t) {
    for (Index k = 0; k < spec.rows(); ++k) half[static_cast<std::size_t>(k)] = spec(k, t);
    fft.inv(frame, half, fft_size);
    const std::size_t start = static_cast<std::size_t>(t * hop);
    for (int i = 0; i < fft_size; ++i) {
      const auto wi = window[static_cast<std::size_t>(i)];
      y[start + static_cast<std::size_t>(i)] += frame[static_cast<std::size_t>(i)] * wi;
      norm[start + static_cast<std::size_t>(i)] += wi * wi;
    }
  }
  const std::size_t offset = static_cast<std::size_t>(fft_size / 2);
  std::vector<double> out(length, 0.0);
  for (std::size_t i = 0; i < length && offset + i < total; ++i) {
    const double nrm = norm[offset + i];
    out[i] = nrm > 1e-10 ? y[offset + i] / nrm : 0.0;
  }
  return out;
}

Matrix power_spectrogram(std::span<const double> x, const FrontendConfig& cfg) {
  const auto spec = stft(x, cfg.fft_size, cfg.hop_length, cfg.win_length);
  return spec.cwiseAbs2().transpose();
}

MelSpectrogram compute_mel_spectrogram(const Waveform& w, const FrontendConfig& cfg) {
  cfg.validate();
  w.validate();
  const Waveform audio = resample(w, cfg.target_rate);
  const Matrix power = power_spectrogram(audio.samples, cfg);
  const Matrix fb = mel_filterbank(cfg.mel_bins, cfg.fft_size, cfg.target_rate);
  Matrix energy = power * fb.transpose();
  if (energy.minCoeff() < 0.0) throw Error(Errc::NonFiniteSample, "negative mel energy");

  MelSpectrogram mel;
  mel.values = (energy.array() + cfg.log_floor).log().matrix();
  mel.frame_hop_s = static_cast<double>(cfg.hop_length) / cfg.target_rate;
  mel.params = cfg;
  return mel;
}

}  // namespace vcemo
