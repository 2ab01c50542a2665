#pragma once

// Log mel-filterbank feature extraction: Hann window, magnitude spectrum,
// triangular mel filters (HTK mel scale), energy floor, natural log.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "madi/audio.hpp"
#include "madi/fft.hpp"

namespace madi {

struct FbankConfig {
  std::size_t num_bins = 80;
  double frame_length = 0.025;  // seconds
  double frame_shift = 0.010;   // seconds
  double energy_floor = 1e-10;
};

struct FeatureSequence {
  std::vector<double> frames;  // T x F row-major
  std::size_t num_frames = 0;
  std::size_t num_bins = 0;
  double frame_shift = 0.010;
  double frame_length = 0.025;

  double at(std::size_t t, std::size_t f) const {
    return frames[t * num_bins + f];
  }
};

inline double hz_to_mel(double hz) {
  return 2595.0 * std::log10(1.0 + hz / 700.0);
}
inline double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

// Triangular mel filterbank over FFT bins [0, fft_size/2], spanning 0 Hz to
// Nyquist. Returns num_bins rows of fft_size/2+1 weights each.
inline std::vector<std::vector<double>> mel_filterbank(std::size_t num_bins,
                                                       std::size_t fft_size,
                                                       double sample_rate) {
  std::size_t spec_bins = fft_size / 2 + 1;
  double nyquist = sample_rate / 2.0;
  double mel_lo = hz_to_mel(0.0), mel_hi = hz_to_mel(nyquist);
  std::vector<double> centers_hz(num_bins + 2);
  for (std::size_t i = 0; i < num_bins + 2; ++i)
    centers_hz[i] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (num_bins + 1.0));
  std::vector<std::vector<double>> filters(num_bins,
                                           std::vector<double>(spec_bins, 0.0));
  for (std::size_t m = 0; m < num_bins; ++m) {
    double lo = centers_hz[m], c = centers_hz[m + 1], hi = centers_hz[m + 2];
    for (std::size_t k = 0; k < spec_bins; ++k) {
      double f = k * sample_rate / static_cast<double>(fft_size);
      if (f > lo && f < c)
        filters[m][k] = (f - lo) / (c - lo);
      else if (f >= c && f < hi)
        filters[m][k] = (hi - f) / (hi - c);
    }
  }
  return filters;
}

inline std::vector<double> mel_filter_centers_hz(std::size_t num_bins,
                                                 double sample_rate) {
  double mel_hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> centers(num_bins);
  for (std::size_t m = 0; m < num_bins; ++m)
    centers[m] = mel_to_hz(mel_hi * (m + 1.0) / (num_bins + 1.0));
  return centers;
}

inline FeatureSequence compute_fbank(const Waveform& w,
                                     const FbankConfig& cfg = {}) {
  std::size_t win = static_cast<std::size_t>(
      std::lround(cfg.frame_length * w.sample_rate));
  std::size_t hop = static_cast<std::size_t>(
      std::lround(cfg.frame_shift * w.sample_rate));
  if (win == 0 || hop == 0)
    throw std::invalid_argument("compute_fbank: degenerate frame config");
  if (w.samples.size() < win)
    throw std::invalid_argument(
        "compute_fbank: utterance shorter than one window");

  std::size_t num_frames = 1 + (w.samples.size() - win) / hop;
  std::size_t fft_size = next_pow2(win);
  auto filters = mel_filterbank(cfg.num_bins, fft_size, w.sample_rate);

  std::vector<double> hann(win);
  for (std::size_t i = 0; i < win; ++i)
    hann[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / (win - 1.0));

  FeatureSequence out;
  out.num_frames = num_frames;
  out.num_bins = cfg.num_bins;
  out.frame_shift = cfg.frame_shift;
  out.frame_length = cfg.frame_length;
  out.frames.resize(num_frames * cfg.num_bins);

  std::vector<double> frame(win);
  for (std::size_t t = 0; t < num_frames; ++t) {
    for (std::size_t i = 0; i < win; ++i)
      frame[i] = w.samples[t * hop + i] * hann[i];
    auto mag = magnitude_spectrum(frame, fft_size);
    for (std::size_t b = 0; b < cfg.num_bins; ++b) {
      double e = 0.0;
      for (std::size_t k = 0; k < mag.size(); ++k) e += filters[b][k] * mag[k];
      out.frames[t * cfg.num_bins + b] =
          std::log(std::max(e, cfg.energy_floor));
    }
  }
  return out;
}

}  // namespace madi
