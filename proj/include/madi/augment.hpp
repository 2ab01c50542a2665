#pragma once

// Waveform-level augmentations producing the second contrastive view:
// pitch randomization (plain resampling), synthetic reverberation, and
// temporal masking. All are pure functions of (input, parameters, seed).

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "madi/audio.hpp"
#include "madi/util.hpp"

namespace madi {

struct AugmentConfig {
  double pitch_factor_lo = 0.9;
  double pitch_factor_hi = 1.1;
  double reverb_decay = 0.2;  // seconds
  double reverb_wet = 0.3;
  std::size_t mask_count = 2;
  double mask_span = 0.05;  // seconds
};

// Resampling-based pitch scaling: a tone at f moves to f*factor and the
// length shrinks to round(len/factor).
inline Waveform augment_pitch(const Waveform& w, double factor) {
  if (factor <= 0.0)
    throw std::invalid_argument("augment_pitch: factor must be > 0");
  if (factor == 1.0) return w;
  std::size_t out_len = static_cast<std::size_t>(
      std::lround(static_cast<double>(w.samples.size()) / factor));
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.resize(out_len);
  for (std::size_t i = 0; i < out_len; ++i) {
    double pos = i * factor;
    auto i0 = static_cast<std::size_t>(pos);
    double frac = pos - i0;
    double a = i0 < w.samples.size() ? w.samples[i0] : 0.0;
    double b = i0 + 1 < w.samples.size() ? w.samples[i0 + 1] : 0.0;
    out.samples[i] = a + frac * (b - a);
  }
  return out;
}

// Impulse response: unit first tap followed by exponentially decaying
// seeded noise. `decay` is the envelope time constant in seconds.
inline std::vector<double> make_reverb_ir(double decay, int sample_rate,
                                          Rng& rng) {
  if (decay <= 0.0)
    throw std::invalid_argument("make_reverb_ir: decay must be > 0");
  auto len = static_cast<std::size_t>(std::lround(3.0 * decay * sample_rate));
  len = std::max<std::size_t>(len, 1);
  std::vector<double> ir(len);
  ir[0] = 1.0;
  double tc = decay * sample_rate;
  for (std::size_t i = 1; i < len; ++i)
    ir[i] = 0.3 * rng.gaussian() * std::exp(-static_cast<double>(i) / tc);
  return ir;
}

inline Waveform augment_reverb(const Waveform& w, const std::vector<double>& ir,
                               double wet) {
  if (wet < 0.0 || wet > 1.0)
    throw std::invalid_argument("augment_reverb: wet must be in [0,1]");
  if (wet == 0.0 || ir.empty()) return w;
  std::size_t n = w.samples.size();
  std::vector<double> conv(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    std::size_t kmax = std::min(ir.size(), i + 1);
    for (std::size_t k = 0; k < kmax; ++k) acc += ir[k] * w.samples[i - k];
    conv[i] = acc;
  }
  double peak_in = 0.0, peak_out = 0.0;
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.samples[i] = (1.0 - wet) * w.samples[i] + wet * conv[i];
    peak_in = std::max(peak_in, std::abs(w.samples[i]));
    peak_out = std::max(peak_out, std::abs(out.samples[i]));
  }
  if (peak_out > 0.0 && peak_in > 0.0) {
    double g = peak_in / peak_out;
    for (auto& s : out.samples) s *= g;
  }
  return out;
}

inline Waveform augment_reverb(const Waveform& w, double decay, double wet,
                               Rng& rng) {
  auto ir = make_reverb_ir(decay, w.sample_rate, rng);
  return augment_reverb(w, ir, wet);
}

// Zeroes the samples inside each [start, end) span.
inline Waveform augment_temporal_mask(
    const Waveform& w,
    const std::vector<std::pair<std::size_t, std::size_t>>& spans) {
  for (const auto& [s, e] : spans)
    if (s > e || e > w.samples.size())
      throw std::invalid_argument("augment_temporal_mask: span out of range");
  Waveform out = w;
  for (const auto& [s, e] : spans)
    std::fill(out.samples.begin() + s, out.samples.begin() + e, 0.0);
  return out;
}

// Draws `count` non-overlapping spans of `span_len` samples.
inline std::vector<std::pair<std::size_t, std::size_t>> draw_mask_spans(
    std::size_t total_len, std::size_t count, std::size_t span_len, Rng& rng) {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  if (count == 0 || span_len == 0 || span_len > total_len) return spans;
  for (std::size_t attempt = 0; attempt < count * 20 && spans.size() < count;
       ++attempt) {
    auto start = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(total_len - span_len)));
    std::size_t end = start + span_len;
    bool overlaps = false;
    for (const auto& [s, e] : spans)
      if (start < e && s < end) overlaps = true;
    if (!overlaps) spans.emplace_back(start, end);
  }
  std::sort(spans.begin(), spans.end());
  return spans;
}

// Pitch, then reverb, then temporal masking, all parameters drawn from the
// provided rng. Deterministic given the rng seed.
inline Waveform augment_chain(const Waveform& w, const AugmentConfig& cfg,
                              Rng& rng) {
  if (cfg.pitch_factor_lo > cfg.pitch_factor_hi || cfg.pitch_factor_lo <= 0.0)
    throw std::invalid_argument("augment_chain: bad pitch factor range");
  double factor = rng.uniform(cfg.pitch_factor_lo, cfg.pitch_factor_hi);
  Waveform out = augment_pitch(w, factor);
  if (cfg.reverb_wet > 0.0)
    out = augment_reverb(out, cfg.reverb_decay, cfg.reverb_wet, rng);
  if (cfg.mask_count > 0) {
    auto span_len = static_cast<std::size_t>(
        std::lround(cfg.mask_span * w.sample_rate));
    auto spans =
        draw_mask_spans(out.samples.size(), cfg.mask_count, span_len, rng);
    out = augment_temporal_mask(out, spans);
  }
  return out;
}

}  // namespace madi
