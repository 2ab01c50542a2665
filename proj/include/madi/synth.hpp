#pragma once

// Seeded two-domain synthetic corpus. Each character has a fixed acoustic
// signature (a small sum of sinusoids); the word separator renders as
// silence. The target domain differs from the source by a fixed FIR channel
// and additive noise at a configured SNR.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "madi/audio.hpp"
#include "madi/symbols.hpp"
#include "madi/util.hpp"

namespace madi {

enum class NoiseKind { None, Rain, Wind, Laughter };

inline std::string to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::None: return "none";
    case NoiseKind::Rain: return "rain";
    case NoiseKind::Wind: return "wind";
    case NoiseKind::Laughter: return "laughter";
  }
  throw std::invalid_argument("unknown noise kind");
}

inline NoiseKind noise_kind_from_string(const std::string& s) {
  if (s == "none") return NoiseKind::None;
  if (s == "rain") return NoiseKind::Rain;
  if (s == "wind") return NoiseKind::Wind;
  if (s == "laughter") return NoiseKind::Laughter;
  throw std::invalid_argument("unknown noise kind: " + s);
}

struct DomainShift {
  std::vector<double> fir_taps{1.0};  // identity channel by default
  NoiseKind noise = NoiseKind::None;
  double snr_db = 10.0;

  bool is_identity() const {
    return fir_taps == std::vector<double>{1.0} && noise == NoiseKind::None;
  }
};

struct CorpusConfig {
  std::size_t num_characters = 6;  // excluding the word separator
  std::size_t lexicon_size = 20;
  std::size_t word_len_lo = 2, word_len_hi = 4;
  std::size_t words_lo = 2, words_hi = 4;
  std::size_t source_count = 200;
  std::size_t source_test_count = 50;
  std::size_t target_count = 200;
  std::size_t target_test_count = 100;
  double segment_lo = 0.05, segment_hi = 0.09;  // seconds per character
  int sample_rate = 16000;
  DomainShift shift;
  std::uint64_t seed = 1;

  void validate() const {
    if (num_characters < 3)
      throw std::invalid_argument("CorpusConfig: need at least 3 characters");
    if (segment_lo <= 0.0 || segment_hi < segment_lo)
      throw std::invalid_argument("CorpusConfig: bad segment range");
    if (word_len_lo == 0 || word_len_hi < word_len_lo || words_lo == 0 ||
        words_hi < words_lo)
      throw std::invalid_argument("CorpusConfig: bad word/utterance ranges");
    if (!std::isfinite(shift.snr_db))
      throw std::invalid_argument("CorpusConfig: SNR must be finite");
    double worst = words_hi * (word_len_hi + 1) * segment_hi;
    if (worst >= 17.5)
      throw std::invalid_argument(
          "CorpusConfig: utterances may exceed the 17.5 s duration cap");
  }
};

struct Utterance {
  std::string id;
  Waveform wave;
  std::vector<std::string> transcript;  // words over the lexicon
  std::string domain;                   // "source" or "target"
};

// Target-train view handed to adaptation: deliberately has no transcript
// field, so no code path can read target labels during training.
struct UnlabeledUtterance {
  std::string id;
  Waveform wave;
  std::string domain;

  static UnlabeledUtterance from(const Utterance& u) {
    return UnlabeledUtterance{u.id, u.wave, u.domain};
  }
};

struct Corpus {
  SymbolTable symbols;
  std::vector<std::string> lexicon;
  CorpusConfig config;
  std::vector<Utterance> source_train, source_test, target_train, target_test;
};

// Symbol-id transcript: word characters joined by the separator symbol.
inline std::vector<int> transcript_symbols(
    const SymbolTable& symbols, const std::vector<std::string>& words) {
  std::vector<int> out;
  for (std::size_t w = 0; w < words.size(); ++w) {
    if (w > 0) out.push_back(symbols.separator_id);
    for (char c : words[w]) out.push_back(symbols.id_of(std::string(1, c)));
  }
  return out;
}

inline std::vector<std::string> symbols_to_words(const SymbolTable& symbols,
                                                 const std::vector<int>& ids) {
  std::vector<std::string> words;
  std::string current;
  for (int id : ids) {
    if (id == symbols.separator_id) {
      words.push_back(current);
      current.clear();
    } else {
      current += symbols.name_of(id);
    }
  }
  words.push_back(current);
  // drop empties produced by stray separators
  words.erase(std::remove(words.begin(), words.end(), std::string()),
              words.end());
  return words;
}

// Per-character sinusoid signatures, fixed by the corpus seed.
class CharacterVoices {
 public:
  CharacterVoices(const SymbolTable& symbols, std::uint64_t seed) {
    Rng rng = Rng::seeded(seed ^ 0x766f696365736565ULL);
    for (std::size_t id = 0; id < symbols.num_characters(); ++id) {
      std::vector<double> freqs;
      if (static_cast<int>(id) != symbols.separator_id) {
        auto n = static_cast<std::size_t>(rng.uniform_int(2, 3));
        for (std::size_t k = 0; k < n; ++k)
          freqs.push_back(rng.uniform(0.04, 0.42));  // fraction of sample rate
      }
      freqs_.push_back(freqs);  // empty -> silence (separator)
    }
  }

  // Renders one character segment of the given duration.
  void render(int id, double seconds, Rng& rng, Waveform& out) const {
    const auto& freqs = freqs_.at(static_cast<std::size_t>(id));
    auto n = static_cast<std::size_t>(std::lround(seconds * out.sample_rate));
    std::size_t start = out.samples.size();
    out.samples.resize(start + n, 0.0);
    if (freqs.empty()) return;  // separator: silence
    double amp = 0.55 / static_cast<double>(freqs.size());
    for (double frac : freqs) {
      double omega = 2.0 * M_PI * frac;  // per-sample phase increment * rate
      double phase = rng.uniform(0.0, 2.0 * M_PI);
      for (std::size_t i = 0; i < n; ++i) {
        double env = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / (n - 1.0));
        out.samples[start + i] += amp * env * std::sin(phase + omega * i);
      }
    }
  }

 private:
  std::vector<std::vector<double>> freqs_;
};

inline Waveform apply_fir(const Waveform& w, const std::vector<double>& taps) {
  if (taps.empty()) throw std::invalid_argument("apply_fir: empty taps");
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.assign(w.samples.size(), 0.0);
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    double acc = 0.0;
    std::size_t kmax = std::min(taps.size(), i + 1);
    for (std::size_t k = 0; k < kmax; ++k) acc += taps[k] * w.samples[i - k];
    out.samples[i] = acc;
  }
  return out;
}

inline std::vector<double> make_noise(NoiseKind kind, std::size_t n, int rate,
                                      Rng& rng) {
  std::vector<double> noise(n, 0.0);
  switch (kind) {
    case NoiseKind::None:
      break;
    case NoiseKind::Rain: {
      // band-limited: white noise, first difference, then 3-tap smoothing
      std::vector<double> white(n);
      for (auto& x : white) x = rng.gaussian();
      for (std::size_t i = 1; i < n; ++i) {
        double hp = white[i] - white[i - 1];
        noise[i] = 0.5 * noise[i - 1] + 0.5 * hp;
      }
      break;
    }
    case NoiseKind::Wind: {
      // heavy one-pole lowpass with slow amplitude modulation
      double state = 0.0;
      double mod_rate = 2.0 * M_PI * 0.7 / rate;
      double mod_phase = rng.uniform(0.0, 2.0 * M_PI);
      for (std::size_t i = 0; i < n; ++i) {
        state = 0.995 * state + 0.05 * rng.gaussian();
        noise[i] = state * (0.6 + 0.4 * std::sin(mod_phase + mod_rate * i));
      }
      break;
    }
    case NoiseKind::Laughter: {
      // burst trains: gated band noise with random burst spacing
      std::size_t i = 0;
      while (i < n) {
        auto gap = static_cast<std::size_t>(rng.uniform(0.05, 0.25) * rate);
        auto burst = static_cast<std::size_t>(rng.uniform(0.04, 0.12) * rate);
        i += gap;
        double state = 0.0;
        for (std::size_t k = 0; k < burst && i < n; ++k, ++i) {
          state = 0.9 * state + 0.3 * rng.gaussian();
          double env = std::sin(M_PI * k / static_cast<double>(burst));
          noise[i] = env * state;
        }
      }
      break;
    }
  }
  return noise;
}

inline Waveform apply_domain_shift(const Waveform& w, const DomainShift& shift,
                                   Rng& rng) {
  Waveform out = apply_fir(w, shift.fir_taps);
  if (shift.noise != NoiseKind::None) {
    auto noise = make_noise(shift.noise, out.samples.size(), out.sample_rate, rng);
    double ps = 0.0, pn = 0.0;
    for (double s : out.samples) ps += s * s;
    for (double s : noise) pn += s * s;
    if (pn > 0.0 && ps > 0.0) {
      double gain = std::sqrt(ps / (pn * std::pow(10.0, shift.snr_db / 10.0)));
      for (std::size_t i = 0; i < out.samples.size(); ++i)
        out.samples[i] += gain * noise[i];
    }
  }
  // keep within PCM16 range
  double peak = 0.0;
  for (double s : out.samples) peak = std::max(peak, std::abs(s));
  if (peak > 0.99) {
    double g = 0.99 / peak;
    for (auto& s : out.samples) s *= g;
  }
  return out;
}

// Renders the clean (source-style) waveform for a transcript.
inline Waveform synthesize_clean(const SymbolTable& symbols,
                                 const CharacterVoices& voices,
                                 const std::vector<std::string>& words,
                                 const std::vector<std::string>& lexicon,
                                 const CorpusConfig& cfg, Rng& rng) {
  for (const auto& w : words)
    if (std::find(lexicon.begin(), lexicon.end(), w) == lexicon.end())
      throw std::invalid_argument("synthesize: word not in lexicon: " + w);
  Waveform out;
  out.sample_rate = cfg.sample_rate;
  for (int id : transcript_symbols(symbols, words)) {
    double seconds = rng.uniform(cfg.segment_lo, cfg.segment_hi);
    voices.render(id, seconds, rng, out);
  }
  // sensor-style dither floor so silence never bottoms out at the log-mel
  // floor; keeps both domains on a comparable noise baseline
  for (auto& s : out.samples) s += 1e-3 * rng.gaussian();
  if (out.duration() >= 17.5)
    throw std::runtime_error("synthesize: utterance exceeds 17.5 s cap");
  return out;
}

inline Utterance synthesize_utterance(const SymbolTable& symbols,
                                      const CharacterVoices& voices,
                                      const std::vector<std::string>& words,
                                      const std::vector<std::string>& lexicon,
                                      const CorpusConfig& cfg,
                                      const std::string& domain, Rng rng) {
  Utterance u;
  u.transcript = words;
  u.domain = domain;
  u.wave = synthesize_clean(symbols, voices, words, lexicon, cfg, rng);
  if (domain == "target" && !cfg.shift.is_identity())
    u.wave = apply_domain_shift(u.wave, cfg.shift, rng);
  return u;
}

inline std::vector<std::string> build_lexicon(const SymbolTable& symbols,
                                              const CorpusConfig& cfg,
                                              Rng& rng) {
  std::vector<std::string> lexicon;
  std::size_t guard = 0;
  while (lexicon.size() < cfg.lexicon_size && guard++ < cfg.lexicon_size * 200) {
    auto len = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(cfg.word_len_lo),
                        static_cast<std::int64_t>(cfg.word_len_hi)));
    std::string word;
    for (std::size_t i = 0; i < len; ++i) {
      auto id = rng.uniform_int(0, static_cast<std::int64_t>(cfg.num_characters) - 1);
      word += symbols.name_of(static_cast<int>(id));
    }
    if (std::find(lexicon.begin(), lexicon.end(), word) == lexicon.end())
      lexicon.push_back(word);
  }
  if (lexicon.size() < cfg.lexicon_size)
    throw std::runtime_error("build_lexicon: symbol set too small for lexicon");
  return lexicon;
}

inline Corpus generate_corpus(const CorpusConfig& cfg) {
  cfg.validate();
  Corpus corpus;
  corpus.config = cfg;
  corpus.symbols = SymbolTable::alphabetic(cfg.num_characters, true);
  Rng base = Rng::seeded(cfg.seed);
  Rng lex_rng = base.derive(0);
  corpus.lexicon = build_lexicon(corpus.symbols, cfg, lex_rng);
  CharacterVoices voices(corpus.symbols, cfg.seed);

  auto make_split = [&](const std::string& name, const std::string& domain,
                        std::size_t count, std::uint64_t stream_base) {
    std::vector<Utterance> split;
    for (std::size_t i = 0; i < count; ++i) {
      Rng rng = base.derive(stream_base + i);
      auto nwords = static_cast<std::size_t>(
          rng.uniform_int(static_cast<std::int64_t>(cfg.words_lo),
                          static_cast<std::int64_t>(cfg.words_hi)));
      std::vector<std::string> words;
      for (std::size_t w = 0; w < nwords; ++w)
        words.push_back(corpus.lexicon[static_cast<std::size_t>(rng.uniform_int(
            0, static_cast<std::int64_t>(corpus.lexicon.size()) - 1))]);
      Utterance u = synthesize_utterance(corpus.symbols, voices, words,
                                         corpus.lexicon, cfg, domain, rng);
      u.id = name + "_" + std::to_string(i);
      split.push_back(std::move(u));
    }
    return split;
  };

  corpus.source_train = make_split("src", "source", cfg.source_count, 1'000'000);
  corpus.source_test =
      make_split("srctest", "source", cfg.source_test_count, 2'000'000);
  corpus.target_train = make_split("tgt", "target", cfg.target_count, 3'000'000);
  corpus.target_test =
      make_split("tgttest", "target", cfg.target_test_count, 4'000'000);
  return corpus;
}

// ---------------------------------------------------------------------------
// Manifest I/O: JSON-lines rows {id, audio_path, transcript, domain}.

namespace manifest_detail {

inline std::string join_words(const std::vector<std::string>& words) {
  std::string s;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) s += ' ';
    s += words[i];
  }
  return s;
}

inline std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline void write_split(const std::vector<Utterance>& split,
                        const std::filesystem::path& dir,
                        const std::string& name) {
  std::ofstream f(dir / ("manifest_" + name + ".jsonl"));
  if (!f) throw std::runtime_error("write_manifest: cannot open manifest");
  for (const auto& u : split) {
    std::string wav_rel = "wav/" + u.id + ".wav";
    write_wav(u.wave, (dir / wav_rel).string());
    nlohmann::json row{{"id", u.id},
                       {"audio_path", wav_rel},
                       {"transcript", join_words(u.transcript)},
                       {"domain", u.domain}};
    f << row.dump() << "\n";
  }
}

inline std::vector<Utterance> read_split(const std::filesystem::path& dir,
                                         const std::string& name) {
  auto path = dir / ("manifest_" + name + ".jsonl");
  std::ifstream f(path);
  if (!f)
    throw std::runtime_error("read_manifest: cannot open " + path.string());
  std::vector<Utterance> split;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json row;
    try {
      row = nlohmann::json::parse(line);
      Utterance u;
      u.id = row.at("id").get<std::string>();
      u.transcript = split_words(row.at("transcript").get<std::string>());
      u.domain = row.at("domain").get<std::string>();
      u.wave = read_wav((dir / row.at("audio_path").get<std::string>()).string());
      split.push_back(std::move(u));
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("read_manifest: malformed row at " +
                               path.string() + ":" + std::to_string(lineno) +
                               ": " + e.what());
    }
  }
  return split;
}

}  // namespace manifest_detail

inline void write_manifest(const Corpus& corpus, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::path dir(out_dir);
  fs::create_directories(dir / "wav");
  nlohmann::json meta{
      {"num_characters", corpus.config.num_characters},
      {"sample_rate", corpus.config.sample_rate},
      {"lexicon", corpus.lexicon},
      {"seed", corpus.config.seed},
  };
  std::ofstream mf(dir / "corpus.json");
  mf << meta.dump(2) << "\n";
  manifest_detail::write_split(corpus.source_train, dir, "source_train");
  manifest_detail::write_split(corpus.source_test, dir, "source_test");
  manifest_detail::write_split(corpus.target_train, dir, "target_train");
  manifest_detail::write_split(corpus.target_test, dir, "target_test");
}

inline Corpus read_manifest(const std::string& in_dir) {
  namespace fs = std::filesystem;
  fs::path dir(in_dir);
  std::ifstream mf(dir / "corpus.json");
  if (!mf)
    throw std::runtime_error("read_manifest: missing corpus.json in " + in_dir);
  nlohmann::json meta = nlohmann::json::parse(mf);
  Corpus corpus;
  corpus.config.num_characters = meta.at("num_characters").get<std::size_t>();
  corpus.config.sample_rate = meta.at("sample_rate").get<int>();
  corpus.config.seed = meta.at("seed").get<std::uint64_t>();
  corpus.lexicon = meta.at("lexicon").get<std::vector<std::string>>();
  corpus.symbols = SymbolTable::alphabetic(corpus.config.num_characters, true);
  corpus.source_train = manifest_detail::read_split(dir, "source_train");
  corpus.source_test = manifest_detail::read_split(dir, "source_test");
  corpus.target_train = manifest_detail::read_split(dir, "target_train");
  corpus.target_test = manifest_detail::read_split(dir, "target_test");
  return corpus;
}

}  // namespace madi
