#pragma once

#include <cstdlib>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "madi/adaptation.hpp"
#include "madi/augment.hpp"
#include "madi/fbank.hpp"
#include "madi/model.hpp"
#include "madi/optim.hpp"
#include "madi/synth.hpp"

namespace madi {

struct TrainingConfig {
  std::size_t pretrain_steps = 1500;
  std::size_t adapt_steps = 600;
  std::size_t batch_size = 4;
  std::size_t eval_cadence = 0;  // 0 = only at the end
  double lambda = 0.3;           // CTC weight in the joint loss
};

struct ExperimentConfig {
  std::string corpus_dir;
  std::vector<std::string> task_dirs;  // run-matrix corpora; defaults to corpus_dir
  CorpusConfig corpus;
  EncoderConfig encoder;
  FbankConfig fbank;
  AdaptationConfig adaptation;
  AugmentConfig augment;
  AdamConfig optimizer;
  TrainingConfig training;
  std::uint64_t seed = 1;
};

namespace config_detail {

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace config_detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  using config_detail::maybe;
  ExperimentConfig cfg;
  // desk-scale defaults; larger settings (80 mel bins etc.) remain
  // available through the config file
  cfg.encoder.feat_dim = 40;
  cfg.fbank.num_bins = 40;
  cfg.optimizer.base_lr = 0.02;
  cfg.optimizer.warmup_steps = 500;
  cfg.corpus.shift.noise = NoiseKind::Rain;
  cfg.corpus.shift.snr_db = 32.0;

  maybe(j, "corpus_dir", cfg.corpus_dir);
  maybe(j, "task_dirs", cfg.task_dirs);
  maybe(j, "seed", cfg.seed);
  if (j.contains("corpus")) {
    const auto& c = j.at("corpus");
    maybe(c, "num_characters", cfg.corpus.num_characters);
    maybe(c, "lexicon_size", cfg.corpus.lexicon_size);
    maybe(c, "word_len_lo", cfg.corpus.word_len_lo);
    maybe(c, "word_len_hi", cfg.corpus.word_len_hi);
    maybe(c, "words_lo", cfg.corpus.words_lo);
    maybe(c, "words_hi", cfg.corpus.words_hi);
    maybe(c, "source_count", cfg.corpus.source_count);
    maybe(c, "source_test_count", cfg.corpus.source_test_count);
    maybe(c, "target_count", cfg.corpus.target_count);
    maybe(c, "target_test_count", cfg.corpus.target_test_count);
    maybe(c, "segment_lo", cfg.corpus.segment_lo);
    maybe(c, "segment_hi", cfg.corpus.segment_hi);
    maybe(c, "sample_rate", cfg.corpus.sample_rate);
    cfg.corpus.seed = cfg.seed;
    maybe(c, "seed", cfg.corpus.seed);
    if (c.contains("shift")) {
      const auto& s = c.at("shift");
      maybe(s, "fir_taps", cfg.corpus.shift.fir_taps);
      std::string noise = to_string(cfg.corpus.shift.noise);
      maybe(s, "noise", noise);
      cfg.corpus.shift.noise = noise_kind_from_string(noise);
      maybe(s, "snr_db", cfg.corpus.shift.snr_db);
    }
  }
  if (j.contains("encoder")) {
    const auto& e = j.at("encoder");
    maybe(e, "layers", cfg.encoder.layers);
    maybe(e, "width", cfg.encoder.width);
    maybe(e, "heads", cfg.encoder.heads);
    maybe(e, "subsampling", cfg.encoder.subsampling);
    maybe(e, "ff_hidden", cfg.encoder.ff_hidden);
  }
  if (j.contains("fbank")) {
    maybe(j.at("fbank"), "num_bins", cfg.fbank.num_bins);
    maybe(j.at("fbank"), "frame_length", cfg.fbank.frame_length);
    maybe(j.at("fbank"), "frame_shift", cfg.fbank.frame_shift);
  }
  cfg.encoder.feat_dim = cfg.fbank.num_bins;
  if (j.contains("adaptation")) {
    const auto& a = j.at("adaptation");
    if (a.contains("method"))
      cfg.adaptation.method =
          adapt_method_from_string(a.at("method").get<std::string>());
    maybe(a, "alpha", cfg.adaptation.alpha);
    maybe(a, "beta", cfg.adaptation.beta);
    maybe(a, "tau", cfg.adaptation.tau);
    maybe(a, "grl_strength", cfg.adaptation.grl_strength);
    maybe(a, "kernel_scale_factors", cfg.adaptation.kernel_scale_factors);
    maybe(a, "refresh_pseudo_labels", cfg.adaptation.refresh_pseudo_labels);
    maybe(a, "target_pseudo_ctc", cfg.adaptation.target_pseudo_ctc);
  }
  if (j.contains("augment")) {
    const auto& a = j.at("augment");
    maybe(a, "pitch_factor_lo", cfg.augment.pitch_factor_lo);
    maybe(a, "pitch_factor_hi", cfg.augment.pitch_factor_hi);
    maybe(a, "reverb_decay", cfg.augment.reverb_decay);
    maybe(a, "reverb_wet", cfg.augment.reverb_wet);
    maybe(a, "mask_count", cfg.augment.mask_count);
    maybe(a, "mask_span", cfg.augment.mask_span);
  }
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    maybe(o, "base_lr", cfg.optimizer.base_lr);
    maybe(o, "warmup_steps", cfg.optimizer.warmup_steps);
    maybe(o, "beta1", cfg.optimizer.beta1);
    maybe(o, "beta2", cfg.optimizer.beta2);
    maybe(o, "epsilon", cfg.optimizer.epsilon);
  }
  if (j.contains("training")) {
    const auto& t = j.at("training");
    maybe(t, "pretrain_steps", cfg.training.pretrain_steps);
    maybe(t, "adapt_steps", cfg.training.adapt_steps);
    maybe(t, "batch_size", cfg.training.batch_size);
    maybe(t, "eval_cadence", cfg.training.eval_cadence);
    maybe(t, "lambda", cfg.training.lambda);
  }

  // environment seed override
  if (const char* env = std::getenv("MADI_SEED")) {
    cfg.seed = std::stoull(env);
    cfg.corpus.seed = cfg.seed;
  }
  if (cfg.task_dirs.empty() && !cfg.corpus_dir.empty())
    cfg.task_dirs.push_back(cfg.corpus_dir);
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file: " + path);
  nlohmann::json j = nlohmann::json::parse(f);
  return parse_experiment_config(j);
}

}  // namespace madi
