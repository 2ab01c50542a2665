#pragma once

// Experiment orchestration: source pretraining, adaptation by method,
// evaluation, and centroid dumping.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "madi/adaptation.hpp"
#include "madi/augment.hpp"
#include "madi/checkpoint.hpp"
#include "madi/config.hpp"
#include "madi/eval.hpp"
#include "madi/fbank.hpp"
#include "madi/model.hpp"
#include "madi/optim.hpp"
#include "madi/synth.hpp"

namespace madi {

struct TrainingDiverged : std::runtime_error {
  explicit TrainingDiverged(const std::string& what)
      : std::runtime_error(what) {}
};

class MetricsWriter {
 public:
  MetricsWriter() = default;
  explicit MetricsWriter(const std::string& path) {
    if (path.empty()) return;
    out_.open(path);
    if (!out_) throw std::runtime_error("cannot open metrics file: " + path);
  }

  void header(const nlohmann::json& j) {
    if (!out_.is_open()) return;
    nlohmann::json h = j;
    h["type"] = "header";
    out_ << h.dump() << "\n";
  }

  void step(std::size_t step, const LossBreakdown& b) {
    if (!out_.is_open()) return;
    nlohmann::json j{{"step", step},
                     {"l_asr", b.asr},
                     {"l_ctc", b.ctc},
                     {"l_att", b.att},
                     {"l_ma", b.matching},
                     {"l_di", b.discrimination},
                     {"shared_char_count", b.shared_characters},
                     {"lr", b.lr}};
    out_ << j.dump() << "\n";
  }

 private:
  std::ofstream out_;
};

inline AsrModel clone_model(const AsrModel& model) {
  AsrModel copy(model.symbols(), model.config(), 0);
  const auto& src = model.params().entries();
  for (const auto& [name, t] : src)
    copy.params().find(name).values() = t.values();
  return copy;
}

namespace train_detail {

inline void check_finite(double loss, std::size_t step, const char* phase) {
  if (!std::isfinite(loss))
    throw TrainingDiverged(std::string(phase) + ": non-finite loss at step " +
                           std::to_string(step));
}

// Shuffled round-robin batch iterator.
class BatchCycler {
 public:
  BatchCycler(std::size_t n, std::size_t batch, Rng rng)
      : n_(n), batch_(std::min(batch, n)), rng_(rng) {
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), 0);
    reshuffle();
  }

  std::vector<std::size_t> next() {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < batch_; ++i) {
      if (pos_ == n_) reshuffle();
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    for (std::size_t i = n_; i > 1; --i)
      std::swap(order_[i - 1], order_[static_cast<std::size_t>(rng_.uniform_int(
                    0, static_cast<std::int64_t>(i) - 1))]);
    pos_ = 0;
  }
  std::size_t n_, batch_, pos_ = 0;
  std::vector<std::size_t> order_;
  Rng rng_;
};

}  // namespace train_detail

inline std::vector<FeatureSequence> extract_features(
    const std::vector<Utterance>& split, const FbankConfig& cfg) {
  std::vector<FeatureSequence> out;
  out.reserve(split.size());
  for (const auto& u : split) out.push_back(compute_fbank(u.wave, cfg));
  return out;
}

inline std::vector<FeatureSequence> extract_features(
    const std::vector<UnlabeledUtterance>& split, const FbankConfig& cfg) {
  std::vector<FeatureSequence> out;
  out.reserve(split.size());
  for (const auto& u : split) out.push_back(compute_fbank(u.wave, cfg));
  return out;
}

// Minimizes the joint CTC-attention loss on the labeled source split.
inline AsrModel pretrain(const Corpus& corpus, const ExperimentConfig& cfg,
                         const std::string& metrics_path = "") {
  if (corpus.source_train.empty())
    throw std::invalid_argument("pretrain: empty source split");
  AsrModel model(corpus.symbols, cfg.encoder, cfg.seed);
  auto feats = extract_features(corpus.source_train, cfg.fbank);
  std::vector<std::vector<int>> labels;
  for (const auto& u : corpus.source_train)
    labels.push_back(transcript_symbols(corpus.symbols, u.transcript));

  AdamOptimizer opt(model.params().tensors(), cfg.optimizer);
  MetricsWriter metrics(metrics_path);
  metrics.header({{"phase", "pretrain"},
                  {"lambda", cfg.training.lambda},
                  {"seed", cfg.seed},
                  {"steps", cfg.training.pretrain_steps}});
  train_detail::BatchCycler batches(feats.size(), cfg.training.batch_size,
                                    Rng::seeded(cfg.seed ^ 0x70726574ULL));

  for (std::size_t step = 1; step <= cfg.training.pretrain_steps; ++step) {
    auto batch = batches.next();
    Tensor acc = Tensor::scalar(0.0);
    LossBreakdown b;
    for (std::size_t i : batch) {
      auto parts = model.asr_loss(feats[i], labels[i], cfg.training.lambda);
      acc = acc + parts.total;
      b.ctc += parts.ctc.item() / batch.size();
      b.att += parts.att.item() / batch.size();
    }
    Tensor loss = scale(acc, 1.0 / static_cast<double>(batch.size()));
    b.asr = loss.item();
    train_detail::check_finite(b.asr, step, "pretrain");
    loss.backward();
    opt.step();
    b.lr = opt.current_lr();
    metrics.step(step, b);
  }
  return model;
}

// Optimizes the selected method's objective over paired labeled-source and
// unlabeled-target batches. Never sees target transcripts (the unlabeled
// view has none).
inline AsrModel adapt(const AsrModel& pretrained,
                      const std::vector<Utterance>& source,
                      const std::vector<UnlabeledUtterance>& target,
                      const ExperimentConfig& cfg,
                      const std::string& metrics_path = "") {
  AsrModel model = clone_model(pretrained);
  const AdaptationConfig& acfg = cfg.adaptation;

  MetricsWriter metrics(metrics_path);
  metrics.header({{"phase", "adapt"},
                  {"method", to_string(acfg.method)},
                  {"lambda", cfg.training.lambda},
                  {"alpha", acfg.alpha},
                  {"beta", acfg.beta},
                  {"tau", acfg.tau},
                  {"seed", cfg.seed}});

  if (acfg.method == AdaptMethod::SO) return model;  // no adaptation steps
  if (source.empty() || target.empty())
    throw std::invalid_argument("adapt: both splits must be non-empty");

  const SymbolTable& symbols = model.symbols();
  auto src_feats = extract_features(source, cfg.fbank);
  auto tgt_feats = extract_features(target, cfg.fbank);
  std::vector<std::vector<int>> src_labels;
  for (const auto& u : source)
    src_labels.push_back(transcript_symbols(symbols, u.transcript));

  // one fixed augmented view per target utterance, derived from the seed
  std::vector<FeatureSequence> aug_feats;
  if (acfg.method == AdaptMethod::MADI) {
    Rng aug_base = Rng::seeded(cfg.seed ^ 0x617567ULL);
    for (std::size_t i = 0; i < target.size(); ++i) {
      Rng rng = aug_base.derive(i);
      aug_feats.push_back(
          compute_fbank(augment_chain(target[i].wave, cfg.augment, rng),
                        cfg.fbank));
    }
  }

  // frozen pseudo labels, when configured
  std::vector<FrameAssignment> frozen_tgt_assign(target.size());
  std::vector<FrameAssignment> frozen_aug_assign(aug_feats.size());
  std::vector<FrameAssignment> frozen_src_assign(source.size());
  std::vector<std::vector<int>> frozen_tgt_pseudo(target.size());
  if (!acfg.refresh_pseudo_labels) {
    for (std::size_t i = 0; i < target.size(); ++i) {
      auto enc = pretrained.encode(tgt_feats[i]);
      frozen_tgt_assign[i] = assign_frame_labels(enc.log_probs);
      frozen_tgt_pseudo[i] = AsrModel::ctc_greedy_decode(enc.log_probs);
    }
    for (std::size_t i = 0; i < aug_feats.size(); ++i)
      frozen_aug_assign[i] =
          assign_frame_labels(pretrained.encode(aug_feats[i]).log_probs);
    for (std::size_t i = 0; i < source.size(); ++i)
      frozen_src_assign[i] =
          assign_frame_labels(pretrained.encode(src_feats[i]).log_probs);
  }

  std::vector<Tensor> params = model.params().tensors();
  DomainDiscriminator disc(cfg.encoder.width, 32, cfg.seed);
  if (acfg.method == AdaptMethod::DAT)
    for (const auto& t : disc.params().tensors()) params.push_back(t);
  AdamOptimizer opt(params, cfg.optimizer);

  train_detail::BatchCycler src_batches(
      source.size(), cfg.training.batch_size,
      Rng::seeded(cfg.seed ^ 0x616461707473ULL));
  train_detail::BatchCycler tgt_batches(
      target.size(), cfg.training.batch_size,
      Rng::seeded(cfg.seed ^ 0x616461707474ULL));

  for (std::size_t step = 1; step <= cfg.training.adapt_steps; ++step) {
    auto sbatch = src_batches.next();
    auto tbatch = tgt_batches.next();
    LossBreakdown b;

    // source: supervised joint loss + character features
    Tensor asr_acc = Tensor::scalar(0.0);
    std::vector<CharacterFeatureSets> src_sets;
    std::vector<Tensor> src_pooled;
    for (std::size_t i : sbatch) {
      auto enc = model.encode(src_feats[i]);
      auto parts = model.asr_loss(enc, src_labels[i], cfg.training.lambda);
      asr_acc = asr_acc + parts.total;
      b.ctc += parts.ctc.item() / sbatch.size();
      b.att += parts.att.item() / sbatch.size();
      if (acfg.method == AdaptMethod::CMatch ||
          acfg.method == AdaptMethod::CDCL ||
          acfg.method == AdaptMethod::MADI) {
        auto assign = acfg.refresh_pseudo_labels
                          ? assign_frame_labels(enc.log_probs)
                          : frozen_src_assign[i];
        src_sets.push_back(gather_character_features(enc, assign));
      }
      if (acfg.method == AdaptMethod::DAT)
        src_pooled.push_back(mean_rows(enc.frames));
    }
    Tensor l_asr = scale(asr_acc, 1.0 / static_cast<double>(sbatch.size()));

    // target: pseudo-label CTC term + character features
    std::vector<CharacterFeatureSets> tgt_sets, aug_sets;
    std::vector<Tensor> tgt_pooled;
    Tensor pseudo_acc = Tensor::scalar(0.0);
    std::size_t pseudo_count = 0;
    for (std::size_t i : tbatch) {
      auto enc = model.encode(tgt_feats[i]);
      auto assign = acfg.refresh_pseudo_labels
                        ? assign_frame_labels(enc.log_probs)
                        : frozen_tgt_assign[i];
      if (acfg.method != AdaptMethod::DAT)
        tgt_sets.push_back(gather_character_features(enc, assign));
      else
        tgt_pooled.push_back(mean_rows(enc.frames));
      if (acfg.target_pseudo_ctc) {
        auto pseudo = acfg.refresh_pseudo_labels
                          ? AsrModel::ctc_greedy_decode(enc.log_probs)
                          : frozen_tgt_pseudo[i];
        if (!pseudo.empty()) {
          pseudo_acc = pseudo_acc + AsrModel::ctc_loss(enc.log_probs, pseudo);
          ++pseudo_count;
        }
      }
      if (acfg.method == AdaptMethod::MADI) {
        auto enc_aug = model.encode(aug_feats[i]);
        auto assign_aug = acfg.refresh_pseudo_labels
                              ? assign_frame_labels(enc_aug.log_probs)
                              : frozen_aug_assign[i];
        aug_sets.push_back(gather_character_features(enc_aug, assign_aug));
      }
    }
    if (pseudo_count > 0)
      l_asr = l_asr + scale(pseudo_acc, cfg.training.lambda /
                                            static_cast<double>(pseudo_count));

    Tensor l_ma = Tensor::scalar(0.0);
    Tensor l_di = Tensor::scalar(0.0);
    if (acfg.method == AdaptMethod::CMatch ||
        acfg.method == AdaptMethod::MADI) {
      auto src_merged = merge_character_features(src_sets);
      auto tgt_merged = merge_character_features(tgt_sets);
      std::vector<const Tensor*> pool;
      for (const auto& [id, m] : src_merged) pool.push_back(&m);
      for (const auto& [id, m] : tgt_merged) pool.push_back(&m);
      auto bank =
          median_heuristic_bank(pool, acfg.kernel_scale_factors);
      auto ml = matching_loss(src_merged, tgt_merged, bank);
      l_ma = ml.loss;
      b.shared_characters = ml.shared_characters;
    }
    if (acfg.method == AdaptMethod::MADI) {
      auto c_tgt = compute_centroids(merge_character_features(tgt_sets));
      auto c_aug = compute_centroids(merge_character_features(aug_sets));
      auto dl = discrimination_loss(c_tgt, c_aug, acfg.tau);
      l_di = dl.loss;
    }
    if (acfg.method == AdaptMethod::CDCL) {
      auto c_src = compute_centroids(merge_character_features(src_sets));
      auto c_tgt = compute_centroids(merge_character_features(tgt_sets));
      auto dl = cdcl_loss(c_src, c_tgt, acfg.tau);
      l_di = dl.loss;
      b.shared_characters = dl.shared_characters;
    }
    if (acfg.method == AdaptMethod::DAT)
      l_di = dat_loss(src_pooled, tgt_pooled, disc, acfg.grl_strength);

    Tensor total = total_loss(l_asr, l_ma, l_di, acfg);
    b.asr = l_asr.item();
    b.matching = l_ma.item();
    b.discrimination = l_di.item();
    train_detail::check_finite(total.item(), step, "adapt");
    total.backward();
    opt.step();
    b.lr = opt.current_lr();
    metrics.step(step, b);
  }
  return model;
}

inline EvalReport evaluate(const AsrModel& model,
                           const std::vector<Utterance>& split,
                           const FbankConfig& fbank) {
  EvalReport report;
  const SymbolTable& symbols = model.symbols();
  for (const auto& u : split) {
    auto enc = model.encode(compute_fbank(u.wave, fbank));
    auto hyp_ids = AsrModel::ctc_greedy_decode(enc.log_probs);
    UtteranceResult r;
    r.id = u.id;
    r.domain = u.domain;
    r.reference = u.transcript;
    r.hypothesis = symbols_to_words(symbols, hyp_ids);
    r.wer.errors = edit_distance(r.reference, r.hypothesis);
    r.wer.reference_tokens = r.reference.size();
    auto ref_ids = transcript_symbols(symbols, u.transcript);
    r.cer.errors = edit_distance(ref_ids, hyp_ids);
    r.cer.reference_tokens = ref_ids.size();
    report.wer_total.add(r.wer);
    report.cer_total.add(r.cer);
    report.wer_by_domain[u.domain].add(r.wer);
    report.utterances.push_back(std::move(r));
  }
  return report;
}

// Per-domain per-character centroids from current pseudo labels.
struct CentroidDump {
  // (domain, character id) -> (mean vector, frame count)
  std::map<std::pair<std::string, int>, std::pair<std::vector<double>, std::size_t>>
      rows;
};

inline CentroidDump collect_centroids(const AsrModel& model,
                                      const std::vector<Utterance>& split,
                                      const FbankConfig& fbank) {
  CentroidDump dump;
  std::map<std::pair<std::string, int>, std::vector<double>> sums;
  std::map<std::pair<std::string, int>, std::size_t> counts;
  std::size_t h = model.config().width;
  for (const auto& u : split) {
    auto enc = model.encode(compute_fbank(u.wave, fbank));
    auto assign = assign_frame_labels(enc.log_probs);
    int blank = model.symbols().blank_id();
    for (std::size_t t = 0; t < assign.size(); ++t) {
      if (assign[t] == blank) continue;
      auto key = std::make_pair(u.domain, assign[t]);
      auto& s = sums[key];
      s.resize(h, 0.0);
      for (std::size_t d = 0; d < h; ++d)
        s[d] += enc.frames.values()[t * h + d];
      ++counts[key];
    }
  }
  for (auto& [key, s] : sums) {
    std::size_t n = counts[key];
    for (auto& x : s) x /= static_cast<double>(n);
    dump.rows[key] = {s, n};
  }
  return dump;
}

inline void write_centroid_csv(const CentroidDump& dump,
                               const SymbolTable& symbols,
                               const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("dump_centroids: cannot open " + path);
  f << "domain,char,count";
  std::size_t h = dump.rows.empty() ? 0 : dump.rows.begin()->second.first.size();
  for (std::size_t d = 1; d <= h; ++d) f << ",v" << d;
  f << "\n";
  f.precision(17);
  for (const auto& [key, value] : dump.rows) {
    f << key.first << "," << symbols.name_of(key.second) << ","
      << value.second;
    for (double x : value.first) f << "," << x;
    f << "\n";
  }
}

// Mean pairwise cosine distance among distinct characters of one domain.
inline double centroid_spread(const CentroidDump& dump,
                              const std::string& domain) {
  std::vector<const std::vector<double>*> cents;
  for (const auto& [key, value] : dump.rows)
    if (key.first == domain) cents.push_back(&value.first);
  if (cents.size() < 2) return 0.0;
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < cents.size(); ++i)
    for (std::size_t j = i + 1; j < cents.size(); ++j) {
      double uv = 0.0, uu = 0.0, vv = 0.0;
      for (std::size_t d = 0; d < cents[i]->size(); ++d) {
        uv += (*cents[i])[d] * (*cents[j])[d];
        uu += (*cents[i])[d] * (*cents[i])[d];
        vv += (*cents[j])[d] * (*cents[j])[d];
      }
      total += 1.0 - uv / (std::sqrt(uu) * std::sqrt(vv));
      ++pairs;
    }
  return total / pairs;
}

// ---------------------------------------------------------------------------
// Method matrix

struct MatrixCell {
  double wer = std::numeric_limits<double>::quiet_NaN();
  std::string error;  // non-empty on failure
};

struct MatrixResult {
  std::vector<std::string> tasks;
  std::vector<AdaptMethod> methods;
  std::vector<std::vector<MatrixCell>> cells;  // [method][task]

  double method_average(std::size_t m) const {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& c : cells[m])
      if (c.error.empty()) {
        sum += c.wer;
        ++n;
      }
    return n ? sum / n : std::numeric_limits<double>::quiet_NaN();
  }
};

inline std::vector<UnlabeledUtterance> unlabeled_view(
    const std::vector<Utterance>& split) {
  std::vector<UnlabeledUtterance> out;
  out.reserve(split.size());
  for (const auto& u : split) out.push_back(UnlabeledUtterance::from(u));
  return out;
}

inline MatrixResult run_matrix(const ExperimentConfig& cfg,
                               const std::string& artifacts_dir = "",
                               std::ostream* log = nullptr) {
  if (cfg.task_dirs.empty())
    throw std::invalid_argument("run_matrix: need at least one task corpus");
  MatrixResult result;
  result.tasks = cfg.task_dirs;
  result.methods = {AdaptMethod::SO, AdaptMethod::DAT, AdaptMethod::CMatch,
                    AdaptMethod::CDCL, AdaptMethod::MADI};
  result.cells.assign(result.methods.size(),
                      std::vector<MatrixCell>(result.tasks.size()));

  for (std::size_t t = 0; t < result.tasks.size(); ++t) {
    Corpus corpus = read_manifest(result.tasks[t]);
    if (log) *log << "task " << result.tasks[t] << ": pretraining\n";
    AsrModel pretrained = pretrain(corpus, cfg);
    auto target_unlabeled = unlabeled_view(corpus.target_train);
    for (std::size_t m = 0; m < result.methods.size(); ++m) {
      auto& cell = result.cells[m][t];
      try {
        ExperimentConfig mcfg = cfg;
        mcfg.adaptation.method = result.methods[m];
        std::string metrics_path;
        if (!artifacts_dir.empty())
          metrics_path = artifacts_dir + "/metrics_task" + std::to_string(t) +
                         "_" + to_string(result.methods[m]) + ".jsonl";
        AsrModel adapted = adapt(pretrained, corpus.source_train,
                                 target_unlabeled, mcfg, metrics_path);
        cell.wer = evaluate(adapted, corpus.target_test, cfg.fbank)
                       .wer_total.rate();
        if (log)
          *log << "  " << to_string(result.methods[m]) << ": wer " << cell.wer
               << "\n";
      } catch (const std::exception& e) {
        cell.error = e.what();
        if (log)
          *log << "  " << to_string(result.methods[m]) << ": FAILED "
               << e.what() << "\n";
      }
    }
  }
  return result;
}

inline void write_matrix_csv(const MatrixResult& r, std::ostream& os) {
  os.precision(17);
  os << "method";
  for (const auto& t : r.tasks) os << "," << t;
  os << ",average\n";
  for (std::size_t m = 0; m < r.methods.size(); ++m) {
    os << to_string(r.methods[m]);
    for (const auto& c : r.cells[m]) {
      os << ",";
      if (c.error.empty())
        os << c.wer;
      else
        os << "error";
    }
    os << "," << r.method_average(m) << "\n";
  }
}

inline void print_matrix(const MatrixResult& r, std::ostream& os) {
  os << "method   ";
  for (std::size_t t = 0; t < r.tasks.size(); ++t)
    os << "  task" << t << "  ";
  os << "  average\n";
  for (std::size_t m = 0; m < r.methods.size(); ++m) {
    char line[512];
    std::snprintf(line, sizeof(line), "%-8s", to_string(r.methods[m]).c_str());
    os << line;
    for (const auto& c : r.cells[m]) {
      if (c.error.empty())
        std::snprintf(line, sizeof(line), "  %6.4f", c.wer);
      else
        std::snprintf(line, sizeof(line), "  %6s", "err");
      os << line;
    }
    std::snprintf(line, sizeof(line), "   %6.4f\n", r.method_average(m));
    os << line;
  }
}

}  // namespace madi
