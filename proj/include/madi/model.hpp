#pragma once

// Compact joint CTC-Attention recognizer: strided frame-stacking subsampler,
// a small stack of pre-norm self-attention + feed-forward blocks, a CTC head
// with exact log-space forward DP, and a single-layer cross-attention decoder.

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "madi/fbank.hpp"
#include "madi/symbols.hpp"
#include "madi/tensor.hpp"
#include "madi/util.hpp"

namespace madi {

struct EncoderConfig {
  std::size_t layers = 2;
  std::size_t width = 64;
  std::size_t heads = 2;
  std::size_t feat_dim = 80;
  std::size_t subsampling = 4;
  std::size_t ff_hidden = 128;
};

struct EncodedSequence {
  Tensor frames;     // T' x H encoder features
  Tensor log_probs;  // T' x (N+1) per-frame CTC log-probabilities
};

inline Tensor positional_encoding(std::size_t len, std::size_t width) {
  std::vector<double> v(len * width);
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t i = 0; i < width; ++i) {
      double angle =
          t / std::pow(10000.0, 2.0 * (i / 2) / static_cast<double>(width));
      v[t * width + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return Tensor::from({len, width}, std::move(v));
}

// Named parameter collection; iteration order is creation order so that
// checkpoints and optimizer state are stable.
class ParamStore {
 public:
  Tensor add(const std::string& name, Shape shape, Rng& rng, double stddev) {
    Tensor t = Tensor::randn(std::move(shape), rng, stddev, true);
    entries_.emplace_back(name, t);
    return t;
  }
  Tensor add_zeros(const std::string& name, Shape shape) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    entries_.emplace_back(name, t);
    return t;
  }
  Tensor add_full(const std::string& name, Shape shape, double v) {
    Tensor t = Tensor::full(std::move(shape), v, true);
    entries_.emplace_back(name, t);
    return t;
  }

  const std::vector<std::pair<std::string, Tensor>>& entries() const {
    return entries_;
  }
  std::vector<Tensor> tensors() const {
    std::vector<Tensor> out;
    for (const auto& [n, t] : entries_) out.push_back(t);
    return out;
  }
  Tensor find(const std::string& name) const {
    for (const auto& [n, t] : entries_)
      if (n == name) return t;
    throw std::invalid_argument("ParamStore: no parameter named " + name);
  }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

class AsrModel {
 public:
  AsrModel(SymbolTable symbols, EncoderConfig cfg, std::uint64_t seed)
      : symbols_(std::move(symbols)), cfg_(cfg) {
    if (cfg_.width % cfg_.heads != 0)
      throw std::invalid_argument("AsrModel: width must divide by heads");
    Rng rng = Rng::seeded(seed ^ 0x6d61646900000001ULL);
    std::size_t h = cfg_.width;
    std::size_t in = cfg_.subsampling * cfg_.feat_dim;
    auto xavier = [](std::size_t fan_in) { return 1.0 / std::sqrt(fan_in); };

    p_.add("enc.in.w", {in, h}, rng, xavier(in));
    p_.add_zeros("enc.in.b", {h});
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      std::string pre = "enc.block" + std::to_string(l) + ".";
      p_.add_full(pre + "ln1.g", {h}, 1.0);
      p_.add_zeros(pre + "ln1.b", {h});
      p_.add(pre + "wq", {h, h}, rng, xavier(h));
      p_.add(pre + "wk", {h, h}, rng, xavier(h));
      p_.add(pre + "wv", {h, h}, rng, xavier(h));
      p_.add(pre + "wo", {h, h}, rng, xavier(h));
      p_.add_full(pre + "ln2.g", {h}, 1.0);
      p_.add_zeros(pre + "ln2.b", {h});
      p_.add(pre + "ff1.w", {h, cfg_.ff_hidden}, rng, xavier(h));
      p_.add_zeros(pre + "ff1.b", {cfg_.ff_hidden});
      p_.add(pre + "ff2.w", {cfg_.ff_hidden, h}, rng, xavier(cfg_.ff_hidden));
      p_.add_zeros(pre + "ff2.b", {h});
    }
    p_.add_full("enc.ln.g", {h}, 1.0);
    p_.add_zeros("enc.ln.b", {h});

    std::size_t vocab_ctc = symbols_.num_characters() + 1;
    p_.add("ctc.w", {h, vocab_ctc}, rng, xavier(h));
    p_.add_zeros("ctc.b", {vocab_ctc});

    std::size_t vocab_dec = symbols_.num_characters() + 2;  // + sos + eos
    p_.add("dec.emb", {vocab_dec, h}, rng, 1.0 / std::sqrt(h));
    p_.add("dec.wq", {h, h}, rng, xavier(h));
    p_.add("dec.wk", {h, h}, rng, xavier(h));
    p_.add("dec.wv", {h, h}, rng, xavier(h));
    p_.add("dec.wo", {h, h}, rng, xavier(h));
    p_.add("dec.ff1.w", {h, cfg_.ff_hidden}, rng, xavier(h));
    p_.add_zeros("dec.ff1.b", {cfg_.ff_hidden});
    p_.add("dec.ff2.w", {cfg_.ff_hidden, h}, rng, xavier(cfg_.ff_hidden));
    p_.add_zeros("dec.ff2.b", {h});
    p_.add("dec.out.w", {h, vocab_dec}, rng, xavier(h));
    p_.add_zeros("dec.out.b", {vocab_dec});
  }

  const SymbolTable& symbols() const { return symbols_; }
  const EncoderConfig& config() const { return cfg_; }
  ParamStore& params() { return p_; }
  const ParamStore& params() const { return p_; }

  int sos_id() const { return static_cast<int>(symbols_.num_characters()); }
  int eos_id() const { return static_cast<int>(symbols_.num_characters()) + 1; }

  Tensor features_tensor(const FeatureSequence& f) const {
    return Tensor::from({f.num_frames, f.num_bins}, f.frames);
  }

  EncodedSequence encode(const FeatureSequence& feat) const {
    if (feat.num_frames == 0)
      throw std::invalid_argument("encode: empty feature sequence");
    if (feat.num_bins != cfg_.feat_dim)
      throw std::invalid_argument("encode: feature dim mismatch");
    return encode(features_tensor(feat));
  }

  EncodedSequence encode(const Tensor& feat) const {
    std::size_t h = cfg_.width;
    Tensor x = frame_stack(feat, cfg_.subsampling);
    x = add_rowwise(matmul(x, p_.find("enc.in.w")), p_.find("enc.in.b"));
    x = relu(x);
    x = x + positional_encoding(x.rows(), h);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      std::string pre = "enc.block" + std::to_string(l) + ".";
      Tensor n1 =
          layer_norm_rows(x, p_.find(pre + "ln1.g"), p_.find(pre + "ln1.b"));
      x = x + self_attention(n1, pre);
      Tensor n2 =
          layer_norm_rows(x, p_.find(pre + "ln2.g"), p_.find(pre + "ln2.b"));
      Tensor ff = add_rowwise(matmul(n2, p_.find(pre + "ff1.w")),
                              p_.find(pre + "ff1.b"));
      ff = add_rowwise(matmul(relu(ff), p_.find(pre + "ff2.w")),
                       p_.find(pre + "ff2.b"));
      x = x + ff;
    }
    x = layer_norm_rows(x, p_.find("enc.ln.g"), p_.find("enc.ln.b"));
    EncodedSequence out;
    out.frames = x;
    out.log_probs = log_softmax_rows(
        add_rowwise(matmul(x, p_.find("ctc.w")), p_.find("ctc.b")));
    return out;
  }

  // -log P(labels | log_probs) via the blank-expanded forward DP in log
  // space. Differentiable through the lattice.
  static Tensor ctc_loss(const Tensor& log_probs,
                         const std::vector<int>& labels) {
    std::size_t t_len = log_probs.rows();
    int blank = static_cast<int>(log_probs.cols()) - 1;
    for (int y : labels)
      if (y < 0 || y >= blank)
        throw std::invalid_argument("ctc_loss: label id out of range");
    std::size_t required = labels.size();
    for (std::size_t i = 1; i < labels.size(); ++i)
      if (labels[i] == labels[i - 1]) ++required;
    if (t_len < required)
      throw std::invalid_argument(
          "ctc_loss: label sequence cannot fit in " + std::to_string(t_len) +
          " frames");

    std::size_t s_len = 2 * labels.size() + 1;
    std::vector<int> ext(s_len);
    for (std::size_t s = 0; s < s_len; ++s)
      ext[s] = (s % 2 == 0) ? blank : labels[s / 2];

    // Mask enabling the skip transition s-2 -> s.
    std::vector<double> skip_mask(s_len, kLogZero);
    for (std::size_t s = 2; s < s_len; ++s)
      if (ext[s] != blank && ext[s] != ext[s - 2]) skip_mask[s] = 0.0;
    Tensor skip = Tensor::from({s_len}, skip_mask);

    auto frame_emissions = [&](std::size_t t) {
      std::vector<std::pair<std::size_t, std::size_t>> cells(s_len);
      for (std::size_t s = 0; s < s_len; ++s)
        cells[s] = {t, static_cast<std::size_t>(ext[s])};
      return gather_cells(log_probs, cells);
    };

    std::vector<double> init(s_len, kLogZero);
    init[0] = 0.0;
    if (s_len > 1) init[1] = 0.0;
    Tensor alpha = Tensor::from({s_len}, std::move(init)) + frame_emissions(0);

    for (std::size_t t = 1; t < t_len; ++t) {
      Tensor stay = alpha;
      Tensor step1 = shift_down(alpha, 1, kLogZero);
      Tensor step2 = shift_down(alpha, 2, kLogZero) + skip;
      alpha = logaddexp(logaddexp(stay, step1), step2) + frame_emissions(t);
    }

    Tensor total = s_len > 1
                       ? logaddexp(pick(alpha, s_len - 1), pick(alpha, s_len - 2))
                       : pick(alpha, 0);
    return -total;
  }

  // Per-frame argmax, collapse repeats, drop blanks.
  static std::vector<int> ctc_greedy_decode(const Tensor& log_probs) {
    std::size_t t_len = log_probs.rows(), c = log_probs.cols();
    int blank = static_cast<int>(c) - 1;
    std::vector<int> out;
    int prev = -1;
    for (std::size_t t = 0; t < t_len; ++t) {
      const double* row = log_probs.values().data() + t * c;
      int best = 0;
      for (std::size_t j = 1; j < c; ++j)
        if (row[j] > row[best]) best = static_cast<int>(j);
      if (best != blank && best != prev) out.push_back(best);
      prev = best;
    }
    return out;
  }

  // Teacher-forced cross-entropy of the single-layer attention decoder:
  // predicts labels + eos from sos + labels, averaged over positions.
  Tensor attention_loss(const EncodedSequence& enc,
                        const std::vector<int>& labels) const {
    if (labels.empty())
      throw std::invalid_argument("attention_loss: labels must be non-empty");
    std::size_t h = cfg_.width;
    std::vector<std::size_t> inputs;
    inputs.push_back(static_cast<std::size_t>(sos_id()));
    for (int y : labels) inputs.push_back(static_cast<std::size_t>(y));
    std::vector<int> targets(labels);
    targets.push_back(eos_id());

    Tensor q = gather_rows(p_.find("dec.emb"), inputs);
    q = q + positional_encoding(q.rows(), h);
    Tensor qq = matmul(q, p_.find("dec.wq"));
    Tensor kk = matmul(enc.frames, p_.find("dec.wk"));
    Tensor vv = matmul(enc.frames, p_.find("dec.wv"));
    Tensor scores = scale(matmul(qq, transpose(kk)), 1.0 / std::sqrt(h));
    Tensor ctx = matmul(softmax_rows(scores), vv);
    Tensor x = q + matmul(ctx, p_.find("dec.wo"));
    Tensor ff =
        add_rowwise(matmul(x, p_.find("dec.ff1.w")), p_.find("dec.ff1.b"));
    ff = add_rowwise(matmul(relu(ff), p_.find("dec.ff2.w")),
                     p_.find("dec.ff2.b"));
    x = x + ff;
    Tensor logits =
        add_rowwise(matmul(x, p_.find("dec.out.w")), p_.find("dec.out.b"));
    Tensor logp = log_softmax_rows(logits);
    std::vector<std::pair<std::size_t, std::size_t>> cells;
    for (std::size_t i = 0; i < targets.size(); ++i)
      cells.emplace_back(i, static_cast<std::size_t>(targets[i]));
    return -mean(gather_cells(logp, cells));
  }

  // Joint objective: lambda * L_CTC + (1 - lambda) * L_ATT.
  struct AsrLoss {
    Tensor total;
    Tensor ctc;
    Tensor att;
  };

  AsrLoss asr_loss(const FeatureSequence& feat, const std::vector<int>& labels,
                   double lambda) const {
    return asr_loss(encode(feat), labels, lambda);
  }

  AsrLoss asr_loss(const EncodedSequence& enc, const std::vector<int>& labels,
                   double lambda) const {
    if (lambda < 0.0 || lambda > 1.0)
      throw std::invalid_argument("asr_loss: lambda must be in [0,1]");
    AsrLoss out;
    out.ctc = ctc_loss(enc.log_probs, labels);
    out.att = attention_loss(enc, labels);
    out.total = scale(out.ctc, lambda) + scale(out.att, 1.0 - lambda);
    return out;
  }

 private:
  Tensor self_attention(const Tensor& x, const std::string& pre) const {
    std::size_t h = cfg_.width;
    std::size_t dh = h / cfg_.heads;
    Tensor qq = matmul(x, p_.find(pre + "wq"));
    Tensor kk = matmul(x, p_.find(pre + "wk"));
    Tensor vv = matmul(x, p_.find(pre + "wv"));
    std::vector<Tensor> heads;
    for (std::size_t i = 0; i < cfg_.heads; ++i) {
      Tensor qh = slice_cols(qq, i * dh, (i + 1) * dh);
      Tensor kh = slice_cols(kk, i * dh, (i + 1) * dh);
      Tensor vh = slice_cols(vv, i * dh, (i + 1) * dh);
      Tensor scores = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(dh));
      heads.push_back(matmul(softmax_rows(scores), vh));
    }
    Tensor ctx = cfg_.heads == 1 ? heads[0] : hconcat(heads);
    return matmul(ctx, p_.find(pre + "wo"));
  }

  SymbolTable symbols_;
  EncoderConfig cfg_;
  ParamStore p_;
};

}  // namespace madi
