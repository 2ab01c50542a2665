#pragma once

// Frame-level pseudo-label assignment, character-conditioned MMD matching,
// centroid NT-Xent discrimination, the combined objective, and the DAT /
// CDCL baseline losses. Blank frames are excluded from all character
// statistics.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "madi/model.hpp"
#include "madi/tensor.hpp"

namespace madi {

enum class AdaptMethod { SO, DAT, CMatch, CDCL, MADI };

inline std::string to_string(AdaptMethod m) {
  switch (m) {
    case AdaptMethod::SO: return "so";
    case AdaptMethod::DAT: return "dat";
    case AdaptMethod::CMatch: return "cmatch";
    case AdaptMethod::CDCL: return "cdcl";
    case AdaptMethod::MADI: return "madi";
  }
  throw std::invalid_argument("unknown method");
}

inline AdaptMethod adapt_method_from_string(const std::string& s) {
  if (s == "so") return AdaptMethod::SO;
  if (s == "dat") return AdaptMethod::DAT;
  if (s == "cmatch") return AdaptMethod::CMatch;
  if (s == "cdcl") return AdaptMethod::CDCL;
  if (s == "madi") return AdaptMethod::MADI;
  throw std::invalid_argument("unknown adaptation method: " + s);
}

struct AdaptationConfig {
  AdaptMethod method = AdaptMethod::MADI;
  double alpha = 5.0;
  double beta = 5.0;
  double tau = 0.1;
  double grl_strength = 1.0;
  std::vector<double> kernel_scale_factors{0.25, 0.5, 1.0, 2.0, 4.0};
  bool refresh_pseudo_labels = true;  // recompute from the current model
  bool target_pseudo_ctc = true;      // CTC term on greedy target transcripts
};

// Per-frame symbol ids (blank allowed); ties broken by lowest id.
using FrameAssignment = std::vector<int>;

// character id -> matrix of encoder frame vectors (one row per frame)
using CharacterFeatureSets = std::map<int, Tensor>;

struct CentroidSet {
  std::map<int, Tensor> centroids;  // character id -> length-H mean vector
  std::map<int, std::size_t> counts;
};

struct KernelBank {
  std::vector<double> sigma_sq;  // Gaussian bandwidths

  void validate() const {
    if (sigma_sq.empty())
      throw std::invalid_argument("KernelBank: must be non-empty");
    for (double s : sigma_sq)
      if (s <= 0.0)
        throw std::invalid_argument("KernelBank: bandwidths must be positive");
  }
};

inline FrameAssignment assign_frame_labels(const Tensor& log_probs) {
  std::size_t t_len = log_probs.rows(), c = log_probs.cols();
  FrameAssignment out(t_len);
  for (std::size_t t = 0; t < t_len; ++t) {
    const double* row = log_probs.values().data() + t * c;
    int best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (row[j] > row[best]) best = static_cast<int>(j);
    out[t] = best;
  }
  return out;
}

// Groups encoder frame vectors by assigned non-blank symbol.
inline CharacterFeatureSets gather_character_features(
    const EncodedSequence& enc, const FrameAssignment& assignment) {
  if (assignment.size() != enc.frames.rows())
    throw std::invalid_argument(
        "gather_character_features: assignment length mismatch");
  int blank = static_cast<int>(enc.log_probs.cols()) - 1;
  std::map<int, std::vector<std::size_t>> rows;
  for (std::size_t t = 0; t < assignment.size(); ++t) {
    int id = assignment[t];
    if (id < 0 || id > blank)
      throw std::invalid_argument("gather_character_features: bad symbol id");
    if (id != blank) rows[id].push_back(t);
  }
  CharacterFeatureSets out;
  for (const auto& [id, idx] : rows) out.emplace(id, gather_rows(enc.frames, idx));
  return out;
}

// Merges per-utterance feature sets into batch-level sets.
inline CharacterFeatureSets merge_character_features(
    const std::vector<CharacterFeatureSets>& parts) {
  std::map<int, std::vector<Tensor>> grouped;
  for (const auto& part : parts)
    for (const auto& [id, mat] : part) grouped[id].push_back(mat);
  CharacterFeatureSets out;
  for (auto& [id, mats] : grouped)
    out.emplace(id, mats.size() == 1 ? mats[0] : vconcat(mats));
  return out;
}

inline CentroidSet compute_centroids(const CharacterFeatureSets& sets) {
  CentroidSet out;
  for (const auto& [id, mat] : sets) {
    out.centroids.emplace(id, mean_rows(mat));
    out.counts[id] = mat.rows();
  }
  return out;
}

// Median heuristic over pooled pairwise squared distances, scaled by the
// configured bandwidth factors.
inline KernelBank median_heuristic_bank(
    const std::vector<const Tensor*>& feature_matrices,
    const std::vector<double>& factors) {
  std::vector<std::vector<double>> rows;
  for (const Tensor* m : feature_matrices) {
    std::size_t h = m->cols();
    for (std::size_t i = 0; i < m->rows(); ++i)
      rows.emplace_back(m->values().begin() + i * h,
                        m->values().begin() + (i + 1) * h);
  }
  std::vector<double> d2;
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < rows[i].size(); ++k) {
        double diff = rows[i][k] - rows[j][k];
        s += diff * diff;
      }
      d2.push_back(s);
    }
  double median = 1.0;
  if (!d2.empty()) {
    std::nth_element(d2.begin(), d2.begin() + d2.size() / 2, d2.end());
    median = d2[d2.size() / 2];
    if (median <= 0.0) median = 1.0;
  }
  KernelBank bank;
  for (double f : factors) bank.sigma_sq.push_back(f * median);
  bank.validate();
  return bank;
}

// Biased V-statistic MMD^2 averaged over the kernel bank, with
// k(x, y) = exp(-||x - y||^2 / (2 sigma^2)).
inline Tensor mmd_squared(const Tensor& a, const Tensor& b,
                          const KernelBank& bank) {
  bank.validate();
  if (a.rows() == 0 || b.rows() == 0)
    throw std::invalid_argument("mmd_squared: empty feature set");
  Tensor daa = pairwise_sqdist(a, a);
  Tensor dbb = pairwise_sqdist(b, b);
  Tensor dab = pairwise_sqdist(a, b);
  Tensor acc = Tensor::scalar(0.0);
  for (double s2 : bank.sigma_sq) {
    double c = -1.0 / (2.0 * s2);
    Tensor term = mean(exp(scale(daa, c))) + mean(exp(scale(dbb, c))) -
                  scale(mean(exp(scale(dab, c))), 2.0);
    acc = acc + term;
  }
  return scale(acc, 1.0 / static_cast<double>(bank.sigma_sq.size()));
}

struct MatchingLoss {
  Tensor loss;                    // zero tensor when no character is shared
  std::size_t shared_characters = 0;
};

// Average of per-character MMD^2 over characters present in both domains.
inline MatchingLoss matching_loss(const CharacterFeatureSets& source,
                                  const CharacterFeatureSets& target,
                                  const KernelBank& bank) {
  MatchingLoss out;
  std::vector<Tensor> terms;
  for (const auto& [id, src_mat] : source) {
    auto it = target.find(id);
    if (it == target.end()) continue;
    terms.push_back(mmd_squared(src_mat, it->second, bank));
  }
  out.shared_characters = terms.size();
  if (terms.empty()) {
    out.loss = Tensor::scalar(0.0);
    return out;
  }
  Tensor acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = acc + terms[i];
  out.loss = scale(acc, 1.0 / static_cast<double>(terms.size()));
  return out;
}

namespace detail {

// Symmetrized centroid NT-Xent. For each character i present in both views,
// the anchor in view A is pulled toward its positive in view B and pushed
// from every other character's centroid in both views; the result is the
// average over both directions and all positive pairs.
inline MatchingLoss centroid_ntxent(const CentroidSet& view_a,
                                    const CentroidSet& view_b, double tau) {
  if (tau <= 0.0)
    throw std::invalid_argument("centroid ntxent: tau must be positive");
  std::vector<int> shared;
  for (const auto& [id, c] : view_a.centroids)
    if (view_b.centroids.count(id)) shared.push_back(id);

  MatchingLoss out;
  out.shared_characters = shared.size();
  if (shared.empty()) {
    out.loss = Tensor::scalar(0.0);
    return out;
  }

  auto psi = [tau](const Tensor& x, const Tensor& y) {
    return exp(scale(cosine_similarity(x, y), 1.0 / tau));
  };
  auto direction = [&](const CentroidSet& anchors, const CentroidSet& others) {
    std::vector<Tensor> losses;
    for (int i : shared) {
      const Tensor& anchor = anchors.centroids.at(i);
      Tensor pos = psi(anchor, others.centroids.at(i));
      Tensor denom = pos;
      for (const auto& [j, cent] : anchors.centroids)
        if (j != i) denom = denom + psi(anchor, cent);
      for (const auto& [j, cent] : others.centroids)
        if (j != i) denom = denom + psi(anchor, cent);
      losses.push_back(-log(pos / denom));
    }
    return losses;
  };

  auto fwd = direction(view_a, view_b);
  auto bwd = direction(view_b, view_a);
  Tensor acc = Tensor::scalar(0.0);
  for (const auto& l : fwd) acc = acc + l;
  for (const auto& l : bwd) acc = acc + l;
  out.loss = scale(acc, 1.0 / static_cast<double>(fwd.size() + bwd.size()));
  return out;
}

}  // namespace detail

// Intra-domain discrimination between the target view and its augmented view.
inline MatchingLoss discrimination_loss(const CentroidSet& target,
                                        const CentroidSet& augmented,
                                        double tau) {
  return detail::centroid_ntxent(target, augmented, tau);
}

// CDCL baseline: positives pair source/target centroids of the same character.
inline MatchingLoss cdcl_loss(const CentroidSet& source,
                              const CentroidSet& target, double tau) {
  return detail::centroid_ntxent(source, target, tau);
}

// Two-layer domain discriminator on mean-pooled encoder outputs behind a
// gradient-reversal layer.
class DomainDiscriminator {
 public:
  DomainDiscriminator(std::size_t width, std::size_t hidden, std::uint64_t seed)
      : width_(width) {
    Rng rng = Rng::seeded(seed ^ 0x6d61646900000002ULL);
    w1_ = p_.add("disc.w1", {width, hidden}, rng, 1.0 / std::sqrt(width));
    b1_ = p_.add_zeros("disc.b1", {hidden});
    w2_ = p_.add("disc.w2", {hidden, 1}, rng, 1.0 / std::sqrt(hidden));
    b2_ = p_.add_zeros("disc.b2", {1});
  }

  ParamStore& params() { return p_; }

  // Logit for a single pooled feature vector (length-H tensor).
  Tensor logit(const Tensor& pooled) const {
    Tensor x = vconcat({pooled});  // 1 x H
    Tensor h = relu(add_rowwise(matmul(x, w1_), b1_));
    return pick(add_rowwise(matmul(h, w2_), b2_), 0);
  }

 private:
  std::size_t width_;
  ParamStore p_;
  Tensor w1_, b1_, w2_, b2_;
};

// Binary cross-entropy of the discriminator over pooled source/target
// encoder outputs routed through grad_reverse. Stable form:
// BCE(logit, y) = softplus(logit) - y * logit.
inline Tensor dat_loss(const std::vector<Tensor>& pooled_source,
                       const std::vector<Tensor>& pooled_target,
                       const DomainDiscriminator& disc, double grl_strength) {
  if (pooled_source.empty() || pooled_target.empty())
    throw std::invalid_argument("dat_loss: both batches must be non-empty");
  auto bce = [&](const Tensor& pooled, double label) {
    Tensor z = disc.logit(grad_reverse(pooled, grl_strength));
    Tensor softplus = logaddexp(z, Tensor::scalar(0.0));
    return softplus - scale(z, label);
  };
  Tensor acc = Tensor::scalar(0.0);
  for (const auto& p : pooled_source) acc = acc + bce(p, 0.0);
  for (const auto& p : pooled_target) acc = acc + bce(p, 1.0);
  return scale(acc, 1.0 / static_cast<double>(pooled_source.size() +
                                              pooled_target.size()));
}

struct LossBreakdown {
  double asr = 0.0;
  double ctc = 0.0;
  double att = 0.0;
  double matching = 0.0;
  double discrimination = 0.0;
  std::size_t shared_characters = 0;
  double lr = 0.0;
};

// L_ASR + alpha * L_MA + beta * L_DI with method-dependent gating.
inline Tensor total_loss(const Tensor& asr, const Tensor& matching,
                         const Tensor& discrimination,
                         const AdaptationConfig& cfg) {
  if (cfg.alpha < 0.0 || cfg.beta < 0.0)
    throw std::invalid_argument("total_loss: weights must be non-negative");
  switch (cfg.method) {
    case AdaptMethod::SO:
      return asr;
    case AdaptMethod::CMatch:
      return asr + scale(matching, cfg.alpha);
    case AdaptMethod::CDCL:
      return asr + scale(discrimination, cfg.beta);
    case AdaptMethod::DAT:
      // discrimination slot carries the adversarial BCE term
      return asr + discrimination;
    case AdaptMethod::MADI:
      return asr + scale(matching, cfg.alpha) + scale(discrimination, cfg.beta);
  }
  throw std::invalid_argument("total_loss: unknown method");
}

}  // namespace madi
