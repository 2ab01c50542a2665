#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace madi {

// Minimal edit distance (substitutions + insertions + deletions).
template <typename T>
std::size_t edit_distance(const std::vector<T>& ref, const std::vector<T>& hyp) {
  std::vector<std::size_t> prev(hyp.size() + 1), cur(hyp.size() + 1);
  for (std::size_t j = 0; j <= hyp.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= ref.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= hyp.size(); ++j) {
      std::size_t sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[hyp.size()];
}

struct ErrorRate {
  std::size_t errors = 0;
  std::size_t reference_tokens = 0;

  double rate() const {
    if (reference_tokens == 0) return errors == 0 ? 0.0 : 1.0;
    return static_cast<double>(errors) / reference_tokens;
  }
  void add(const ErrorRate& other) {
    errors += other.errors;
    reference_tokens += other.reference_tokens;
  }
};

struct UtteranceResult {
  std::string id;
  std::string domain;
  std::vector<std::string> reference;
  std::vector<std::string> hypothesis;
  ErrorRate wer;
  ErrorRate cer;
};

struct EvalReport {
  std::vector<UtteranceResult> utterances;
  std::map<std::string, ErrorRate> wer_by_domain;
  ErrorRate wer_total;
  ErrorRate cer_total;

  nlohmann::json to_json() const {
    nlohmann::json per;
    for (const auto& u : utterances) {
      nlohmann::json row{{"id", u.id},
                         {"domain", u.domain},
                         {"reference", u.reference},
                         {"hypothesis", u.hypothesis},
                         {"word_errors", u.wer.errors},
                         {"reference_words", u.wer.reference_tokens}};
      per.push_back(row);
    }
    nlohmann::json by_domain;
    for (const auto& [dom, er] : wer_by_domain) by_domain[dom] = er.rate();
    return nlohmann::json{{"wer", wer_total.rate()},
                          {"cer", cer_total.rate()},
                          {"wer_by_domain", by_domain},
                          {"utterances", per}};
  }
};

}  // namespace madi
