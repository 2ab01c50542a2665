#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "madi/checkpoint.hpp"
#include "madi/config.hpp"
#include "madi/train.hpp"

using namespace madi;

namespace {

// tiny end-to-end setup shared by the harness cases
ExperimentConfig tiny_experiment() {
  ExperimentConfig cfg;
  cfg.seed = 31;
  cfg.corpus.num_characters = 4;
  cfg.corpus.lexicon_size = 6;
  cfg.corpus.word_len_lo = 2;
  cfg.corpus.word_len_hi = 3;
  cfg.corpus.words_lo = 1;
  cfg.corpus.words_hi = 2;
  cfg.corpus.source_count = 6;
  cfg.corpus.source_test_count = 2;
  cfg.corpus.target_count = 6;
  cfg.corpus.target_test_count = 3;
  cfg.corpus.seed = 31;
  cfg.corpus.shift.fir_taps = {1.0, 0.4};
  cfg.corpus.shift.noise = NoiseKind::Rain;
  cfg.corpus.shift.snr_db = 10.0;
  cfg.fbank.num_bins = 8;
  cfg.encoder = EncoderConfig{1, 8, 1, 8, 4, 16};
  cfg.training.pretrain_steps = 3;
  cfg.training.adapt_steps = 2;
  cfg.training.batch_size = 2;
  cfg.optimizer.base_lr = 0.05;
  cfg.optimizer.warmup_steps = 10;
  return cfg;
}

const Corpus& tiny_corpus() {
  static Corpus corpus = generate_corpus(tiny_experiment().corpus);
  return corpus;
}

std::vector<nlohmann::json> read_jsonl(const std::string& path) {
  std::ifstream f(path);
  REQUIRE(f.good());
  std::vector<nlohmann::json> rows;
  std::string line;
  while (std::getline(f, line))
    if (!line.empty()) rows.push_back(nlohmann::json::parse(line));
  return rows;
}

bool params_equal(const AsrModel& a, const AsrModel& b) {
  const auto& ea = a.params().entries();
  const auto& eb = b.params().entries();
  if (ea.size() != eb.size()) return false;
  for (std::size_t i = 0; i < ea.size(); ++i)
    if (ea[i].first != eb[i].first ||
        ea[i].second.values() != eb[i].second.values())
      return false;
  return true;
}

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("word error rate counts substitutions, deletions, insertions") {
  std::vector<std::string> ref{"ab", "cd"};
  CHECK(edit_distance(ref, {"ab", "cc"}) == 1);
  CHECK(edit_distance(ref, std::vector<std::string>{}) == 2);
  CHECK(edit_distance(ref, {"ab", "cd", "ef"}) == 1);
  CHECK(edit_distance(ref, ref) == 0);

  ErrorRate er{1, 2};
  CHECK(er.rate() == 0.5);
  ErrorRate empty_hyp{2, 2};
  CHECK(empty_hyp.rate() == 1.0);
  ErrorRate empty_ref{0, 0};
  CHECK(empty_ref.rate() == 0.0);
}

TEST_CASE("pretraining writes parseable per-step metrics") {
  auto cfg = tiny_experiment();
  auto path = tmp_path("madi_pretrain_metrics.jsonl");
  AsrModel model = pretrain(tiny_corpus(), cfg, path);

  auto rows = read_jsonl(path);
  REQUIRE(rows.size() == cfg.training.pretrain_steps + 1);
  CHECK(rows[0].at("type") == "header");
  CHECK(rows[0].at("lambda").get<double>() == cfg.training.lambda);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    CHECK(r.at("step").get<std::size_t>() == i);
    for (const char* key : {"l_asr", "l_ctc", "l_att", "l_ma", "l_di", "lr"})
      CHECK(std::isfinite(r.at(key).get<double>()));
    CHECK(r.at("l_asr").get<double>() > 0.0);
    CHECK(r.at("l_ma").get<double>() == 0.0);
    CHECK(r.at("l_di").get<double>() == 0.0);
    CHECK(r.at("lr").get<double>() > 0.0);
  }
  std::filesystem::remove(path);
}

TEST_CASE("pretraining is deterministic in the seed") {
  auto cfg = tiny_experiment();
  AsrModel a = pretrain(tiny_corpus(), cfg);
  AsrModel b = pretrain(tiny_corpus(), cfg);
  CHECK(params_equal(a, b));
}

TEST_CASE("checkpoints round-trip bit-exactly through disk") {
  auto cfg = tiny_experiment();
  AsrModel model = pretrain(tiny_corpus(), cfg);
  auto path = tmp_path("madi_test_ckpt.bin");
  save_checkpoint(model, path);
  AsrModel loaded = load_checkpoint(path);
  std::filesystem::remove(path);

  CHECK(params_equal(model, loaded));
  auto r1 = evaluate(model, tiny_corpus().target_test, cfg.fbank);
  auto r2 = evaluate(loaded, tiny_corpus().target_test, cfg.fbank);
  CHECK(r1.wer_total.errors == r2.wer_total.errors);
  REQUIRE(r1.utterances.size() == r2.utterances.size());
  for (std::size_t i = 0; i < r1.utterances.size(); ++i)
    CHECK(r1.utterances[i].hypothesis == r2.utterances[i].hypothesis);
}

TEST_CASE("cloned models do not share parameter storage") {
  auto cfg = tiny_experiment();
  AsrModel model(tiny_corpus().symbols, cfg.encoder, 3);
  AsrModel copy = clone_model(model);
  CHECK(params_equal(model, copy));
  Tensor first = copy.params().find(copy.params().entries()[0].first);
  first.values()[0] += 1.0;
  CHECK_FALSE(params_equal(model, copy));
}

TEST_CASE("source-only adaptation returns the checkpoint unchanged") {
  auto cfg = tiny_experiment();
  cfg.adaptation.method = AdaptMethod::SO;
  AsrModel model = pretrain(tiny_corpus(), cfg);
  auto path = tmp_path("madi_so_metrics.jsonl");
  AsrModel adapted = adapt(model, tiny_corpus().source_train,
                           unlabeled_view(tiny_corpus().target_train), cfg,
                           path);
  CHECK(params_equal(model, adapted));
  auto rows = read_jsonl(path);
  REQUIRE(rows.size() == 1);  // header only, no steps
  CHECK(rows[0].at("method") == "so");
  std::filesystem::remove(path);
}

TEST_CASE("adaptation methods update parameters and log their own losses") {
  auto cfg = tiny_experiment();
  AsrModel model = pretrain(tiny_corpus(), cfg);
  auto target = unlabeled_view(tiny_corpus().target_train);

  SECTION("cmatch keeps the discrimination slot at zero") {
    cfg.adaptation.method = AdaptMethod::CMatch;
    auto path = tmp_path("madi_cmatch_metrics.jsonl");
    AsrModel adapted =
        adapt(model, tiny_corpus().source_train, target, cfg, path);
    CHECK_FALSE(params_equal(model, adapted));
    auto rows = read_jsonl(path);
    REQUIRE(rows.size() == cfg.training.adapt_steps + 1);
    for (std::size_t i = 1; i < rows.size(); ++i) {
      CHECK(rows[i].at("l_di").get<double>() == 0.0);
      CHECK(rows[i].at("l_ma").get<double>() >= 0.0);
    }
    std::filesystem::remove(path);
  }

  SECTION("madi logs both matching and discrimination terms") {
    cfg.adaptation.method = AdaptMethod::MADI;
    auto path = tmp_path("madi_madi_metrics.jsonl");
    AsrModel adapted =
        adapt(model, tiny_corpus().source_train, target, cfg, path);
    CHECK_FALSE(params_equal(model, adapted));
    auto rows = read_jsonl(path);
    bool any_di = false;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      CHECK(std::isfinite(rows[i].at("l_ma").get<double>()));
      if (rows[i].at("l_di").get<double>() != 0.0) any_di = true;
    }
    CHECK(any_di);
    std::filesystem::remove(path);
  }

  SECTION("dat and cdcl run to completion deterministically") {
    for (auto method : {AdaptMethod::DAT, AdaptMethod::CDCL}) {
      cfg.adaptation.method = method;
      AsrModel a =
          adapt(model, tiny_corpus().source_train, target, cfg);
      AsrModel b =
          adapt(model, tiny_corpus().source_train, target, cfg);
      CHECK_FALSE(params_equal(model, a));
      CHECK(params_equal(a, b));
    }
  }
}

TEST_CASE("non-finite losses abort training") {
  CHECK_THROWS_AS(train_detail::check_finite(
                      std::numeric_limits<double>::quiet_NaN(), 1, "test"),
                  TrainingDiverged);
  CHECK_THROWS_AS(train_detail::check_finite(
                      std::numeric_limits<double>::infinity(), 1, "test"),
                  TrainingDiverged);
  CHECK_NOTHROW(train_detail::check_finite(1.5, 1, "test"));
}

TEST_CASE("centroid dump covers both domains with consistent width") {
  auto cfg = tiny_experiment();
  AsrModel model = pretrain(tiny_corpus(), cfg);
  auto split = tiny_corpus().source_test;
  split.insert(split.end(), tiny_corpus().target_test.begin(),
               tiny_corpus().target_test.end());
  auto dump = collect_centroids(model, split, cfg.fbank);
  for (const auto& [key, value] : dump.rows) {
    CHECK((key.first == "source" || key.first == "target"));
    CHECK(value.first.size() == cfg.encoder.width);
    CHECK(value.second > 0);
  }

  auto path = tmp_path("madi_centroids.csv");
  write_centroid_csv(dump, model.symbols(), path);
  std::ifstream f(path);
  std::string header;
  REQUIRE(std::getline(f, header));
  std::size_t commas = std::count(header.begin(), header.end(), ',');
  CHECK(commas == 2 + cfg.encoder.width);
  std::size_t body_rows = 0;
  for (std::string line; std::getline(f, line);)
    if (!line.empty()) ++body_rows;
  CHECK(body_rows == dump.rows.size());
  std::filesystem::remove(path);
}

TEST_CASE("evaluation reports per-domain error rates as json") {
  auto cfg = tiny_experiment();
  AsrModel model(tiny_corpus().symbols, cfg.encoder, 5);
  auto split = tiny_corpus().source_test;
  split.insert(split.end(), tiny_corpus().target_test.begin(),
               tiny_corpus().target_test.end());
  auto report = evaluate(model, split, cfg.fbank);
  CHECK(report.utterances.size() == split.size());
  auto j = report.to_json();
  CHECK(j.contains("wer"));
  CHECK(j.contains("cer"));
  CHECK(j.at("wer_by_domain").contains("source"));
  CHECK(j.at("wer_by_domain").contains("target"));
  CHECK(j.at("wer").get<double>() >= 0.0);
}

TEST_CASE("experiment config parses overrides and applies defaults") {
  nlohmann::json j{{"corpus_dir", "/tmp/c"},
                   {"adaptation", {{"method", "cdcl"}, {"alpha", 2.5}}},
                   {"training", {{"batch_size", 8}}}};
  auto cfg = parse_experiment_config(j);
  CHECK(cfg.corpus_dir == "/tmp/c");
  CHECK(cfg.task_dirs == std::vector<std::string>{"/tmp/c"});
  CHECK(cfg.adaptation.method == AdaptMethod::CDCL);
  CHECK(cfg.adaptation.alpha == 2.5);
  CHECK(cfg.adaptation.beta == 5.0);
  CHECK(cfg.training.batch_size == 8);
  CHECK(cfg.encoder.feat_dim == cfg.fbank.num_bins);
}
