// Command-line front end: corpus generation, pretraining, adaptation,
// evaluation, centroid dumps, and the full method matrix.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "madi/checkpoint.hpp"
#include "madi/config.hpp"
#include "madi/synth.hpp"
#include "madi/train.hpp"

namespace {

madi::Corpus load_corpus(const madi::ExperimentConfig& cfg) {
  if (cfg.corpus_dir.empty())
    throw std::runtime_error("config is missing corpus_dir");
  return madi::read_manifest(cfg.corpus_dir);
}

std::vector<madi::Utterance> pick_split(const madi::Corpus& corpus,
                                        const std::string& name) {
  if (name == "source_train") return corpus.source_train;
  if (name == "source_test") return corpus.source_test;
  if (name == "target_train") return corpus.target_train;
  if (name == "target_test") return corpus.target_test;
  if (name == "test") {
    auto out = corpus.source_test;
    out.insert(out.end(), corpus.target_test.begin(),
               corpus.target_test.end());
    return out;
  }
  throw std::runtime_error("unknown split: " + name);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale lab for unsupervised domain adaptation of "
               "CTC-based recognizers"};
  app.require_subcommand(1);

  std::string config_path, out_path, ckpt_path, method = "madi",
              split = "test";

  auto* gen = app.add_subcommand("gen-corpus", "synthesize a two-domain corpus");
  gen->add_option("--config", config_path, "experiment config (json)")
      ->required();
  gen->add_option("--out", out_path, "output corpus directory")->required();

  auto* pre = app.add_subcommand("pretrain", "train on labeled source data");
  pre->add_option("--config", config_path)->required();
  pre->add_option("--out", out_path, "output checkpoint")->required();

  auto* ad = app.add_subcommand("adapt", "adapt a pretrained checkpoint");
  ad->add_option("--method", method, "so|dat|cmatch|cdcl|madi")->required();
  ad->add_option("--ckpt", ckpt_path, "pretrained checkpoint")->required();
  ad->add_option("--config", config_path)->required();
  ad->add_option("--out", out_path, "output checkpoint")->required();

  auto* ev = app.add_subcommand("evaluate", "greedy-decode a split and report WER");
  ev->add_option("--ckpt", ckpt_path)->required();
  ev->add_option("--config", config_path)->required();
  ev->add_option("--split", split,
                 "source_train|source_test|target_train|target_test|test");
  ev->add_option("--out", out_path, "report json")->required();

  auto* dc = app.add_subcommand("dump-centroids",
                                "per-domain character centroids as csv");
  dc->add_option("--ckpt", ckpt_path)->required();
  dc->add_option("--config", config_path)->required();
  dc->add_option("--split", split);
  dc->add_option("--out", out_path, "centroids csv")->required();

  auto* rm = app.add_subcommand("run-matrix",
                                "all five methods over all task corpora");
  rm->add_option("--config", config_path)->required();
  rm->add_option("--out", out_path, "result table csv")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    madi::ExperimentConfig cfg = madi::load_experiment_config(config_path);

    if (gen->parsed()) {
      madi::Corpus corpus = madi::generate_corpus(cfg.corpus);
      madi::write_manifest(corpus, out_path);
      std::cout << "wrote " << out_path << " ("
                << corpus.source_train.size() << "+"
                << corpus.source_test.size() << " source, "
                << corpus.target_train.size() << "+"
                << corpus.target_test.size() << " target)\n";
    } else if (pre->parsed()) {
      madi::Corpus corpus = load_corpus(cfg);
      madi::AsrModel model =
          madi::pretrain(corpus, cfg, out_path + ".metrics.jsonl");
      madi::save_checkpoint(model, out_path);
      std::cout << "wrote " << out_path << "\n";
    } else if (ad->parsed()) {
      cfg.adaptation.method = madi::adapt_method_from_string(method);
      madi::Corpus corpus = load_corpus(cfg);
      madi::AsrModel model = madi::load_checkpoint(ckpt_path);
      madi::AsrModel adapted = madi::adapt(
          model, corpus.source_train, madi::unlabeled_view(corpus.target_train),
          cfg, out_path + ".metrics.jsonl");
      madi::save_checkpoint(adapted, out_path);
      std::cout << "wrote " << out_path << "\n";
    } else if (ev->parsed()) {
      madi::Corpus corpus = load_corpus(cfg);
      madi::AsrModel model = madi::load_checkpoint(ckpt_path);
      auto report =
          madi::evaluate(model, pick_split(corpus, split), cfg.fbank);
      std::ofstream f(out_path);
      if (!f) throw std::runtime_error("cannot open " + out_path);
      f << report.to_json().dump(2) << "\n";
      std::cout << "wer " << report.wer_total.rate() << " cer "
                << report.cer_total.rate() << " -> " << out_path << "\n";
    } else if (dc->parsed()) {
      madi::Corpus corpus = load_corpus(cfg);
      madi::AsrModel model = madi::load_checkpoint(ckpt_path);
      auto dump = madi::collect_centroids(model, pick_split(corpus, split),
                                          cfg.fbank);
      madi::write_centroid_csv(dump, model.symbols(), out_path);
      std::cout << "wrote " << out_path << " (" << dump.rows.size()
                << " centroids)\n";
    } else if (rm->parsed()) {
      std::filesystem::path artifacts =
          std::filesystem::path(out_path).parent_path();
      auto result = madi::run_matrix(cfg, artifacts.string(), &std::cout);
      std::ofstream f(out_path);
      if (!f) throw std::runtime_error("cannot open " + out_path);
      madi::write_matrix_csv(result, f);
      madi::print_matrix(result, std::cout);
      for (const auto& row : result.cells)
        for (const auto& cell : row)
          if (!cell.error.empty()) return 3;
    }
  } catch (const madi::TrainingDiverged& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
