#include <cstdio>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "tefb/cli.hpp"
#include "tefb/error.hpp"
#include "tefb/log.hpp"

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw tefb::Error(tefb::Errc::IoFailure, "cannot read config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  tefb::init_logging();
  CLI::App app{"tefb: toy executable-format evasion workbench"};
  app.require_subcommand(1);

  std::string config_path, out = "out";
  std::vector<std::uint64_t> seeds;
  std::string corpus_dir, model, mode, target;
  std::optional<std::size_t> budget, max_turns;
  std::optional<double> wall_clock, fpr;
  std::vector<std::string> run_dirs;

  auto common = [&](CLI::App* c) {
    c->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    c->add_option("--out", out, "Output directory");
  };

  auto* gen = app.add_subcommand("gen-corpus", "Generate the synthetic corpus");
  common(gen);
  gen->add_option("--seed", seeds, "Corpus seed")->expected(1);

  auto* train = app.add_subcommand("train-target", "Train and calibrate a target detector");
  common(train);
  train->add_option("--corpus", corpus_dir, "Corpus directory")->required();
  train->add_option("--target", target, "gbdt | linear | ffnn");
  train->add_option("--fpr", fpr, "Target false-positive rate");
  train->add_option("--seed", seeds, "Training seed")->expected(1);

  auto* attack = app.add_subcommand("attack", "Run an attack against a target");
  common(attack);
  attack->add_option("--corpus", corpus_dir, "Corpus directory")->required();
  attack->add_option("--model", model, "Target model (.tefm)")->required();
  attack->add_option("--mode", mode, "random | ppo | meme");
  attack->add_option("--seed", seeds, "Attack seeds (default 0..4)");
  attack->add_option("--target", target, "Target kind label (informational)");
  attack->add_option("--budget", budget, "Training query budget");
  attack->add_option("--max-turns", max_turns, "Modifications per episode");
  attack->add_option("--wall-clock", wall_clock, "Wall-clock limit in seconds");

  auto* report = app.add_subcommand("report", "Merge attack runs into a comparison table");
  report->add_option("--out", out, "Output directory");
  report->add_option("runs", run_dirs, "Run directories")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    tefb::RunConfig cfg;
    if (!config_path.empty()) cfg = tefb::run_config_from_json(slurp(config_path));
    cfg.out = out;
    if (!corpus_dir.empty()) cfg.corpus_dir = corpus_dir;
    if (!model.empty()) cfg.model_path = model;
    if (!mode.empty()) cfg.mode = mode;
    if (!target.empty()) cfg.target = target;
    if (fpr) cfg.fpr = *fpr;
    cfg.meme.surrogate.fpr = cfg.fpr;
    if (wall_clock) cfg.wall_clock_s = *wall_clock;
    if (max_turns) cfg.meme.env.max_turns = *max_turns;
    if (budget) {
      cfg.meme.query_budget = *budget;
      cfg.meme.n = *budget / cfg.meme.k;
    }

    if (gen->parsed()) {
      if (!seeds.empty()) cfg.corpus.seed = seeds.front();
      std::printf("%s\n", tefb::cmd_gen_corpus(cfg).string().c_str());
    } else if (train->parsed()) {
      if (!seeds.empty()) cfg.target_gbdt.seed = cfg.linear.seed = cfg.ffnn.seed = seeds.front();
      std::printf("%s\n", tefb::cmd_train_target(cfg).string().c_str());
    } else if (attack->parsed()) {
      if (!seeds.empty()) cfg.seeds = seeds;
      for (const auto& p : tefb::cmd_attack(cfg)) std::printf("%s\n", p.string().c_str());
    } else if (report->parsed()) {
      std::vector<std::filesystem::path> dirs(run_dirs.begin(), run_dirs.end());
      std::printf("%s\n", tefb::cmd_report(dirs, cfg.out).string().c_str());
    }
  } catch (const tefb::Error& e) {
    spdlog::error("{}", e.what());
    return e.code() == tefb::Errc::TimedOut ? 3 : 1;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
