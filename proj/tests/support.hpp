#pragma once

#include <filesystem>
#include <string>

#include "tefb/corpus.hpp"
#include "tefb/tbf.hpp"

namespace tefb::testing {

inline ToyBinary minimal_binary() {
  ToyBinary b;
  b.timestamp = 1600000000u;
  Section s;
  s.name = "code";
  s.flags = kSectionExec;
  s.data = {0x90, 0x90, 0xc3};
  s.alloc_len = 3;
  b.sections.push_back(s);
  seal_checksum(b);
  return b;
}

inline CorpusConfig small_config(std::uint64_t seed = 3) {
  CorpusConfig c;
  c.seed = seed;
  c.n_target_train_per_class = 150;
  c.n_target_calib_benign = 300;
  c.n_aux_per_class = 120;
  c.n_aux_calib_benign = 300;
  c.n_eval_per_class = 60;
  c.n_attack_malware = 40;
  c.n_benign_ingredients = 20;
  c.n_attack_seeds = 2;
  return c;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("tefb_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace tefb::testing
