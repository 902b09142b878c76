#include "doctest.h"

#include <sstream>

#include "json.hpp"
#include "support.hpp"
#include "tefb/env.hpp"
#include "tefb/error.hpp"
#include "tefb/meme.hpp"

using namespace tefb;

namespace {

const BenignIngredients& ingredients() {
  static const BenignIngredients ing = [] {
    std::vector<ToyBinary> benign;
    for (std::uint64_t i = 0; i < 30; ++i) benign.push_back(gen_binary(Label::Benign, 5000 + i, CorpusConfig{}));
    return extract_ingredients(benign);
  }();
  return ing;
}

GbdtModel stump(std::size_t feature, double thr, double left, double right) {
  GbdtModel m;
  m.shrinkage = 1.0;
  RegressionTree t;
  t.nodes = {{std::int32_t(feature), thr, 1, 2, 0.0, 2.0}, {-1, 0, -1, -1, left, 1.0}, {-1, 0, -1, -1, right, 1.0}};
  m.trees.push_back(t);
  return m;
}

Detector constant_detector(double margin) {
  GbdtModel m;
  m.base_score = margin;
  return Detector(m, 0.5);
}

}  // namespace

TEST_SUITE("env") {
  TEST_CASE("fourteen actions in fixed order") {
    CHECK(kNumActions == 14);
    CHECK(action_name(ActionId::PadOverlay) == "pad_overlay");
    CHECK(action_name(ActionId::AddBytesToSectionCave) == "add_bytes_to_section_cave");
    CHECK(action_name(ActionId::ToyPackToggle) == "toy_pack_toggle");
    CHECK(action_from_index(9) == ActionId::RemoveDebug);
    CHECK_THROWS_AS(action_from_index(14), Error);
  }

  TEST_CASE("every action keeps binaries valid with the same digest") {
    const CorpusConfig cfg;
    Rng rng(17);
    for (std::size_t trial = 0; trial < 10000; ++trial) {
      const ToyBinary b = gen_binary(trial % 3 ? Label::Malicious : Label::Benign, trial / 2, cfg);
      const ActionId a = action_from_index(trial % kNumActions);
      const ToyBinary m = apply_action(b, a, ingredients(), rng);
      const auto rep = validate(m);
      if (!rep.valid() || functional_digest(m) != functional_digest(b) || !(parse(serialize(m)) == m)) {
        FAIL("trial " << trial << " action " << action_name(a));
      }
    }
  }

  TEST_CASE("inapplicable actions return the input unchanged") {
    Rng rng(1);
    ToyBinary b = testing::minimal_binary();
    CHECK(apply_action(b, ActionId::RemoveDebug, ingredients(), rng) == b);
    CHECK(apply_action(b, ActionId::AddBytesToSectionCave, ingredients(), rng) == b);

    BenignIngredients one = ingredients();
    one.import_entries = {{"KERNEL32", {"ExitProcess"}}};
    b.imports = one.import_entries;
    seal_checksum(b);
    CHECK(apply_action(b, ActionId::AddImports, one, rng) == b);

    ToyBinary full = testing::minimal_binary();
    for (int i = 0; i < 31; ++i) full.sections.push_back({"d" + std::to_string(i), kSectionData, 1, {1}});
    seal_checksum(full);
    CHECK(apply_action(full, ActionId::AddSectionStrings, ingredients(), rng) == full);
  }

  TEST_CASE("break_checksum adds one per application") {
    Rng rng(2);
    const ToyBinary b = gen_binary(Label::Malicious, 4, {});
    const ToyBinary once = apply_action(b, ActionId::BreakChecksum, ingredients(), rng);
    const ToyBinary twice = apply_action(once, ActionId::BreakChecksum, ingredients(), rng);
    CHECK(twice.checksum == b.checksum + 2u);
    const auto rep = validate(once);
    CHECK(rep.valid());
    REQUIRE(rep.warnings.size() == 1);
    CHECK(rep.warnings[0] == SoftWarning::ChecksumMismatch);
  }

  TEST_CASE("sealed checksums stay sealed through mutations") {
    Rng rng(3);
    ToyBinary b = gen_binary(Label::Malicious, 8, {});
    for (ActionId a : all_actions()) {
      if (a == ActionId::BreakChecksum) continue;
      b = apply_action(b, a, ingredients(), rng);
      CHECK(b.checksum == compute_checksum(b));
    }
  }

  TEST_CASE("specific action effects") {
    Rng rng(4);
    CorpusConfig always_debug;
    always_debug.malicious_debug_rate = 1.0;
    ToyBinary b = gen_binary(Label::Malicious, 21, always_debug);
    REQUIRE(b.debug_present);
    const ToyBinary nd = apply_action(b, ActionId::RemoveDebug, ingredients(), rng);
    CHECK_FALSE(nd.debug_present);
    CHECK(nd.debug_blob.empty());

    const ToyBinary padded = apply_action(b, ActionId::PadOverlay, ingredients(), rng);
    const std::size_t grown = padded.overlay.size() - b.overlay.size();
    CHECK((grown >= 512 && grown <= 4096));

    const ToyBinary more = apply_action(b, ActionId::AddSectionBenignData, ingredients(), rng);
    CHECK(more.sections.size() == b.sections.size() + 1);
    CHECK(more.sections.back().flags == kSectionData);

    const ToyBinary toggled = apply_action(b, ActionId::ToyPackToggle, ingredients(), rng);
    CHECK(toggled.packed != b.packed);
    CHECK(apply_action(toggled, ActionId::ToyPackToggle, ingredients(), rng).packed == b.packed);

    const ToyBinary ts = apply_action(b, ActionId::ModifyTimestamp, ingredients(), rng);
    bool from_pool = false;
    for (const auto& h : ingredients().headers) from_pool = from_pool || h.timestamp == ts.timestamp;
    CHECK(from_pool);
  }

  TEST_CASE("fixed seed and action sequence give identical bytes") {
    const ToyBinary b = gen_binary(Label::Malicious, 33, {});
    auto run = [&] {
      Rng rng(99);
      ToyBinary w = b;
      for (std::size_t i = 0; i < 40; ++i) w = apply_action(w, action_from_index((i * 5) % kNumActions), ingredients(), rng);
      return serialize(w);
    };
    CHECK(run() == run());
  }

  TEST_CASE("benign-labelled inputs are skipped after one query") {
    const Detector d = constant_detector(-5.0);
    Environment env(d, ingredients(), {}, 1);
    const auto r = env.reset(gen_binary(Label::Malicious, 1, {}));
    CHECK_FALSE(r.initially_detected);
    CHECK(env.skipped());
    CHECK(d.ledger() == 1);
    CHECK_THROWS_AS(env.step(ActionId::PadOverlay), Error);
  }

  TEST_CASE("reset observation is the feature vector and costs one query") {
    const Detector d = constant_detector(5.0);
    CaptureBuffer cap;
    Environment env(d, ingredients(), {}, 1, &cap);
    const ToyBinary b = gen_binary(Label::Malicious, 2, {});
    const auto r = env.reset(b);
    CHECK(r.initially_detected);
    CHECK(r.observation == extract_features(b));
    CHECK(d.ledger() == 1);
    CHECK(cap.size() == 1);
  }

  TEST_CASE("evasion at turn three ends the episode with reward 10") {
    const Detector d(stump(feat::kSectionCount, 0.11, 5.0, -5.0), 0.5);
    std::ostringstream logbuf;
    EpisodeLog log(logbuf);
    CaptureBuffer cap;
    Environment env(d, ingredients(), {}, 7, &cap, &log);
    REQUIRE(env.reset(testing::minimal_binary()).initially_detected);
    double total = 0.0;
    StepRecord rec;
    for (int t = 1; t <= 3; ++t) {
      rec = env.step(ActionId::AddSectionStrings);
      total += rec.reward;
      CHECK(rec.done == (t == 3));
    }
    CHECK(rec.label == 0);
    CHECK(total == 10.0);
    CHECK(env.turn() == 3);
    CHECK(env.evaded());
    CHECK(d.ledger() == 4);
    CHECK(cap.size() == 4);
    CHECK_THROWS_AS(env.step(ActionId::PadOverlay), Error);

    std::istringstream in(logbuf.str());
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) {
      const auto j = nlohmann::json::parse(line);
      CHECK(j.at("action") == "add_section_strings");
      CHECK(j.at("turn") == lines + 1);
      ++lines;
    }
    CHECK(lines == 3);
  }

  TEST_CASE("fifteen non-evading steps exhaust the episode") {
    const Detector d = constant_detector(5.0);
    Environment env(d, ingredients(), {}, 3);
    env.reset(gen_binary(Label::Malicious, 3, {}));
    double total = 0.0;
    std::size_t steps = 0;
    const auto digest = functional_digest(env.working());
    while (!env.done()) {
      total += env.step(action_from_index(steps % kNumActions)).reward;
      ++steps;
      CHECK(functional_digest(env.working()) == digest);
      CHECK(validate(env.working()).valid());
    }
    CHECK(steps == 15);
    CHECK(env.exhausted());
    CHECK(total == 0.0);
    CHECK(d.ledger() == 16);
    CHECK(env.max_episode_queries() == 16);
  }

  TEST_CASE("malformed files are rejected at reset") {
    const Detector d = constant_detector(5.0);
    Environment env(d, ingredients(), {}, 3);
    const auto dir = testing::temp_dir("env_bad");
    write_file((dir / "bad.tef").string(), Bytes{'T', 'E', 'F', '1', 0});
    CHECK_THROWS_AS(env.reset(dir / "bad.tef"), Error);
    write_file((dir / "ok.tef").string(), serialize(testing::minimal_binary()));
    CHECK(env.reset(dir / "ok.tef").initially_detected);
  }

  TEST_CASE("evaluation denominator matches ledger arithmetic") {
    const Detector d(stump(feat::kDebug, 0.5, -5.0, 5.0), 0.5);
    std::vector<ToyBinary> bins;
    std::size_t expect_detected = 0;
    for (std::uint64_t i = 0; i < 300; ++i) {
      bins.push_back(gen_binary(i % 4 ? Label::Malicious : Label::Benign, 700 + i, {}));
      expect_detected += d.label_unmetered(extract_features(bins.back()));
    }
    const auto outcomes = evaluate(d, ingredients(), bins, random_chooser(), {}, 5);
    std::size_t turns = 0;
    for (const auto& o : outcomes) {
      turns += o.modifications;
      CHECK(o.modifications <= 15);
    }
    CHECK(d.ledger() == 300 + turns);
    const EvasionReport rep = evasion_rate(outcomes);
    CHECK(rep.n_detected == expect_detected);
    CHECK(rep.n_tested == 300);
  }
}
