#include "tefb/env.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <ostream>
#include <set>

#include "json.hpp"

#include "tefb/error.hpp"

namespace tefb {

namespace {

constexpr std::array<std::string_view, kNumActions> kActionNames = {
    "pad_overlay",         "append_benign_data_overlay", "append_benign_binary_overlay",
    "add_bytes_to_section_cave", "add_section_strings",  "add_section_benign_data",
    "add_strings_to_overlay", "add_imports",            "rename_section",
    "remove_debug",        "modify_optional_header",     "modify_timestamp",
    "break_checksum",      "toy_pack_toggle",
};

void append_random(Bytes& out, Rng& rng, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>(rng() & 0xff));
}

Bytes benign_strings(const BenignIngredients& ing, Rng& rng) {
  Bytes out;
  const std::size_t n = uniform_u64(rng, 4, 16);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = ing.strings[uniform_index(rng, ing.strings.size())];
    out.insert(out.end(), s.begin(), s.end());
    out.push_back(0);
  }
  return out;
}

bool add_data_section(ToyBinary& b, Rng& rng, Bytes data) {
  if (b.sections.size() >= kMaxSections || data.empty() || data.size() > kMaxAllocLen) return false;
  const auto& names = benign_section_names();
  Section s;
  s.name = std::string(names[uniform_index(rng, names.size())]);
  s.flags = kSectionData;
  s.alloc_len = static_cast<std::uint32_t>(data.size());
  s.data = std::move(data);
  b.sections.push_back(std::move(s));
  return true;
}

// Returns false when the action does not apply.
bool mutate(ToyBinary& b, ActionId a, const BenignIngredients& ing, Rng& rng) {
  switch (a) {
    case ActionId::PadOverlay:
      append_random(b.overlay, rng, uniform_u64(rng, 512, 4096));
      return true;
    case ActionId::AppendBenignDataOverlay: {
      if (ing.section_datas.empty()) return false;
      const auto& blob = ing.section_datas[uniform_index(rng, ing.section_datas.size())].data;
      b.overlay.insert(b.overlay.end(), blob.begin(), blob.end());
      return !blob.empty();
    }
    case ActionId::AppendBenignBinaryOverlay: {
      if (ing.whole_binaries.empty()) return false;
      const auto& whole = ing.whole_binaries[uniform_index(rng, ing.whole_binaries.size())];
      b.overlay.insert(b.overlay.end(), whole.begin(), whole.end());
      return true;
    }
    case ActionId::AddBytesToSectionCave: {
      const auto pi = b.payload_index();
      std::size_t best = b.sections.size();
      for (std::size_t i = 0; i < b.sections.size(); ++i) {
        if (pi && i == *pi) continue;
        if (b.sections[i].cave() == 0) continue;
        if (best == b.sections.size() || b.sections[i].cave() > b.sections[best].cave()) best = i;
      }
      if (best == b.sections.size()) return false;
      Section& s = b.sections[best];
      append_random(s.data, rng, uniform_u64(rng, 1, std::min<std::uint32_t>(256, s.cave())));
      return true;
    }
    case ActionId::AddSectionStrings:
      if (ing.strings.empty()) return false;
      return add_data_section(b, rng, benign_strings(ing, rng));
    case ActionId::AddSectionBenignData:
      if (ing.section_datas.empty()) return false;
      return add_data_section(b, rng, ing.section_datas[uniform_index(rng, ing.section_datas.size())].data);
    case ActionId::AddStringsToOverlay: {
      if (ing.strings.empty()) return false;
      Bytes s = benign_strings(ing, rng);
      b.overlay.insert(b.overlay.end(), s.begin(), s.end());
      return true;
    }
    case ActionId::AddImports: {
      std::set<std::string> used;
      std::size_t entries = 0;
      for (const auto& imp : b.imports) {
        used.insert(imp.library);
        entries += imp.symbols.size();
      }
      std::vector<const Import*> fresh;
      for (const auto& imp : ing.import_entries) {
        if (!used.count(imp.library) && entries + imp.symbols.size() <= kMaxImportEntries) fresh.push_back(&imp);
      }
      std::sort(fresh.begin(), fresh.end(), [](const Import* x, const Import* y) { return x->library < y->library; });
      fresh.erase(std::unique(fresh.begin(), fresh.end(),
                              [](const Import* x, const Import* y) { return x->library == y->library; }),
                  fresh.end());
      if (fresh.empty()) return false;
      b.imports.push_back(*fresh[uniform_index(rng, fresh.size())]);
      return true;
    }
    case ActionId::RenameSection: {
      if (b.sections.empty()) return false;
      const auto& names = benign_section_names();
      Section& s = b.sections[uniform_index(rng, b.sections.size())];
      const std::string name(names[uniform_index(rng, names.size())]);
      if (s.name == name) return false;
      s.name = name;
      return true;
    }
    case ActionId::RemoveDebug:
      if (!b.debug_present) return false;
      b.debug_present = false;
      b.debug_blob.clear();
      return true;
    case ActionId::ModifyOptionalHeader: {
      if (ing.headers.empty()) return false;
      const auto& h = ing.headers[uniform_index(rng, ing.headers.size())];
      b.os_major = h.os_major;
      b.os_minor = h.os_minor;
      b.version = h.version;
      return true;
    }
    case ActionId::ModifyTimestamp: {
      if (ing.headers.empty()) return false;
      b.timestamp = ing.headers[uniform_index(rng, ing.headers.size())].timestamp;
      return true;
    }
    case ActionId::BreakChecksum:
      b.checksum += 1;
      return true;
    case ActionId::ToyPackToggle:
      b = b.packed ? unpack(b) : pack(b);
      return true;
  }
  return false;
}

}  // namespace

std::string_view action_name(ActionId a) { return kActionNames[static_cast<std::size_t>(a)]; }

ActionId action_from_index(std::size_t i) {
  if (i >= kNumActions) throw Error(Errc::InvalidArgument, "action index out of range");
  return static_cast<ActionId>(i);
}

const std::array<ActionId, kNumActions>& all_actions() {
  static const std::array<ActionId, kNumActions> acts = [] {
    std::array<ActionId, kNumActions> a{};
    for (std::size_t i = 0; i < kNumActions; ++i) a[i] = static_cast<ActionId>(i);
    return a;
  }();
  return acts;
}

ToyBinary apply_action(const ToyBinary& b, ActionId a, const BenignIngredients& ing, Rng& rng) {
  const bool sealed = b.checksum == compute_checksum(b);
  ToyBinary out = b;
  try {
    if (!mutate(out, a, ing, rng)) {
      spdlog::debug("{}: not applicable, no-op", action_name(a));
      return b;
    }
  } catch (const Error& e) {
    spdlog::debug("{}: {}, no-op", action_name(a), e.what());
    return b;
  }
  if (sealed && a != ActionId::BreakChecksum) seal_checksum(out);
  if (!validate(out).valid() || functional_digest(out) != functional_digest(b)) {
    spdlog::debug("{}: result rejected, no-op", action_name(a));
    return b;
  }
  return out;
}

void CaptureBuffer::add(const FeatureVector& obs, std::uint8_t label) {
  std::lock_guard lock(mu_);
  rows_.push_back(obs, label);
}

std::size_t CaptureBuffer::size() const {
  std::lock_guard lock(mu_);
  return rows_.rows;
}

FeatureMatrix CaptureBuffer::snapshot() const {
  std::lock_guard lock(mu_);
  return rows_;
}

void CaptureBuffer::clear() {
  std::lock_guard lock(mu_);
  rows_ = {};
}

std::uint64_t EpisodeLog::next_episode_id() {
  std::lock_guard lock(mu_);
  return next_id_++;
}

void EpisodeLog::write(std::uint64_t episode_id, std::size_t turn, ActionId a, double reward, std::uint8_t label,
                       bool done) {
  nlohmann::ordered_json j;
  j["episode_id"] = episode_id;
  j["turn"] = turn;
  j["action"] = action_name(a);
  j["reward"] = reward;
  j["label"] = label;
  j["done"] = done;
  std::lock_guard lock(mu_);
  *out_ << j.dump() << '\n';
}

Environment::Environment(const Detector& detector, const BenignIngredients& ingredients, EnvConfig cfg,
                         std::uint64_t seed, CaptureBuffer* capture, EpisodeLog* log)
    : detector_(&detector), ing_(&ingredients), cfg_(cfg), seed_(seed), capture_(capture), log_(log) {
  if (cfg_.max_turns == 0) throw Error(Errc::InvalidArgument, "max_turns must be > 0");
}

std::uint8_t Environment::query(const FeatureVector& obs) {
  const std::uint8_t label = detector_->predict_label(obs);
  if (capture_) capture_->add(obs, label);
  return label;
}

ResetResult Environment::reset(const ToyBinary& b) {
  if (!validate(b).valid()) throw Error(Errc::MalformedInput, "reset input fails validation");
  rng_.seed(derive_seed(seed_, {episodes_}));
  ++episodes_;
  episode_id_ = log_ ? log_->next_episode_id() : episodes_ - 1;
  working_ = b;
  digest_ = functional_digest(b);
  turn_ = 0;
  started_ = true;
  done_ = evaded_ = false;
  obs_ = extract_features(working_);
  max_episode_queries_ = std::max<std::size_t>(max_episode_queries_, 1);
  const bool detected = query(obs_) == 1;
  skipped_ = !detected;
  return {obs_, detected};
}

ResetResult Environment::reset(const std::filesystem::path& path) {
  ToyBinary b;
  try {
    b = parse(read_file(path.string()));
  } catch (const ParseError& e) {
    throw Error(Errc::MalformedInput, path.string() + ": " + e.what());
  }
  return reset(b);
}

StepRecord Environment::step(ActionId a) {
  if (!active()) throw Error(Errc::EpisodeFinished, "step called without an active episode");
  working_ = apply_action(working_, a, *ing_, rng_);
#ifndef NDEBUG
  if (functional_digest(working_) != digest_) throw Error(Errc::InvariantViolation, "digest changed");
#endif
  ++turn_;
  max_episode_queries_ = std::max(max_episode_queries_, turn_ + 1);
  StepRecord rec;
  rec.action = a;
  rec.observation = obs_ = extract_features(working_);
  rec.label = query(obs_);
  evaded_ = rec.label == 0;
  rec.reward = evaded_ ? kEvasionReward : 0.0;
  done_ = evaded_ || turn_ >= cfg_.max_turns;
  rec.done = done_;
  if (log_) log_->write(episode_id_, turn_, a, rec.reward, rec.label, rec.done);
  return rec;
}

}  // namespace tefb
