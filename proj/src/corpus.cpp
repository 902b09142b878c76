#include "tefb/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

#include "tefb/rng.hpp"

namespace tefb {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 16> kMarkers = {
    "qZ7#vK2!", "Xw9$rT4&", "mB3@nQ8*", "Jd6%hY1^", "pL4!zU7~", "Gk2&sW9#", "tR8*fH3@", "Nc5^bV6!",
    "wE1~jA4$", "Hy7#oD2%", "uM9@gP5&", "Ks3!xI8*", "bF6$lO1^", "Rq4%cZ7~", "eT2^yN9#", "Va8&kS3@",
};

const std::vector<std::string_view> kBenignWords = {
    "Microsoft", "Copyright", "Version", "Windows", "Settings", "Document", "Program", "Library",
    "Resource", "Window", "Printer", "Display", "Network", "Service", "Control", "License",
    "Options", "Preferences", "Toolbar", "Message", "Account", "Profile", "Update", "Install",
    "Support", "Manager", "Application", "Default", "Language", "Keyboard", "Explorer", "Template",
};

const std::vector<std::string_view> kSuspiciousStrings = {
    "cmd.exe /c %s",        "http://%s/gate.php",  "\\\\.\\pipe\\svcctl", "SELECT * FROM AntiVirusProduct",
    "vssadmin delete shadows", "schtasks /create /tn", "Global\\mtx_%08x",  "bcdedit /set recoveryenabled no",
    "powershell -enc %s",   "attrib +h +s %s",     "keylog_%d.dat",      "taskkill /f /im %s",
};

const std::vector<std::string_view> kBenignLibs = {
    "kernel32.dll", "user32.dll",   "gdi32.dll",    "advapi32.dll", "msvcrt.dll",  "comctl32.dll",
    "shell32.dll",  "ole32.dll",    "oleaut32.dll", "shlwapi.dll",  "version.dll", "comdlg32.dll",
    "winspool.drv", "uxtheme.dll",  "imm32.dll",    "rpcrt4.dll",
};

const std::vector<std::string_view> kSuspiciousLibs = {
    "ntdll_hook.dll", "wininet_x.dll", "crypt_ex.dll",  "psapi_k.dll",
    "urlmon_d.dll",   "ws2_raw.dll",   "dbghelp_x.dll", "sfc_os.dll",
};

const std::vector<std::string_view> kBenignSymbols = {
    "GetModuleHandleW", "GetProcAddress",  "LoadLibraryW",   "CreateFileW",     "ReadFile",
    "WriteFile",        "CloseHandle",     "GetLastError",   "HeapAlloc",       "HeapFree",
    "CreateWindowExW",  "ShowWindow",      "UpdateWindow",   "GetMessageW",     "DispatchMessageW",
    "DefWindowProcW",   "RegisterClassW",  "BeginPaint",     "EndPaint",        "SelectObject",
    "DeleteObject",     "RegOpenKeyExW",   "RegQueryValueW", "RegCloseKey",     "malloc",
    "free",             "memcpy",          "strlen",         "InitCommonControls", "SHGetFolderPathW",
    "CoInitialize",     "CoCreateInstance", "SysAllocString", "PathFileExistsW", "GetFileVersionInfoW",
    "GetOpenFileNameW", "OpenPrinterW",    "SetWindowTheme", "ImmGetContext",   "UuidCreate",
};

const std::vector<std::string_view> kSuspiciousSymbols = {
    "VirtualAllocEx",    "WriteProcessMemory", "CreateRemoteThread", "SetWindowsHookExA",
    "InternetOpenUrlA",  "URLDownloadToFileA", "CryptEncrypt",       "RegSetValueExA",
    "OpenProcess",       "GetAsyncKeyState",   "NtUnmapViewOfSection", "IsDebuggerPresent",
    "EnumProcesses",     "MiniDumpWriteDump",  "WSASocketA",         "SfcFileException",
};

const std::vector<std::string_view> kBenignSectionNames = {
    ".text", ".data", ".rdata", ".rsrc", ".reloc", ".pdata", ".idata", ".tls",
};

const std::vector<std::string_view> kSuspiciousSectionNames = {
    ".xdata", "UPX1", ".crypt", ".packed", ".vmp0", ".aspack", ".adata", ".boot",
};

constexpr std::uint8_t kOpcodes[] = {0x48, 0x89, 0x8b, 0xe8, 0xc3, 0x55, 0x5d, 0x83, 0xc4, 0xec, 0x24, 0x44,
                                     0x0f, 0x85, 0x84, 0x74, 0x75, 0xeb, 0x33, 0xc0, 0xff, 0x15, 0x8d, 0x4c};

template <class T>
const T& pick(Rng& rng, const std::vector<T>& v) {
  return v[uniform_index(rng, v.size())];
}

std::uint8_t random_byte(Rng& rng) { return static_cast<std::uint8_t>(uniform_u64(rng, 0, 255)); }

void append_random(Bytes& out, Rng& rng, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_byte(rng));
}

void append_str(Bytes& out, std::string_view s) { out.insert(out.end(), s.begin(), s.end()); }

// Code-like bytes: skewed toward a small opcode alphabet with zero runs.
void append_code(Bytes& out, Rng& rng, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    double u = uniform01(rng);
    if (u < 0.55) {
      out.push_back(kOpcodes[uniform_index(rng, std::size(kOpcodes))]);
    } else if (u < 0.80) {
      out.push_back(0);
    } else {
      // Non-printable filler keeps code from forming long printable runs.
      out.push_back(static_cast<std::uint8_t>(uniform_u64(rng, 0, 15)));
    }
  }
}

std::string benign_phrase(Rng& rng) {
  std::string s;
  std::size_t words = uniform_u64(rng, 1, 4);
  for (std::size_t i = 0; i < words; ++i) {
    if (i) s += ' ';
    s += pick(rng, kBenignWords);
  }
  return s;
}

std::uint32_t round_alloc(Rng& rng, std::size_t used) {
  std::size_t alloc = ((used + 511) / 512) * 512;
  if (alloc == 0 || bernoulli(rng, 0.5)) alloc += 512;
  return static_cast<std::uint32_t>(alloc);
}

Section make_section(Rng& rng, std::string name, std::uint8_t flags, Bytes data) {
  Section s;
  s.name = std::move(name);
  s.flags = flags;
  s.alloc_len = round_alloc(rng, data.size());
  s.data = std::move(data);
  return s;
}

Import make_import(Rng& rng, std::string_view lib, const std::vector<std::string_view>& pool, std::size_t lo,
                   std::size_t hi) {
  Import imp;
  imp.library = std::string(lib);
  std::size_t n = uniform_u64(rng, lo, hi);
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  for (std::size_t i = 0; i < n && i < idx.size(); ++i) imp.symbols.emplace_back(pool[idx[i]]);
  return imp;
}

void add_libraries(Rng& rng, ToyBinary& b, const std::vector<std::string_view>& libs,
                   const std::vector<std::string_view>& syms, std::size_t count) {
  std::vector<std::size_t> idx(libs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  for (std::size_t i = 0; i < count && i < idx.size(); ++i) b.imports.push_back(make_import(rng, libs[idx[i]], syms, 2, 7));
}

Bytes debug_blob(Rng& rng, bool malicious) {
  Bytes d;
  append_str(d, "RSDS");
  append_random(d, rng, 16);
  for (int i = 0; i < 4; ++i) d.push_back(static_cast<std::uint8_t>(uniform_u64(rng, 0, 3)));
  std::string path;
  if (malicious) {
    path = "C:\\Users\\admin\\Desktop\\";
    for (int i = 0; i < 6; ++i) path += static_cast<char>('a' + uniform_u64(rng, 0, 25));
    path += "\\Release\\stub.pdb";
  } else {
    path = "D:\\build\\";
    path += pick(rng, kBenignWords);
    path += pick(rng, kBenignWords);
    path += "\\Release\\app.pdb";
  }
  append_str(d, path);
  d.push_back(0);
  return d;
}

struct Knobs {
  double benign_random_max;
  double mal_random_min;
  double mal_random_max;
};

Knobs knobs_for(const CorpusConfig& cfg, bool shifted) {
  Knobs k{cfg.benign_random_frac_max, cfg.malicious_random_frac_min, cfg.malicious_random_frac_max};
  if (shifted && cfg.aux_shift != 0.0) {
    k.benign_random_max = std::clamp(k.benign_random_max + 0.2 * cfg.aux_shift, 0.0, 1.0);
    k.mal_random_min = std::clamp(k.mal_random_min - 0.2 * cfg.aux_shift, 0.0, 1.0);
  }
  return k;
}

ToyBinary generate(Label label, std::uint64_t seed, const CorpusConfig& cfg, bool shifted) {
  Rng rng(seed);
  const Knobs knobs = knobs_for(cfg, shifted);
  const bool mal = label == Label::Malicious;
  ToyBinary b;

  if (mal) {
    b.machine_type = bernoulli(rng, 0.55) ? 0x14c : 0x8664;
    b.timestamp = static_cast<std::uint32_t>(uniform_u64(rng, kPlausibleTimestampLo, kPlausibleTimestampHi - 1));
    b.os_major = static_cast<std::uint8_t>(bernoulli(rng, 0.3) ? 6 : uniform_u64(rng, 4, 5));
    b.os_minor = static_cast<std::uint8_t>(uniform_u64(rng, 0, 2));
    b.version = static_cast<std::uint16_t>(uniform_u64(rng, 1, 6));
  } else {
    double u = uniform01(rng);
    b.machine_type = u < 0.70 ? 0x8664 : (u < 0.95 ? 0x14c : 0xaa64);
    b.timestamp = static_cast<std::uint32_t>(uniform_u64(rng, 1420070400u, 1704067199u));
    if (bernoulli(rng, 0.5)) {
      b.os_major = 10;
      b.os_minor = 0;
    } else {
      b.os_major = 6;
      b.os_minor = static_cast<std::uint8_t>(uniform_u64(rng, 0, 3));
    }
    b.version = static_cast<std::uint16_t>(uniform_u64(rng, 1, 3));
  }

  // Payload.
  Bytes payload;
  if (mal) {
    const std::size_t size = uniform_u64(rng, 1024, 6144);
    const double frac = knobs.mal_random_min + uniform01(rng) * (knobs.mal_random_max - knobs.mal_random_min);
    const std::size_t random_len = static_cast<std::size_t>(frac * static_cast<double>(size));
    const std::size_t code_len = size - random_len;
    const std::size_t split = uniform_u64(rng, 0, code_len);
    append_code(payload, rng, split);
    append_random(payload, rng, random_len);
    append_code(payload, rng, code_len - split);
    const std::size_t n_markers = uniform_u64(rng, cfg.malicious_markers_min, cfg.malicious_markers_max);
    for (std::size_t m = 0; m < n_markers; ++m) {
      Bytes marker = {0};
      append_str(marker, kMarkers[uniform_index(rng, kMarkers.size())]);
      marker.push_back(0);
      const std::size_t at = uniform_u64(rng, 0, payload.size());
      payload.insert(payload.begin() + static_cast<std::ptrdiff_t>(at), marker.begin(), marker.end());
    }
  } else {
    const std::size_t size = uniform_u64(rng, 1024, 6144);
    const double frac = uniform01(rng) * knobs.benign_random_max;
    const std::size_t random_len = static_cast<std::size_t>(frac * static_cast<double>(size));
    append_code(payload, rng, size - random_len);
    append_random(payload, rng, random_len);
  }
  std::string payload_name = ".text";
  if (mal && bernoulli(rng, 0.5)) payload_name = std::string(pick(rng, kSuspiciousSectionNames));
  b.sections.push_back(make_section(rng, payload_name, kSectionExec, std::move(payload)));

  // Other sections.
  if (mal) {
    const std::size_t n = uniform_u64(rng, 1, 3);
    for (std::size_t i = 0; i < n; ++i) {
      Bytes data;
      if (bernoulli(rng, 0.4)) {
        append_random(data, rng, uniform_u64(rng, 256, 2048));
      } else {
        const std::size_t strings = uniform_u64(rng, 4, 16);
        for (std::size_t k = 0; k < strings; ++k) {
          append_str(data, bernoulli(rng, 0.6) ? pick(rng, kSuspiciousStrings) : std::string_view(benign_phrase(rng)));
          data.push_back(0);
        }
        if (bernoulli(rng, 0.5)) {
          append_str(data, kMarkers[uniform_index(rng, kMarkers.size())]);
          data.push_back(0);
        }
      }
      std::string name = bernoulli(rng, 0.5) ? std::string(pick(rng, kSuspiciousSectionNames))
                                             : std::string(pick(rng, kBenignSectionNames));
      b.sections.push_back(make_section(rng, name, kSectionData, std::move(data)));
    }
  } else {
    const std::size_t n = uniform_u64(rng, 2, 4);
    std::vector<std::size_t> idx = {1, 2, 3, 4, 5, 6, 7};
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i = 0; i < n; ++i) {
      Bytes data;
      const std::size_t strings = uniform_u64(rng, 8, 40);
      for (std::size_t k = 0; k < strings; ++k) {
        append_str(data, benign_phrase(rng));
        data.push_back(0);
        if (bernoulli(rng, 0.3)) data.insert(data.end(), uniform_u64(rng, 1, 24), 0);
      }
      append_code(data, rng, uniform_u64(rng, 0, 512));
      b.sections.push_back(make_section(rng, std::string(kBenignSectionNames[idx[i]]), kSectionData, std::move(data)));
    }
    if (bernoulli(rng, cfg.benign_marker_rate)) {
      Bytes& data = b.sections.back().data;
      append_str(data, kMarkers[uniform_index(rng, kMarkers.size())]);
      data.push_back(0);
      b.sections.back().alloc_len = round_alloc(rng, data.size());
    }
  }

  // Imports.
  if (mal) {
    add_libraries(rng, b, kSuspiciousLibs, kSuspiciousSymbols, uniform_u64(rng, 1, 3));
    add_libraries(rng, b, kBenignLibs, kBenignSymbols, uniform_u64(rng, 0, 3));
  } else {
    add_libraries(rng, b, kBenignLibs, kBenignSymbols, uniform_u64(rng, 2, 7));
  }

  const double debug_rate = mal ? cfg.malicious_debug_rate : cfg.benign_debug_rate;
  if (bernoulli(rng, debug_rate)) {
    b.debug_present = true;
    b.debug_blob = debug_blob(rng, mal);
  }

  if (mal) {
    if (bernoulli(rng, cfg.malicious_overlay_rate)) append_random(b.overlay, rng, uniform_u64(rng, 512, 4096));
  } else if (bernoulli(rng, 0.15)) {
    const std::size_t n = uniform_u64(rng, 256, 2048);
    for (std::size_t i = 0; i < n; ++i) b.overlay.push_back(static_cast<std::uint8_t>((i * 7) & 0x3f));
  }

  if (mal && bernoulli(rng, cfg.malicious_packed_rate)) b = pack(b);
  seal_checksum(b);
  return b;
}

bool shifted_split(std::string_view split) { return split == "aux" || split == "aux_calib"; }

std::uint64_t split_tag(std::string_view split) { return fnv1a64(split); }

}  // namespace

void check_config(const CorpusConfig& cfg) {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw Error(Errc::InvalidArgument, std::string(name) + " must be > 0");
  };
  positive(cfg.n_target_train_per_class, "n_target_train_per_class");
  positive(cfg.n_target_calib_benign, "n_target_calib_benign");
  positive(cfg.n_aux_per_class, "n_aux_per_class");
  positive(cfg.n_aux_calib_benign, "n_aux_calib_benign");
  positive(cfg.n_eval_per_class, "n_eval_per_class");
  positive(cfg.n_attack_malware, "n_attack_malware");
  positive(cfg.n_benign_ingredients, "n_benign_ingredients");
  positive(cfg.n_attack_seeds, "n_attack_seeds");
  positive(cfg.malicious_markers_min, "malicious_markers_min");
  if (cfg.malicious_markers_max < cfg.malicious_markers_min) {
    throw Error(Errc::InvalidArgument, "malicious_markers_max < malicious_markers_min");
  }
  if (!(cfg.attack_train_fraction > 0.0 && cfg.attack_train_fraction < 1.0)) {
    throw Error(Errc::InvalidArgument, "attack_train_fraction must be in (0,1)");
  }
  for (double p : {cfg.benign_marker_rate, cfg.benign_random_frac_max, cfg.malicious_random_frac_min,
                   cfg.malicious_random_frac_max, cfg.malicious_packed_rate, cfg.benign_debug_rate, cfg.malicious_debug_rate,
                   cfg.malicious_overlay_rate}) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(Errc::InvalidArgument, "probability knob outside [0,1]");
  }
  if (cfg.malicious_random_frac_max < cfg.malicious_random_frac_min) {
    throw Error(Errc::InvalidArgument, "malicious_random_frac_max < malicious_random_frac_min");
  }
  if (!(cfg.aux_shift >= -1.0 && cfg.aux_shift <= 1.0)) throw Error(Errc::InvalidArgument, "aux_shift outside [-1,1]");
}

const std::array<std::string_view, 16>& marker_ngrams() { return kMarkers; }
const std::vector<std::string_view>& benign_words() { return kBenignWords; }
const std::vector<std::string_view>& benign_libraries() { return kBenignLibs; }
const std::vector<std::string_view>& suspicious_libraries() { return kSuspiciousLibs; }
const std::vector<std::string_view>& benign_section_names() { return kBenignSectionNames; }

std::vector<std::string> library_symbols(std::string_view library) {
  Rng rng(fnv1a64(library));
  const bool suspicious = std::find(kSuspiciousLibs.begin(), kSuspiciousLibs.end(), library) != kSuspiciousLibs.end();
  return make_import(rng, library, suspicious ? kSuspiciousSymbols : kBenignSymbols, 2, 6).symbols;
}

ToyBinary gen_binary(Label label, std::uint64_t rng_seed, const CorpusConfig& cfg) {
  return generate(label, rng_seed, cfg, false);
}

std::vector<const CorpusEntry*> CorpusSplits::all() const {
  std::vector<const CorpusEntry*> out;
  for (const auto* v : {&target_train, &target_calib, &aux, &aux_calib, &eval, &attack, &ingredients}) {
    for (const auto& e : *v) out.push_back(&e);
  }
  return out;
}

std::vector<CorpusEntry> plan_split(const CorpusConfig& cfg, std::string_view split, std::size_t n_benign,
                                    std::size_t n_malicious) {
  std::vector<CorpusEntry> out;
  out.reserve(n_benign + n_malicious);
  const std::uint64_t tag = split_tag(split);
  auto add = [&](Label label, std::size_t n) {
    const char* cls = label == Label::Benign ? "benign" : "malicious";
    const std::uint64_t cls_tag = static_cast<std::uint64_t>(label);
    for (std::size_t i = 0; i < n; ++i) {
      CorpusEntry e;
      e.label = label;
      e.class_seed = derive_seed(cfg.seed, {tag, cls_tag, i});
      e.split = std::string(split);
      e.path = std::string(split) + "/" + cls + "_" + std::to_string(i) + ".tef";
      out.push_back(std::move(e));
    }
  };
  add(Label::Benign, n_benign);
  add(Label::Malicious, n_malicious);
  return out;
}

AttackSplit split_attack_set(const CorpusConfig& cfg, const std::vector<CorpusEntry>& attack, std::uint64_t seed) {
  std::vector<std::size_t> idx(attack.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(cfg.seed, {split_tag("attack_split"), seed}));
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_train = static_cast<std::size_t>(cfg.attack_train_fraction * static_cast<double>(attack.size()) + 0.5);
  AttackSplit s;
  for (std::size_t i = 0; i < idx.size(); ++i) (i < n_train ? s.train : s.test).push_back(attack[idx[i]]);
  return s;
}

CorpusSplits plan_corpus(const CorpusConfig& cfg) {
  check_config(cfg);
  CorpusSplits s;
  s.target_train = plan_split(cfg, "target_train", cfg.n_target_train_per_class, cfg.n_target_train_per_class);
  s.target_calib = plan_split(cfg, "target_calib", cfg.n_target_calib_benign, 0);
  s.aux = plan_split(cfg, "aux", cfg.n_aux_per_class, cfg.n_aux_per_class);
  s.aux_calib = plan_split(cfg, "aux_calib", cfg.n_aux_calib_benign, 0);
  s.eval = plan_split(cfg, "eval", cfg.n_eval_per_class, cfg.n_eval_per_class);
  s.attack = plan_split(cfg, "attack", 0, cfg.n_attack_malware);
  s.ingredients = plan_split(cfg, "ingredients", cfg.n_benign_ingredients, 0);
  for (std::size_t seed = 0; seed < cfg.n_attack_seeds; ++seed) {
    s.attack_splits.push_back(split_attack_set(cfg, s.attack, seed));
  }
  return s;
}

ToyBinary materialize(const CorpusEntry& e, const CorpusConfig& cfg) {
  return generate(e.label, e.class_seed, cfg, shifted_split(e.split));
}

namespace {

json entry_json(const CorpusEntry& e) {
  return json{{"path", e.path}, {"label", static_cast<int>(e.label)}, {"class_seed", e.class_seed}, {"split", e.split}};
}

CorpusEntry entry_from_json(const json& j) {
  CorpusEntry e;
  e.path = j.at("path").get<std::string>();
  e.label = j.at("label").get<int>() == 0 ? Label::Benign : Label::Malicious;
  e.class_seed = j.at("class_seed").get<std::uint64_t>();
  e.split = j.at("split").get<std::string>();
  return e;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoFailure, "cannot write " + p.string());
  out << text;
  if (!out) throw Error(Errc::IoFailure, "short write to " + p.string());
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

CorpusSplits build_corpus(const CorpusConfig& cfg, const fs::path& dir) {
  CorpusSplits s = plan_corpus(cfg);
  std::error_code ec;
  fs::create_directories(dir / "splits", ec);
  if (ec) throw Error(Errc::IoFailure, "cannot create " + dir.string() + ": " + ec.message());

  std::string manifest;
  std::set<std::string> made;
  for (const CorpusEntry* e : s.all()) {
    const fs::path p = dir / e->path;
    if (made.insert(p.parent_path().string()).second) {
      fs::create_directories(p.parent_path(), ec);
      if (ec) throw Error(Errc::IoFailure, "cannot create " + p.parent_path().string());
    }
    write_file(p.string(), serialize(materialize(*e, cfg)));
    manifest += entry_json(*e).dump() + "\n";
  }
  write_text(dir / "manifest.jsonl", manifest);
  write_text(dir / "corpus_config.json", config_to_json(cfg));
  for (std::size_t seed = 0; seed < s.attack_splits.size(); ++seed) {
    std::string lines;
    for (const auto& e : s.attack_splits[seed].train) lines += json{{"path", e.path}, {"split", "attack_train"}}.dump() + "\n";
    for (const auto& e : s.attack_splits[seed].test) lines += json{{"path", e.path}, {"split", "attack_test"}}.dump() + "\n";
    write_text(dir / "splits" / ("attack_seed" + std::to_string(seed) + ".jsonl"), lines);
  }
  return s;
}

Corpus Corpus::in_memory(const CorpusConfig& cfg) {
  Corpus c;
  c.cfg_ = cfg;
  c.splits_ = plan_corpus(cfg);
  return c;
}

Corpus Corpus::load(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.jsonl")) throw Error(Errc::MissingArtifacts, "no manifest.jsonl in " + dir.string());
  Corpus c;
  c.cfg_ = config_from_json(read_text(dir / "corpus_config.json"));
  c.root_ = dir;
  std::map<std::string, std::vector<CorpusEntry>*> by_split = {
      {"target_train", &c.splits_.target_train}, {"target_calib", &c.splits_.target_calib},
      {"aux", &c.splits_.aux},                   {"aux_calib", &c.splits_.aux_calib},
      {"eval", &c.splits_.eval},                 {"attack", &c.splits_.attack},
      {"ingredients", &c.splits_.ingredients},
  };
  std::map<std::string, CorpusEntry> by_path;
  std::istringstream manifest(read_text(dir / "manifest.jsonl"));
  for (std::string line; std::getline(manifest, line);) {
    if (line.empty()) continue;
    CorpusEntry e = entry_from_json(json::parse(line));
    auto it = by_split.find(e.split);
    if (it == by_split.end()) throw Error(Errc::MalformedInput, "unknown split " + e.split);
    it->second->push_back(e);
    by_path[e.path] = e;
  }
  for (std::size_t seed = 0; seed < c.cfg_.n_attack_seeds; ++seed) {
    const fs::path p = dir / "splits" / ("attack_seed" + std::to_string(seed) + ".jsonl");
    std::istringstream in(read_text(p));
    AttackSplit split;
    for (std::string line; std::getline(in, line);) {
      if (line.empty()) continue;
      json j = json::parse(line);
      auto it = by_path.find(j.at("path").get<std::string>());
      if (it == by_path.end()) throw Error(Errc::MalformedInput, "split references unknown file");
      (j.at("split").get<std::string>() == "attack_train" ? split.train : split.test).push_back(it->second);
    }
    c.splits_.attack_splits.push_back(std::move(split));
  }
  return c;
}

ToyBinary Corpus::binary(const CorpusEntry& e) const {
  if (!root_) return materialize(e, cfg_);
  try {
    return parse(read_file((*root_ / e.path).string()));
  } catch (const ParseError& err) {
    throw Error(Errc::MalformedInput, e.path + ": " + err.what());
  }
}

std::vector<ToyBinary> Corpus::binaries(const std::vector<CorpusEntry>& entries) const {
  std::vector<ToyBinary> out(entries.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::size_t i = 0; i < entries.size(); ++i) out[i] = binary(entries[i]);
  return out;
}

#define TEFB_CORPUS_FIELDS(X)                                                                      \
  X(seed) X(n_target_train_per_class) X(n_target_calib_benign) X(n_aux_per_class)                  \
  X(n_aux_calib_benign) X(n_eval_per_class) X(n_attack_malware) X(n_benign_ingredients)            \
  X(n_attack_seeds) X(attack_train_fraction) X(malicious_markers_min) X(malicious_markers_max)     \
  X(benign_marker_rate) X(benign_random_frac_max) X(malicious_random_frac_min)                     \
  X(malicious_random_frac_max) X(malicious_packed_rate) X(benign_debug_rate)                       \
  X(malicious_debug_rate) X(malicious_overlay_rate) X(aux_shift)

std::string config_to_json(const CorpusConfig& cfg) {
  json j;
#define X(f) j[#f] = cfg.f;
  TEFB_CORPUS_FIELDS(X)
#undef X
  return j.dump(2) + "\n";
}

CorpusConfig config_from_json(const std::string& text) {
  json j = json::parse(text);
  CorpusConfig cfg;
  std::set<std::string> known;
#define X(f) known.insert(#f);
  TEFB_CORPUS_FIELDS(X)
#undef X
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw Error(Errc::InvalidArgument, "unknown corpus config key: " + it.key());
  }
#define X(f)                                                                                       \
  if (j.contains(#f)) j.at(#f).get_to(cfg.f);
  TEFB_CORPUS_FIELDS(X)
#undef X
  check_config(cfg);
  return cfg;
}

std::vector<std::string> printable_runs(ByteView bytes, std::size_t min_len) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= bytes.size(); ++i) {
    const bool printable = i < bytes.size() && bytes[i] >= 0x20 && bytes[i] <= 0x7e;
    if (!printable) {
      if (i - start >= min_len) out.emplace_back(bytes.begin() + static_cast<std::ptrdiff_t>(start), bytes.begin() + static_cast<std::ptrdiff_t>(i));
      start = i + 1;
    }
  }
  return out;
}

BenignIngredients extract_ingredients(const std::vector<ToyBinary>& benign) {
  BenignIngredients ing;
  std::vector<SectionBlob> others;
  std::set<std::string> libs;
  for (const auto& b : benign) {
    Bytes raw = serialize(b);
    for (auto& s : printable_runs(raw)) ing.strings.push_back(std::move(s));
    for (const auto& s : b.sections) {
      if (s.data.empty()) continue;
      (s.is_exec() ? ing.section_datas : others).push_back({s.flags, s.data});
    }
    for (const auto& imp : b.imports) {
      if (libs.insert(imp.library).second) ing.import_entries.push_back(imp);
    }
    ing.headers.push_back({b.os_major, b.os_minor, b.version, b.timestamp});
    ing.whole_binaries.push_back(std::move(raw));
  }
  ing.payload_blob_count = ing.section_datas.size();
  for (auto& o : others) ing.section_datas.push_back(std::move(o));
  if (ing.strings.empty() || ing.section_datas.empty() || ing.whole_binaries.empty() ||
      ing.import_entries.empty()) {
    throw Error(Errc::NoUsableIngredients, "benign set yields an empty ingredient category");
  }
  return ing;
}

BenignIngredients extract_ingredients(const std::vector<fs::path>& benign_paths) {
  std::vector<ToyBinary> bins;
  for (const auto& p : benign_paths) {
    try {
      bins.push_back(parse(read_file(p.string())));
    } catch (const ParseError&) {
      // unparseable files are skipped; an empty pool is reported below
    }
  }
  if (bins.empty()) throw Error(Errc::NoUsableIngredients, "no parseable benign binary");
  return extract_ingredients(bins);
}

}  // namespace tefb
