#include "tefb/tbf.hpp"

#include <algorithm>
#include <limits>
#include <set>

namespace tefb {

namespace {

constexpr char kMagic[4] = {'T', 'E', 'F', '1'};

[[noreturn]] void fail(Errc code, std::size_t offset, const std::string& msg) {
  throw ParseError(code, offset, msg);
}

std::string decode_section_name(ByteView raw, std::size_t offset) {
  std::size_t len = 0;
  while (len < raw.size() && raw[len] != 0) ++len;
  for (std::size_t i = len; i < raw.size(); ++i) {
    if (raw[i] != 0) fail(Errc::MalformedHeader, offset + i, "section name has bytes after padding");
  }
  std::string name(raw.begin(), raw.begin() + static_cast<std::ptrdiff_t>(len));
  if (!is_printable_name(name, 8)) fail(Errc::MalformedHeader, offset, "section name must be 1-8 printable bytes");
  return name;
}

std::string read_import_name(ByteReader& r, const char* what) {
  std::size_t at = r.offset();
  std::uint8_t len = r.u8();
  std::string s = r.str(len);
  if (!is_printable_name(s, kMaxImportName)) {
    fail(Errc::MalformedHeader, at, std::string(what) + " name must be 1-32 printable bytes");
  }
  return s;
}

}  // namespace

bool is_printable_name(std::string_view s, std::size_t max_len) {
  if (s.empty() || s.size() > max_len) return false;
  return std::all_of(s.begin(), s.end(), [](char c) { return c >= 0x20 && c <= 0x7e; });
}

std::optional<std::size_t> ToyBinary::payload_index() const {
  for (std::size_t i = 0; i < sections.size(); ++i) {
    if (sections[i].is_exec()) return i;
  }
  return std::nullopt;
}

const Section& ToyBinary::payload() const {
  auto idx = payload_index();
  if (!idx) throw Error(Errc::InvariantViolation, "binary has no EXEC section");
  return sections[*idx];
}

Section& ToyBinary::payload() {
  auto idx = payload_index();
  if (!idx) throw Error(Errc::InvariantViolation, "binary has no EXEC section");
  return sections[*idx];
}

ToyBinary parse(ByteView bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 4) fail(Errc::TruncatedFile, bytes.size(), "file shorter than magic");
  if (!std::equal(kMagic, kMagic + 4, bytes.begin())) fail(Errc::MalformedHeader, 0, "bad magic");
  r.take(4);

  ToyBinary b;
  b.version = r.u16();
  b.machine_type = r.u16();
  b.timestamp = r.u32();
  b.checksum = r.u32();
  b.os_major = r.u8();
  b.os_minor = r.u8();
  const std::size_t flags_at = r.offset();
  const std::uint8_t flags = r.u8();
  if (flags & ~(kFlagDebugPresent | kFlagPacked)) fail(Errc::MalformedHeader, flags_at, "unknown header flags");
  b.debug_present = (flags & kFlagDebugPresent) != 0;
  b.packed = (flags & kFlagPacked) != 0;
  const std::size_t count_at = r.offset();
  const std::uint8_t section_count = r.u8();
  const std::uint16_t import_count = r.u16();
  const std::uint16_t debug_len = r.u16();
  const std::uint32_t overlay_len = r.u32();

  if (section_count > kMaxSections) fail(Errc::MalformedHeader, count_at, "more than 32 sections");
  if (b.debug_present != (debug_len > 0)) fail(Errc::MalformedHeader, flags_at, "debug flag disagrees with debug_len");

  const std::size_t table_at = r.offset();
  std::vector<std::uint32_t> used_lens;
  std::size_t exec_count = 0;
  for (std::size_t i = 0; i < section_count; ++i) {
    const std::size_t entry_at = r.offset();
    Section s;
    s.name = decode_section_name(r.take(8), entry_at);
    const std::size_t sflags_at = r.offset();
    s.flags = r.u8();
    if (s.flags & ~(kSectionExec | kSectionData)) fail(Errc::MalformedHeader, sflags_at, "unknown section flags");
    s.alloc_len = r.u32();
    const std::uint32_t used = r.u32();
    if (s.alloc_len > kMaxAllocLen) fail(Errc::SectionOverflow, entry_at + 9, "alloc_len above 2^24");
    if (used > s.alloc_len) fail(Errc::SectionOverflow, entry_at + 13, "used_len exceeds alloc_len");
    if (s.is_exec()) ++exec_count;
    used_lens.push_back(used);
    b.sections.push_back(std::move(s));
  }
  if (exec_count != 1) fail(Errc::NoExecSection, table_at, "expected exactly one EXEC section");

  std::set<std::string> libs;
  std::size_t entries = 0;
  for (std::size_t i = 0; i < import_count; ++i) {
    const std::size_t lib_at = r.offset();
    Import imp;
    imp.library = read_import_name(r, "library");
    if (!libs.insert(imp.library).second) fail(Errc::MalformedHeader, lib_at, "duplicate import library");
    const std::uint8_t sym_count = r.u8();
    entries += sym_count;
    if (entries > kMaxImportEntries) fail(Errc::MalformedHeader, lib_at, "more than 256 import entries");
    for (std::size_t k = 0; k < sym_count; ++k) imp.symbols.push_back(read_import_name(r, "symbol"));
    b.imports.push_back(std::move(imp));
  }

  auto debug = r.take(debug_len);
  b.debug_blob.assign(debug.begin(), debug.end());

  for (std::size_t i = 0; i < b.sections.size(); ++i) {
    auto& s = b.sections[i];
    const std::size_t blob_at = r.offset();
    auto blob = r.take(s.alloc_len);
    const std::uint32_t used = used_lens[i];
    for (std::size_t k = used; k < blob.size(); ++k) {
      if (blob[k] != 0) fail(Errc::SectionOverflow, blob_at + k, "non-zero byte in section cave");
    }
    s.data.assign(blob.begin(), blob.begin() + used);
  }

  auto overlay = r.take(overlay_len);
  b.overlay.assign(overlay.begin(), overlay.end());
  if (!r.at_end()) fail(Errc::MalformedHeader, r.offset(), "trailing bytes after overlay");
  return b;
}

namespace {

Bytes encode(const ToyBinary& b) {
  ByteWriter w;
  w.str(std::string_view(kMagic, 4));
  w.u16(b.version);
  w.u16(b.machine_type);
  w.u32(b.timestamp);
  w.u32(b.checksum);
  w.u8(b.os_major);
  w.u8(b.os_minor);
  w.u8(static_cast<std::uint8_t>((b.debug_present ? kFlagDebugPresent : 0) | (b.packed ? kFlagPacked : 0)));
  w.u8(static_cast<std::uint8_t>(b.sections.size()));
  w.u16(static_cast<std::uint16_t>(b.imports.size()));
  w.u16(static_cast<std::uint16_t>(b.debug_blob.size()));
  w.u32(static_cast<std::uint32_t>(b.overlay.size()));
  for (const auto& s : b.sections) {
    w.str(s.name);
    w.zeros(8 - s.name.size());
    w.u8(s.flags);
    w.u32(s.alloc_len);
    w.u32(s.used_len());
  }
  for (const auto& imp : b.imports) {
    w.u8(static_cast<std::uint8_t>(imp.library.size()));
    w.str(imp.library);
    w.u8(static_cast<std::uint8_t>(imp.symbols.size()));
    for (const auto& sym : imp.symbols) {
      w.u8(static_cast<std::uint8_t>(sym.size()));
      w.str(sym);
    }
  }
  w.bytes(b.debug_blob);
  for (const auto& s : b.sections) {
    w.bytes(s.data);
    w.zeros(s.cave());
  }
  w.bytes(b.overlay);
  return w.take();
}

}  // namespace

Bytes serialize(const ToyBinary& b) {
  require_valid(b);
  return encode(b);
}

std::uint32_t compute_checksum(const ToyBinary& b) {
  Bytes bytes = encode(b);
  std::uint32_t sum = 0;
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    if (i >= kChecksumOffset && i < kChecksumOffset + 4) continue;
    sum += bytes[i];
  }
  return sum;
}

void seal_checksum(ToyBinary& b) { b.checksum = compute_checksum(b); }

const char* to_string(HardError e) {
  switch (e) {
    case HardError::NoUniquePayload: return "NoUniquePayload";
    case HardError::TooManySections: return "TooManySections";
    case HardError::BadSectionName: return "BadSectionName";
    case HardError::BadSectionFlags: return "BadSectionFlags";
    case HardError::SectionOverflow: return "SectionOverflow";
    case HardError::AllocTooLarge: return "AllocTooLarge";
    case HardError::DuplicateImport: return "DuplicateImport";
    case HardError::BadImportName: return "BadImportName";
    case HardError::TooManyImports: return "TooManyImports";
    case HardError::DebugFlagMismatch: return "DebugFlagMismatch";
    case HardError::DebugTooLarge: return "DebugTooLarge";
    case HardError::OverlayTooLarge: return "OverlayTooLarge";
  }
  return "Unknown";
}

const char* to_string(SoftWarning w) {
  switch (w) {
    case SoftWarning::ChecksumMismatch: return "ChecksumMismatch";
    case SoftWarning::ImplausibleTimestamp: return "ImplausibleTimestamp";
  }
  return "Unknown";
}

ValidityReport validate(const ToyBinary& b) {
  ValidityReport rep;
  auto err = [&](HardError e) {
    if (std::find(rep.errors.begin(), rep.errors.end(), e) == rep.errors.end()) rep.errors.push_back(e);
  };

  const auto exec_count = std::count_if(b.sections.begin(), b.sections.end(),
                                        [](const Section& s) { return s.is_exec(); });
  if (exec_count != 1) err(HardError::NoUniquePayload);
  if (b.sections.size() > kMaxSections) err(HardError::TooManySections);
  for (const auto& s : b.sections) {
    if (!is_printable_name(s.name, 8)) err(HardError::BadSectionName);
    if (s.flags & ~(kSectionExec | kSectionData)) err(HardError::BadSectionFlags);
    if (s.data.size() > s.alloc_len) err(HardError::SectionOverflow);
    if (s.alloc_len > kMaxAllocLen) err(HardError::AllocTooLarge);
  }

  std::set<std::string> libs;
  std::size_t entries = 0;
  for (const auto& imp : b.imports) {
    if (!libs.insert(imp.library).second) err(HardError::DuplicateImport);
    if (!is_printable_name(imp.library, kMaxImportName)) err(HardError::BadImportName);
    if (imp.symbols.size() > 255) err(HardError::TooManyImports);
    for (const auto& s : imp.symbols) {
      if (!is_printable_name(s, kMaxImportName)) err(HardError::BadImportName);
    }
    entries += imp.symbols.size();
  }
  if (entries > kMaxImportEntries || b.imports.size() > std::numeric_limits<std::uint16_t>::max()) {
    err(HardError::TooManyImports);
  }
  if (b.debug_present != !b.debug_blob.empty()) err(HardError::DebugFlagMismatch);
  if (b.debug_blob.size() > std::numeric_limits<std::uint16_t>::max()) err(HardError::DebugTooLarge);
  if (b.overlay.size() > std::numeric_limits<std::uint32_t>::max()) err(HardError::OverlayTooLarge);

  if (rep.errors.empty()) {
    if (compute_checksum(b) != b.checksum) rep.warnings.push_back(SoftWarning::ChecksumMismatch);
  }
  if (b.timestamp < kPlausibleTimestampLo || b.timestamp >= kPlausibleTimestampHi) {
    rep.warnings.push_back(SoftWarning::ImplausibleTimestamp);
  }
  return rep;
}

void require_valid(const ToyBinary& b) {
  auto rep = validate(b);
  if (!rep.valid()) throw Error(Errc::InvariantViolation, to_string(rep.errors.front()));
}

FunctionalDigest functional_digest(const ToyBinary& b) {
  const Section& p = b.payload();
  if (b.packed) return {fnv1a64(rle_decode(p.data))};
  return {fnv1a64(p.data)};
}

Bytes rle_encode(ByteView data) {
  Bytes out;
  out.reserve(data.size());
  std::size_t i = 0;
  while (i < data.size()) {
    std::size_t run = 1;
    while (i + run < data.size() && run < 255 && data[i + run] == data[i]) ++run;
    out.push_back(static_cast<std::uint8_t>(run));
    out.push_back(data[i]);
    i += run;
  }
  return out;
}

Bytes rle_decode(ByteView data) {
  if (data.size() % 2 != 0) throw Error(Errc::UnpackFailure, "RLE stream has odd length");
  Bytes out;
  for (std::size_t i = 0; i < data.size(); i += 2) {
    if (data[i] == 0) throw Error(Errc::UnpackFailure, "zero run length at " + std::to_string(i));
    out.insert(out.end(), data[i], data[i + 1]);
  }
  return out;
}

ToyBinary pack(const ToyBinary& b) {
  if (b.packed) throw Error(Errc::AlreadyPacked, "binary is already packed");
  ToyBinary out = b;
  Section& p = out.payload();
  p.data = rle_encode(p.data);
  if (p.data.size() > kMaxAllocLen) throw Error(Errc::InvariantViolation, "packed payload exceeds 2^24");
  p.alloc_len = std::max<std::uint32_t>(p.alloc_len, p.used_len());
  out.packed = true;
  return out;
}

ToyBinary unpack(const ToyBinary& b) {
  if (!b.packed) throw Error(Errc::NotPacked, "binary is not packed");
  ToyBinary out = b;
  Section& p = out.payload();
  p.data = rle_decode(p.data);
  if (p.data.size() > kMaxAllocLen) throw Error(Errc::InvariantViolation, "unpacked payload exceeds 2^24");
  p.alloc_len = std::max<std::uint32_t>(p.alloc_len, p.used_len());
  out.packed = false;
  return out;
}

}  // namespace tefb
