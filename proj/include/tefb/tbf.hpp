#pragma once

// Toy executable format (TEF): in-memory model, bit-exact wire codec,
// validity rules, functional digest and the RLE toy packer.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tefb/bytes.hpp"

namespace tefb {

inline constexpr std::size_t kMaxSections = 32;
inline constexpr std::uint32_t kMaxAllocLen = 1u << 24;
inline constexpr std::size_t kMaxImportEntries = 256;
inline constexpr std::size_t kMaxImportName = 32;
inline constexpr std::size_t kHeaderSize = 28;
inline constexpr std::size_t kSectionEntrySize = 17;
inline constexpr std::size_t kChecksumOffset = 12;

// Timestamps outside [1990-01-01, 2030-01-01) are flagged as implausible.
inline constexpr std::uint32_t kPlausibleTimestampLo = 631152000u;
inline constexpr std::uint32_t kPlausibleTimestampHi = 1893456000u;

enum SectionFlag : std::uint8_t { kSectionExec = 0x01, kSectionData = 0x02 };
enum BinaryFlag : std::uint8_t { kFlagDebugPresent = 0x01, kFlagPacked = 0x02 };

struct Section {
  std::string name;  // 1..8 printable ASCII bytes, zero-padded on disk
  std::uint8_t flags = 0;
  std::uint32_t alloc_len = 0;
  Bytes data;  // used_len == data.size(); the cave is alloc_len - used_len

  bool is_exec() const { return (flags & kSectionExec) != 0; }
  std::uint32_t used_len() const { return static_cast<std::uint32_t>(data.size()); }
  std::uint32_t cave() const { return alloc_len - used_len(); }

  bool operator==(const Section&) const = default;
};

struct Import {
  std::string library;
  std::vector<std::string> symbols;

  bool operator==(const Import&) const = default;
};

struct ToyBinary {
  std::uint16_t version = 1;
  std::uint16_t machine_type = 0;
  std::uint32_t timestamp = 0;
  std::uint32_t checksum = 0;
  std::uint8_t os_major = 0;
  std::uint8_t os_minor = 0;
  bool debug_present = false;
  bool packed = false;
  Bytes debug_blob;
  std::vector<Section> sections;
  std::vector<Import> imports;
  Bytes overlay;

  /// Index of the first EXEC section, if any.
  std::optional<std::size_t> payload_index() const;
  const Section& payload() const;
  Section& payload();

  bool operator==(const ToyBinary&) const = default;
};

/// Decodes a TEF file. Rejects anything serialize() could not reproduce.
ToyBinary parse(ByteView bytes);

/// Canonical encoding. Checksum is written as stored.
Bytes serialize(const ToyBinary& b);

/// Sum of all file bytes except the checksum field, mod 2^32.
std::uint32_t compute_checksum(const ToyBinary& b);
/// Sets the stored checksum to compute_checksum(b).
void seal_checksum(ToyBinary& b);

enum class HardError {
  NoUniquePayload,
  TooManySections,
  BadSectionName,
  BadSectionFlags,
  SectionOverflow,
  AllocTooLarge,
  DuplicateImport,
  BadImportName,
  TooManyImports,
  DebugFlagMismatch,
  DebugTooLarge,
  OverlayTooLarge,
};

enum class SoftWarning { ChecksumMismatch, ImplausibleTimestamp };

struct ValidityReport {
  std::vector<HardError> errors;
  std::vector<SoftWarning> warnings;

  bool valid() const { return errors.empty(); }
};

const char* to_string(HardError e);
const char* to_string(SoftWarning w);

ValidityReport validate(const ToyBinary& b);

/// Throws InvariantViolation listing the first hard error.
void require_valid(const ToyBinary& b);

struct FunctionalDigest {
  std::uint64_t value = 0;
  bool operator==(const FunctionalDigest&) const = default;
};

/// FNV-1a(64) over the payload data, RLE-decoded first when packed.
FunctionalDigest functional_digest(const ToyBinary& b);

Bytes rle_encode(ByteView data);
/// Throws UnpackFailure on odd length or zero run counts.
Bytes rle_decode(ByteView data);

ToyBinary pack(const ToyBinary& b);
ToyBinary unpack(const ToyBinary& b);

bool is_printable_name(std::string_view s, std::size_t max_len);

}  // namespace tefb
