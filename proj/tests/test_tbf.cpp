#include "doctest.h"

#include "support.hpp"
#include "tefb/error.hpp"
#include "tefb/rng.hpp"

using namespace tefb;

namespace {

Errc parse_error_code(const Bytes& bytes) {
  try {
    parse(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("parse accepted the input");
  return Errc::InvalidArgument;
}

// Independent header writer used to build malformed inputs.
Bytes handmade_file(std::uint32_t alloc, std::uint32_t used, std::size_t blob_bytes) {
  ByteWriter w;
  w.str("TEF1");
  w.u16(1);
  w.u16(0x8664);
  w.u32(1600000000u);
  w.u32(0);
  w.u8(10);
  w.u8(0);
  w.u8(0);
  w.u8(1);
  w.u16(0);
  w.u16(0);
  w.u32(0);
  w.str("code");
  w.zeros(4);
  w.u8(kSectionExec);
  w.u32(alloc);
  w.u32(used);
  for (std::size_t i = 0; i < blob_bytes; ++i) w.u8(i < used ? 0x90 : 0);
  return w.take();
}

}  // namespace

TEST_SUITE("tbf") {
  TEST_CASE("minimal file parses to one section and serializes back") {
    const Bytes raw = handmade_file(4, 3, 4);
    const ToyBinary b = parse(raw);
    REQUIRE(b.sections.size() == 1);
    CHECK(b.sections[0].name == "code");
    CHECK(b.sections[0].cave() == 1);
    CHECK(b.imports.empty());
    CHECK(b.overlay.empty());
    CHECK(serialize(b) == raw);
  }

  TEST_CASE("header is 28 bytes and checksum sits at offset 12") {
    ToyBinary b = testing::minimal_binary();
    const Bytes raw = serialize(b);
    CHECK(raw.size() == kHeaderSize + kSectionEntrySize + 3);
    std::uint32_t sum = 0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (i < kChecksumOffset || i >= kChecksumOffset + 4) sum += raw[i];
    }
    CHECK(sum == compute_checksum(b));
    ByteReader r(ByteView(raw).subspan(kChecksumOffset, 4));
    CHECK(r.u32() == b.checksum);
  }

  TEST_CASE("alloc_len beyond the remaining bytes is a truncated file") {
    CHECK(parse_error_code(handmade_file(64, 3, 4)) == Errc::TruncatedFile);
  }

  TEST_CASE("used_len above alloc_len overflows the section") {
    CHECK(parse_error_code(handmade_file(2, 3, 2)) == Errc::SectionOverflow);
  }

  TEST_CASE("non-zero cave bytes are rejected") {
    Bytes raw = handmade_file(4, 3, 4);
    raw.back() = 0x11;
    CHECK(parse_error_code(raw) == Errc::SectionOverflow);
  }

  TEST_CASE("bad magic and trailing bytes are malformed headers") {
    Bytes raw = handmade_file(4, 3, 4);
    Bytes bad = raw;
    bad[0] = 'X';
    CHECK(parse_error_code(bad) == Errc::MalformedHeader);
    raw.push_back(0);
    CHECK(parse_error_code(raw) == Errc::MalformedHeader);
  }

  TEST_CASE("parse errors carry the offending offset") {
    Bytes raw = handmade_file(4, 3, 4);
    raw[18] = 0x80;  // unknown header flag bit
    try {
      parse(raw);
      FAIL("accepted");
    } catch (const ParseError& e) {
      CHECK(e.offset() == 18);
    }
  }

  TEST_CASE("every prefix of a valid file is rejected") {
    const Bytes raw = serialize(gen_binary(Label::Malicious, 11, CorpusConfig{}));
    for (std::size_t n = 0; n < raw.size(); n += 7) {
      Bytes cut(raw.begin(), raw.begin() + static_cast<std::ptrdiff_t>(n));
      CHECK_THROWS_AS(parse(cut), ParseError);
    }
  }

  TEST_CASE("wrong checksum is written verbatim and only warns") {
    ToyBinary b = testing::minimal_binary();
    b.checksum = 0xdeadbeef;
    const ToyBinary back = parse(serialize(b));
    CHECK(back.checksum == 0xdeadbeef);
    const auto rep = validate(b);
    CHECK(rep.valid());
    REQUIRE(rep.warnings.size() == 1);
    CHECK(rep.warnings[0] == SoftWarning::ChecksumMismatch);
  }

  TEST_CASE("two EXEC sections are a hard error") {
    ToyBinary b = testing::minimal_binary();
    b.sections.push_back(b.sections[0]);
    b.sections[1].name = "code2";
    const auto rep = validate(b);
    REQUIRE_FALSE(rep.valid());
    CHECK(rep.errors[0] == HardError::NoUniquePayload);
    CHECK_THROWS_AS(serialize(b), Error);
  }

  TEST_CASE("section and import limits") {
    ToyBinary b = testing::minimal_binary();
    for (int i = 0; i < 32; ++i) b.sections.push_back({"d" + std::to_string(i), kSectionData, 0, {}});
    CHECK_FALSE(validate(b).valid());
    b = testing::minimal_binary();
    b.sections[0].name = "toolongname";
    CHECK_FALSE(validate(b).valid());
    b = testing::minimal_binary();
    b.imports.push_back({"KERNEL32", {"A"}});
    b.imports.push_back({"KERNEL32", {"B"}});
    CHECK_FALSE(validate(b).valid());
    b = testing::minimal_binary();
    Import big{"BIG", {}};
    for (int i = 0; i < 257; ++i) big.symbols.push_back("s" + std::to_string(i));
    b.imports.push_back(big);
    CHECK_FALSE(validate(b).valid());
  }

  TEST_CASE("implausible timestamp warns") {
    ToyBinary b = testing::minimal_binary();
    b.timestamp = 5;
    seal_checksum(b);
    const auto rep = validate(b);
    CHECK(rep.valid());
    REQUIRE(rep.warnings.size() == 1);
    CHECK(rep.warnings[0] == SoftWarning::ImplausibleTimestamp);
  }

  TEST_CASE("generated binaries round-trip and validate cleanly") {
    const CorpusConfig cfg;
    for (std::uint64_t seed = 0; seed < 10000; ++seed) {
      const Label l = seed % 2 ? Label::Malicious : Label::Benign;
      const ToyBinary b = gen_binary(l, seed, cfg);
      const Bytes raw = serialize(b);
      const ToyBinary back = parse(raw);
      const auto rep = validate(b);
      if (!(back == b) || serialize(back) != raw || !rep.valid() || !rep.warnings.empty()) {
        FAIL("seed " << seed << " failed the round-trip/validity property");
      }
    }
  }

  TEST_CASE("digest of an empty payload is the FNV offset basis") {
    ToyBinary b = testing::minimal_binary();
    b.sections[0].data.clear();
    CHECK(functional_digest(b).value == 0xcbf29ce484222325ULL);
  }

  TEST_CASE("digest changes when one payload byte flips") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      ToyBinary b = gen_binary(Label::Benign, seed, CorpusConfig{});
      const auto d = functional_digest(b);
      b.payload().data[seed % b.payload().data.size()] ^= 0x01;
      CHECK(functional_digest(b) != d);
    }
  }

  TEST_CASE("RLE packing") {
    ToyBinary b = testing::minimal_binary();
    b.sections[0].data = {'A', 'A', 'A', 'A'};
    b.sections[0].alloc_len = 4;
    const ToyBinary p = pack(b);
    CHECK(p.packed);
    CHECK(p.payload().data == Bytes{4, 'A'});
    CHECK(functional_digest(p) == functional_digest(b));
    CHECK(unpack(p).payload().data == b.payload().data);
    CHECK_THROWS_AS(pack(p), Error);
    CHECK_THROWS_AS(unpack(b), Error);
    CHECK_THROWS_AS(rle_decode(Bytes{1}), Error);
    CHECK_THROWS_AS(rle_decode(Bytes{0, 'x'}), Error);

    Bytes run(300, 7);
    CHECK(rle_encode(run) == Bytes{255, 7, 45, 7});
  }

  TEST_CASE("high-entropy payloads grow under packing and stay valid") {
    Rng rng(5);
    for (int t = 0; t < 200; ++t) {
      ToyBinary b = testing::minimal_binary();
      Bytes data(64 + t);
      for (auto& x : data) x = static_cast<std::uint8_t>(rng());
      b.sections[0].data = data;
      b.sections[0].alloc_len = static_cast<std::uint32_t>(data.size());
      const ToyBinary p = pack(b);
      CHECK(p.payload().alloc_len >= p.payload().used_len());
      CHECK(validate(p).valid());
      CHECK(functional_digest(p) == functional_digest(b));
      CHECK(unpack(p).payload().data == data);
    }
  }
}
