#include "tefb/bytes.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace tefb {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::MalformedHeader: return "MalformedHeader";
    case Errc::TruncatedFile: return "TruncatedFile";
    case Errc::SectionOverflow: return "SectionOverflow";
    case Errc::NoExecSection: return "NoExecSection";
    case Errc::InvariantViolation: return "InvariantViolation";
    case Errc::AlreadyPacked: return "AlreadyPacked";
    case Errc::NotPacked: return "NotPacked";
    case Errc::UnpackFailure: return "UnpackFailure";
    case Errc::NoUsableIngredients: return "NoUsableIngredients";
    case Errc::IoFailure: return "IoFailure";
    case Errc::DivergenceDetected: return "DivergenceDetected";
    case Errc::InsufficientHoldout: return "InsufficientHoldout";
    case Errc::NotTreeModel: return "NotTreeModel";
    case Errc::MalformedInput: return "MalformedInput";
    case Errc::EpisodeFinished: return "EpisodeFinished";
    case Errc::ExhaustedCorpus: return "ExhaustedCorpus";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::BudgetExceeded: return "BudgetExceeded";
    case Errc::SurrogateDegenerate: return "SurrogateDegenerate";
    case Errc::KTooLarge: return "KTooLarge";
    case Errc::EmptyEvaluation: return "EmptyEvaluation";
    case Errc::MissingArtifacts: return "MissingArtifacts";
    case Errc::TimedOut: return "TimedOut";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::DegenerateLabels: return "DegenerateLabels";
  }
  return "Unknown";
}

std::uint64_t fnv1a64(ByteView data) {
  std::uint64_t h = kFnv64OffsetBasis;
  for (auto b : data) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(std::string_view s) {
  return fnv1a64(ByteView(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

std::uint32_t fnv1a32(std::string_view s) {
  std::uint32_t h = 0x811c9dc5u;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x01000193u;
  }
  return h;
}

void ByteWriter::u16(std::uint16_t v) {
  u8(static_cast<std::uint8_t>(v));
  u8(static_cast<std::uint8_t>(v >> 8));
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void ByteReader::need(std::size_t n) const {
  if (n > remaining()) {
    throw ParseError(Errc::TruncatedFile, pos_,
                     "need " + std::to_string(n) + " bytes, " + std::to_string(remaining()) + " left");
  }
}

std::uint8_t ByteReader::u8() {
  need(1);
  return data_[pos_++];
}

std::uint16_t ByteReader::u16() {
  need(2);
  std::uint16_t v = static_cast<std::uint16_t>(data_[pos_] | (data_[pos_ + 1] << 8));
  pos_ += 2;
  return v;
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
  pos_ += 8;
  return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }
float ByteReader::f32() { return std::bit_cast<float>(u32()); }

ByteView ByteReader::take(std::size_t n) {
  need(n);
  auto v = data_.subspan(pos_, n);
  pos_ += n;
  return v;
}

std::string ByteReader::str(std::size_t n) {
  auto v = take(n);
  return std::string(v.begin(), v.end());
}

Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot open " + path);
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, ByteView data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoFailure, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(Errc::IoFailure, "short write to " + path);
}

}  // namespace tefb
