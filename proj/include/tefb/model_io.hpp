#pragma once

// "TEFM" model container: magic | kind u8 | version u16 | threshold f64 |
// payload_len u64 | payload. All little-endian.

#include <string>

#include "tefb/bytes.hpp"
#include "tefb/detector.hpp"

namespace tefb {

inline constexpr std::uint16_t kTefmVersion = 1;

struct TefmContainer {
  ModelKind kind = ModelKind::Gbdt;
  std::uint16_t version = kTefmVersion;
  double threshold = 0.5;
  Bytes payload;
};

Bytes encode_container(const TefmContainer& c);
TefmContainer decode_container(ByteView bytes);

void write_mlp(ByteWriter& w, const Mlp& net);
Mlp read_mlp(ByteReader& r);

Bytes encode_model(const Model& m);
Model decode_model(ModelKind kind, ByteView payload);

Bytes encode_detector(const Detector& d);
Detector decode_detector(ByteView bytes);

void save_detector(const std::string& path, const Detector& d);
Detector load_detector(const std::string& path);

}  // namespace tefb
