#include "tefb/model_io.hpp"

#include <algorithm>

namespace tefb {

namespace {

constexpr char kMagic[4] = {'T', 'E', 'F', 'M'};

void write_gbdt(ByteWriter& w, const GbdtModel& m) {
  w.f64(m.base_score);
  w.f64(m.shrinkage);
  w.u32(static_cast<std::uint32_t>(m.trees.size()));
  for (const auto& t : m.trees) {
    w.u32(static_cast<std::uint32_t>(t.nodes.size()));
    for (const auto& n : t.nodes) {
      w.u32(static_cast<std::uint32_t>(n.feature));
      w.f64(n.threshold);
      w.u32(static_cast<std::uint32_t>(n.left));
      w.u32(static_cast<std::uint32_t>(n.right));
      w.f64(n.value);
      w.f64(n.cover);
    }
  }
}

GbdtModel read_gbdt(ByteReader& r) {
  GbdtModel m;
  m.base_score = r.f64();
  m.shrinkage = r.f64();
  const std::uint32_t trees = r.u32();
  m.trees.resize(trees);
  for (auto& t : m.trees) {
    const std::uint32_t nodes = r.u32();
    if (nodes == 0 || nodes > r.remaining() / 36) throw Error(Errc::MalformedInput, "bad tree node count");
    t.nodes.resize(nodes);
    for (auto& n : t.nodes) {
      n.feature = static_cast<std::int32_t>(r.u32());
      n.threshold = r.f64();
      n.left = static_cast<std::int32_t>(r.u32());
      n.right = static_cast<std::int32_t>(r.u32());
      n.value = r.f64();
      n.cover = r.f64();
    }
    for (std::size_t i = 0; i < t.nodes.size(); ++i) {
      const auto& n = t.nodes[i];
      if (n.is_leaf()) continue;
      const auto ok = [&](std::int32_t c) { return c > static_cast<std::int32_t>(i) && c < static_cast<std::int32_t>(nodes); };
      if (n.feature >= static_cast<std::int32_t>(kFeatureDim) || !ok(n.left) || !ok(n.right)) {
        throw Error(Errc::MalformedInput, "bad tree node");
      }
    }
  }
  return m;
}

}  // namespace

Bytes encode_container(const TefmContainer& c) {
  ByteWriter w;
  w.str(std::string_view(kMagic, 4));
  w.u8(static_cast<std::uint8_t>(c.kind));
  w.u16(c.version);
  w.f64(c.threshold);
  w.u64(c.payload.size());
  w.bytes(c.payload);
  return w.take();
}

TefmContainer decode_container(ByteView bytes) {
  try {
    ByteReader r(bytes);
    auto magic = r.take(4);
    if (!std::equal(magic.begin(), magic.end(), kMagic)) throw Error(Errc::MalformedInput, "not a TEFM container");
    TefmContainer c;
    const std::uint8_t kind = r.u8();
    if (kind < 1 || kind > 4) throw Error(Errc::MalformedInput, "unknown model kind tag");
    c.kind = static_cast<ModelKind>(kind);
    c.version = r.u16();
    if (c.version != kTefmVersion) throw Error(Errc::MalformedInput, "unsupported TEFM version");
    c.threshold = r.f64();
    const std::uint64_t len = r.u64();
    if (len != r.remaining()) throw Error(Errc::MalformedInput, "payload length mismatch");
    auto p = r.take(len);
    c.payload.assign(p.begin(), p.end());
    return c;
  } catch (const ParseError& e) {
    throw Error(Errc::MalformedInput, e.what());
  }
}

void write_mlp(ByteWriter& w, const Mlp& net) {
  w.u8(static_cast<std::uint8_t>(net.activation()));
  w.u32(static_cast<std::uint32_t>(net.sizes().size()));
  for (auto s : net.sizes()) w.u32(static_cast<std::uint32_t>(s));
  for (double p : net.params()) w.f64(p);
}

Mlp read_mlp(ByteReader& r) {
  const std::uint8_t act = r.u8();
  if (act > 1) throw Error(Errc::MalformedInput, "unknown activation");
  const std::uint32_t layers = r.u32();
  if (layers < 2 || layers > 16) throw Error(Errc::MalformedInput, "bad layer count");
  std::vector<std::size_t> sizes(layers);
  for (auto& s : sizes) {
    s = r.u32();
    if (s == 0 || s > 4096) throw Error(Errc::MalformedInput, "bad layer width");
  }
  Mlp net(sizes, static_cast<Activation>(act));
  for (auto& p : net.params()) p = r.f64();
  return net;
}

Bytes encode_model(const Model& m) {
  ByteWriter w;
  std::visit(
      [&](const auto& mm) {
        using T = std::decay_t<decltype(mm)>;
        if constexpr (std::is_same_v<T, GbdtModel>) {
          write_gbdt(w, mm);
        } else {
          write_mlp(w, mm.net);
        }
      },
      m);
  return w.take();
}

Model decode_model(ModelKind kind, ByteView payload) {
  try {
    ByteReader r(payload);
    Model m;
    switch (kind) {
      case ModelKind::Gbdt: m = read_gbdt(r); break;
      case ModelKind::Linear: m = LinearModel{read_mlp(r)}; break;
      case ModelKind::Ffnn: m = FfnnModel{read_mlp(r)}; break;
      default: throw Error(Errc::MalformedInput, "container does not hold a detector model");
    }
    if (!r.at_end()) throw Error(Errc::MalformedInput, "trailing bytes in model payload");
    return m;
  } catch (const ParseError& e) {
    throw Error(Errc::MalformedInput, e.what());
  }
}

Bytes encode_detector(const Detector& d) {
  TefmContainer c;
  c.kind = kind_of(d.model());
  c.threshold = d.threshold();
  c.payload = encode_model(d.model());
  return encode_container(c);
}

Detector decode_detector(ByteView bytes) {
  TefmContainer c = decode_container(bytes);
  return Detector(decode_model(c.kind, c.payload), c.threshold);
}

void save_detector(const std::string& path, const Detector& d) { write_file(path, encode_detector(d)); }

Detector load_detector(const std::string& path) { return decode_detector(read_file(path)); }

}  // namespace tefb
