#pragma once

// Binary checkpoint container, all integers and floats little-endian:
//
//   "OASR"  u16 version
//   config: u8 scale, u32 oam_count, u32 width, u32 ca_reduction,
//           u8 block_design, u8 fusion_mode, u8 ca_placement, u64 seed
//   u8 io_range
//   u32 entry_count, then per entry:
//     u32 name_len, name bytes (UTF-8), u8 rank, u32 dims[rank], f32 data[numel]
//
// Network parameters come first, in layout order. Optional training state
// follows as entries named "optim/<param>/m", "optim/<param>/v" and
// "train/position" (step and epoch, as exact 16-bit limbs).

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

#include "oasr/config.hpp"
#include "oasr/model.hpp"
#include "oasr/parameter.hpp"

namespace oasr {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

enum class CheckpointErrc { kBadMagic, kVersionSkew, kShapeMismatch, kTruncated, kMissingParameter,
                            kDuplicateEntry, kUnknownEntry, kBadConfig, kIo };

inline const char* to_string(CheckpointErrc e) {
  switch (e) {
    case CheckpointErrc::kBadMagic: return "bad magic";
    case CheckpointErrc::kVersionSkew: return "unsupported version";
    case CheckpointErrc::kShapeMismatch: return "shape mismatch";
    case CheckpointErrc::kTruncated: return "truncated file";
    case CheckpointErrc::kMissingParameter: return "missing parameter";
    case CheckpointErrc::kDuplicateEntry: return "duplicate entry";
    case CheckpointErrc::kUnknownEntry: return "unknown entry";
    case CheckpointErrc::kBadConfig: return "invalid network config";
    case CheckpointErrc::kIo: return "I/O error";
  }
  return "?";
}

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  CheckpointErrc code() const { return code_; }

 private:
  CheckpointErrc code_;
};

/// Network input range convention. Raw means Y values in [0, 255], no mean shift.
enum class IoRange : std::uint8_t { kRaw255 = 0 };

struct TrainPosition {
  std::uint64_t step = 0;   // Adam steps taken so far
  std::uint64_t epoch = 0;  // epochs completed
};

struct Checkpoint {
  static constexpr std::string_view kMagic = "OASR";
  static constexpr std::uint16_t kVersion = 1;

  NetworkConfig config;
  IoRange io_range = IoRange::kRaw255;
  ParameterSet<float> params;
  std::optional<TrainPosition> position;  // with Adam moments when set
};

namespace detail {

class ByteWriter {
 public:
  template <class U>
  void put(U v) {
    char buf[sizeof(U)];
    std::memcpy(buf, &v, sizeof(U));
    out_.append(buf, sizeof(U));
  }
  void bytes(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view in) : in_(in) {}
  template <class U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, in_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n)
      throw CheckpointError(CheckpointErrc::kTruncated, "needed " + std::to_string(n) + " bytes at offset " +
                                                            std::to_string(pos_) + " of " + std::to_string(in_.size()));
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

inline void put_entry(ByteWriter& w, const std::string& name, const Tensor<float>& t) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
  w.bytes(name);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(t.shape().rank()));
  for (auto d : t.shape().dims()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
  w.bytes(std::string_view(reinterpret_cast<const char*>(t.data().data()), t.size() * sizeof(float)));
}

inline Tensor<float> position_tensor(const TrainPosition& pos) {
  Tensor<float> t(Shape{8});
  for (int i = 0; i < 4; ++i) {
    t[i] = static_cast<float>((pos.step >> (16 * i)) & 0xFFFF);
    t[4 + i] = static_cast<float>((pos.epoch >> (16 * i)) & 0xFFFF);
  }
  return t;
}

inline TrainPosition position_from(const Tensor<float>& t) {
  if (!(t.shape() == Shape{8})) throw CheckpointError(CheckpointErrc::kShapeMismatch, "train/position");
  TrainPosition p;
  for (int i = 0; i < 4; ++i) {
    p.step |= static_cast<std::uint64_t>(t[i]) << (16 * i);
    p.epoch |= static_cast<std::uint64_t>(t[4 + i]) << (16 * i);
  }
  return p;
}

}  // namespace detail

inline std::string serialize(const Checkpoint& ck) {
  detail::ByteWriter w;
  w.bytes(Checkpoint::kMagic);
  w.put<std::uint16_t>(Checkpoint::kVersion);
  const NetworkConfig& c = ck.config;
  w.put<std::uint8_t>(static_cast<std::uint8_t>(c.scale));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.oam_count));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.width));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.ca_reduction));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(c.block_design));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(c.fusion_mode));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(c.ca_placement));
  w.put<std::uint64_t>(c.seed);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(ck.io_range));

  const std::size_t extra = ck.position ? 2 * ck.params.size() + 1 : 0;
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.params.size() + extra));
  for (const auto& p : ck.params) detail::put_entry(w, p.name, p.value);
  if (ck.position) {
    for (const auto& p : ck.params) {
      detail::put_entry(w, "optim/" + p.name + "/m", p.adam_m);
      detail::put_entry(w, "optim/" + p.name + "/v", p.adam_v);
    }
    detail::put_entry(w, "train/position", detail::position_tensor(*ck.position));
  }
  return w.take();
}

/// Parses and validates a checkpoint: magic, version, config, and that every
/// parameter of the declared network is present exactly once with its shape.
inline Checkpoint deserialize(std::string_view bytes) {
  detail::ByteReader r(bytes);
  if (bytes.size() < Checkpoint::kMagic.size())
    throw CheckpointError(CheckpointErrc::kTruncated, "file shorter than the magic");
  if (r.bytes(4) != Checkpoint::kMagic) throw CheckpointError(CheckpointErrc::kBadMagic, "not an OASR checkpoint");
  if (auto v = r.get<std::uint16_t>(); v != Checkpoint::kVersion)
    throw CheckpointError(CheckpointErrc::kVersionSkew, "file version " + std::to_string(v) + ", reader version " +
                                                            std::to_string(Checkpoint::kVersion));
  Checkpoint ck;
  NetworkConfig& c = ck.config;
  c.scale = r.get<std::uint8_t>();
  c.oam_count = static_cast<int>(r.get<std::uint32_t>());
  c.width = static_cast<int>(r.get<std::uint32_t>());
  c.ca_reduction = static_cast<int>(r.get<std::uint32_t>());
  const auto design = r.get<std::uint8_t>(), fusion = r.get<std::uint8_t>(), placement = r.get<std::uint8_t>();
  if (design > 2 || fusion > 2 || placement > 2) throw CheckpointError(CheckpointErrc::kBadConfig, "enum out of range");
  c.block_design = static_cast<BlockDesign>(design);
  c.fusion_mode = static_cast<FusionMode>(fusion);
  c.ca_placement = static_cast<GatePlacement>(placement);
  c.seed = r.get<std::uint64_t>();
  if (auto io = r.get<std::uint8_t>(); io != 0)
    throw CheckpointError(CheckpointErrc::kBadConfig, "unknown io range tag " + std::to_string(io));

  std::vector<ParamSpec> layout;
  try {
    layout = parameter_layout(c);
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(CheckpointErrc::kBadConfig, e.what());
  }
  std::map<std::string, Tensor<float>> entries;
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint32_t>();
    std::string name(r.bytes(len));
    const auto rank = r.get<std::uint8_t>();
    if (rank < 1 || rank > Shape::kMaxRank)
      throw CheckpointError(CheckpointErrc::kShapeMismatch, name + ": rank " + std::to_string(rank));
    std::vector<std::size_t> dims;
    for (int d = 0; d < rank; ++d) dims.push_back(r.get<std::uint32_t>());
    Shape shape;
    try {
      shape = Shape(std::span<const std::size_t>(dims));
    } catch (const std::exception& e) {
      throw CheckpointError(CheckpointErrc::kShapeMismatch, name + ": " + e.what());
    }
    auto raw = r.bytes(shape.numel() * sizeof(float));
    std::vector<float> data(shape.numel());
    std::memcpy(data.data(), raw.data(), raw.size());
    if (!entries.emplace(name, Tensor<float>(shape, std::move(data))).second)
      throw CheckpointError(CheckpointErrc::kDuplicateEntry, name);
  }
  if (!r.done()) throw CheckpointError(CheckpointErrc::kUnknownEntry, "trailing bytes after the last entry");

  std::set<std::string> used;
  for (const auto& spec : layout) {
    auto it = entries.find(spec.name);
    if (it == entries.end()) throw CheckpointError(CheckpointErrc::kMissingParameter, spec.name);
    if (!(it->second.shape() == spec.shape))
      throw CheckpointError(CheckpointErrc::kShapeMismatch,
                            spec.name + ": file " + it->second.shape().str() + ", network " + spec.shape.str());
    ck.params.add(spec.name, it->second);
    used.insert(spec.name);
  }
  if (auto pos = entries.find("train/position"); pos != entries.end()) {
    ck.position = detail::position_from(pos->second);
    used.insert(pos->first);
    for (auto& p : ck.params) {
      for (auto [suffix, dst] : {std::pair{"/m", &p.adam_m}, std::pair{"/v", &p.adam_v}}) {
        const std::string key = "optim/" + p.name + suffix;
        auto it = entries.find(key);
        if (it == entries.end()) throw CheckpointError(CheckpointErrc::kMissingParameter, key);
        if (!(it->second.shape() == p.value.shape())) throw CheckpointError(CheckpointErrc::kShapeMismatch, key);
        *dst = it->second;
        used.insert(key);
      }
    }
  }
  for (const auto& [name, t] : entries)
    if (!used.count(name)) throw CheckpointError(CheckpointErrc::kUnknownEntry, name);
  return ck;
}

/// Writes via a temporary file and rename, so readers never see a partial file.
inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const std::string bytes = serialize(ck);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(CheckpointErrc::kIo, "cannot open " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError(CheckpointErrc::kIo, "write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw CheckpointError(CheckpointErrc::kIo, "cannot rename " + tmp + ": " + ec.message());
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointErrc::kIo, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

}  // namespace oasr
