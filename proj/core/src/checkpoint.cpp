#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "gpsnet/errors.hpp"
#include "gpsnet/training.hpp"

namespace gpsnet {
namespace {

constexpr std::string_view kMagic = "GPSNETCK";
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw ParseError(fmt::format("checkpoint: truncated while reading {}", what));
    }
    std::string_view s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint64_t uint(std::size_t width, const char* what) {
    std::string_view s = take(width, what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[i])) << (8 * i);
    }
    return v;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

struct Entry {
  Shape4 shape;
  std::span<double> values;
};

std::map<std::string, Entry> entries_of(SegmentationNet& net) {
  std::map<std::string, Entry> out;
  for (NamedTensor& t : net.parameters()) {
    out.emplace(t.name, Entry{t.tensor->shape(), t.tensor->data()});
  }
  for (NamedBuffer& b : net.buffers()) {
    out.emplace(b.name, Entry{Shape4{1, b.values->size(), 1, 1}, *b.values});
  }
  return out;
}

}  // namespace

std::string encode_checkpoint(SegmentationNet& net, const TrainConfig& cfg) {
  std::string out(kMagic);
  put_u32(out, kVersion);
  const std::string config = serialize(cfg);
  put_u32(out, static_cast<std::uint32_t>(config.size()));
  out += config;
  const auto entries = entries_of(net);
  put_u32(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, e] : entries) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, 4);
    put_u64(out, e.shape.n);
    put_u64(out, e.shape.c);
    put_u64(out, e.shape.h);
    put_u64(out, e.shape.w);
    for (double v : e.values) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

LoadedCheckpoint decode_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(kMagic.size(), "magic") != kMagic) {
    throw ParseError("checkpoint: bad magic");
  }
  const std::uint64_t version = in.uint(4, "version");
  if (version != kVersion) {
    throw ParseError(fmt::format("checkpoint: unsupported version {}", version));
  }
  const std::uint64_t config_len = in.uint(4, "config length");
  TrainConfig cfg = parse_train_config(in.take(config_len, "config"));
  SegmentationNet net = SegmentationNet::create(cfg);
  auto entries = entries_of(net);

  const std::uint64_t count = in.uint(4, "entry count");
  if (count != entries.size()) {
    throw ParseError(fmt::format("checkpoint: {} entries, model has {}", count,
                                 entries.size()));
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name(in.take(in.uint(4, "name length"), "name"));
    auto it = entries.find(name);
    if (it == entries.end()) {
      throw ParseError(fmt::format("checkpoint: unknown entry '{}'", name));
    }
    if (in.uint(4, "rank") != 4) {
      throw ParseError(fmt::format("checkpoint: '{}' is not rank 4", name));
    }
    Shape4 s;
    s.n = in.uint(8, "shape");
    s.c = in.uint(8, "shape");
    s.h = in.uint(8, "shape");
    s.w = in.uint(8, "shape");
    if (!(s == it->second.shape)) {
      throw ParseError(fmt::format("checkpoint: '{}' has shape {}, expected {}",
                                   name, s.str(), it->second.shape.str()));
    }
    for (double& v : it->second.values) {
      v = std::bit_cast<double>(in.uint(8, "values"));
    }
  }
  if (!in.done()) throw ParseError("checkpoint: trailing bytes");
  return LoadedCheckpoint{std::move(cfg), std::move(net)};
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(fmt::format("cannot open checkpoint '{}'", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace gpsnet
