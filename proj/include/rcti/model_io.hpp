#pragma once

// Versioned binary model file.
//
//   magic      8 bytes  "RCTINET\0"
//   version    u32      1
//   arch       u32 length + bytes (preset name)
//   classes    u32
//   input      u32 rank + rank x u32
//   layers     u32 count, then per layer: u8 kind + kind-specific u32 fields
//                Conv2D: in_ch out_ch kernel stride | MaxPool2D: window | Dense: in out
//   params     u64 count + count x f64, weight then bias per parametrised layer
//
// All integers and doubles are little-endian.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#include "rcti/nn.hpp"

namespace rcti {

class ModelFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::array<char, 8> kModelMagic{'R', 'C', 'T', 'I', 'N', 'E', 'T', '\0'};
inline constexpr std::uint32_t kModelVersion = 1;

namespace detail {

enum class LayerKind : std::uint8_t { Conv2D = 1, ReLU = 2, MaxPool2D = 3, Flatten = 4, Dense = 5 };

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& b) : b_(b) {}
  std::uint8_t u8() { return need(1), b_[pos_++]; }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{b_[pos_++]} << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{b_[pos_++]} << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw ModelFormatError("model file truncated");
  }
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize_model(const Network& net) {
  layer_shapes(net);
  detail::ByteWriter w;
  w.raw(kModelMagic.data(), kModelMagic.size());
  w.u32(kModelVersion);
  w.u32(static_cast<std::uint32_t>(net.architecture.size()));
  w.raw(net.architecture.data(), net.architecture.size());
  w.u32(static_cast<std::uint32_t>(net.num_classes));
  w.u32(static_cast<std::uint32_t>(net.input_shape.size()));
  for (auto d : net.input_shape) w.u32(static_cast<std::uint32_t>(d));
  w.u32(static_cast<std::uint32_t>(net.layers.size()));
  std::vector<const Tensor*> params;
  for (const auto& layer : net.layers) {
    using K = detail::LayerKind;
    if (auto* c = std::get_if<Conv2D>(&layer)) {
      w.u8(static_cast<std::uint8_t>(K::Conv2D));
      for (auto v : {c->in_ch, c->out_ch, c->kernel, c->stride}) w.u32(static_cast<std::uint32_t>(v));
      params.insert(params.end(), {&c->weight, &c->bias});
    } else if (std::holds_alternative<ReLU>(layer)) {
      w.u8(static_cast<std::uint8_t>(K::ReLU));
    } else if (auto* p = std::get_if<MaxPool2D>(&layer)) {
      w.u8(static_cast<std::uint8_t>(K::MaxPool2D));
      w.u32(static_cast<std::uint32_t>(p->window));
    } else if (std::holds_alternative<Flatten>(layer)) {
      w.u8(static_cast<std::uint8_t>(K::Flatten));
    } else {
      const auto& d = std::get<Dense>(layer);
      w.u8(static_cast<std::uint8_t>(K::Dense));
      w.u32(static_cast<std::uint32_t>(d.in_dim));
      w.u32(static_cast<std::uint32_t>(d.out_dim));
      params.insert(params.end(), {&d.weight, &d.bias});
    }
  }
  w.u64(param_count(net));
  for (const Tensor* t : params)
    for (double v : t->data) w.f64(v);
  return w.bytes();
}

inline Network deserialize_model(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r(bytes);
  const std::string magic = r.str(kModelMagic.size());
  if (std::memcmp(magic.data(), kModelMagic.data(), kModelMagic.size()) != 0)
    throw ModelFormatError("not a model file (bad magic)");
  if (const auto v = r.u32(); v != kModelVersion)
    throw ModelFormatError("unsupported model file version " + std::to_string(v));
  Network net;
  net.architecture = r.str(r.u32());
  net.num_classes = r.u32();
  net.input_shape.resize(r.u32());
  for (auto& d : net.input_shape) d = r.u32();
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    using K = detail::LayerKind;
    switch (static_cast<K>(r.u8())) {
      case K::Conv2D: {
        const auto in = r.u32(), out = r.u32(), k = r.u32(), s = r.u32();
        net.layers.push_back(make_conv(in, out, k, s));
        break;
      }
      case K::ReLU: net.layers.push_back(ReLU{}); break;
      case K::MaxPool2D: net.layers.push_back(MaxPool2D{r.u32()}); break;
      case K::Flatten: net.layers.push_back(Flatten{}); break;
      case K::Dense: {
        const auto in = r.u32(), out = r.u32();
        net.layers.push_back(make_dense(in, out));
        break;
      }
      default: throw ModelFormatError("unknown layer kind in model file");
    }
  }
  try {
    layer_shapes(net);
  } catch (const ShapeError& e) {
    throw ModelFormatError(std::string("inconsistent layer stack: ") + e.what());
  }
  if (r.u64() != param_count(net)) throw ModelFormatError("parameter count mismatch");
  for (auto& layer : net.layers) {
    auto read = [&](Tensor& t) {
      for (double& v : t.data) v = r.f64();
    };
    if (auto* c = std::get_if<Conv2D>(&layer)) read(c->weight), read(c->bias);
    if (auto* d = std::get_if<Dense>(&layer)) read(d->weight), read(d->bias);
  }
  if (!r.done()) throw ModelFormatError("trailing bytes after parameters");
  return net;
}

inline void save_model(const Network& net, const std::filesystem::path& path) {
  const auto bytes = serialize_model(net);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write model file " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing model file " + path.string());
}

inline Network load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace rcti
