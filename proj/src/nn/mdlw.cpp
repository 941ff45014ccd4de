#include "critpath/nn/mdlw.hpp"

#include <cmath>

#include "critpath/binary_io.hpp"

namespace critpath::nn {
namespace {

constexpr char kMagic[4] = {'M', 'D', 'L', 'W'};

using C = ModelError::Code;

std::vector<float> read_blob(ByteReader& r, std::size_t count, std::size_t layer, const char* what) {
  if (r.remaining() / 4 < count) {
    throw ModelError(C::TruncatedWeights, layer,
                     std::string(what) + " blob needs " + std::to_string(count) + " floats, " +
                         std::to_string(r.remaining() / 4) + " present");
  }
  std::vector<float> out(count);
  for (auto& v : out) {
    r.f32(v);
    if (!std::isfinite(v)) throw ModelError(C::NonFiniteWeight, layer, what);
  }
  return out;
}

std::uint32_t read_dim(ByteReader& r, std::size_t layer) {
  std::uint32_t v;
  if (!r.u32(v)) throw ModelError(C::TruncatedHeader, layer, "layer dims truncated");
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_model(const Network& net) {
  ByteWriter w;
  for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kMdlwVersion);
  w.u32(static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& l : net.layers()) {
    w.u8(static_cast<std::uint8_t>(l.kind));
    if (l.kind == LayerKind::Dense) {
      w.u32(l.dense.in);
      w.u32(l.dense.out);
    } else if (l.kind == LayerKind::Conv2d) {
      w.u32(l.conv.kh);
      w.u32(l.conv.kw);
      w.u32(l.conv.cin);
      w.u32(l.conv.cout);
      w.u32(l.conv.stride);
      w.u32(l.conv.pad);
    }
    if (l.parametric()) {
      w.f32s(l.weights);
      w.f32s(l.bias);
    }
  }
  return w.take();
}

Network decode_model(std::span<const std::uint8_t> bytes, TraceOptions options) {
  ByteReader r(bytes);
  std::span<const std::uint8_t> magic;
  if (!r.bytes(4, magic) || !std::equal(magic.begin(), magic.end(), kMagic)) {
    throw ModelError(C::BadMagic, std::nullopt, "expected \"MDLW\"");
  }
  std::uint32_t version = 0, count = 0;
  if (!r.u32(version) || !r.u32(count)) throw ModelError(C::TruncatedHeader, std::nullopt, "file header truncated");
  if (version != kMdlwVersion) {
    throw ModelError(C::UnsupportedVersion, std::nullopt, "version " + std::to_string(version));
  }
  std::vector<Layer> layers;
  layers.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint8_t kind;
    if (!r.u8(kind)) throw ModelError(C::TruncatedHeader, i, "missing layer kind");
    switch (kind) {
      case 0: {
        const std::uint32_t in = read_dim(r, i), out = read_dim(r, i);
        auto weights = read_blob(r, std::size_t{in} * out, i, "weight");
        auto bias = read_blob(r, out, i, "bias");
        layers.push_back(Layer::make_dense(in, out, std::move(weights), std::move(bias)));
        break;
      }
      case 1: {
        ConvDims d;
        d.kh = read_dim(r, i);
        d.kw = read_dim(r, i);
        d.cin = read_dim(r, i);
        d.cout = read_dim(r, i);
        d.stride = read_dim(r, i);
        d.pad = read_dim(r, i);
        auto weights = read_blob(r, std::size_t{d.cout} * d.cin * d.kh * d.kw, i, "weight");
        auto bias = read_blob(r, d.cout, i, "bias");
        layers.push_back(Layer::make_conv(d, std::move(weights), std::move(bias)));
        break;
      }
      case 2: layers.push_back(Layer::make_relu()); break;
      case 3: layers.push_back(Layer::make_flatten()); break;
      case 4: layers.push_back(Layer::make_softmax()); break;
      default: throw ModelError(C::UnknownLayerKind, i, "kind byte " + std::to_string(kind));
    }
  }
  if (r.remaining() != 0) {
    throw ModelError(C::TrailingData, std::nullopt, std::to_string(r.remaining()) + " unread bytes");
  }
  return Network(std::move(layers), options);
}

Network load_model(const std::filesystem::path& path, TraceOptions options) {
  return decode_model(read_file_bytes(path), options);
}

void save_model(const Network& net, const std::filesystem::path& path) {
  write_file_bytes(path, encode_model(net));
}

}  // namespace critpath::nn
