#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "critpath/nn/network.hpp"

namespace critpath::nn {

// MDLW little-endian weight format:
//   "MDLW" | version u32 (=1) | layer_count u32 | per layer:
//   kind u8 | dims | weight blob f32 | bias blob f32
// dense dims: in, out; conv2d dims: kh, kw, cin, cout, stride, pad (all u32).
// relu/flatten/softmax carry no dims and no blobs.
inline constexpr std::uint32_t kMdlwVersion = 1;

std::vector<std::uint8_t> encode_model(const Network& net);
Network decode_model(std::span<const std::uint8_t> bytes, TraceOptions options = {});

Network load_model(const std::filesystem::path& path, TraceOptions options = {});
void save_model(const Network& net, const std::filesystem::path& path);

}  // namespace critpath::nn
