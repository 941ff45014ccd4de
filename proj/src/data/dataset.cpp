#include "critpath/data/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "critpath/binary_io.hpp"
#include "critpath/random.hpp"

namespace critpath::data {
namespace {

std::string_view code_name(DataError::Code code) {
  using C = DataError::Code;
  switch (code) {
    case C::BadMagic: return "BadMagic";
    case C::CountMismatch: return "CountMismatch";
    case C::RaggedRow: return "RaggedRow";
    case C::ValueOutOfRange: return "ValueOutOfRange";
    case C::ShapeMismatch: return "ShapeMismatch";
    case C::EmptyClass: return "EmptyClass";
    case C::Truncated: return "Truncated";
  }
  return "Unknown";
}

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

}  // namespace

DataError::DataError(Code code, const std::string& detail)
    : Error("data: " + std::string(code_name(code)) + ": " + detail), code_(code) {}

std::size_t LabeledDataset::num_classes() const {
  if (labels.empty()) return 0;
  return *std::max_element(labels.begin(), labels.end()) + 1;
}

std::vector<Tensor> load_idx_images(const std::filesystem::path& images) {
  const auto bytes = read_file_bytes(images);
  ByteReader r(bytes);
  std::uint32_t magic = 0, count = 0, rows = 0, cols = 0;
  if (!r.u32_be(magic) || magic != kIdxImages) {
    throw DataError(DataError::Code::BadMagic, images.string() + " is not an IDX image file");
  }
  if (!r.u32_be(count) || !r.u32_be(rows) || !r.u32_be(cols)) {
    throw DataError(DataError::Code::Truncated, images.string() + ": header truncated");
  }
  const std::size_t pixels = std::size_t{rows} * cols;
  if (r.remaining() < pixels * count) {
    throw DataError(DataError::Code::Truncated, images.string() + ": pixel data truncated");
  }
  std::vector<Tensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::span<const std::uint8_t> px;
    r.bytes(pixels, px);
    std::vector<float> v(pixels);
    std::transform(px.begin(), px.end(), v.begin(), [](std::uint8_t b) { return static_cast<float>(b) / 255.0f; });
    out.emplace_back(Shape{rows, cols, 1}, std::move(v));
  }
  return out;
}

LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, Split split) {
  LabeledDataset ds;
  ds.split = split;
  ds.inputs = load_idx_images(images);

  const auto bytes = read_file_bytes(labels);
  ByteReader r(bytes);
  std::uint32_t magic = 0, count = 0;
  if (!r.u32_be(magic) || magic != kIdxLabels) {
    throw DataError(DataError::Code::BadMagic, labels.string() + " is not an IDX label file");
  }
  if (!r.u32_be(count)) throw DataError(DataError::Code::Truncated, labels.string() + ": header truncated");
  if (count != ds.inputs.size()) {
    throw DataError(DataError::Code::CountMismatch, std::to_string(ds.inputs.size()) + " images but " +
                                                        std::to_string(count) + " labels");
  }
  std::span<const std::uint8_t> raw;
  if (!r.bytes(count, raw)) throw DataError(DataError::Code::Truncated, labels.string() + ": label data truncated");
  ds.labels.assign(raw.begin(), raw.end());
  ds.shape = ds.inputs.empty() ? Shape{} : ds.inputs.front().shape;
  return ds;
}

LabeledDataset load_csv(const std::filesystem::path& path, const Shape& shape, Split split) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  const std::size_t width = shape_numel(shape);
  LabeledDataset ds;
  ds.shape = shape;
  ds.split = split;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> fields;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      const std::size_t comma = std::min(line.find(',', pos), line.size());
      std::string token = line.substr(pos, comma - pos);
      token.erase(0, token.find_first_not_of(" \t"));
      token.erase(token.find_last_not_of(" \t") + 1);
      double v = 0.0;
      const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
      if (token.empty() || res.ec != std::errc() || res.ptr != token.data() + token.size()) {
        throw DataError(DataError::Code::RaggedRow,
                        path.string() + ":" + std::to_string(line_no) + ": bad field \"" + token + "\"");
      }
      fields.push_back(v);
      pos = comma + 1;
    }
    if (fields.size() != width + 1) {
      throw DataError(DataError::Code::RaggedRow, path.string() + ":" + std::to_string(line_no) + ": expected " +
                                                      std::to_string(width + 1) + " fields, got " +
                                                      std::to_string(fields.size()));
    }
    if (fields[0] < 0 || fields[0] != static_cast<double>(static_cast<std::size_t>(fields[0]))) {
      throw DataError(DataError::Code::RaggedRow, path.string() + ":" + std::to_string(line_no) + ": bad label");
    }
    std::vector<float> values(width);
    for (std::size_t i = 0; i < width; ++i) {
      const double v = fields[i + 1];
      if (!(v >= 0.0 && v <= 1.0)) {
        throw DataError(DataError::Code::ValueOutOfRange,
                        path.string() + ":" + std::to_string(line_no) + ": value outside [0,1]");
      }
      values[i] = static_cast<float>(v);
    }
    ds.labels.push_back(static_cast<std::size_t>(fields[0]));
    ds.inputs.emplace_back(shape, std::move(values));
  }
  return ds;
}

void save_csv(const LabeledDataset& ds, const std::filesystem::path& path) {
  std::ostringstream out;
  out << std::setprecision(9);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << ds.labels[i];
    for (float v : ds.inputs[i].data) out << ',' << v;
    out << '\n';
  }
  write_file_text(path, out.str());
}

LabeledDataset make_blobs(std::span<const std::vector<float>> centers, float stddev, std::size_t per_class,
                          std::uint64_t seed, Split split) {
  if (centers.empty()) throw InvalidArgument("make_blobs: no centers");
  const std::size_t dim = centers.front().size();
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, stddev);
  LabeledDataset ds;
  ds.shape = Shape{dim};
  ds.split = split;
  for (std::size_t c = 0; c < centers.size(); ++c) {
    if (centers[c].size() != dim) throw InvalidArgument("make_blobs: centers differ in dimension");
  }
  // Interleave classes so prefixes of the dataset stay balanced.
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t c = 0; c < centers.size(); ++c) {
      std::vector<float> v(dim);
      for (std::size_t d = 0; d < dim; ++d) {
        v[d] = static_cast<float>(std::clamp(centers[c][d] + noise(rng), 0.0, 1.0));
      }
      ds.inputs.emplace_back(ds.shape, std::move(v));
      ds.labels.push_back(c);
    }
  }
  return ds;
}

}  // namespace critpath::data
