#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "critpath/error.hpp"
#include "critpath/tensor.hpp"

namespace critpath::nn {

// Numeric values match the MDLW on-disk kind byte.
enum class LayerKind : std::uint8_t { Dense = 0, Conv2d = 1, Relu = 2, Flatten = 3, Softmax = 4 };

std::string_view to_string(LayerKind kind);

struct DenseDims {
  std::uint32_t in = 0;
  std::uint32_t out = 0;
};

struct ConvDims {
  std::uint32_t kh = 0;
  std::uint32_t kw = 0;
  std::uint32_t cin = 0;
  std::uint32_t cout = 0;
  std::uint32_t stride = 1;
  std::uint32_t pad = 0;
};

struct Layer {
  LayerKind kind = LayerKind::Relu;
  DenseDims dense;
  ConvDims conv;
  // dense: in x out, input-major (w[i * out + o]); conv: cout x cin x kh x kw.
  std::vector<float> weights;
  std::vector<float> bias;
  // Whether this layer's output is a path position. Assigned by Network.
  bool traced = false;

  static Layer make_dense(std::uint32_t in, std::uint32_t out, std::vector<float> weights,
                          std::vector<float> bias);
  static Layer make_conv(const ConvDims& dims, std::vector<float> weights, std::vector<float> bias);
  static Layer make_relu() { return of(LayerKind::Relu); }
  static Layer make_flatten() { return of(LayerKind::Flatten); }
  static Layer make_softmax() { return of(LayerKind::Softmax); }
  static Layer of(LayerKind k) {
    Layer l;
    l.kind = k;
    return l;
  }

  bool parametric() const { return kind == LayerKind::Dense || kind == LayerKind::Conv2d; }
  // Neuron (dense) or channel (conv) count; 0 for non-parametric layers.
  std::size_t width() const;
  std::size_t expected_weight_count() const;
  std::size_t expected_bias_count() const;
};

enum class OutputReadout { Logit, Softmax };

struct TraceOptions {
  // Include raw input elements as the first path position.
  bool trace_input = false;
  OutputReadout output_readout = OutputReadout::Logit;
};

// One path position: which layer output is read and how.
struct TracePoint {
  static constexpr std::size_t kInput = static_cast<std::size_t>(-1);

  std::size_t layer_index = kInput;
  std::size_t width = 0;
  bool spatial = false;  // conv output: readout is the per-channel spatial mean
  bool is_output = false;
};

class ModelError : public Error {
 public:
  enum class Code {
    BadMagic,
    UnsupportedVersion,
    UnknownLayerKind,
    TruncatedHeader,
    TruncatedWeights,
    DimensionMismatch,
    NonFiniteWeight,
    TrailingData,
    InvalidStructure,
  };

  ModelError(Code code, std::optional<std::size_t> layer, const std::string& detail);

  Code code() const { return code_; }
  std::optional<std::size_t> layer() const { return layer_; }

 private:
  Code code_;
  std::optional<std::size_t> layer_;
};

std::string_view to_string(ModelError::Code code);

class ShapeError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

// Immutable feedforward network. Every dense/conv layer contributes one path
// position, read after its ReLU when one directly follows; the final dense or
// conv layer is the output position (logits, or softmax if configured).
class Network {
 public:
  explicit Network(std::vector<Layer> layers, TraceOptions options = {},
                   std::optional<Shape> input_shape = std::nullopt);

  const std::vector<Layer>& layers() const { return layers_; }
  const TraceOptions& options() const { return options_; }
  const std::optional<Shape>& input_shape() const { return input_shape_; }
  std::size_t num_classes() const { return num_classes_; }

  const std::vector<TracePoint>& trace_points() const { return trace_points_; }
  std::size_t traced_layer_count() const { return trace_points_.size(); }
  std::vector<std::size_t> traced_widths() const;

  // Index one past the final dense/conv layer; layers beyond are a trailing softmax.
  std::size_t logits_end() const { return logits_end_; }

  Network with_options(TraceOptions options) const;

 private:
  void validate();

  std::vector<Layer> layers_;
  TraceOptions options_;
  std::optional<Shape> input_shape_;
  std::vector<TracePoint> trace_points_;
  std::size_t num_classes_ = 0;
  std::size_t logits_end_ = 0;
};

// Per traced layer readouts s_i(x); layers[i].size() == width of position i.
struct ActivationTrace {
  std::vector<std::vector<float>> layers;

  std::size_t size() const { return layers.size(); }
  const std::vector<float>& operator[](std::size_t i) const { return layers[i]; }
  bool operator==(const ActivationTrace&) const = default;
};

struct Prediction {
  std::vector<float> logits;  // pre-softmax
  std::size_t predicted_class = 0;
};

struct TracedPrediction {
  Prediction prediction;
  ActivationTrace trace;
};

Prediction forward(const Network& net, const Tensor& x);
ActivationTrace forward_trace(const Network& net, const Tensor& x);
TracedPrediction forward_traced(const Network& net, const Tensor& x);

// Softmax cross-entropy of the logits against `label`.
double cross_entropy_loss(const Network& net, const Tensor& x, std::size_t label);

// d(cross-entropy)/dx, same shape as x.
Tensor input_gradient(const Network& net, const Tensor& x, std::size_t label);

// Per-layer parameter gradients, parallel to Network::layers().
struct ParamGrads {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> bias;
};

// Loss, input gradient and parameter gradients in one pass. Used by the trainer.
double loss_and_gradients(const Network& net, const Tensor& x, std::size_t label, Tensor* input_grad,
                          ParamGrads* param_grads);

}  // namespace critpath::nn
