#include "critpath/nn/network.hpp"

#include <algorithm>
#include <cmath>

namespace critpath::nn {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::Relu: return "relu";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Softmax: return "softmax";
  }
  return "unknown";
}

std::string_view to_string(ModelError::Code code) {
  using C = ModelError::Code;
  switch (code) {
    case C::BadMagic: return "BadMagic";
    case C::UnsupportedVersion: return "UnsupportedVersion";
    case C::UnknownLayerKind: return "UnknownLayerKind";
    case C::TruncatedHeader: return "TruncatedHeader";
    case C::TruncatedWeights: return "TruncatedWeights";
    case C::DimensionMismatch: return "DimensionMismatch";
    case C::NonFiniteWeight: return "NonFiniteWeight";
    case C::TrailingData: return "TrailingData";
    case C::InvalidStructure: return "InvalidStructure";
  }
  return "Unknown";
}

namespace {

std::string model_error_message(ModelError::Code code, std::optional<std::size_t> layer,
                                const std::string& detail) {
  std::string msg = "model: ";
  msg += to_string(code);
  if (layer) msg += "(layer=" + std::to_string(*layer) + ")";
  if (!detail.empty()) msg += ": " + detail;
  return msg;
}

}  // namespace

ModelError::ModelError(Code code, std::optional<std::size_t> layer, const std::string& detail)
    : Error(model_error_message(code, layer, detail)), code_(code), layer_(layer) {}

Layer Layer::make_dense(std::uint32_t in, std::uint32_t out, std::vector<float> weights,
                        std::vector<float> bias) {
  Layer l = of(LayerKind::Dense);
  l.dense = {in, out};
  l.weights = std::move(weights);
  l.bias = std::move(bias);
  return l;
}

Layer Layer::make_conv(const ConvDims& dims, std::vector<float> weights, std::vector<float> bias) {
  Layer l = of(LayerKind::Conv2d);
  l.conv = dims;
  l.weights = std::move(weights);
  l.bias = std::move(bias);
  return l;
}

std::size_t Layer::width() const {
  switch (kind) {
    case LayerKind::Dense: return dense.out;
    case LayerKind::Conv2d: return conv.cout;
    default: return 0;
  }
}

std::size_t Layer::expected_weight_count() const {
  switch (kind) {
    case LayerKind::Dense: return std::size_t{dense.in} * dense.out;
    case LayerKind::Conv2d: return std::size_t{conv.cout} * conv.cin * conv.kh * conv.kw;
    default: return 0;
  }
}

std::size_t Layer::expected_bias_count() const { return width(); }

Network::Network(std::vector<Layer> layers, TraceOptions options, std::optional<Shape> input_shape)
    : layers_(std::move(layers)), options_(options), input_shape_(std::move(input_shape)) {
  validate();
}

Network Network::with_options(TraceOptions options) const {
  std::vector<Layer> copy = layers_;
  return Network(std::move(copy), options, input_shape_);
}

std::vector<std::size_t> Network::traced_widths() const {
  std::vector<std::size_t> w;
  w.reserve(trace_points_.size());
  for (const auto& tp : trace_points_) w.push_back(tp.width);
  return w;
}

namespace {

// Static shape state used while validating the layer stack. Spatial extents
// may be unknown when the network carries no input shape.
struct ShapeState {
  enum class Kind { Unknown, Flat, Spatial } kind = Kind::Unknown;
  std::size_t flat = 0;  // 0 = unknown
  std::size_t channels = 0;
  std::size_t h = 0, w = 0;  // 0 = unknown
};

}  // namespace

void Network::validate() {
  using C = ModelError::Code;
  if (layers_.empty()) throw ModelError(C::InvalidStructure, std::nullopt, "no layers");

  std::optional<std::size_t> last_param;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto& l = layers_[i];
    l.traced = false;
    if (!l.parametric()) continue;
    last_param = i;
    if (l.kind == LayerKind::Dense && (l.dense.in == 0 || l.dense.out == 0)) {
      throw ModelError(C::DimensionMismatch, i, "zero-sized dense layer");
    }
    if (l.kind == LayerKind::Conv2d &&
        (l.conv.kh == 0 || l.conv.kw == 0 || l.conv.cin == 0 || l.conv.cout == 0 || l.conv.stride == 0)) {
      throw ModelError(C::DimensionMismatch, i, "zero-sized conv2d layer");
    }
    if (l.weights.size() != l.expected_weight_count() || l.bias.size() != l.expected_bias_count()) {
      throw ModelError(C::DimensionMismatch, i, "parameter count does not match declared dims");
    }
    const auto finite = [](float v) { return std::isfinite(v); };
    if (!std::all_of(l.weights.begin(), l.weights.end(), finite) ||
        !std::all_of(l.bias.begin(), l.bias.end(), finite)) {
      throw ModelError(C::NonFiniteWeight, i, "");
    }
  }
  if (!last_param) throw ModelError(C::InvalidStructure, std::nullopt, "no dense or conv2d layer");
  logits_end_ = *last_param + 1;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].kind != LayerKind::Softmax) {
      if (i > *last_param) throw ModelError(C::InvalidStructure, i, "only softmax may follow the output layer");
      continue;
    }
    if (i < *last_param || i + 1 != layers_.size()) {
      throw ModelError(C::InvalidStructure, i, "softmax is only supported as the final layer");
    }
  }

  // Infer a flat input shape for MLPs.
  if (!input_shape_ && layers_.front().kind == LayerKind::Dense) input_shape_ = Shape{layers_.front().dense.in};

  ShapeState st;
  if (input_shape_) {
    const auto& s = *input_shape_;
    if (s.size() == 1) {
      st = {ShapeState::Kind::Flat, s[0]};
    } else if (s.size() == 2 || s.size() == 3) {
      st.kind = ShapeState::Kind::Spatial;
      st.h = s[0];
      st.w = s[1];
      st.channels = s.size() == 3 ? s[2] : 1;
    } else {
      throw ModelError(C::InvalidStructure, std::nullopt, "input shape must have rank 1-3");
    }
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    switch (l.kind) {
      case LayerKind::Dense:
        if (st.kind == ShapeState::Kind::Spatial) {
          throw ModelError(C::DimensionMismatch, i, "dense layer applied to spatial input without flatten");
        }
        if (st.kind == ShapeState::Kind::Flat && st.flat != 0 && st.flat != l.dense.in) {
          throw ModelError(C::DimensionMismatch, i,
                           "expects " + std::to_string(l.dense.in) + " inputs, previous layer gives " +
                               std::to_string(st.flat));
        }
        st = {ShapeState::Kind::Flat, l.dense.out};
        break;
      case LayerKind::Conv2d: {
        if (st.kind == ShapeState::Kind::Flat) {
          throw ModelError(C::DimensionMismatch, i, "conv2d applied to flat input");
        }
        if (st.kind == ShapeState::Kind::Spatial && st.channels != l.conv.cin) {
          throw ModelError(C::DimensionMismatch, i,
                           "expects " + std::to_string(l.conv.cin) + " channels, previous layer gives " +
                               std::to_string(st.channels));
        }
        std::size_t h = 0, w = 0;
        if (st.h != 0) {
          const std::size_t ph = st.h + 2 * l.conv.pad, pw = st.w + 2 * l.conv.pad;
          if (ph < l.conv.kh || pw < l.conv.kw) throw ModelError(C::DimensionMismatch, i, "kernel larger than input");
          h = (ph - l.conv.kh) / l.conv.stride + 1;
          w = (pw - l.conv.kw) / l.conv.stride + 1;
        }
        st = {ShapeState::Kind::Spatial, 0, l.conv.cout, h, w};
        break;
      }
      case LayerKind::Flatten:
        if (st.kind == ShapeState::Kind::Spatial) {
          st = {ShapeState::Kind::Flat, st.h != 0 ? st.h * st.w * st.channels : 0};
        } else {
          st.kind = ShapeState::Kind::Flat;
        }
        break;
      case LayerKind::Relu:
      case LayerKind::Softmax:
        break;
    }
  }

  trace_points_.clear();
  if (options_.trace_input) {
    if (!input_shape_) {
      throw ModelError(C::InvalidStructure, std::nullopt, "trace_input requires a known input shape");
    }
    trace_points_.push_back({TracePoint::kInput, shape_numel(*input_shape_), false, false});
  }
  for (std::size_t i = 0; i <= *last_param; ++i) {
    const auto& l = layers_[i];
    if (!l.parametric()) continue;
    const bool is_output = i == *last_param;
    std::size_t read = i;
    if (!is_output && i + 1 < layers_.size() && layers_[i + 1].kind == LayerKind::Relu) read = i + 1;
    layers_[read].traced = true;
    trace_points_.push_back({read, l.width(), l.kind == LayerKind::Conv2d, is_output});
  }
  num_classes_ = layers_[*last_param].width();
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

struct Activation {
  Shape shape;
  std::vector<float> data;
};

Activation canonical_input(const Network& net, const Tensor& x) {
  if (net.input_shape() && shape_numel(*net.input_shape()) != x.size()) {
    throw ShapeError("input shape " + shape_to_string(x.shape) + " does not match network input " +
                     shape_to_string(*net.input_shape()));
  }
  const auto& layers = net.layers();
  const auto first = std::find_if(layers.begin(), layers.end(), [](const Layer& l) { return l.parametric(); });
  if (first->kind == LayerKind::Dense) {
    if (x.size() != first->dense.in) {
      throw ShapeError("input has " + std::to_string(x.size()) + " elements, network expects " +
                       std::to_string(first->dense.in));
    }
    return {Shape{x.size()}, x.data};
  }
  Shape s = x.shape;
  if (s.size() == 2) s.push_back(1);
  if (s.size() != 3) throw ShapeError("convolutional network expects an HWC input, got " + shape_to_string(x.shape));
  return {s, x.data};
}

Activation apply_dense(const Layer& l, const Activation& in, std::size_t index) {
  if (in.data.size() != l.dense.in) {
    throw ShapeError("layer " + std::to_string(index) + ": dense expects " + std::to_string(l.dense.in) +
                     " inputs, got " + std::to_string(in.data.size()));
  }
  const std::size_t n_in = l.dense.in, n_out = l.dense.out;
  std::vector<double> acc(l.bias.begin(), l.bias.end());
  for (std::size_t i = 0; i < n_in; ++i) {
    const double xi = in.data[i];
    if (xi == 0.0) continue;
    const float* row = l.weights.data() + i * n_out;
    for (std::size_t o = 0; o < n_out; ++o) acc[o] += xi * row[o];
  }
  return {Shape{n_out}, std::vector<float>(acc.begin(), acc.end())};
}

struct ConvGeometry {
  std::size_t h, w, c, oh, ow;
};

ConvGeometry conv_geometry(const Layer& l, const Shape& in_shape, std::size_t index) {
  if (in_shape.size() != 3 || in_shape[2] != l.conv.cin) {
    throw ShapeError("layer " + std::to_string(index) + ": conv2d expects HWC input with " +
                     std::to_string(l.conv.cin) + " channels, got " + shape_to_string(in_shape));
  }
  const std::size_t h = in_shape[0], w = in_shape[1];
  const std::size_t ph = h + 2 * l.conv.pad, pw = w + 2 * l.conv.pad;
  if (ph < l.conv.kh || pw < l.conv.kw) {
    throw ShapeError("layer " + std::to_string(index) + ": input smaller than kernel");
  }
  return {h, w, l.conv.cin, (ph - l.conv.kh) / l.conv.stride + 1, (pw - l.conv.kw) / l.conv.stride + 1};
}

Activation apply_conv(const Layer& l, const Activation& in, std::size_t index) {
  const auto g = conv_geometry(l, in.shape, index);
  const auto& d = l.conv;
  std::vector<float> out(g.oh * g.ow * d.cout);
  std::vector<double> acc(d.cout);
  for (std::size_t oy = 0; oy < g.oh; ++oy) {
    for (std::size_t ox = 0; ox < g.ow; ++ox) {
      std::copy(l.bias.begin(), l.bias.end(), acc.begin());
      for (std::size_t ky = 0; ky < d.kh; ++ky) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * d.stride + ky) - static_cast<std::ptrdiff_t>(d.pad);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
        for (std::size_t kx = 0; kx < d.kw; ++kx) {
          const auto ix = static_cast<std::ptrdiff_t>(ox * d.stride + kx) - static_cast<std::ptrdiff_t>(d.pad);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
          const float* px = in.data.data() + (static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)) * g.c;
          for (std::size_t co = 0; co < d.cout; ++co) {
            const float* wk = l.weights.data() + (co * d.cin) * d.kh * d.kw + ky * d.kw + kx;
            double s = 0.0;
            for (std::size_t ci = 0; ci < d.cin; ++ci) s += static_cast<double>(px[ci]) * wk[ci * d.kh * d.kw];
            acc[co] += s;
          }
        }
      }
      float* dst = out.data() + (oy * g.ow + ox) * d.cout;
      for (std::size_t co = 0; co < d.cout; ++co) dst[co] = static_cast<float>(acc[co]);
    }
  }
  return {Shape{g.oh, g.ow, d.cout}, std::move(out)};
}

// Outputs of layers [0, logits_end); element i is the output of layer i.
std::vector<Activation> run_layers(const Network& net, const Activation& input) {
  std::vector<Activation> outs;
  outs.reserve(net.logits_end());
  for (std::size_t i = 0; i < net.logits_end(); ++i) {
    const auto& l = net.layers()[i];
    const Activation& in = i == 0 ? input : outs.back();
    switch (l.kind) {
      case LayerKind::Dense: outs.push_back(apply_dense(l, in, i)); break;
      case LayerKind::Conv2d: outs.push_back(apply_conv(l, in, i)); break;
      case LayerKind::Relu: {
        Activation a = in;
        for (auto& v : a.data) v = std::max(v, 0.0f);
        outs.push_back(std::move(a));
        break;
      }
      case LayerKind::Flatten: outs.push_back({Shape{in.data.size()}, in.data}); break;
      case LayerKind::Softmax: outs.push_back(in); break;  // unreachable: softmax is trailing only
    }
  }
  return outs;
}

std::size_t argmax(std::span<const float> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::vector<double> softmax(std::span<const float> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(static_cast<double>(logits[i]) - mx);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

std::vector<float> readout(const TracePoint& tp, const Activation& act, const Network& net) {
  if (tp.spatial) {
    const std::size_t c = act.shape.back();
    const std::size_t positions = act.data.size() / c;
    std::vector<double> sums(c, 0.0);
    for (std::size_t p = 0; p < positions; ++p) {
      for (std::size_t j = 0; j < c; ++j) sums[j] += act.data[p * c + j];
    }
    std::vector<float> out(c);
    for (std::size_t j = 0; j < c; ++j) out[j] = static_cast<float>(sums[j] / static_cast<double>(positions));
    return out;
  }
  if (tp.is_output && net.options().output_readout == OutputReadout::Softmax) {
    const auto p = softmax(act.data);
    return {p.begin(), p.end()};
  }
  return act.data;
}

ActivationTrace build_trace(const Network& net, const Activation& input, const std::vector<Activation>& outs) {
  ActivationTrace trace;
  trace.layers.reserve(net.traced_layer_count());
  for (const auto& tp : net.trace_points()) {
    if (tp.layer_index == TracePoint::kInput) {
      trace.layers.push_back(input.data);
    } else {
      trace.layers.push_back(readout(tp, outs[tp.layer_index], net));
    }
  }
  return trace;
}

double cross_entropy(std::span<const float> logits, std::size_t label) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (float z : logits) sum += std::exp(static_cast<double>(z) - mx);
  return std::log(sum) + mx - static_cast<double>(logits[label]);
}

}  // namespace

Prediction forward(const Network& net, const Tensor& x) {
  const Activation input = canonical_input(net, x);
  auto outs = run_layers(net, input);
  Prediction p;
  p.logits = std::move(outs.back().data);
  p.predicted_class = argmax(p.logits);
  return p;
}

ActivationTrace forward_trace(const Network& net, const Tensor& x) { return forward_traced(net, x).trace; }

TracedPrediction forward_traced(const Network& net, const Tensor& x) {
  const Activation input = canonical_input(net, x);
  auto outs = run_layers(net, input);
  TracedPrediction r;
  r.trace = build_trace(net, input, outs);
  r.prediction.logits = std::move(outs.back().data);
  r.prediction.predicted_class = argmax(r.prediction.logits);
  return r;
}

double cross_entropy_loss(const Network& net, const Tensor& x, std::size_t label) {
  if (label >= net.num_classes()) throw InvalidArgument("label out of range");
  const auto p = forward(net, x);
  return cross_entropy(p.logits, label);
}

double loss_and_gradients(const Network& net, const Tensor& x, std::size_t label, Tensor* input_grad,
                          ParamGrads* param_grads) {
  if (label >= net.num_classes()) {
    throw InvalidArgument("label " + std::to_string(label) + " out of range for " +
                          std::to_string(net.num_classes()) + " classes");
  }
  const Activation input = canonical_input(net, x);
  const auto outs = run_layers(net, input);
  const auto& logits = outs.back().data;
  const double loss = cross_entropy(logits, label);

  std::vector<double> grad = softmax(logits);
  grad[label] -= 1.0;

  if (param_grads) {
    param_grads->weights.assign(net.layers().size(), {});
    param_grads->bias.assign(net.layers().size(), {});
  }

  for (std::size_t i = net.logits_end(); i-- > 0;) {
    const auto& l = net.layers()[i];
    const Activation& in = i == 0 ? input : outs[i - 1];
    switch (l.kind) {
      case LayerKind::Dense: {
        const std::size_t n_in = l.dense.in, n_out = l.dense.out;
        std::vector<double> gin(n_in, 0.0);
        for (std::size_t a = 0; a < n_in; ++a) {
          const float* row = l.weights.data() + a * n_out;
          double s = 0.0;
          for (std::size_t o = 0; o < n_out; ++o) s += row[o] * grad[o];
          gin[a] = s;
        }
        if (param_grads) {
          auto& gw = param_grads->weights[i];
          gw.assign(n_in * n_out, 0.0);
          for (std::size_t a = 0; a < n_in; ++a) {
            const double xa = in.data[a];
            for (std::size_t o = 0; o < n_out; ++o) gw[a * n_out + o] = xa * grad[o];
          }
          param_grads->bias[i] = grad;
        }
        grad = std::move(gin);
        break;
      }
      case LayerKind::Conv2d: {
        const auto g = conv_geometry(l, in.shape, i);
        const auto& d = l.conv;
        std::vector<double> gin(in.data.size(), 0.0);
        std::vector<double>* gw = nullptr;
        std::vector<double>* gb = nullptr;
        if (param_grads) {
          gw = &param_grads->weights[i];
          gb = &param_grads->bias[i];
          gw->assign(l.weights.size(), 0.0);
          gb->assign(d.cout, 0.0);
        }
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const double* go = grad.data() + (oy * g.ow + ox) * d.cout;
            if (gb) {
              for (std::size_t co = 0; co < d.cout; ++co) (*gb)[co] += go[co];
            }
            for (std::size_t ky = 0; ky < d.kh; ++ky) {
              const auto iy = static_cast<std::ptrdiff_t>(oy * d.stride + ky) - static_cast<std::ptrdiff_t>(d.pad);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
              for (std::size_t kx = 0; kx < d.kw; ++kx) {
                const auto ix = static_cast<std::ptrdiff_t>(ox * d.stride + kx) - static_cast<std::ptrdiff_t>(d.pad);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
                const std::size_t base = (static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)) * g.c;
                for (std::size_t co = 0; co < d.cout; ++co) {
                  const double gv = go[co];
                  if (gv == 0.0) continue;
                  for (std::size_t ci = 0; ci < d.cin; ++ci) {
                    const std::size_t widx = ((co * d.cin + ci) * d.kh + ky) * d.kw + kx;
                    gin[base + ci] += l.weights[widx] * gv;
                    if (gw) (*gw)[widx] += in.data[base + ci] * gv;
                  }
                }
              }
            }
          }
        }
        grad = std::move(gin);
        break;
      }
      case LayerKind::Relu:
        for (std::size_t k = 0; k < grad.size(); ++k) {
          if (!(in.data[k] > 0.0f)) grad[k] = 0.0;
        }
        break;
      case LayerKind::Flatten:
      case LayerKind::Softmax:
        break;
    }
  }

  if (input_grad) {
    std::vector<float> g(grad.begin(), grad.end());
    *input_grad = Tensor(x.shape, std::move(g));
  }
  return loss;
}

Tensor input_gradient(const Network& net, const Tensor& x, std::size_t label) {
  Tensor g;
  loss_and_gradients(net, x, label, &g, nullptr);
  return g;
}

}  // namespace critpath::nn
