#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "critpath/nn/mdlw.hpp"
#include "critpath/nn/network.hpp"
#include "critpath/nn/trainer.hpp"
#include "oracle/nn_oracle.hpp"
#include "support/grad_check.hpp"
#include "support/helpers.hpp"

using namespace critpath;
using namespace testing_support;

namespace {

void expect_matches_oracle(const nn::Network& net, const Tensor& x, std::size_t h, std::size_t w, std::size_t c) {
  const auto ref = oracle::run(net, to_double(x), h, w, c);
  const auto got = nn::forward_traced(net, x);
  const auto ref_logits = oracle::logits(net, ref);
  ASSERT_EQ(got.prediction.logits.size(), ref_logits.size());
  for (std::size_t i = 0; i < ref_logits.size(); ++i) EXPECT_NEAR(got.prediction.logits[i], ref_logits[i], 1e-5);

  const auto ref_trace = oracle::trace(net, ref);
  ASSERT_EQ(got.trace.size(), ref_trace.size());
  for (std::size_t l = 0; l < ref_trace.size(); ++l) {
    ASSERT_EQ(got.trace[l].size(), ref_trace[l].size()) << "layer " << l;
    for (std::size_t j = 0; j < ref_trace[l].size(); ++j) EXPECT_NEAR(got.trace[l][j], ref_trace[l][j], 1e-5);
  }
}

}  // namespace

TEST(Network, DenseForwardAndTraceMatchReference) {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const auto net = random_mlp(rng, {4, 7, 5, 3});
    EXPECT_EQ(net.traced_widths(), (std::vector<std::size_t>{7, 5, 3}));
    expect_matches_oracle(net, uniform_tensor(rng, {4}), 1, 1, 4);
  }
}

TEST(Network, ConvForwardAndTraceMatchReference) {
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const auto net = random_convnet(rng);
    EXPECT_EQ(net.traced_widths(), (std::vector<std::size_t>{3, 2, 3}));
    expect_matches_oracle(net, uniform_tensor(rng, {5, 5, 2}), 5, 5, 2);
  }
}

TEST(Network, ZeroInputThroughZeroBiasNetGivesZeroTrace) {
  std::vector<nn::Layer> layers;
  layers.push_back(nn::Layer::make_dense(3, 4, std::vector<float>(12, 0.7f), std::vector<float>(4, 0.0f)));
  layers.push_back(nn::Layer::make_relu());
  layers.push_back(nn::Layer::make_dense(4, 2, std::vector<float>(8, -0.3f), std::vector<float>(2, 0.0f)));
  const nn::Network net(std::move(layers));
  const auto t = nn::forward_trace(net, Tensor({3}, {0, 0, 0}));
  for (const auto& layer : t.layers) {
    for (float v : layer) EXPECT_EQ(v, 0.0f);
  }
}

TEST(Network, SoftmaxReadoutSumsToOne) {
  Rng rng(13);
  nn::TraceOptions opt;
  opt.output_readout = nn::OutputReadout::Softmax;
  const auto net = random_mlp(rng, {3, 6, 4}, opt);
  const auto t = nn::forward_traced(net, uniform_tensor(rng, {3}));
  const auto& out = t.trace.layers.back();
  EXPECT_NEAR(std::accumulate(out.begin(), out.end(), 0.0), 1.0, 1e-6);
  // Prediction logits stay pre-softmax.
  EXPECT_NE(t.prediction.logits, out);
}

TEST(Network, TraceInputAddsRawInputPosition) {
  Rng rng(14);
  nn::TraceOptions opt;
  opt.trace_input = true;
  const auto net = random_mlp(rng, {2, 5, 3}, opt);
  EXPECT_EQ(net.traced_widths(), (std::vector<std::size_t>{2, 5, 3}));
  const Tensor x({2}, {0.25f, 0.75f});
  EXPECT_EQ(nn::forward_trace(net, x).layers.front(), x.data);
}

TEST(Network, RejectsWrongInputSize) {
  Rng rng(15);
  const auto net = random_mlp(rng, {3, 4, 2});
  EXPECT_THROW(nn::forward(net, Tensor({2}, {0, 0})), nn::ShapeError);
}

TEST(Network, StructureValidation) {
  Rng rng(16);
  auto expect_code = [](auto&& make, nn::ModelError::Code code) {
    try {
      make();
      ADD_FAILURE() << "no error";
    } catch (const nn::ModelError& e) {
      EXPECT_EQ(e.code(), code) << e.what();
    }
  };
  expect_code([&] { nn::Network({nn::Layer::make_relu()}); }, nn::ModelError::Code::InvalidStructure);
  expect_code(
      [&] {
        nn::Network({dense(rng, 2, 3), nn::Layer::make_softmax(), dense(rng, 3, 2)});
      },
      nn::ModelError::Code::InvalidStructure);
  expect_code([&] { nn::Network({dense(rng, 2, 3), dense(rng, 4, 2)}); }, nn::ModelError::Code::DimensionMismatch);
  expect_code(
      [&] {
        auto l = dense(rng, 2, 2);
        l.weights[1] = std::nanf("");
        nn::Network({l});
      },
      nn::ModelError::Code::NonFiniteWeight);
  expect_code(
      [&] {
        auto l = dense(rng, 2, 2);
        l.bias.pop_back();
        nn::Network({l});
      },
      nn::ModelError::Code::DimensionMismatch);
}

TEST(Gradient, InputGradientMatchesCentralDifferences) {
  Rng rng(21);
  int checked = 0;
  for (int trial = 0; trial < 60 && checked < 24; ++trial) {
    const bool conv = trial % 2 == 1;
    const auto net = conv ? random_convnet(rng) : random_mlp(rng, {4, 8, 6, 3});
    const Tensor x = conv ? uniform_tensor(rng, {5, 5, 2}) : uniform_tensor(rng, {4});
    const auto err = conv ? input_gradient_error(net, x, trial % 3, 5, 5, 2) : input_gradient_error(net, x, trial % 3, 1, 1, 4);
    if (!err) continue;
    EXPECT_LE(*err, 1e-3) << "trial " << trial;
    ++checked;
  }
  EXPECT_GE(checked, 20);
}

TEST(Gradient, ParameterGradientsMatchCentralDifferences) {
  Rng rng(22);
  auto net = random_mlp(rng, {3, 5, 3});
  const Tensor x = uniform_tensor(rng, {3});
  const std::size_t label = 1;
  nn::ParamGrads grads;
  nn::loss_and_gradients(net, x, label, nullptr, &grads);
  const double step = 1e-3;
  for (std::size_t li = 0; li < net.layers().size(); ++li) {
    if (!net.layers()[li].parametric()) continue;
    for (std::size_t wi = 0; wi < net.layers()[li].weights.size(); ++wi) {
      auto layers = net.layers();
      const float orig = layers[li].weights[wi];
      layers[li].weights[wi] = orig + static_cast<float>(step);
      const double lp = oracle::cross_entropy(
          oracle::logits(nn::Network(layers), oracle::run(nn::Network(layers), to_double(x), 1, 1, 3)), label);
      layers[li].weights[wi] = orig - static_cast<float>(step);
      const double lm = oracle::cross_entropy(
          oracle::logits(nn::Network(layers), oracle::run(nn::Network(layers), to_double(x), 1, 1, 3)), label);
      // Perturbations are rounded to float; divide by the realized step.
      const double realized = static_cast<double>(orig + static_cast<float>(step)) -
                              static_cast<double>(orig - static_cast<float>(step));
      EXPECT_NEAR(grads.weights[li][wi], (lp - lm) / realized, 1e-3) << "layer " << li << " weight " << wi;
    }
  }
}

TEST(Gradient, CrossEntropyOfUniformLogitsIsLogClasses) {
  std::vector<nn::Layer> layers{nn::Layer::make_dense(2, 4, std::vector<float>(8, 0.0f), std::vector<float>(4, 0.0f))};
  const nn::Network net(std::move(layers));
  EXPECT_NEAR(nn::cross_entropy_loss(net, Tensor({2}, {0.3f, 0.9f}), 2), std::log(4.0), 1e-12);
}

TEST(Mdlw, RoundTripIsByteIdentical) {
  Rng rng(31);
  for (const auto& net : {random_mlp(rng, {3, 6, 2}), random_convnet(rng)}) {
    const auto bytes = nn::encode_model(net);
    const auto back = nn::decode_model(bytes);
    EXPECT_EQ(nn::encode_model(back), bytes);
    ASSERT_EQ(back.layers().size(), net.layers().size());
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
      EXPECT_EQ(back.layers()[i].kind, net.layers()[i].kind);
      EXPECT_EQ(back.layers()[i].weights, net.layers()[i].weights);
      EXPECT_EQ(back.layers()[i].bias, net.layers()[i].bias);
    }
  }
}

TEST(Mdlw, HeaderLayout) {
  Rng rng(32);
  const auto bytes = nn::encode_model(random_mlp(rng, {2, 3, 2}));
  ASSERT_GE(bytes.size(), 12u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "MDLW");
  EXPECT_EQ(bytes[4], 1);  // version, little-endian
  EXPECT_EQ(bytes[8], 3);  // dense, relu, dense
  EXPECT_EQ(bytes[12], 0);  // first kind byte: dense
}

TEST(Mdlw, DecodeErrors) {
  Rng rng(33);
  const auto good = nn::encode_model(random_mlp(rng, {2, 3, 2}));
  auto code_of = [](std::vector<std::uint8_t> b) -> std::optional<nn::ModelError::Code> {
    try {
      nn::decode_model(b);
    } catch (const nn::ModelError& e) {
      return e.code();
    }
    return std::nullopt;
  };
  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_EQ(code_of(bad_magic), nn::ModelError::Code::BadMagic);

  auto bad_version = good;
  bad_version[4] = 9;
  EXPECT_EQ(code_of(bad_version), nn::ModelError::Code::UnsupportedVersion);

  auto unknown_kind = good;
  unknown_kind[12] = 42;
  EXPECT_EQ(code_of(unknown_kind), nn::ModelError::Code::UnknownLayerKind);

  auto trailing = good;
  trailing.push_back(0);
  EXPECT_EQ(code_of(trailing), nn::ModelError::Code::TrailingData);

  auto truncated = good;
  truncated.resize(truncated.size() - 3);
  try {
    nn::decode_model(truncated);
    ADD_FAILURE() << "truncated blob decoded";
  } catch (const nn::ModelError& e) {
    EXPECT_EQ(e.code(), nn::ModelError::Code::TruncatedWeights);
    ASSERT_TRUE(e.layer().has_value());
    EXPECT_EQ(*e.layer(), 2u);
  }
  EXPECT_EQ(code_of({'M', 'D'}), nn::ModelError::Code::BadMagic);
}

TEST(Mdlw, FileRoundTrip) {
  Rng rng(34);
  TempDir dir("mdlw");
  const auto net = random_mlp(rng, {2, 4, 3});
  nn::save_model(net, dir / "m.mdlw");
  EXPECT_EQ(nn::encode_model(nn::load_model(dir / "m.mdlw")), nn::encode_model(net));
}

TEST(Trainer, ParseArch) {
  EXPECT_EQ(nn::parse_arch("2-16-16-3"), (std::vector<std::size_t>{2, 16, 16, 3}));
  EXPECT_THROW(nn::parse_arch("2"), InvalidArgument);
  EXPECT_THROW(nn::parse_arch("2-x-3"), InvalidArgument);
}

TEST(Trainer, LearnsSeparableBlobsDeterministically) {
  Rng rng(41);
  std::vector<Tensor> xs;
  std::vector<std::size_t> ys;
  std::normal_distribution<double> noise(0.0, 0.03);
  const float centers[3][2] = {{0.25f, 0.25f}, {0.75f, 0.25f}, {0.5f, 0.75f}};
  for (int i = 0; i < 150; ++i) {
    const auto k = static_cast<std::size_t>(i % 3);
    xs.emplace_back(Shape{2}, std::vector<float>{static_cast<float>(centers[k][0] + noise(rng)),
                                                 static_cast<float>(centers[k][1] + noise(rng))});
    ys.push_back(k);
  }
  nn::TrainOptions opt;
  opt.epochs = 30;
  const std::vector<std::size_t> arch{2, 16, 16, 3};
  const auto a = nn::train_toy(xs, ys, arch, opt);
  const auto b = nn::train_toy(xs, ys, arch, opt);
  EXPECT_GE(a.train_accuracy, 0.99);
  EXPECT_EQ(nn::encode_model(a.network), nn::encode_model(b.network));
}

TEST(Trainer, DivergenceIsReported) {
  std::vector<Tensor> xs{Tensor({2}, {0.1f, 0.9f}), Tensor({2}, {0.9f, 0.1f})};
  std::vector<std::size_t> ys{0, 1};
  nn::TrainOptions opt;
  opt.epochs = 50;
  opt.learning_rate = 1e30;
  const std::vector<std::size_t> arch{2, 8, 2};
  EXPECT_THROW(nn::train_toy(xs, ys, arch, opt), nn::TrainingDiverged);
}
