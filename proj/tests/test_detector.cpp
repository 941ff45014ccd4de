#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "critpath/binary_io.hpp"
#include "critpath/detector/detector.hpp"
#include "critpath/hash.hpp"
#include "critpath/nn/mdlw.hpp"
#include "support/helpers.hpp"
#include "support/toy.hpp"

namespace {

using namespace critpath;
using namespace critpath::detector;
using testing_support::TempDir;

template <class F>
void expect_detector_error(DetectorError::Code code, F&& f) {
  try {
    f();
    ADD_FAILURE() << "expected DetectorError";
  } catch (const DetectorError& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

TEST(Normalize, LinearMapAndClamp) {
  EXPECT_EQ(normalize_score(2, 2, 6), 0.0);
  EXPECT_EQ(normalize_score(4, 2, 6), 0.5);
  EXPECT_EQ(normalize_score(6, 2, 6), 1.0);
  EXPECT_EQ(normalize_score(-1, 2, 6), 0.0);
  EXPECT_EQ(normalize_score(9, 2, 6), 1.0);
  EXPECT_EQ(normalize_score(-5, -5, -1), 0.0);
  EXPECT_EQ(normalize_score(-1, -5, -1), 1.0);
  expect_detector_error(DetectorError::Code::DegenerateBounds, [] { normalize_score(1, 3, 3); });
  expect_detector_error(DetectorError::Code::DegenerateBounds, [] { normalize_score(1, 4, 3); });
}

VoteResult vote_v(std::vector<double> s, std::vector<double> t) { return vote(s, t); }

TEST(Vote, AllAboveTakesMax) {
  const auto v = vote_v({0.5, 0.7, 0.9}, {0.4, 0.4, 0.4});
  EXPECT_EQ(v.final_score, 0.9);
  EXPECT_EQ(v.a_count, 3u);
  EXPECT_EQ(v.b_count, 0u);
}

TEST(Vote, AllBelowTakesMin) {
  const auto v = vote_v({0.1, 0.2, 0.3}, {0.5, 0.5, 0.5});
  EXPECT_EQ(v.final_score, 0.1);
  EXPECT_EQ(v.b_count, 3u);
}

TEST(Vote, MajorityAboveTakesMedianOfA) {
  EXPECT_EQ(vote_v({0.8, 0.1, 0.9, 0.2, 0.95}, {0.5, 0.5, 0.5, 0.5, 0.5}).final_score, 0.9);
}

TEST(Vote, MajorityBelowTakesMedianOfB) {
  EXPECT_EQ(vote_v({0.1, 0.8, 0.3, 0.2, 0.9}, {0.5, 0.5, 0.5, 0.5, 0.5}).final_score, 0.2);
}

TEST(Vote, EvenTieGoesToB) {
  // A = {0.7, 0.9}, B = {0.1, 0.3}: tie, lower median of B.
  const auto v = vote_v({0.7, 0.1, 0.9, 0.3}, {0.5, 0.5, 0.5, 0.5});
  EXPECT_EQ(v.final_score, 0.1);
  EXPECT_EQ(v.a_count, 2u);
  EXPECT_EQ(v.b_count, 2u);
}

TEST(Vote, EvenMajorityUsesLowerMiddle) {
  // A = {0.6, 0.7, 0.8, 0.9} vs B = {0.1, 0.2}: lower middle of A is 0.7.
  EXPECT_EQ(vote_v({0.9, 0.1, 0.6, 0.2, 0.8, 0.7}, std::vector<double>(6, 0.5)).final_score, 0.7);
}

TEST(Vote, PerPathThresholdsAndBoundary) {
  // Equal to its own threshold counts as A.
  const auto v = vote_v({0.4, 0.4, 0.4}, {0.4, 0.5, 0.5});
  EXPECT_EQ(v.a_count, 1u);
  EXPECT_EQ(v.final_score, 0.4);
}

TEST(Vote, SelectsAnInputAndIsMonotoneWithinPartition) {
  Rng rng(12);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 500; ++t) {
    const std::size_t m = 1 + static_cast<std::size_t>(t % 7);
    std::vector<double> s(m), tau(m);
    for (std::size_t i = 0; i < m; ++i) {
      s[i] = u(rng);
      tau[i] = u(rng);
    }
    const auto v = vote(s, tau);
    EXPECT_NE(std::find(s.begin(), s.end(), v.final_score), s.end());
    // Lowering scores without moving any across its threshold never raises
    // the final score.
    auto lower = s;
    for (std::size_t i = 0; i < m; ++i) {
      const double floor = s[i] >= tau[i] ? tau[i] : 0.0;
      lower[i] = floor + (s[i] - floor) * u(rng);
    }
    EXPECT_LE(vote(lower, tau).final_score, v.final_score);
  }
}

TEST(Vote, CrossingThresholdsCanRaiseTheFinalScore) {
  // B = {0.1, 0.2, 0.3, 0.35} outvotes A = {0.82, 0.87, 0.9}; pushing two A
  // scores just under their thresholds enlarges B and lifts its lower median
  // from 0.2 to 0.3.
  const std::vector<double> tau{0.5, 0.5, 0.5, 0.5, 0.81, 0.86, 0.5};
  EXPECT_EQ(vote_v({0.1, 0.2, 0.3, 0.35, 0.82, 0.87, 0.9}, tau).final_score, 0.2);
  EXPECT_EQ(vote_v({0.1, 0.2, 0.3, 0.35, 0.8, 0.85, 0.9}, tau).final_score, 0.3);
}

TEST(Vote, Errors) {
  expect_detector_error(DetectorError::Code::LengthMismatch, [] { vote_v({0.1}, {0.1, 0.2}); });
  EXPECT_THROW(vote_v({}, {}), InvalidArgument);
}

TEST(Pearson, Cases) {
  Rng rng(4);
  std::normal_distribution<double> d(0, 1);
  const std::size_t n = 1000;
  // Columns: x, -x, independent y, constant.
  std::vector<double> s(n * 4);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = d(rng);
    s[i * 4 + 0] = x;
    s[i * 4 + 1] = -x;
    s[i * 4 + 2] = d(rng);
    s[i * 4 + 3] = 2.0;
  }
  const auto c = pearson_paths(s, n, 4);
  EXPECT_NEAR(c.at(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(c.at(0, 1), -1.0, 1e-12);
  EXPECT_LT(std::abs(c.at(0, 2)), 0.1);
  EXPECT_EQ(c.at(0, 2), c.at(2, 0));
  EXPECT_TRUE(c.zero_variance[3]);
  EXPECT_FALSE(c.zero_variance[0]);
  EXPECT_EQ(c.at(3, 0), 0.0);
  EXPECT_EQ(c.at(3, 3), 1.0);
}

struct Fixture {
  DetectorBundle raw;
  DetectorBundle calibrated;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    const auto& toy = testing_support::toy();
    const std::vector<data::AnomalySet> sources{data::fgsm_set(toy.net, toy.test, 0.3),
                                                data::gen_uniform_noise(toy.test.shape, 200, 7, 0.85, 1.0)};
    paths::SearchConfig cfg;
    cfg.paths = 4;
    cfg.mutations = 20;
    cfg.max_train_rows = 150;
    std::vector<paths::ExtractionResult> ex;
    for (std::size_t k = 0; k < 3; ++k) {
      const auto mixed = data::build_mixed_set(toy.net, toy.test, sources, k, 60, 1);
      ex.push_back(paths::extract_critical_paths(toy.net, toy.train, mixed, cfg));
    }
    auto raw = make_bundle(toy.net, std::move(ex));
    auto cal = calibrate(raw, toy.net, toy.test.inputs);
    return Fixture{std::move(raw), std::move(cal)};
  }();
  return f;
}

TEST(Bundle, SortedByTpr) {
  const auto& b = fixture().raw;
  EXPECT_FALSE(b.calibrated());
  ASSERT_EQ(b.classes.size(), 3u);
  for (const auto& c : b.classes) {
    ASSERT_EQ(c.paths.size(), 4u);
    for (std::size_t i = 1; i < c.paths.size(); ++i) EXPECT_GE(c.paths[i - 1].scored.tpr, c.paths[i].scored.tpr);
  }
  EXPECT_EQ(b.fingerprint, sha256_hex(nn::encode_model(testing_support::toy().net)));
}

TEST(Calibration, RetentionPerClass) {
  const auto& toy = testing_support::toy();
  const auto& b = fixture().calibrated;
  ASSERT_TRUE(b.calibrated());
  std::vector<std::size_t> count(3, 0), pass(3, 0);
  for (const auto& x : toy.test.inputs) {
    const auto v = detect(b, toy.net, x);
    ++count[v.predicted_class];
    pass[v.predicted_class] += v.is_anomaly ? 0 : 1;
    EXPECT_GE(v.final_score, 0.0);
    EXPECT_LE(v.final_score, 1.0);
  }
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(b.classes[k].calibration_count, count[k]);
    EXPECT_GE(static_cast<double>(pass[k]) / static_cast<double>(count[k]),
              0.95 - 1.0 / static_cast<double>(count[k]));
  }
}

TEST(Calibration, BoundsCoverNormalsAndIdempotent) {
  const auto& toy = testing_support::toy();
  const auto& b = fixture().calibrated;
  for (const auto& c : b.classes)
    for (const auto& p : c.paths) EXPECT_LT(p.score_min, p.score_max);
  const auto again = calibrate(b, toy.net, toy.test.inputs);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(again.classes[k].tau_k, b.classes[k].tau_k);
    ASSERT_EQ(again.classes[k].paths.size(), b.classes[k].paths.size());
    for (std::size_t i = 0; i < b.classes[k].paths.size(); ++i) {
      EXPECT_EQ(again.classes[k].paths[i].score_min, b.classes[k].paths[i].score_min);
      EXPECT_EQ(again.classes[k].paths[i].score_max, b.classes[k].paths[i].score_max);
      EXPECT_EQ(again.classes[k].paths[i].tau, b.classes[k].paths[i].tau);
    }
  }
}

TEST(Calibration, Errors) {
  const auto& toy = testing_support::toy();
  const auto& f = fixture();
  const std::vector<Tensor> few(toy.test.inputs.begin(), toy.test.inputs.begin() + 30);
  expect_detector_error(DetectorError::Code::UnderpopulatedClass, [&] { calibrate(f.raw, toy.net, few); });

  Rng rng(2);
  auto other = testing_support::random_mlp(rng, {2, 16, 16, 3});
  expect_detector_error(DetectorError::Code::FingerprintMismatch,
                        [&] { calibrate(f.raw, other, toy.test.inputs); });
  expect_detector_error(DetectorError::Code::FingerprintMismatch,
                        [&] { detect(f.calibrated, other, toy.test.inputs[0]); });
  expect_detector_error(DetectorError::Code::Uncalibrated, [&] { detect(f.raw, toy.net, toy.test.inputs[0]); });
}

TEST(Detect, FarTraceIsAnomalous) {
  const auto& toy = testing_support::toy();
  const auto& b = fixture().calibrated;
  nn::ActivationTrace far;
  for (std::size_t w : toy.net.traced_widths()) far.layers.emplace_back(w, 1e6f);
  for (std::size_t k = 0; k < 3; ++k) {
    const auto v = judge(b, k, far);
    for (double s : v.normalized) EXPECT_EQ(s, 0.0);
    EXPECT_EQ(v.final_score, 0.0);
    EXPECT_GT(b.classes[k].tau_k, 0.0);
    EXPECT_TRUE(v.is_anomaly);
  }
}

TEST(Detect, BatchIdsAndJsonl) {
  const auto& toy = testing_support::toy();
  const auto& b = fixture().calibrated;
  const std::vector<Tensor> xs(toy.test.inputs.begin(), toy.test.inputs.begin() + 3);
  const auto vs = detect_batch(b, toy.net, xs, "s");
  ASSERT_EQ(vs.size(), 3u);
  EXPECT_EQ(vs[2].id, "s2");
  const auto text = verdict_jsonl(vs);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
  const auto first = nlohmann::json::parse(text.substr(0, text.find('\n')));
  EXPECT_EQ(first.at("id"), "s0");
  EXPECT_EQ(first.at("is_anomaly").get<bool>(), vs[0].is_anomaly);
  EXPECT_EQ(first.at("a_count").get<std::size_t>() + first.at("b_count").get<std::size_t>(), 4u);
}

TEST(BundleFile, RoundTrip) {
  const auto& toy = testing_support::toy();
  const auto& b = fixture().calibrated;
  TempDir dir("bundle");
  save_bundle(b, dir.path());
  const auto back = load_bundle(dir.path());
  EXPECT_EQ(back.fingerprint, b.fingerprint);
  EXPECT_TRUE(back.calibrated());
  for (std::size_t i = 0; i < toy.test.size(); i += 5) {
    const auto v1 = detect(b, toy.net, toy.test.inputs[i]);
    const auto v2 = detect(back, toy.net, toy.test.inputs[i]);
    EXPECT_EQ(v1.raw, v2.raw);
    EXPECT_EQ(v1.final_score, v2.final_score);
    EXPECT_EQ(v1.is_anomaly, v2.is_anomaly);
  }
  TempDir dir2("bundle2");
  save_bundle(back, dir2.path());
  EXPECT_EQ(read_file_text(dir.path() / "manifest.json"), read_file_text(dir2.path() / "manifest.json"));

  write_file_text(dir.path() / "manifest.json", "{\"format\": \"other\"}");
  expect_detector_error(DetectorError::Code::BadBundle, [&] { load_bundle(dir.path()); });
}

}  // namespace
