#include <gtest/gtest.h>

#include <cstdlib>

#include <json.hpp>

#include "critpath/binary_io.hpp"
#include "critpath/cli/cli.hpp"
#include "support/helpers.hpp"
#include "support/pipeline.hpp"
#include "support/toy.hpp"

namespace {

using namespace critpath;
using namespace critpath::cli;
using testing_support::cli;
using testing_support::TempDir;

TEST(AnomalySpecParse, KindsAndParams) {
  const auto g = parse_anomaly_spec("gaussian:mean=0.5,std=1,count=10");
  EXPECT_EQ(g.kind, "gaussian");
  EXPECT_EQ(g.number("std", 0), 1.0);
  EXPECT_EQ(g.number("missing", 7), 7.0);
  EXPECT_EQ(g.param("mean", ""), "0.5");
  EXPECT_EQ(parse_anomaly_spec("fgsm").kind, "fgsm");
  EXPECT_EQ(parse_anomaly_spec("ood:name=x,path=/tmp/a.csv").param("path", ""), "/tmp/a.csv");
  EXPECT_THROW(parse_anomaly_spec("laser:eps=1"), InvalidArgument);
  EXPECT_THROW(parse_anomaly_spec("fgsm:eps"), InvalidArgument);
  EXPECT_THROW(parse_anomaly_spec("file:count=3"), InvalidArgument);
  EXPECT_THROW(parse_anomaly_spec("fgsm:eps=abc").number("eps", 0), InvalidArgument);
}

TEST(AnomalySpecParse, Materialize) {
  const auto& toy = testing_support::toy();
  const auto g = materialize(parse_anomaly_spec("gaussian:count=12"), toy.net, toy.test, 4);
  EXPECT_EQ(g.size(), 12u);
  EXPECT_EQ(g.source, "gaussian");
  const auto u = materialize(parse_anomaly_spec("uniform"), toy.net, toy.test, 4);
  EXPECT_EQ(u.size(), toy.test.size());
  const auto f = materialize(parse_anomaly_spec("fgsm:eps=0.1"), toy.net, toy.test, 4);
  EXPECT_EQ(f.inputs[5], data::fgsm(toy.net, toy.test.inputs[5], toy.test.labels[5], 0.1));

  TempDir dir("ood");
  write_file_text(dir / "o.csv", "0,0.1,0.2,0.3\n1,0.4,0.5,0.6\n");
  const auto o = materialize(parse_anomaly_spec("ood:name=three,path=" + (dir / "o.csv").string() + ",shape=3"),
                             toy.net, toy.test, 4);
  EXPECT_EQ(o.source, "ood:three");
  ASSERT_EQ(o.size(), 2u);
  EXPECT_EQ(o.inputs[0].shape, Shape{2});
}

TEST(Cli, MissingDatasetIsInvalidInput) {
  TempDir dir("cli_missing");
  const auto r = cli({"train-toy", "--train", (dir / "nope.csv").string(), "--out", dir.path().string()});
  EXPECT_EQ(r.code, kInvalidInput);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, UnknownOptionIsInvalidInput) {
  EXPECT_EQ(cli({"gen-blobs", "--bogus"}).code, kInvalidInput);
  EXPECT_EQ(cli({}).code, kInvalidInput);
}

TEST(Cli, BinaryExitCodes) {
  TempDir dir("cli_bin");
  const std::string bin = CRITPATH_CLI_PATH;
  const auto run = [&](const std::string& args) {
    const int status = std::system((bin + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  EXPECT_EQ(run("--version"), 0);
  EXPECT_EQ(run("train-toy --train " + (dir / "missing.csv").string() + " --out " + dir.path().string()), 2);
  EXPECT_EQ(run("gen-blobs --per-class 5 --out " + (dir / "d").string()), 0);
}

TEST(Cli, ConfigFileAndFlagPrecedence) {
  TempDir dir("cli_cfg");
  write_file_text(dir / "run.ini", "seed = 5\nper-class = 10\nstddev = 0.03\n");
  const auto r = cli({"gen-blobs", "--config", (dir / "run.ini").string(), "--seed", "9", "--out", dir.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto train = data::load_csv(dir / "train.csv", Shape{2});
  EXPECT_EQ(train.size(), 30u);
  const auto manifest = nlohmann::json::parse(read_file_text(dir / "run_manifest_gen-blobs.json"));
  EXPECT_EQ(manifest.at("seed").get<std::uint64_t>(), 9u);
  EXPECT_EQ(manifest.at("command"), "gen-blobs");
}

TEST(Cli, PipelineEndToEnd) {
  TempDir dir("cli_pipe");
  testing_support::PipelineOptions opt;
  opt.per_class = "100";
  opt.paths = "3";
  opt.mutations = "20";
  const auto r = testing_support::run_pipeline(dir.path(), opt);
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"paths/class_0.json", "paths/class_2.json", "paths/timing.json", "bundle/manifest.json",
                        "model/model.mdlw", "model/train_report.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  const auto report = nlohmann::json::parse(read_file_text(dir / "model/train_report.json"));
  EXPECT_GE(report.at("train_accuracy").get<double>(), 0.99);

  const auto d = cli({"detect", "--model", (dir / "model/model.mdlw").string(), "--bundle", (dir / "bundle").string(),
                      "--inputs", (dir / "data/eval.csv").string(), "--out", (dir / "det").string(), "--quiet"});
  ASSERT_EQ(d.code, 0) << d.err;
  const auto lines = read_file_text(dir / "det/verdicts.jsonl");
  EXPECT_EQ(static_cast<std::size_t>(std::count(lines.begin(), lines.end(), '\n')), 300u);

  const auto e = cli({"evaluate", "--model", (dir / "model/model.mdlw").string(), "--bundle",
                      (dir / "bundle").string(), "--test", (dir / "data/eval.csv").string(), "--anomaly",
                      "uniform:lo=0.85,hi=1", "--path-dir", (dir / "paths").string(), "--out",
                      (dir / "ev").string(), "--quiet"});
  ASSERT_EQ(e.code, 0) << e.err;
  const auto results = nlohmann::json::parse(read_file_text(dir / "ev/eval.json"));
  ASSERT_EQ(results.size(), 1u);
  EXPECT_GE(results[0].at("auroc").get<double>(), 0.95);
  EXPECT_TRUE(std::filesystem::exists(dir / "ev/timing.md"));

  // Detecting with a different model is refused.
  const auto t2 = cli({"train-toy", "--train", (dir / "data/train.csv").string(), "--out", (dir / "m2").string(),
                       "--epochs", "5", "--seed", "77", "--quiet"});
  ASSERT_EQ(t2.code, 0) << t2.err;
  const auto bad = cli({"detect", "--model", (dir / "m2/model.mdlw").string(), "--bundle",
                        (dir / "bundle").string(), "--inputs", (dir / "data/eval.csv").string(), "--out",
                        (dir / "det2").string(), "--quiet"});
  EXPECT_EQ(bad.code, kInvalidInput);
}

}  // namespace
