#include "critpath/cli/cli.hpp"

#include <atomic>
#include <chrono>
#include <exception>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "critpath/binary_io.hpp"
#include "critpath/detector/detector.hpp"
#include "critpath/eval/metrics.hpp"
#include "critpath/hash.hpp"
#include "critpath/log.hpp"
#include "critpath/nn/mdlw.hpp"
#include "critpath/nn/trainer.hpp"
#include "critpath/paths/path_store.hpp"

#ifndef CRITPATH_VERSION
#define CRITPATH_VERSION "unknown"
#endif

namespace critpath::cli {
namespace fs = std::filesystem;

namespace {

struct Options {
  std::string model, train, test, inputs, bundle, path_dir, out = "out";
  std::vector<std::string> anomalies;
  std::vector<std::size_t> classes;
  std::size_t paths = 21;
  std::size_t mutations = 5000;
  double nu = 0.1;
  double kernel_width = 0.0;  // 0 = median heuristic
  double retention = 0.95;
  std::uint64_t seed = 1;
  std::size_t workers = 0;
  std::size_t cap = 200;
  std::size_t max_train_rows = 2000;
  std::size_t min_count = 20;
  std::string shape;
  std::string readout = "logit";
  bool trace_input = false;
  std::string arch = "2-16-16-3";
  std::size_t epochs = 200;
  double lr = 0.05;
  std::size_t per_class = 300;
  double stddev = 0.05;
  std::string centers = "0.25,0.25;0.75,0.25;0.5,0.75";
  bool quiet = false;
  bool verbose = false;
};

struct Context {
  const Options& opt;
  const CLI::App& app;
  std::string command;
  std::ostream& out;
  std::vector<std::pair<std::string, std::string>> inputs;  // path, sha256

  void require(const std::string& value, const std::string& flag) const {
    if (value.empty()) throw InvalidArgument(command + " needs " + flag);
  }
  void hash_input(const std::string& path) {
    if (!fs::is_regular_file(path)) throw IoError("input file not found: " + path);
    inputs.emplace_back(path, sha256_file(path));
  }
};

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) parts.push_back(item);
  return parts;
}

Shape parse_shape(const std::string& text) {
  Shape s;
  for (const auto& p : split(text, text.find('x') != std::string::npos ? 'x' : ',')) {
    try {
      std::size_t used = 0;
      const auto v = std::stoul(p, &used);
      if (used != p.size() || v == 0) throw std::invalid_argument(p);
      s.push_back(v);
    } catch (const std::exception&) {
      throw InvalidArgument("bad --shape '" + text + "'");
    }
  }
  if (s.empty()) throw InvalidArgument("empty --shape");
  return s;
}

nn::TraceOptions trace_options(const Options& o) {
  nn::TraceOptions t;
  t.trace_input = o.trace_input;
  if (o.readout == "softmax") {
    t.output_readout = nn::OutputReadout::Softmax;
  } else if (o.readout != "logit") {
    throw InvalidArgument("--readout must be logit or softmax");
  }
  return t;
}

Shape input_shape(const Options& o, const nn::Network& net) {
  if (!o.shape.empty()) return parse_shape(o.shape);
  if (net.input_shape()) return *net.input_shape();
  throw InvalidArgument("cannot infer the input shape; pass --shape");
}

// CSV with --shape, or "images.idx,labels.idx".
data::LabeledDataset load_labeled(Context& ctx, const std::string& spec, const Shape& shape, data::Split split_kind) {
  const auto comma = spec.find(',');
  if (comma != std::string::npos) {
    const std::string images = spec.substr(0, comma), labels = spec.substr(comma + 1);
    ctx.hash_input(images);
    ctx.hash_input(labels);
    return data::load_idx(images, labels, split_kind);
  }
  ctx.hash_input(spec);
  return data::load_csv(spec, shape, split_kind);
}

nn::Network load_net(Context& ctx, const nn::TraceOptions& trace) {
  ctx.require(ctx.opt.model, "--model");
  ctx.hash_input(ctx.opt.model);
  return nn::load_model(ctx.opt.model, trace);
}

std::vector<data::AnomalySet> load_anomalies(Context& ctx, const nn::Network& net, const data::LabeledDataset& base,
                                             std::vector<std::string>* labels) {
  std::vector<data::AnomalySet> sets;
  for (std::size_t i = 0; i < ctx.opt.anomalies.size(); ++i) {
    const auto spec = parse_anomaly_spec(ctx.opt.anomalies[i]);
    if (spec.params.count("path")) ctx.hash_input(spec.param("path", ""));
    sets.push_back(materialize(spec, net, base, ctx.opt.seed + i));
    if (sets.back().inputs.empty()) throw InvalidArgument("anomaly source '" + ctx.opt.anomalies[i] + "' is empty");
    if (labels) labels->push_back(ctx.opt.anomalies[i]);
  }
  return sets;
}

void write_manifest(const Context& ctx, const fs::path& dir) {
  nlohmann::ordered_json m;
  m["command"] = ctx.command;
  m["version"] = CRITPATH_VERSION;
  m["seed"] = ctx.opt.seed;
  auto& cfg = m["config"] = nlohmann::ordered_json::array();
  for (const auto& line : split(ctx.app.config_to_str(true, false), '\n')) {
    if (!line.empty()) cfg.push_back(line);
  }
  auto& in = m["inputs"] = nlohmann::ordered_json::object();
  for (const auto& [path, sha] : ctx.inputs) in[path] = sha;
  fs::create_directories(dir);
  write_file_text(dir / ("run_manifest_" + ctx.command + ".json"), m.dump(2) + "\n");
}

std::size_t worker_count(const Options& o, std::size_t jobs) {
  std::size_t w = o.workers == 0 ? std::max(1u, std::thread::hardware_concurrency()) : o.workers;
  return std::max<std::size_t>(1, std::min(w, jobs));
}

// --- subcommands -------------------------------------------------------------

int cmd_gen_blobs(Context& ctx) {
  const auto& o = ctx.opt;
  std::vector<std::vector<float>> centers;
  for (const auto& c : split(o.centers, ';')) {
    std::vector<float> v;
    for (const auto& x : split(c, ',')) v.push_back(std::stof(x));
    if (!centers.empty() && v.size() != centers[0].size()) throw InvalidArgument("centers differ in dimension");
    centers.push_back(std::move(v));
  }
  if (centers.size() < 2) throw InvalidArgument("--centers needs at least two centers");
  const fs::path dir = o.out;
  const char* names[] = {"train.csv", "test.csv", "eval.csv"};
  for (std::uint64_t i = 0; i < 3; ++i) {
    const auto split_kind = i == 0 ? data::Split::Train : data::Split::Test;
    const auto ds = data::make_blobs(centers, static_cast<float>(o.stddev), o.per_class, derive_seed(o.seed, i),
                                     split_kind);
    fs::create_directories(dir);
    data::save_csv(ds, dir / names[i]);
  }
  ctx.out << "wrote " << (dir / "train.csv").string() << ", test.csv, eval.csv\n";
  write_manifest(ctx, dir);
  return kOk;
}

int cmd_train_toy(Context& ctx) {
  const auto& o = ctx.opt;
  ctx.require(o.train, "--train");
  const auto arch = nn::parse_arch(o.arch);
  const Shape shape = o.shape.empty() ? Shape{arch.front()} : parse_shape(o.shape);
  const auto train = load_labeled(ctx, o.train, shape, data::Split::Train);
  nn::TrainOptions topt;
  topt.epochs = o.epochs;
  topt.learning_rate = o.lr;
  topt.seed = o.seed;
  const auto result = nn::train_toy(train.inputs, train.labels, arch, topt);

  const fs::path dir = o.out;
  fs::create_directories(dir);
  nn::save_model(result.network, dir / "model.mdlw");
  nlohmann::ordered_json report;
  report["arch"] = o.arch;
  report["epochs"] = o.epochs;
  report["lr"] = o.lr;
  report["seed"] = o.seed;
  report["train_accuracy"] = result.train_accuracy;
  report["final_loss"] = result.final_loss;
  if (!o.test.empty()) {
    const auto test = load_labeled(ctx, o.test, shape, data::Split::Test);
    report["test_accuracy"] = nn::accuracy(result.network, test.inputs, test.labels);
  }
  write_file_text(dir / "train_report.json", report.dump(2) + "\n");
  ctx.out << "train accuracy " << result.train_accuracy << "\n";
  if (report.contains("test_accuracy")) ctx.out << "test accuracy " << report["test_accuracy"].get<double>() << "\n";
  write_manifest(ctx, dir);
  return kOk;
}

int cmd_extract(Context& ctx) {
  const auto& o = ctx.opt;
  ctx.require(o.train, "--train");
  ctx.require(o.test, "--test");
  if (o.anomalies.empty()) throw InvalidArgument("extract-paths needs at least one --anomaly");

  paths::SearchConfig cfg;
  cfg.paths = o.paths;
  cfg.mutations = o.mutations;
  cfg.retention = o.retention;
  cfg.seed = o.seed;
  cfg.svdd.nu = o.nu;
  if (o.kernel_width > 0.0) cfg.svdd.kernel_width = o.kernel_width;
  cfg.max_train_rows = o.max_train_rows;
  cfg.trace = trace_options(o);
  cfg.validate();

  const auto net = load_net(ctx, cfg.trace);
  const Shape shape = input_shape(o, net);
  const auto train = load_labeled(ctx, o.train, shape, data::Split::Train);
  const auto test = load_labeled(ctx, o.test, shape, data::Split::Test);
  const auto anomalies = load_anomalies(ctx, net, test, nullptr);

  const auto test_pred = data::predict_all(net, test.inputs);
  std::vector<std::vector<std::size_t>> anomaly_pred;
  for (const auto& a : anomalies) anomaly_pred.push_back(data::predict_all(net, a.inputs));

  std::vector<std::size_t> classes = o.classes;
  if (classes.empty()) {
    for (std::size_t k = 0; k < net.num_classes(); ++k) classes.push_back(k);
  }
  for (std::size_t k : classes) {
    if (k >= net.num_classes()) throw InvalidArgument("--class " + std::to_string(k) + " out of range");
  }
  const std::size_t cap = o.cap == 0 ? static_cast<std::size_t>(-1) : o.cap;
  const fs::path dir = o.out;
  fs::create_directories(dir);

  // Classes are independent; each worker takes the next unclaimed class.
  std::vector<double> seconds(classes.size(), 0.0);
  std::vector<std::exception_ptr> failures(classes.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < classes.size(); i = next++) {
      try {
        const auto mixed = data::build_mixed_set(test, test_pred, anomalies, anomaly_pred, classes[i], cap, o.seed);
        const auto result = paths::extract_critical_paths(net, train, mixed, cfg);
        paths::save_path_store(result, cfg, dir);
        seconds[i] = result.seconds;
        log_info("class " + std::to_string(classes[i]) + ": " + std::to_string(result.seconds) + " s");
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < worker_count(o, classes.size()); ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  nlohmann::ordered_json timing;
  timing["mutations"] = o.mutations;
  auto& per = timing["classes"] = nlohmann::ordered_json::object();
  double total = 0.0;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    per[std::to_string(classes[i])] = seconds[i];
    total += seconds[i];
  }
  timing["total"] = total;
  write_file_text(dir / "timing.json", timing.dump(2) + "\n");
  ctx.out << "wrote " << classes.size() << " path stores to " << dir.string() << "\n";
  write_manifest(ctx, dir);
  return kOk;
}

int cmd_calibrate(Context& ctx) {
  const auto& o = ctx.opt;
  ctx.require(o.path_dir, "--path-dir");
  ctx.require(o.test, "--test");
  // Stores carry the trace options the paths were searched with.
  std::vector<paths::LoadedStore> stores;
  const fs::path pdir = o.path_dir;
  for (std::size_t k = 0;; ++k) {
    const auto file = pdir / paths::store_file_name(k);
    if (!fs::exists(file)) break;
    ctx.hash_input(file.string());
    stores.push_back(paths::load_path_store(file));
  }
  if (stores.empty()) throw IoError("no path stores in " + o.path_dir);
  const auto cfg = stores.front().config;
  const auto net = load_net(ctx, cfg.trace);
  if (stores.size() != net.num_classes()) {
    throw InvalidArgument("found " + std::to_string(stores.size()) + " path stores for a " +
                          std::to_string(net.num_classes()) + "-class model");
  }
  const Shape shape = input_shape(o, net);
  const auto test = load_labeled(ctx, o.test, shape, data::Split::Test);

  std::vector<paths::ExtractionResult> extractions;
  for (auto& s : stores) extractions.push_back(std::move(s.result));
  auto bundle = detector::make_bundle(net, std::move(extractions), paths::config_to_json(cfg));
  bundle = detector::calibrate(bundle, net, test.inputs, o.retention, o.min_count);
  detector::save_bundle(bundle, o.out);
  for (const auto& c : bundle.classes) {
    ctx.out << "class " << c.class_id << ": " << c.paths.size() << " paths, tau_k " << c.tau_k << "\n";
  }
  write_manifest(ctx, o.out);
  return kOk;
}

struct LoadedBundle {
  detector::DetectorBundle bundle;
  nn::Network net;
};

LoadedBundle load_bundle_and_model(Context& ctx) {
  ctx.require(ctx.opt.bundle, "--bundle");
  ctx.hash_input((fs::path(ctx.opt.bundle) / "manifest.json").string());
  auto bundle = detector::load_bundle(ctx.opt.bundle);
  if (!bundle.calibrated()) throw InvalidArgument("bundle " + ctx.opt.bundle + " is not calibrated");
  auto net = load_net(ctx, paths::config_from_json(bundle.config).trace);
  return {std::move(bundle), std::move(net)};
}

int cmd_detect(Context& ctx) {
  const auto& o = ctx.opt;
  ctx.require(o.inputs, "--inputs");
  const auto [bundle, net] = load_bundle_and_model(ctx);
  std::vector<Tensor> xs;
  if (fs::path(o.inputs).extension() == ".json") {
    ctx.hash_input(o.inputs);
    xs = data::load_anomaly_set(o.inputs).inputs;
  } else {
    xs = load_labeled(ctx, o.inputs, input_shape(o, net), data::Split::Test).inputs;
  }
  const auto verdicts = detector::detect_batch(bundle, net, xs);
  const fs::path dir = o.out;
  fs::create_directories(dir);
  write_file_text(dir / "verdicts.jsonl", detector::verdict_jsonl(verdicts));
  std::size_t flagged = 0;
  for (const auto& v : verdicts) flagged += v.is_anomaly ? 1 : 0;
  ctx.out << flagged << " of " << verdicts.size() << " inputs flagged as anomalous\n";
  write_manifest(ctx, dir);
  return kOk;
}

int cmd_evaluate(Context& ctx) {
  const auto& o = ctx.opt;
  ctx.require(o.test, "--test");
  if (o.anomalies.empty()) throw InvalidArgument("evaluate needs at least one --anomaly");
  const auto [bundle, net] = load_bundle_and_model(ctx);
  const Shape shape = input_shape(o, net);
  const auto test = load_labeled(ctx, o.test, shape, data::Split::Test);
  std::vector<std::string> labels;
  const auto anomalies = load_anomalies(ctx, net, test, &labels);

  const auto start = std::chrono::steady_clock::now();
  auto to_samples = [](const std::vector<detector::Verdict>& vs) {
    std::vector<eval::ScoredSample> s;
    for (const auto& v : vs) s.push_back({v.predicted_class, v.final_score});
    return s;
  };
  const auto normal = to_samples(detector::detect_batch(bundle, net, test.inputs));
  const std::string model_name = fs::path(o.model).stem().string();
  std::vector<eval::EvalResult> results;
  for (std::size_t i = 0; i < anomalies.size(); ++i) {
    const auto anomaly = to_samples(detector::detect_batch(bundle, net, anomalies[i].inputs));
    auto r = eval::evaluate_scores(normal, anomaly, net.num_classes(), o.retention);
    r.model = model_name;
    r.anomaly_source = labels[i];
    r.seed = o.seed;
    results.push_back(std::move(r));
  }
  const double eval_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  double extract_s = 0.0;
  std::size_t mutations = paths::config_from_json(bundle.config).mutations;
  if (!o.path_dir.empty() && fs::exists(fs::path(o.path_dir) / "timing.json")) {
    const auto t = nlohmann::json::parse(read_file_text(fs::path(o.path_dir) / "timing.json"));
    extract_s = t.value("total", 0.0);
  }
  for (auto& r : results) r.timings = {{"extraction", extract_s}, {"evaluation", eval_s}, {"total", extract_s + eval_s}};

  const fs::path dir = o.out;
  fs::create_directories(dir);
  eval::write_report(results, eval::ReportFormat::Json, dir / "eval.json");
  eval::write_report(results, eval::ReportFormat::Csv, dir / "eval.csv");
  eval::write_report(results, eval::ReportFormat::Markdown, dir / "eval.md");
  const std::string dataset = fs::path(o.test).stem().string();
  const eval::TimingRow row{model_name, dataset, extract_s, eval_s};
  write_file_text(dir / "timing.md", eval::timing_table(std::span(&row, 1), mutations));
  for (const auto& r : results) {
    ctx.out << r.anomaly_source << ": AUROC " << r.auroc << ", TPR@" << o.retention << "TNR " << r.tpr_at_tnr << "\n";
  }
  write_manifest(ctx, dir);
  return kOk;
}

void add_options(CLI::App& app, Options& o) {
  app.set_config("--config", "", "Flat key=value config file; command-line flags take precedence");
  app.add_option("--model", o.model, "MDLW model file");
  app.add_option("--train", o.train, "Training set: CSV, or images.idx,labels.idx");
  app.add_option("--test", o.test, "Test set (normals): CSV, or images.idx,labels.idx");
  app.add_option("--inputs", o.inputs, "Inputs to judge: CSV, IDX pair or anomaly-set sidecar .json");
  app.add_option("--bundle", o.bundle, "Calibrated detector bundle directory");
  app.add_option("--path-dir", o.path_dir, "Directory of per-class path stores");
  app.add_option("--out", o.out, "Output directory")->capture_default_str();
  app.add_option("--anomaly", o.anomalies, "Anomaly source spec, repeatable (kind[:key=value,...])");
  app.add_option("--class", o.classes, "Restrict extraction to these classes");
  app.add_option("--paths", o.paths, "Critical paths per class (m)")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--mutations", o.mutations, "Mutation iterations per path (n)")->capture_default_str();
  app.add_option("--nu", o.nu, "SVDD nu in (0,1]")->capture_default_str();
  app.add_option("--kernel-width", o.kernel_width, "RBF width s; 0 selects the median heuristic")->capture_default_str();
  app.add_option("--retention", o.retention, "Fraction of normals kept above thresholds")->capture_default_str();
  app.add_option("--seed", o.seed, "Run seed")->capture_default_str();
  app.add_option("--workers", o.workers, "Extraction worker threads (0 = all cores)")->capture_default_str();
  app.add_option("--cap", o.cap, "Anomalies per source in each mixed set (0 = all)")->capture_default_str();
  app.add_option("--max-train-rows", o.max_train_rows, "SVDD training rows per class (0 = all)")
      ->capture_default_str();
  app.add_option("--min-count", o.min_count, "Minimum calibration normals per class")->capture_default_str();
  app.add_option("--shape", o.shape, "Input shape for CSV data, e.g. 2 or 28x28x1");
  app.add_option("--readout", o.readout, "Output position readout: logit or softmax")->capture_default_str();
  app.add_flag("--trace-input", o.trace_input, "Use raw input elements as the first path position");
  app.add_option("--arch", o.arch, "train-toy: layer widths, e.g. 2-16-16-3")->capture_default_str();
  app.add_option("--epochs", o.epochs, "train-toy: epochs")->capture_default_str();
  app.add_option("--lr", o.lr, "train-toy: learning rate")->capture_default_str();
  app.add_option("--per-class", o.per_class, "gen-blobs: samples per class and split")->capture_default_str();
  app.add_option("--stddev", o.stddev, "gen-blobs: blob standard deviation")->capture_default_str();
  app.add_option("--centers", o.centers, "gen-blobs: centers as x,y;x,y;...")->capture_default_str();
  app.add_flag("--quiet", o.quiet, "Suppress warnings");
  app.add_flag("--verbose", o.verbose, "Progress output");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Critical-path anomaly detection for feedforward classifiers", "critpath"};
  app.set_version_flag("--version", CRITPATH_VERSION);
  Options opt;
  add_options(app, opt);
  app.require_subcommand(1);
  using Handler = int (*)(Context&);
  const std::pair<const char*, std::pair<const char*, Handler>> commands[] = {
      {"gen-blobs", {"Write toy Gaussian-blob train/test/eval CSVs", cmd_gen_blobs}},
      {"train-toy", {"Train a small dense classifier with SGD", cmd_train_toy}},
      {"extract-paths", {"Search critical paths per class", cmd_extract}},
      {"calibrate", {"Build a calibrated detector bundle from path stores", cmd_calibrate}},
      {"detect", {"Judge inputs and write verdicts as JSON lines", cmd_detect}},
      {"evaluate", {"Compute AUROC and TPR at the retention TNR per anomaly source", cmd_evaluate}},
  };
  for (const auto& [name, info] : commands) app.add_subcommand(name, info.first)->fallthrough();

  // CLI11 consumes argv in reverse.
  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInvalidInput;
  }
  set_log_level(opt.quiet ? LogLevel::Quiet : opt.verbose ? LogLevel::Info : LogLevel::Warn);

  const auto* sub = app.get_subcommands().front();
  for (const auto& [name, info] : commands) {
    if (sub->get_name() != name) continue;
    Context ctx{opt, app, name, out, {}};
    try {
      return info.second(ctx);
    } catch (const Error& e) {
      err << "error: " << e.what() << "\n";
      return kInvalidInput;
    } catch (const std::exception& e) {
      err << "internal error: " << e.what() << "\n";
      return kInternal;
    }
  }
  return kInternal;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace critpath::cli
