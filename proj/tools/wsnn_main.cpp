// Experiment command line: builds the reference models, trains with early
// stopping, evaluates and ensembles checkpoints, and renders gradient
// saliency maps. Every config key doubles as a --key value flag; --config
// loads a key = value file first, then the flags override it.
//
// Exit codes: 0 success, 2 configuration error, 3 numeric abort.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "wsnn/data/dataset.hpp"
#include "wsnn/errors.hpp"
#include "wsnn/harness/checkpoint.hpp"
#include "wsnn/harness/config.hpp"
#include "wsnn/harness/ensemble.hpp"
#include "wsnn/harness/models.hpp"
#include "wsnn/harness/saliency.hpp"
#include "wsnn/harness/train.hpp"
#include "wsnn/kernels/kernels.hpp"
#include "wsnn/nn/gradcheck.hpp"
#include "wsnn/nn/layers.hpp"
#include "wsnn/stn.hpp"
#include "wsnn/wsl.hpp"

namespace {

using namespace wsnn;
using harness::Config;

constexpr const char* kUsage =
    "usage: wsnn <verb> [--config PATH] [--key value ...]\n"
    "verbs:\n"
    "  gen-data         materialize a translated split as a .wsnn container\n"
    "  train            train the configured model, write metrics + checkpoint\n"
    "  eval             evaluate a checkpoint on the test split\n"
    "  ensemble         combine several checkpoints (vote / mean_logit)\n"
    "  saliency         write a gradient saliency PGM for one test image\n"
    "  bench-gradcheck  run finite-difference spot checks with timings\n"
    "Any config key is a flag: --model stn --stn_mode 4p --seed 3 ...\n";

Config parse_args(int argc, char** argv) {
  Config cfg;
  // --config first so explicit flags override the file regardless of order.
  for (int i = 2; i + 1 < argc; i += 2) {
    if (std::strcmp(argv[i], "--config") == 0) cfg.load_file(argv[i + 1]);
  }
  for (int i = 2; i < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag.rfind("--", 0) != 0)
      throw ConfigError("expected --key, got: " + flag);
    if (i + 1 >= argc) throw ConfigError("flag " + flag + " is missing a value");
    if (flag == "--config") continue;
    cfg.set(flag.substr(2), argv[i + 1]);
  }
  return cfg;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    if (comma > pos) out.push_back(text.substr(pos, comma - pos));
    pos = comma + 1;
  }
  return out;
}

int cmd_gen_data(const Config& cfg) {
  const std::string split = cfg.str("split");
  if (split != "train" && split != "test")
    throw ConfigError("split must be train or test, got: " + split);
  const std::string dir = cfg.str("mnist_dir");
  data::LabeledDataset base =
      split == "train"
          ? data::load_mnist_idx(dir + "/train-images-idx3-ubyte",
                                 dir + "/train-labels-idx1-ubyte")
          : data::load_mnist_idx(dir + "/t10k-images-idx3-ubyte",
                                 dir + "/t10k-labels-idx1-ubyte");
  const int64_t subset_n = cfg.integer("subset");
  if (subset_n > 0) base = data::subset(base, static_cast<size_t>(subset_n));

  const auto canvas = static_cast<size_t>(cfg.integer("canvas"));
  const auto seed = static_cast<uint64_t>(cfg.integer("data_seed"));
  const data::LabeledDataset ds = data::make_translated_mnist(
      base, canvas, split == "train" ? seed : seed + 1, cfg.flag("clutter"));

  harness::Checkpoint out;
  out.model_name = "dataset";
  out.config_hash = cfg.hash();
  out.add("images", ds.images);
  out.add("labels", ds.labels);
  Tensor<int64_t> offsets({ds.size(), 2});
  for (size_t i = 0; i < ds.size(); ++i) {
    offsets.data()[2 * i] = ds.offsets[i].dx;
    offsets.data()[2 * i + 1] = ds.offsets[i].dy;
  }
  out.add("offsets", std::move(offsets));

  std::filesystem::create_directories(cfg.str("out"));
  const std::string path =
      cfg.str("out") + "/translated_" + split + ".wsnn";
  harness::checkpoint_save(out, path);
  std::cout << "wrote " << ds.size() << " items (" << canvas << "x" << canvas
            << (cfg.flag("clutter") ? ", cluttered" : "") << ") to " << path
            << "\n";
  return 0;
}

int cmd_train(const Config& cfg) {
  harness::Sources sources = harness::assemble_sources(cfg);
  const harness::TrainResult result =
      harness::train(cfg, sources.train, sources.test, &std::cout);
  std::cout << "artifacts in " << cfg.str("out") << "\n";
  return result.report.rows.empty() ? 1 : 0;
}

// Builds the model per the config, checks it against the checkpoint's
// recorded name, and loads the weights.
std::unique_ptr<nn::Sequential<float>> load_configured_model(
    const Config& cfg, const std::string& path) {
  const harness::Checkpoint cp = harness::checkpoint_load(path);
  if (!cp.model_name.empty() && cp.model_name != cfg.str("model"))
    throw ConfigError("checkpoint " + path + " holds a '" + cp.model_name +
                      "' model but the config says '" + cfg.str("model") +
                      "'");
  auto model = harness::build_model(cfg);
  harness::load_model(cp, *model);
  return model;
}

int cmd_eval(const Config& cfg) {
  const std::string path = cfg.str("checkpoint");
  if (path.empty()) throw ConfigError("eval needs --checkpoint PATH");
  auto model = load_configured_model(cfg, path);
  harness::Sources sources = harness::assemble_sources(cfg);
  const harness::EvalStats st = harness::evaluate(
      *model, sources.test, harness::parse_loss(cfg.str("loss")),
      static_cast<size_t>(cfg.integer("batch_size")));
  std::printf(
      "test: loss %.6f  top1 %.4f  top5 %.4f  mean_ap %.4f  (%zu items)\n",
      st.loss, st.top1, st.top5, st.mean_ap, st.count);
  return 0;
}

int cmd_ensemble(const Config& cfg) {
  const std::vector<std::string> paths = split_list(cfg.str("checkpoints"));
  if (paths.empty())
    throw ConfigError("ensemble needs --checkpoints a.wsnn,b.wsnn,...");
  harness::Sources sources = harness::assemble_sources(cfg);
  const harness::LossKind loss = harness::parse_loss(cfg.str("loss"));
  const auto batch = static_cast<size_t>(cfg.integer("batch_size"));

  std::vector<Tensor<float>> logits(paths.size());
  for (size_t i = 0; i < paths.size(); ++i) {
    auto model = load_configured_model(cfg, paths[i]);
    const harness::EvalStats st =
        harness::evaluate(*model, sources.test, loss, batch, &logits[i]);
    std::printf("model %zu (%s): top1 %.4f\n", i, paths[i].c_str(), st.top1);
  }

  const harness::EnsembleMode mode =
      harness::parse_ensemble_mode(cfg.str("ensemble_mode"));
  harness::PriorCorrection correction;
  const harness::PriorCorrection* cptr = nullptr;
  if (cfg.flag("prior_correction")) {
    // Train split as observed (possibly unbalanced) against a uniform
    // target, matching a balanced test split.
    correction.train_priors =
        harness::class_priors(sources.train.base().labels, 10);
    correction.target_priors.assign(10, 0.1);
    cptr = &correction;
  }

  const std::vector<int64_t> pred =
      harness::ensemble_predict(logits, mode, cptr);
  const Tensor<int64_t>& labels = sources.test.base().labels;
  size_t hits = 0;
  for (size_t i = 0; i < pred.size(); ++i)
    hits += pred[i] == labels.data()[i];
  std::printf("ensemble (%s%s): top1 %.4f\n", cfg.str("ensemble_mode").c_str(),
              cptr != nullptr ? ", prior-corrected" : "",
              100.0 * static_cast<double>(hits) /
                  static_cast<double>(pred.size()));

  if (cptr != nullptr) {
    const std::vector<int64_t> plain =
        harness::ensemble_predict(logits, mode, nullptr);
    size_t flips = 0;
    for (size_t i = 0; i < pred.size(); ++i) flips += pred[i] != plain[i];
    std::printf("prior correction changed %zu predictions\n", flips);
  }
  return 0;
}

int cmd_saliency(const Config& cfg) {
  const std::string path = cfg.str("checkpoint");
  if (path.empty()) throw ConfigError("saliency needs --checkpoint PATH");
  auto model = load_configured_model(cfg, path);
  harness::Sources sources = harness::assemble_sources(cfg);

  const auto index = static_cast<size_t>(cfg.integer("image_index"));
  if (index >= sources.test.size())
    throw ConfigError("image_index out of range for the test split");
  Tensor<float> image;
  Tensor<int64_t> label;
  sources.test.fill(&index, 1, 0, image, label);

  const auto cls = static_cast<size_t>(cfg.integer("class_index"));
  const Tensor<float> map = harness::saliency_map(*model, image, cls);

  std::filesystem::create_directories(cfg.str("out"));
  const std::string out = cfg.str("out") + "/saliency_" +
                          std::to_string(index) + "_c" + std::to_string(cls) +
                          ".pgm";
  harness::write_pgm(map, out);
  const auto box = sources.test.placement(index, 0);
  std::cout << "wrote " << out << " (true label " << label.data()[0]
            << ", digit box at dx=" << box.dx << " dy=" << box.dy << ")\n";
  return 0;
}

int cmd_bench_gradcheck(const Config& cfg) {
  const auto seed = static_cast<uint64_t>(cfg.integer("seed"));
  Rng rng(seed);
  struct Case {
    const char* name;
    std::unique_ptr<nn::Layer<double>> layer;
    std::vector<size_t> shape;
  };
  std::vector<Case> cases;
  cases.push_back({"linear", std::make_unique<nn::Linear<double>>(6, 4),
                   {3, 6}});
  cases.push_back({"relu",
                   std::make_unique<nn::Activation<double>>(nn::Act::relu),
                   {3, 8}});
  cases.push_back({"conv2d",
                   std::make_unique<nn::Conv2d<double>>(2, 3, 3, 3), {2, 2, 7, 7}});
  cases.push_back({"maxpool2d", std::make_unique<nn::MaxPool2d<double>>(2),
                   {2, 2, 6, 6}});
  cases.push_back({"batchnorm2d",
                   std::make_unique<nn::BatchNorm2d<double>>(3), {4, 3, 5, 5}});
  cases.push_back({"logsoftmax", std::make_unique<nn::LogSoftmax<double>>(),
                   {3, 10}});
  cases.push_back({"mil_max_pool",
                   std::make_unique<wsl::MilMaxPool<double>>(), {2, 4, 5, 5}});
  cases.push_back({"weldon_pool",
                   std::make_unique<wsl::WeldonPool<double>>(2), {2, 4, 5, 5}});

  int worst_name = -1;
  double worst = 0.0;
  for (size_t i = 0; i < cases.size(); ++i) {
    auto& c = cases[i];
    c.layer->init_params(nn::InitScheme::fan_in_sqrt, rng);
    Tensor<double> x(c.shape);
    for (size_t k = 0; k < x.size(); ++k) x.data()[k] = rng.normal(0.0, 1.0);
    const auto t0 = std::chrono::steady_clock::now();
    const double err = nn::gradient_check(*c.layer, x);
    const double ms =
        std::chrono::duration<double, std::milli>(
            std::chrono::steady_clock::now() - t0)
            .count();
    std::printf("%-14s rel_err %.3e  (%.1f ms)\n", c.name, err, ms);
    if (err > worst) {
      worst = err;
      worst_name = static_cast<int>(i);
    }
  }
  std::printf("worst: %s at %.3e\n",
              worst_name >= 0 ? cases[worst_name].name : "-", worst);
  return 0;
}

int run(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << kUsage;
    throw ConfigError("missing verb");
  }
  const std::string verb = argv[1];
  const Config cfg = parse_args(argc, argv);
  kernels::select(kernels::parse_isa(cfg.str("kernels")));

  if (verb == "gen-data") return cmd_gen_data(cfg);
  if (verb == "train") return cmd_train(cfg);
  if (verb == "eval") return cmd_eval(cfg);
  if (verb == "ensemble") return cmd_ensemble(cfg);
  if (verb == "saliency") return cmd_saliency(cfg);
  if (verb == "bench-gradcheck") return cmd_bench_gradcheck(cfg);
  std::cerr << kUsage;
  throw ConfigError("unknown verb: " + verb);
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const wsnn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const wsnn::NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
