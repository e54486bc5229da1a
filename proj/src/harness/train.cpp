#include "wsnn/harness/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>

#include "wsnn/errors.hpp"
#include "wsnn/harness/models.hpp"
#include "wsnn/optim.hpp"
#include "wsnn/stn.hpp"

namespace wsnn::harness {

namespace {

constexpr size_t kDigitBox = 32;  // matches the translated-set generator

}  // namespace

BatchSource::BatchSource(data::LabeledDataset base, size_t canvas,
                         uint64_t translate_seed, bool online_translate,
                         bool clutter, size_t resize)
    : base_(std::move(base)),
      canvas_(canvas),
      root_(translate_seed),
      online_(online_translate),
      clutter_(clutter),
      resize_(resize) {
  if (base_.size() == 0) throw Error("BatchSource: empty base dataset");
  if (canvas_ < kDigitBox)
    throw ConfigError("BatchSource: canvas " + std::to_string(canvas_) +
                      " smaller than the " + std::to_string(kDigitBox) +
                      "-pixel digit box");
  if (base_.height() > kDigitBox || base_.width() > kDigitBox)
    throw ConfigError("BatchSource: base digits exceed the digit box");
}

void BatchSource::fill(const size_t* indices, size_t count, uint64_t epoch,
                       Tensor<float>& images, Tensor<int64_t>& labels) const {
  const size_t c = canvas_;
  Tensor<float> canvases({count, 1, c, c});
  labels = Tensor<int64_t>({count});
  data::LabeledDataset::Placement scratch;
  for (size_t k = 0; k < count; ++k) {
    const size_t j = indices[k];
    if (j >= base_.size())
      throw ShapeError("BatchSource: index " + std::to_string(j) +
                       " out of range");
    const uint64_t salt = online_ ? epoch * base_.size() + j : j;
    data::render_translated_item(base_, j, c, root_.derive(salt), clutter_,
                                 canvases.data() + k * c * c, scratch);
    labels.data()[k] = base_.labels.data()[j];
  }
  images = resize_ != 0 ? stn::downsample(canvases, resize_, resize_)
                        : std::move(canvases);
  if (normalize_) data::normalize(images, stats_);
}

data::LabeledDataset::Placement BatchSource::placement(size_t index,
                                                       uint64_t epoch) const {
  if (index >= base_.size())
    throw ShapeError("BatchSource: index out of range");
  // Render into scratch: the renderer is the single source of truth for how
  // the stream maps to offsets.
  std::vector<float> scratch(canvas_ * canvas_);
  data::LabeledDataset::Placement p;
  const uint64_t salt = online_ ? epoch * base_.size() + index : index;
  data::render_translated_item(base_, index, canvas_, root_.derive(salt),
                               clutter_, scratch.data(), p);
  return p;
}

data::NormalizationStats BatchSource::compute_stats(size_t batch_size) const {
  if (normalize_)
    throw Error("BatchSource: compute_stats after set_normalization");
  double sum = 0.0, sum_sq = 0.0;
  size_t total = 0;
  Tensor<float> images;
  Tensor<int64_t> labels;
  std::vector<size_t> idx(batch_size);
  for (size_t start = 0; start < size(); start += batch_size) {
    const size_t m = std::min(batch_size, size() - start);
    idx.resize(m);
    std::iota(idx.begin(), idx.end(), start);
    fill(idx.data(), m, 0, images, labels);
    for (size_t i = 0; i < images.size(); ++i) {
      const double v = images.data()[i];
      sum += v;
      sum_sq += v * v;
    }
    total += images.size();
  }
  const double mean = sum / static_cast<double>(total);
  const double var =
      std::max(0.0, sum_sq / static_cast<double>(total) - mean * mean);
  data::NormalizationStats stats;
  stats.mean = static_cast<float>(mean);
  stats.std = static_cast<float>(std::sqrt(var));
  if (stats.std <= 0.0f)
    throw Error("BatchSource: zero pixel variance, cannot normalize");
  return stats;
}

void BatchSource::set_normalization(const data::NormalizationStats& stats) {
  stats_ = stats;
  normalize_ = true;
}

data::LabeledDataset unbalance(const data::LabeledDataset& ds,
                               const std::string& spec) {
  // Parse "class:fraction" pairs.
  std::vector<double> keep_frac(10, 1.0);
  size_t pos = 0;
  while (pos < spec.size()) {
    size_t comma = spec.find(',', pos);
    if (comma == std::string::npos) comma = spec.size();
    const std::string item = spec.substr(pos, comma - pos);
    int cls = -1;
    double frac = 0.0;
    if (std::sscanf(item.c_str(), "%d:%lf", &cls, &frac) != 2 || cls < 0 ||
        cls > 9 || !(frac > 0.0) || frac > 1.0)
      throw ConfigError("unbalanced: cannot parse item '" + item +
                        "' (want class:fraction with fraction in (0,1])");
    keep_frac[static_cast<size_t>(cls)] = frac;
    pos = comma + 1;
  }

  // Count per class, derive per-class keep budgets (ceil, so no class
  // disappears entirely), then keep each class's first items.
  std::vector<size_t> count(10, 0), budget(10, 0), kept(10, 0);
  for (size_t i = 0; i < ds.size(); ++i) ++count[ds.labels.data()[i]];
  for (size_t c = 0; c < 10; ++c)
    budget[c] = static_cast<size_t>(
        std::ceil(keep_frac[c] * static_cast<double>(count[c])));
  std::vector<size_t> indices;
  indices.reserve(ds.size());
  for (size_t i = 0; i < ds.size(); ++i) {
    const auto c = static_cast<size_t>(ds.labels.data()[i]);
    if (kept[c] < budget[c]) {
      ++kept[c];
      indices.push_back(i);
    }
  }
  return data::gather(ds, indices);
}

Sources assemble_sources(const Config& cfg) {
  const std::string dir = cfg.str("mnist_dir");
  data::LabeledDataset train_base = data::load_mnist_idx(
      dir + "/train-images-idx3-ubyte", dir + "/train-labels-idx1-ubyte");
  data::LabeledDataset test_base = data::load_mnist_idx(
      dir + "/t10k-images-idx3-ubyte", dir + "/t10k-labels-idx1-ubyte");

  const int64_t subset_n = cfg.integer("subset");
  if (subset_n < 0) throw ConfigError("subset must be >= 0");
  if (subset_n > 0)
    train_base = data::subset(train_base, static_cast<size_t>(subset_n));
  const std::string unbalanced = cfg.str("unbalanced");
  if (!unbalanced.empty()) train_base = unbalance(train_base, unbalanced);

  const auto canvas = static_cast<size_t>(cfg.integer("canvas"));
  const auto resize = static_cast<size_t>(cfg.integer("resize"));
  const auto data_seed = static_cast<uint64_t>(cfg.integer("data_seed"));
  const bool online = cfg.flag("online_translate");
  const bool clutter = cfg.flag("clutter");

  BatchSource train_src(std::move(train_base), canvas, data_seed, online,
                        clutter, resize);
  // The test split gets its own placement stream (and never re-translates).
  BatchSource test_src(std::move(test_base), canvas, data_seed + 1,
                       /*online_translate=*/false, clutter, resize);

  if (cfg.flag("normalize")) {
    const auto stats = train_src.compute_stats(
        static_cast<size_t>(cfg.integer("batch_size")));
    train_src.set_normalization(stats);
    test_src.set_normalization(stats);  // train stats on eval, by contract
  }
  return {std::move(train_src), std::move(test_src)};
}

LossKind parse_loss(const std::string& name) {
  if (name == "cross_entropy") return LossKind::cross_entropy;
  if (name == "mse") return LossKind::mse;
  if (name == "multilabel_entropy") return LossKind::multilabel_entropy;
  throw ConfigError("unknown loss: " + name);
}

namespace {

Tensor<float> one_hot(const Tensor<int64_t>& labels, size_t classes) {
  const size_t b = labels.size();
  Tensor<float> t({b, classes});
  for (size_t i = 0; i < b; ++i) {
    const int64_t y = labels.data()[i];
    if (y < 0 || static_cast<size_t>(y) >= classes)
      throw Error("one_hot: label " + std::to_string(y) + " out of range");
    t.data()[i * classes + static_cast<size_t>(y)] = 1.0f;
  }
  return t;
}

}  // namespace

losses::LossOutput<float> compute_loss(LossKind kind,
                                       const Tensor<float>& predictions,
                                       const Tensor<int64_t>& labels) {
  switch (kind) {
    case LossKind::cross_entropy:
      return losses::cross_entropy(predictions, labels);
    case LossKind::mse:
      return losses::mse(predictions, one_hot(labels, predictions.dim(1)));
    case LossKind::multilabel_entropy:
      return losses::multilabel_entropy(
          predictions, one_hot(labels, predictions.dim(1)));
  }
  throw ConfigError("unknown loss kind");
}

EvalStats evaluate(nn::Layer<float>& model, const BatchSource& src,
                   LossKind loss, size_t batch_size,
                   Tensor<float>* logits_out) {
  const size_t n = src.size();
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  model.set_train(false);

  Tensor<float> logits;  // [n x C], allocated once C is known
  size_t classes = 0;
  double loss_sum = 0.0;
  Tensor<float> images;
  Tensor<int64_t> labels;
  std::vector<size_t> idx;
  std::vector<int64_t> all_labels(n);

  for (size_t start = 0; start < n; start += batch_size) {
    const size_t m = std::min(batch_size, n - start);
    idx.resize(m);
    std::iota(idx.begin(), idx.end(), start);
    src.fill(idx.data(), m, 0, images, labels);
    const Tensor<float> out = model.forward(images);
    if (out.rank() != 2 || out.dim(0) != m)
      throw ShapeError("evaluate: model produced " +
                       detail::shape_str(out.shape()) + " for a batch of " +
                       std::to_string(m));
    if (classes == 0) {
      classes = out.dim(1);
      logits = Tensor<float>({n, classes});
    }
    const auto lo = compute_loss(loss, out, labels);
    loss_sum += static_cast<double>(lo.value) * static_cast<double>(m);
    std::copy(out.data(), out.data() + m * classes,
              logits.data() + start * classes);
    std::copy(labels.data(), labels.data() + m, all_labels.begin() + start);
  }

  size_t top1 = 0, top5 = 0;
  for (size_t i = 0; i < n; ++i) {
    const size_t rank =
        topk_rank(logits.data() + i * classes, classes, all_labels[i]);
    top1 += rank < 1;
    top5 += rank < 5;
  }

  EvalStats st;
  st.loss = loss_sum / static_cast<double>(n);
  st.top1 = 100.0 * static_cast<double>(top1) / static_cast<double>(n);
  st.top5 = 100.0 * static_cast<double>(top5) / static_cast<double>(n);
  Tensor<int64_t> label_tensor({n});
  std::copy(all_labels.begin(), all_labels.end(), label_tensor.data());
  st.mean_ap = mean_average_precision(logits, label_tensor);
  st.count = n;
  if (logits_out != nullptr) *logits_out = std::move(logits);
  return st;
}

namespace {

nn::InitScheme parse_init(const std::string& name) {
  if (name == "fan_in_sqrt") return nn::InitScheme::fan_in_sqrt;
  if (name == "paper_literal") return nn::InitScheme::paper_literal;
  throw ConfigError("unknown init scheme: " + name);
}

std::vector<std::string> split_labels(const std::string& text) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    std::string item = text.substr(pos, comma - pos);
    const size_t b = item.find_first_not_of(" \t");
    const size_t e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    pos = comma + 1;
  }
  return out;
}

}  // namespace

TrainResult train(const Config& cfg, const BatchSource& train_src,
                  const BatchSource& test_src, std::ostream* echo) {
  const auto batch_size = static_cast<size_t>(cfg.integer("batch_size"));
  const auto max_epochs = cfg.integer("max_epochs");
  const auto patience = cfg.integer("patience");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  const auto seed = static_cast<uint64_t>(cfg.integer("seed"));
  const LossKind loss_kind = parse_loss(cfg.str("loss"));
  const auto policy = data::parse_augment(cfg.str("augment"));
  const nn::InitScheme scheme = parse_init(cfg.str("init"));

  // Model + parameter groups, taking the fine-tuning path when asked.
  Rng init_rng(seed);
  std::unique_ptr<nn::Sequential<float>> model;
  std::vector<optim::ParamGroup<float>> groups;
  const std::string finetune_from = cfg.str("finetune_from");
  if (!finetune_from.empty()) {
    if (cfg.str("model") != "mil_fcn")
      throw ConfigError(
          "finetune_from builds mil_fcn from a lenet32 checkpoint; set model "
          "= mil_fcn");
    const Checkpoint pre = checkpoint_load(finetune_from);
    auto lenet = build_lenet(32);
    load_model(pre, *lenet);
    model = milfcn_from_lenet(*lenet);
    groups = optim::make_finetune_groups(
        *model, split_labels(cfg.str("finetune_reset")),
        static_cast<float>(cfg.number("finetune_multiplier")), scheme,
        init_rng);
  } else {
    model = build_model(cfg);
    model->init_params(scheme, init_rng);
    groups = optim::make_groups(*model);
  }
  model->seed_runtime(seed);
  optim::set_weight_decay(groups,
                          static_cast<float>(cfg.number("weight_decay")));

  optim::Schedule sched;
  sched.base_lr = cfg.number("lr");
  sched.lr_decay = cfg.number("lr_decay");
  sched.momentum = cfg.number("momentum");
  sched.nesterov = cfg.flag("nesterov");

  const std::string opt_name = cfg.str("optimizer");
  if (opt_name != "adam" && opt_name != "sgd")
    throw ConfigError("unknown optimizer: " + opt_name);
  const auto step = [&] {
    if (opt_name == "adam")
      optim::adam_step(groups, sched);
    else
      optim::sgd_step(groups, sched);
  };

  // Artifact plumbing.
  const std::string out_dir = cfg.str("out");
  std::ofstream log;
  const bool zero_seconds = cfg.flag("deterministic_timing");
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    log.open(out_dir + "/train.log", std::ios::trunc);
    if (!log) throw IoError("cannot open train.log under " + out_dir);
    log << "# " << cfg.str("model") << " run, config hash " << cfg.hash()
        << "\n";
  }
  const auto say = [&](const std::string& line) {
    if (log.is_open()) log << line << "\n" << std::flush;
    if (echo != nullptr) *echo << line << "\n" << std::flush;
  };

  const size_t n = train_src.size();
  const Rng run_rng(seed);
  TrainResult result;
  result.best_top1 = -1.0;  // epoch 1 always counts as an improvement

  std::vector<size_t> order(n);
  Tensor<float> images;
  Tensor<int64_t> labels;

  for (int64_t epoch = 1; epoch <= max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    model->set_train(true);

    std::iota(order.begin(), order.end(), size_t{0});
    Rng shuffle_rng = run_rng.derive(2 * static_cast<uint64_t>(epoch));
    shuffle_indices(order.data(), n, shuffle_rng);
    Rng augment_rng = run_rng.derive(2 * static_cast<uint64_t>(epoch) + 1);

    double train_loss_sum = 0.0;
    size_t batch_index = 0;
    for (size_t start = 0; start < n; start += batch_size, ++batch_index) {
      const size_t m = std::min(batch_size, n - start);
      train_src.fill(order.data() + start, m,
                     static_cast<uint64_t>(epoch - 1), images, labels);
      if (policy.kind != data::AugmentPolicy::Kind::none)
        images = data::augment(images, policy, augment_rng);

      const Tensor<float> out = model->forward(images);
      const auto lo = compute_loss(loss_kind, out, labels);
      if (!std::isfinite(static_cast<double>(lo.value)))
        throw NumericError(
            "non-finite training loss at epoch " + std::to_string(epoch) +
            ", batch " + std::to_string(batch_index) + ", lr " +
            std::to_string(sched.current_lr()));
      train_loss_sum +=
          static_cast<double>(lo.value) * static_cast<double>(m);

      model->zero_grad();
      model->backward(lo.grad);
      step();
    }

    const EvalStats st = evaluate(*model, test_src, loss_kind, batch_size);

    EpochRow row;
    row.epoch = epoch;
    row.train_loss = train_loss_sum / static_cast<double>(n);
    row.test_loss = st.loss;
    row.top1 = st.top1;
    row.top5 = st.top5;
    row.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    result.report.rows.push_back(row);

    char line[200];
    std::snprintf(line, sizeof(line),
                  "epoch %3lld  train_loss %.6f  test_loss %.6f  top1 %.4f  "
                  "top5 %.4f  (%.1f s)",
                  static_cast<long long>(epoch), row.train_loss, row.test_loss,
                  row.top1, row.top5, row.seconds);
    say(line);
    if (!out_dir.empty())
      result.report.write_csv(out_dir + "/metrics.csv", zero_seconds);

    if (st.top1 > result.best_top1) {
      result.best_top1 = st.top1;
      result.best_epoch = epoch;
      Checkpoint cp;
      cp.model_name = cfg.str("model");
      cp.config_hash = cfg.hash();
      cp.epoch = epoch;
      cp.best_metric = st.top1;
      store_model(cp, *model);
      store_optimizer(cp, groups, sched);
      result.best = std::move(cp);
    } else if (epoch - result.best_epoch >= patience) {
      say("early stop: no test top-1 improvement for " +
          std::to_string(patience) + " epochs");
      break;
    }
  }

  char summary[120];
  std::snprintf(summary, sizeof(summary), "best top1 %.4f at epoch %lld",
                result.best_top1,
                static_cast<long long>(result.best_epoch));
  say(summary);
  if (!out_dir.empty())
    checkpoint_save(result.best, out_dir + "/model.wsnn");
  return result;
}

}  // namespace wsnn::harness
