#include "gpsnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "gpsnet/builtins.hpp"
#include "gpsnet/errors.hpp"
#include "gpsnet/graph_io.hpp"
#include "gpsnet/optim.hpp"

namespace gpsnet {
namespace {

using nlohmann::json;

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("config.{}: {}", key, e.what()));
  }
}

void read_size(const json& j, const char* key, std::size_t& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_number_integer() || it->get<long long>() < 0) {
    throw ParseError(
        fmt::format("config.{}: expected a non-negative integer", key));
  }
  out = it->get<std::size_t>();
}

const std::vector<std::string> kConfigKeys{
    "base_lr",       "batch",          "branch_out_channels",
    "classes",       "crop",           "eval_interval",
    "graph",         "head_channels",  "max_iter",
    "momentum",      "ohem",           "ohem_min_keep",
    "ohem_threshold", "power",         "seed",
    "squeeze_channels", "stem_channels", "test_images",
    "train_images",  "weight_decay"};

void he_normal(Tensor4& w, std::mt19937_64& rng, double gain) {
  const Shape4 s = w.shape();
  const double fan_in = static_cast<double>(s.c * s.h * s.w);
  std::normal_distribution<double> dist(0.0, std::sqrt(gain / fan_in));
  for (double& v : w.data()) v = dist(rng);
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (!(ohem_threshold > 0.0 && ohem_threshold < 1.0)) {
    fail(fmt::format("ohem_threshold {} outside (0, 1)", ohem_threshold));
  }
  if (!(power > 0.0)) fail(fmt::format("power {} must be > 0", power));
  if (!(base_lr > 0.0)) fail(fmt::format("base_lr {} must be > 0", base_lr));
  if (max_iter < 1) fail(fmt::format("max_iter {} must be >= 1", max_iter));
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    fail(fmt::format("momentum {} outside [0, 1)", momentum));
  }
  if (!(weight_decay >= 0.0)) {
    fail(fmt::format("weight_decay {} must be >= 0", weight_decay));
  }
  if (batch < 1) fail("batch must be >= 1");
  if (crop < 4) fail(fmt::format("crop {} must be >= 4", crop));
  if (classes < 2) fail(fmt::format("classes {} must be >= 2", classes));
  if (classes > 8) fail(fmt::format("classes {} exceeds palette of 8", classes));
  if (train_images < 1 || test_images < 1) fail("image counts must be >= 1");
  if (eval_interval < 1) fail("eval_interval must be >= 1");
  if (stem_channels < 1 || squeeze_channels < 1 || branch_out_channels < 1 ||
      head_channels < 1) {
    fail("channel widths must be >= 1");
  }
  if (!graph_spec && !is_builtin(graph)) {
    fail(fmt::format("unknown builtin graph '{}'", graph));
  }
}

TrainConfig parse_train_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(fmt::format("config: {}", e.what()));
  }
  if (!j.is_object()) throw ParseError("config: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(kConfigKeys.begin(), kConfigKeys.end(), key) ==
        kConfigKeys.end()) {
      throw ParseError(fmt::format("config.{}: unknown key", key));
    }
  }
  TrainConfig cfg;
  read_field(j, "base_lr", cfg.base_lr);
  read_field(j, "power", cfg.power);
  read_field(j, "max_iter", cfg.max_iter);
  read_field(j, "weight_decay", cfg.weight_decay);
  read_field(j, "momentum", cfg.momentum);
  read_field(j, "ohem", cfg.ohem);
  read_field(j, "ohem_threshold", cfg.ohem_threshold);
  read_size(j, "ohem_min_keep", cfg.ohem_min_keep);
  read_size(j, "batch", cfg.batch);
  read_size(j, "crop", cfg.crop);
  read_field(j, "seed", cfg.seed);
  read_size(j, "stem_channels", cfg.stem_channels);
  read_size(j, "squeeze_channels", cfg.squeeze_channels);
  read_size(j, "branch_out_channels", cfg.branch_out_channels);
  read_size(j, "head_channels", cfg.head_channels);
  read_field(j, "classes", cfg.classes);
  read_size(j, "train_images", cfg.train_images);
  read_size(j, "test_images", cfg.test_images);
  read_field(j, "eval_interval", cfg.eval_interval);
  if (auto it = j.find("graph"); it != j.end()) {
    if (it->is_string()) {
      cfg.graph = it->get<std::string>();
    } else if (it->is_object()) {
      cfg.graph_spec = parse_graph(it->dump());
      cfg.graph = cfg.graph_spec->name;
    } else {
      throw ParseError("config.graph: expected a builtin name or a graph");
    }
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(fmt::format("cannot open config '{}'", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str());
}

std::string serialize(const TrainConfig& cfg) {
  json j = {
      {"base_lr", cfg.base_lr},
      {"power", cfg.power},
      {"max_iter", cfg.max_iter},
      {"weight_decay", cfg.weight_decay},
      {"momentum", cfg.momentum},
      {"ohem", cfg.ohem},
      {"ohem_threshold", cfg.ohem_threshold},
      {"ohem_min_keep", cfg.ohem_min_keep},
      {"batch", cfg.batch},
      {"crop", cfg.crop},
      {"seed", cfg.seed},
      {"stem_channels", cfg.stem_channels},
      {"squeeze_channels", cfg.squeeze_channels},
      {"branch_out_channels", cfg.branch_out_channels},
      {"head_channels", cfg.head_channels},
      {"classes", cfg.classes},
      {"train_images", cfg.train_images},
      {"test_images", cfg.test_images},
      {"eval_interval", cfg.eval_interval},
  };
  if (cfg.graph_spec) {
    j["graph"] = json::parse(serialize(*cfg.graph_spec));
  } else {
    j["graph"] = cfg.graph;
  }
  return j.dump(2) + "\n";
}

double poly_lr(const TrainConfig& cfg, int iter) {
  if (iter >= cfg.max_iter) return 0.0;
  const double t = static_cast<double>(std::max(iter, 0)) /
                   static_cast<double>(cfg.max_iter);
  return cfg.base_lr * std::pow(1.0 - t, cfg.power);
}

OhemSelection ohem_select(const Tensor4& true_class_prob,
                          std::span<const int> labels, int ignore_index,
                          double threshold, std::size_t min_keep) {
  if (labels.size() != true_class_prob.numel()) {
    throw ShapeError(fmt::format("ohem_select: {} labels for {} probabilities",
                                 labels.size(), true_class_prob.numel()));
  }
  OhemSelection sel;
  std::vector<std::size_t> labeled;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == ignore_index) continue;
    labeled.push_back(i);
    if (true_class_prob[i] < threshold) sel.selected.push_back(i);
  }
  sel.labeled = labeled.size();
  const std::size_t keep = std::min(min_keep, sel.labeled);
  if (sel.selected.size() >= keep) return sel;

  std::sort(labeled.begin(), labeled.end(), [&](std::size_t a, std::size_t b) {
    const double pa = true_class_prob[a];
    const double pb = true_class_prob[b];
    return pa < pb || (pa == pb && a < b);
  });
  sel.selected.assign(labeled.begin(),
                      labeled.begin() + static_cast<std::ptrdiff_t>(keep));
  std::sort(sel.selected.begin(), sel.selected.end());
  return sel;
}

OhemLoss ohem_loss(Tape& tape, Var logits, std::span<const int> labels,
                   double threshold, std::size_t min_keep, int ignore_index) {
  const Tensor4& z = tape.value(logits);
  const Shape4 s = z.shape();
  if (labels.size() != s.n * s.spatial()) {
    throw ShapeError(fmt::format("ohem_loss: {} labels for logits {}",
                                 labels.size(), s.str()));
  }
  const Tensor4 prob = softmax_channels(z);
  Tensor4 true_prob(Shape4{s.n, 1, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t p = 0; p < s.spatial(); ++p) {
      const std::size_t i = n * s.spatial() + p;
      const int label = labels[i];
      if (label == ignore_index) continue;
      if (label < 0 || static_cast<std::size_t>(label) >= s.c) {
        throw ConfigError(fmt::format("ohem_loss: label {} outside [0, {})",
                                      label, s.c));
      }
      true_prob[i] = prob[(n * s.c + static_cast<std::size_t>(label)) *
                              s.spatial() + p];
    }
  }
  OhemLoss out;
  out.selection = ohem_select(true_prob, labels, ignore_index, threshold,
                              min_keep);
  std::vector<int> masked(labels.size(), ignore_index);
  for (std::size_t i : out.selection.selected) masked[i] = labels[i];
  CrossEntropy ce = softmax_cross_entropy(tape, logits, masked, ignore_index);
  out.loss = ce.loss;
  out.no_labels = ce.all_ignored;
  return out;
}

ToyData make_datasets(const TrainConfig& cfg) {
  return ToyData{
      gen_synthetic_dataset(cfg.seed, cfg.train_images, cfg.crop, cfg.classes),
      gen_synthetic_dataset(cfg.seed + 0x7e57, cfg.test_images, cfg.crop,
                            cfg.classes)};
}

double miou(std::span<const int> pred, std::span<const int> labels,
            int classes, int ignore_index) {
  ConfusionMatrix cm(classes);
  cm.add(pred, labels, ignore_index);
  return cm.miou();
}

ConfusionMatrix::ConfusionMatrix(int classes)
    : classes_(classes),
      counts_(static_cast<std::size_t>(classes) *
                  static_cast<std::size_t>(classes),
              0) {
  if (classes < 1) throw ConfigError("ConfusionMatrix: classes must be >= 1");
}

void ConfusionMatrix::add(std::span<const int> pred,
                          std::span<const int> labels, int ignore_index) {
  if (pred.size() != labels.size()) {
    throw ShapeError(fmt::format("miou: {} predictions for {} labels",
                                 pred.size(), labels.size()));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == ignore_index) continue;
    const int t = labels[i];
    const int p = pred[i];
    if (t < 0 || t >= classes_ || p < 0 || p >= classes_) {
      throw ConfigError(fmt::format("miou: class id outside [0, {})", classes_));
    }
    ++counts_[static_cast<std::size_t>(t * classes_ + p)];
  }
}

std::size_t ConfusionMatrix::at(int truth, int predicted) const {
  return counts_[static_cast<std::size_t>(truth * classes_ + predicted)];
}

double ConfusionMatrix::miou() const {
  double total = 0.0;
  int present = 0;
  for (int c = 0; c < classes_; ++c) {
    std::size_t tp = at(c, c);
    std::size_t fp = 0;
    std::size_t fn = 0;
    for (int o = 0; o < classes_; ++o) {
      if (o == c) continue;
      fp += at(o, c);
      fn += at(c, o);
    }
    const std::size_t uni = tp + fp + fn;
    if (uni == 0) continue;
    total += static_cast<double>(tp) / static_cast<double>(uni);
    ++present;
  }
  return present == 0 ? 0.0 : total / present;
}

std::vector<int> argmax_channels(const Tensor4& logits) {
  const Shape4 s = logits.shape();
  std::vector<int> out(s.n * s.spatial(), 0);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t p = 0; p < s.spatial(); ++p) {
      std::size_t best = 0;
      double best_v = logits[n * s.c * s.spatial() + p];
      for (std::size_t c = 1; c < s.c; ++c) {
        const double v = logits[(n * s.c + c) * s.spatial() + p];
        if (v > best_v) {
          best_v = v;
          best = c;
        }
      }
      out[n * s.spatial() + p] = static_cast<int>(best);
    }
  }
  return out;
}

GraphSpec resolve_graph(const TrainConfig& cfg) {
  if (cfg.graph_spec) return *cfg.graph_spec;
  ChannelConfig ch = desk_channels(cfg.stem_channels);
  ch.squeeze = cfg.squeeze_channels;
  ch.branch_out = cfg.branch_out_channels;
  return builtin_graph(cfg.graph, ch);
}

SegmentationNet SegmentationNet::create(const TrainConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  ConvBnBlock stem = ConvBnBlock::make(3, cfg.stem_channels, 3, 1);
  init_block(stem, rng);
  SuperNetModel head =
      SuperNetModel::create(resolve_graph(cfg), cfg.head_channels, cfg.seed + 1);
  if (head.in_channels() != cfg.stem_channels) {
    throw ConfigError(fmt::format(
        "graph expects {} input channels, stem produces {}",
        head.in_channels(), cfg.stem_channels));
  }
  ConvParams classifier = make_conv(cfg.head_channels,
                                    static_cast<std::size_t>(cfg.classes), 1);
  he_normal(classifier.weight, rng, 1.0);
  return SegmentationNet{std::move(stem), std::move(head),
                         std::move(classifier)};
}

std::vector<NamedTensor> SegmentationNet::parameters() {
  std::vector<NamedTensor> out;
  collect_parameters("stem", stem, out);
  for (NamedTensor& t : head.parameters()) {
    out.push_back({"head." + t.name, t.tensor});
  }
  out.push_back({"classifier.weight", &classifier.weight});
  out.push_back({"classifier.bias", &classifier.bias});
  return out;
}

std::vector<NamedBuffer> SegmentationNet::buffers() {
  std::vector<NamedBuffer> out;
  collect_buffers("stem", stem, out);
  for (NamedBuffer& b : head.buffers()) {
    out.push_back({"head." + b.name, b.values});
  }
  return out;
}

SegForward seg_forward(Tape& tape, SegmentationNet& net, Var images,
                       const ForwardContext& ctx) {
  Var s = conv_bn_relu(tape, net.stem, images, ctx);
  SuperNetOutput head = supernet_forward(tape, net.head, s, ctx);
  Var logits = conv1x1(tape, head.features, net.classifier);
  return SegForward{logits, std::move(head)};
}

Tensor4 stack_images(const SyntheticDataset& data,
                     std::span<const std::size_t> indices) {
  const std::size_t plane = 3 * data.size * data.size;
  Tensor4 out(Shape4{indices.size(), 3, data.size, data.size});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const Tensor4& img = data.images.at(indices[b]);
    std::copy(img.data().begin(), img.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(b * plane));
  }
  return out;
}

std::vector<int> stack_labels(const SyntheticDataset& data,
                              std::span<const std::size_t> indices) {
  std::vector<int> out;
  out.reserve(indices.size() * data.size * data.size);
  for (std::size_t i : indices) {
    const auto& l = data.labels.at(i);
    out.insert(out.end(), l.begin(), l.end());
  }
  return out;
}

double evaluate(SegmentationNet& net, const SyntheticDataset& data) {
  ConfusionMatrix cm(data.classes);
  const ForwardContext ctx{BnMode::kEval, false};
  for (std::size_t i = 0; i < data.images.size(); ++i) {
    const std::size_t idx[1] = {i};
    Tape tape;
    Var x = tape.constant(stack_images(data, idx));
    SegForward f = seg_forward(tape, net, x, ctx);
    cm.add(argmax_channels(tape.value(f.logits)), data.labels[i]);
  }
  return cm.miou();
}

TrainResult train_toy(SegmentationNet& net, const TrainConfig& cfg,
                      const SyntheticDataset& train,
                      const SyntheticDataset& test,
                      const std::function<void(const MetricRecord&)>& on_record) {
  cfg.validate();
  if (train.images.empty()) throw ConfigError("train_toy: empty training set");
  if (train.classes != cfg.classes || test.classes != cfg.classes) {
    throw ConfigError("train_toy: dataset classes differ from config");
  }
  Sgd sgd(SgdOptions{cfg.momentum, cfg.weight_decay});
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train.images.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;

  TrainResult result;
  std::vector<NamedTensor> params = net.parameters();
  const ForwardContext ctx{BnMode::kTrain, true};
  for (int it = 0; it < cfg.max_iter; ++it) {
    std::vector<std::size_t> batch;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }
    const double lr = poly_lr(cfg, it);
    const std::vector<int> labels = stack_labels(train, batch);

    Tape tape;
    Var x = tape.constant(stack_images(train, batch));
    SegForward f = seg_forward(tape, net, x, ctx);
    Var loss;
    if (cfg.ohem) {
      loss = ohem_loss(tape, f.logits, labels, cfg.ohem_threshold,
                       cfg.ohem_min_keep)
                 .loss;
    } else {
      loss = softmax_cross_entropy(tape, f.logits, labels, kIgnoreLabel).loss;
    }
    const double loss_value = tape.value(loss).item();
    if (!std::isfinite(loss_value)) {
      throw NumericalError(
          fmt::format("non-finite loss {} at iteration {}", loss_value, it));
    }
    tape.backward(loss);
    for (NamedTensor& p : params) {
      std::optional<Tensor4> g = tape.grad_of(*p.tensor);
      if (!g) continue;
      sgd.step(p.name, *p.tensor, *g, lr);
    }

    MetricRecord rec;
    rec.iter = it;
    rec.lr = lr;
    rec.loss = loss_value;
    rec.miou = miou(argmax_channels(tape.value(f.logits)), labels, cfg.classes);
    result.history.push_back(rec);
    if (on_record) on_record(rec);

    if ((it + 1) % cfg.eval_interval == 0 || it + 1 == cfg.max_iter) {
      result.test_miou.emplace_back(it + 1, evaluate(net, test));
    }
  }
  result.final_test_miou = result.test_miou.back().second;
  return result;
}

std::string metrics_jsonl(const std::vector<MetricRecord>& history) {
  std::string out;
  for (const MetricRecord& r : history) {
    json j = {{"iter", r.iter}, {"lr", r.lr}, {"loss", r.loss}, {"miou", r.miou}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace gpsnet
