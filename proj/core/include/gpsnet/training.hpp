#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gpsnet/gpsnet.hpp"
#include "gpsnet/netspec.hpp"
#include "gpsnet/ops.hpp"
#include "gpsnet/tape.hpp"

namespace gpsnet {

inline constexpr int kIgnoreLabel = 255;

struct TrainConfig {
  // Optimisation.
  double base_lr = 0.01;
  double power = 0.9;
  int max_iter = 2000;
  double weight_decay = 0.0005;
  double momentum = 0.9;
  bool ohem = true;
  double ohem_threshold = 0.7;
  std::size_t ohem_min_keep = 100000;
  std::size_t batch = 2;
  std::size_t crop = 24;
  std::uint64_t seed = 0;

  // Model: a builtin graph name, or an inline graph when graph_spec is set.
  std::string graph = "gps-tuned";
  std::optional<GraphSpec> graph_spec;
  std::size_t stem_channels = 16;
  std::size_t squeeze_channels = 64;
  std::size_t branch_out_channels = 128;
  std::size_t head_channels = 64;

  // Synthetic data.
  int classes = 4;
  std::size_t train_images = 64;
  std::size_t test_images = 16;
  int eval_interval = 100;

  // Throws ConfigError when an invariant does not hold.
  void validate() const;
};

TrainConfig parse_train_config(std::string_view json_text);
TrainConfig load_train_config(const std::string& path);
// Canonical JSON, sorted keys.
std::string serialize(const TrainConfig& cfg);

// base_lr * (1 - iter / max_iter)^power, clamped to 0 past max_iter.
double poly_lr(const TrainConfig& cfg, int iter);

struct OhemSelection {
  std::vector<std::size_t> selected;  // ascending pixel indices
  std::size_t labeled = 0;
};

// Pixels whose true-class probability is below `threshold`; when fewer than
// min_keep, the hardest remaining pixels (lowest probability, then lowest
// index) are added until min(min_keep, labeled) are selected.
OhemSelection ohem_select(const Tensor4& true_class_prob,
                          std::span<const int> labels, int ignore_index,
                          double threshold, std::size_t min_keep);

struct OhemLoss {
  Var loss;
  OhemSelection selection;
  bool no_labels = false;  // loss defined as 0
};

OhemLoss ohem_loss(Tape& tape, Var logits, std::span<const int> labels,
                   double threshold, std::size_t min_keep,
                   int ignore_index = kIgnoreLabel);

// Images are (1, 3, size, size); labels hold size*size class ids.
struct SyntheticDataset {
  std::size_t size = 0;
  int classes = 0;
  std::vector<Tensor4> images;
  std::vector<std::vector<int>> labels;
};

// Rectangles and discs of class-specific colour over a textured background
// (class 0). Pure function of its arguments.
SyntheticDataset gen_synthetic_dataset(std::uint64_t seed,
                                       std::size_t n_images, std::size_t size,
                                       int n_classes);

struct ToyData {
  SyntheticDataset train;
  SyntheticDataset test;
};

// Train and held-out sets for a config (disjoint seeds).
ToyData make_datasets(const TrainConfig& cfg);

// Mean over classes of |pred ∩ gt| / |pred ∪ gt|, skipping classes absent
// from both. Pixels labelled ignore_index are skipped.
double miou(std::span<const int> pred, std::span<const int> labels,
            int classes, int ignore_index = kIgnoreLabel);

// Confusion matrix accumulator for dataset-level mIoU.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes);
  void add(std::span<const int> pred, std::span<const int> labels,
           int ignore_index = kIgnoreLabel);
  double miou() const;
  std::size_t at(int truth, int predicted) const;

 private:
  int classes_;
  std::vector<std::size_t> counts_;
};

// Argmax over channels; returns n*h*w labels.
std::vector<int> argmax_channels(const Tensor4& logits);

// stem (3x3 conv-BN-ReLU) -> GPS head -> 1x1 classifier.
struct SegmentationNet {
  ConvBnBlock stem;
  SuperNetModel head;
  ConvParams classifier;

  static SegmentationNet create(const TrainConfig& cfg);

  std::vector<NamedTensor> parameters();
  std::vector<NamedBuffer> buffers();
};

GraphSpec resolve_graph(const TrainConfig& cfg);

struct SegForward {
  Var logits;
  SuperNetOutput head;
};

SegForward seg_forward(Tape& tape, SegmentationNet& net, Var images,
                       const ForwardContext& ctx);

// Stacks dataset images [indices] into one batch.
Tensor4 stack_images(const SyntheticDataset& data,
                     std::span<const std::size_t> indices);
std::vector<int> stack_labels(const SyntheticDataset& data,
                              std::span<const std::size_t> indices);

struct MetricRecord {
  int iter = 0;
  double lr = 0.0;
  double loss = 0.0;
  double miou = 0.0;  // on the training batch
};

struct TrainResult {
  std::vector<MetricRecord> history;
  std::vector<std::pair<int, double>> test_miou;  // (iter, held-out mIoU)
  double final_test_miou = 0.0;
};

// Held-out mIoU in eval mode.
double evaluate(SegmentationNet& net, const SyntheticDataset& data);

// SGD with poly LR and (optionally) OHEM. Throws NumericalError on a
// non-finite loss, naming the iteration. `on_record` sees every record.
TrainResult train_toy(SegmentationNet& net, const TrainConfig& cfg,
                      const SyntheticDataset& train,
                      const SyntheticDataset& test,
                      const std::function<void(const MetricRecord&)>&
                          on_record = {});

// One JSON object per line: {"iter","loss","lr","miou"}.
std::string metrics_jsonl(const std::vector<MetricRecord>& history);

// Binary checkpoint: "GPSNETCK", u32 version, u32 config length, config JSON,
// u32 entry count, then per entry u32 name length, name, u32 rank (4),
// 4 x u64 dims, little-endian doubles. Entries sorted by name.
std::string encode_checkpoint(SegmentationNet& net, const TrainConfig& cfg);

struct LoadedCheckpoint {
  TrainConfig config;
  SegmentationNet net;
};

LoadedCheckpoint decode_checkpoint(std::string_view bytes);
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace gpsnet
