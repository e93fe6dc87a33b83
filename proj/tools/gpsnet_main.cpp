#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "gpsnet/builtins.hpp"
#include "gpsnet/errors.hpp"
#include "gpsnet/gpsnet.hpp"
#include "gpsnet/gradcheck.hpp"
#include "gpsnet/graph_io.hpp"
#include "gpsnet/netspec.hpp"
#include "gpsnet/render.hpp"
#include "gpsnet/report.hpp"
#include "gpsnet/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gpsnet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;
constexpr std::size_t kForwardHeadChannels = 64;

struct Options {
  std::vector<std::string> builtins;
  std::vector<std::string> specs;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string format = "text";
  std::string shape;
  double step = 1e-3;
  double tol = 1e-4;
  std::size_t samples = 6;
  bool corrupt = false;
  std::string config;
  std::string checkpoint;
  std::size_t image_index = 0;
};

struct GraphInput {
  std::string label;
  GraphSpec graph;
  bool builtin = false;
};

// Builtins at analysis widths unless `in_ch` is given (runtime widths).
std::vector<GraphInput> load_inputs(const Options& o,
                                    std::optional<std::size_t> in_ch) {
  std::vector<GraphInput> out;
  for (const std::string& name : o.builtins) {
    const ChannelConfig ch = in_ch ? desk_channels(*in_ch) : analysis_channels();
    out.push_back({name, builtin_graph(name, ch), true});
  }
  for (const std::string& path : o.specs) {
    GraphSpec g = load_graph(path);
    require_valid(g);
    out.push_back({path, std::move(g), false});
  }
  return out;
}

GraphInput single_input(const Options& o, std::optional<std::size_t> in_ch) {
  if (o.builtins.size() + o.specs.size() != 1) {
    throw UsageError("exactly one of --builtin or --spec is required");
  }
  return load_inputs(o, in_ch).front();
}

Shape4 parse_shape(const std::string& text) {
  std::vector<std::size_t> dims;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    const std::string part = text.substr(pos, comma - pos);
    if (part.empty() ||
        part.find_first_not_of("0123456789") != std::string::npos) {
      throw UsageError(fmt::format("--shape '{}': expected n,c,h,w", text));
    }
    dims.push_back(std::stoul(part));
    pos = comma + 1;
  }
  if (dims.size() != 4 ||
      std::any_of(dims.begin(), dims.end(), [](auto d) { return d == 0; })) {
    throw UsageError(fmt::format("--shape '{}': expected four positive dims", text));
  }
  return Shape4{dims[0], dims[1], dims[2], dims[3]};
}

void require_format(const Options& o, std::initializer_list<const char*> allowed) {
  for (const char* f : allowed) {
    if (o.format == f) return;
  }
  std::string list;
  for (const char* f : allowed) list += (list.empty() ? "" : ", ") + std::string(f);
  throw UsageError(fmt::format("--format '{}' not supported here ({})", o.format, list));
}

// Outputs are assembled in memory and written only once everything succeeded.
void write_outputs(const std::string& dir, const std::vector<RenderedFile>& files) {
  if (dir.empty()) return;
  fs::create_directories(dir);
  for (const RenderedFile& f : files) {
    std::ofstream out(fs::path(dir) / f.name, std::ios::binary);
    out.write(f.bytes.data(), static_cast<std::streamsize>(f.bytes.size()));
    if (!out) throw Error(fmt::format("cannot write {}/{}", dir, f.name));
  }
}

std::string stem_of(const GraphInput& in) {
  if (in.builtin) return in.label;
  return fs::path(in.label).stem().string();
}

int cmd_analyze(const Options& o) {
  require_format(o, {"text", "json"});
  std::vector<AnalysisTarget> targets;
  if (o.builtins.empty() && o.specs.empty()) {
    for (const std::string& name : builtin_names()) {
      targets.push_back(builtin_target(name));
    }
  }
  for (const std::string& name : o.builtins) {
    if (!is_builtin(name)) {
      throw ConfigError(fmt::format("unknown builtin '{}'", name));
    }
    targets.push_back(builtin_target(name));
  }
  for (const std::string& path : o.specs) {
    GraphSpec g = load_graph(path);
    require_valid(g);
    targets.push_back(generic_target(std::move(g)));
  }
  const AnalysisReport report = analysis_report(targets);
  const std::string text = render_text(report);
  const std::string js = render_json(report);
  std::cout << (o.format == "json" ? js : text);
  write_outputs(o.out, {{"report.txt", text}, {"report.json", js}});
  return kExitOk;
}

int cmd_render(const Options& o) {
  if (o.format != "text") require_format(o, {"csv", "pgm"});
  if (o.out.empty()) throw UsageError("--out is required");
  const GraphInput in = single_input(o, std::nullopt);
  std::vector<RenderedFile> files;
  for (RenderedFile& f : render_samples(in.graph, stem_of(in))) {
    const bool csv = f.name.ends_with(".csv");
    if ((o.format == "csv" && !csv) || (o.format == "pgm" && csv)) continue;
    files.push_back(std::move(f));
  }
  for (const RenderedFile& f : files) std::cout << f.name << "\n";
  write_outputs(o.out, files);
  return kExitOk;
}

struct Stats {
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
};

Stats stats_of(std::span<const double> v) {
  Stats s;
  if (v.empty()) return s;
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  double total = 0.0;
  for (double x : v) total += x;
  s.mean = total / static_cast<double>(v.size());
  return s;
}

json stats_json(const Stats& s) {
  return {{"min", s.min}, {"mean", s.mean}, {"max", s.max}};
}

int cmd_forward(const Options& o) {
  require_format(o, {"text", "json"});
  const Shape4 shape = parse_shape(o.shape.empty() ? "1,8,17,17" : o.shape);
  const GraphInput in = single_input(o, shape.c);
  SuperNetModel model = SuperNetModel::create(in.graph, kForwardHeadChannels, o.seed);
  if (model.in_channels() != shape.c) {
    throw ShapeError(fmt::format("graph expects {} input channels, --shape has {}",
                                 model.in_channels(), shape.c));
  }
  Tape tape;
  Var x = tape.constant(random_tensor(shape, o.seed + 1));
  const SuperNetOutput out = supernet_forward(tape, model, x, ForwardContext{});
  const Tensor4& features = tape.value(out.features);
  if (!features.all_finite()) throw NumericalError("non-finite forward output");

  json gates = json::object();
  std::string text = fmt::format("graph {}\ninput {}\noutput {}\n", in.graph.name,
                                 shape.str(), features.shape().str());
  const Stats fs_ = stats_of(features.data());
  text += fmt::format("features min {:.6g} mean {:.6g} max {:.6g}\n", fs_.min,
                      fs_.mean, fs_.max);
  for (const auto& [id, m] : out.gate_masks) {
    const Stats v = stats_of(tape.value(m.mask_v).data());
    const Stats h = stats_of(tape.value(m.mask_h).data());
    text += fmt::format(
        "gate {} mask_v min {:.6g} mean {:.6g} max {:.6g} | mask_h min {:.6g} "
        "mean {:.6g} max {:.6g}\n",
        id, v.min, v.mean, v.max, h.min, h.mean, h.max);
    gates[id] = {{"mask_v", stats_json(v)}, {"mask_h", stats_json(h)}};
  }
  const Shape4 os = features.shape();
  json j = {{"graph", in.graph.name},
            {"input_shape", {shape.n, shape.c, shape.h, shape.w}},
            {"output_shape", {os.n, os.c, os.h, os.w}},
            {"features", stats_json(fs_)},
            {"gates", gates}};
  const std::string js = j.dump(2) + "\n";
  std::cout << (o.format == "json" ? js : text);
  write_outputs(o.out, {{"forward.txt", text}, {"forward.json", js}});
  return kExitOk;
}

int cmd_gradcheck(const Options& o) {
  require_format(o, {"text", "json"});
  const Shape4 shape = parse_shape(o.shape.empty() ? "1,4,9,9" : o.shape);
  const GraphInput in = single_input(o, shape.c);
  SuperNetModel model = SuperNetModel::create(in.graph, 8, o.seed);
  if (model.in_channels() != shape.c) {
    throw ShapeError(fmt::format("graph expects {} input channels, --shape has {}",
                                 model.in_channels(), shape.c));
  }
  GradcheckOptions opts;
  opts.step = o.step;
  opts.tol = o.tol;
  opts.samples_per_block = o.samples;
  opts.seed = o.seed;
  opts.corrupt = o.corrupt ? 0.01 : 0.0;
  const GradcheckReport r =
      gradcheck_model(model, random_tensor(shape, o.seed + 1), opts);

  std::string text;
  json blocks = json::array();
  for (const BlockCheck& b : r.blocks) {
    text += fmt::format("{} {} checked {} kinks {} max_rel_err {:.3e}\n",
                        b.pass ? "PASS" : "FAIL", b.name, b.checked,
                        b.skipped_kinks, b.max_rel_error);
    blocks.push_back({{"name", b.name},
                      {"checked", b.checked},
                      {"skipped_kinks", b.skipped_kinks},
                      {"max_rel_error", b.max_rel_error},
                      {"pass", b.pass}});
  }
  text += fmt::format("{} checked {} kinks {} max_rel_err {:.3e} tol {:.1e}\n",
                      r.pass ? "PASS" : "FAIL", r.checked, r.skipped_kinks,
                      r.max_rel_error, o.tol);
  json j = {{"graph", in.graph.name},
            {"blocks", blocks},
            {"max_rel_error", r.max_rel_error},
            {"tol", o.tol},
            {"step", o.step},
            {"pass", r.pass}};
  const std::string js = j.dump(2) + "\n";
  std::cout << (o.format == "json" ? js : text);
  write_outputs(o.out, {{"gradcheck.txt", text}, {"gradcheck.json", js}});
  return r.pass ? kExitOk : kExitNumerical;
}

int cmd_train(const Options& o) {
  if (o.out.empty()) throw UsageError("--out is required");
  TrainConfig cfg = o.config.empty() ? TrainConfig{} : load_train_config(o.config);
  if (o.seed_set) cfg.seed = o.seed;
  cfg.validate();
  SegmentationNet net = SegmentationNet::create(cfg);
  const ToyData data = make_datasets(cfg);
  const TrainResult result = train_toy(
      net, cfg, data.train, data.test, [&](const MetricRecord& r) {
        if ((r.iter + 1) % cfg.eval_interval == 0) {
          std::cerr << fmt::format("iter {} lr {:.6f} loss {:.6f} miou {:.4f}\n",
                                   r.iter + 1, r.lr, r.loss, r.miou);
        }
      });
  json evals = json::array();
  for (const auto& [iter, m] : result.test_miou) {
    evals.push_back({{"iter", iter}, {"miou", m}});
  }
  json summary = {{"final_test_miou", result.final_test_miou},
                  {"test_miou", evals},
                  {"iterations", cfg.max_iter}};
  std::cout << fmt::format("final held-out mIoU {:.4f}\n", result.final_test_miou);
  write_outputs(o.out, {{"config.json", serialize(cfg)},
                        {"metrics.jsonl", metrics_jsonl(result.history)},
                        {"summary.json", summary.dump(2) + "\n"},
                        {"checkpoint.bin", encode_checkpoint(net, cfg)}});
  return kExitOk;
}

int cmd_gates_dump(const Options& o) {
  if (o.checkpoint.empty()) throw UsageError("--checkpoint is required");
  if (o.out.empty()) throw UsageError("--out is required");
  LoadedCheckpoint ck = load_checkpoint(o.checkpoint);
  const ToyData data = make_datasets(ck.config);
  if (o.image_index >= data.test.images.size()) {
    throw UsageError(fmt::format("--image-index {} outside [0, {})", o.image_index,
                                 data.test.images.size()));
  }
  const std::size_t idx[1] = {o.image_index};
  Tape tape;
  Var x = tape.constant(stack_images(data.test, idx));
  const SegForward f =
      seg_forward(tape, ck.net, x, ForwardContext{BnMode::kEval, false});
  const std::size_t side = data.test.size;

  std::vector<RenderedFile> files;
  json masks = json::object();
  std::string text;
  for (const auto& [id, m] : f.head.gate_masks) {
    for (const auto& [tag, var] : {std::pair{"v", m.mask_v}, std::pair{"h", m.mask_h}}) {
      const Tensor4& t = tape.value(var);
      std::vector<double> plane(t.data().begin(), t.data().end());
      const Stats s = stats_of(plane);
      files.push_back({fmt::format("{}.{}.pgm", id, tag), plane_pgm(plane, side, side)});
      masks[id][std::string("mask_") + tag] = stats_json(s);
      text += fmt::format("gate {} mask_{} min {:.6g} mean {:.6g} max {:.6g}\n", id,
                          tag, s.min, s.mean, s.max);
    }
  }
  files.push_back({"image.pgm", plane_pgm(std::vector<double>(
                                              data.test.images[o.image_index].data().begin(),
                                              data.test.images[o.image_index].data().begin() +
                                                  static_cast<std::ptrdiff_t>(side * side)),
                                          side, side)});
  std::vector<double> labels(data.test.labels[o.image_index].begin(),
                             data.test.labels[o.image_index].end());
  files.push_back({"labels.pgm", plane_pgm(labels, side, side)});
  json j = {{"image_index", o.image_index}, {"masks", masks}};
  files.push_back({"masks.json", j.dump(2) + "\n"});
  std::cout << text;
  write_outputs(o.out, files);
  return kExitOk;
}

void add_graph_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--builtin", o.builtins,
                  "Builtin graph: aspp, denseaspp, supernet-untuned, "
                  "supernet-tuned, gps-untuned, gps-tuned");
  cmd->add_option("--spec", o.specs, "Graph spec JSON file");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GPS module runtime and receptive-field analyzer"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* cmd) {
    cmd->add_option("--out", o.out, "Output directory");
    cmd->add_option("--seed", o.seed, "Random seed")->each([&](const std::string&) {
      o.seed_set = true;
    });
    cmd->add_option("--format", o.format, "Output format: text, json, csv, pgm");
  };

  CLI::App* analyze = app.add_subcommand("analyze", "RF / SR / parameter report");
  add_graph_flags(analyze, o);
  common(analyze);

  CLI::App* render = app.add_subcommand("render-samples", "Dump sample positions");
  add_graph_flags(render, o);
  common(render);

  CLI::App* forward = app.add_subcommand("forward", "Run a forward pass");
  add_graph_flags(forward, o);
  common(forward);
  forward->add_option("--shape", o.shape, "Input shape n,c,h,w");

  CLI::App* grad = app.add_subcommand("gradcheck", "Analytic vs finite-difference gradients");
  add_graph_flags(grad, o);
  common(grad);
  grad->add_option("--shape", o.shape, "Input shape n,c,h,w");
  grad->add_option("--step", o.step, "Finite-difference step");
  grad->add_option("--tol", o.tol, "Max relative error");
  grad->add_option("--samples", o.samples, "Coordinates per parameter block");
  grad->add_flag("--corrupt-backward", o.corrupt, "Scale analytic gradients (negative control)");

  CLI::App* train = app.add_subcommand("train-toy", "Train on synthetic shapes");
  common(train);
  train->add_option("--config", o.config, "Training config JSON");

  CLI::App* gates = app.add_subcommand("gates-dump", "Dump gate masks of a checkpoint");
  common(gates);
  gates->add_option("--checkpoint", o.checkpoint, "Checkpoint file");
  gates->add_option("--image-index", o.image_index, "Held-out image index");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*analyze) return cmd_analyze(o);
    if (*render) return cmd_render(o);
    if (*forward) return cmd_forward(o);
    if (*grad) return cmd_gradcheck(o);
    if (*train) return cmd_train(o);
    if (*gates) return cmd_gates_dump(o);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ValidationError& e) {
    std::cerr << "invalid graph: " << e.what() << "\n";
    return kExitInput;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "fatal: " << e.what() << "\n";
    return 1;
  }
  return kExitInput;
}
