#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "affect/data_io.hpp"
#include "affect/errors.hpp"
#include "affect/mae.hpp"
#include "affect/parallel.hpp"
#include "affect/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace affect::cli {
namespace {

#ifndef AFFECT_VERSION
#define AFFECT_VERSION "0.0.0"
#endif

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

class Runner {
 public:
  Runner(std::string command, const std::vector<std::string>& args, std::ostream& out,
         std::ostream& err)
      : command_(std::move(command)), args_(args), out_(out), err_(err) {}

  void progress(const std::string& msg) const {
    err_ << json{{"cmd", command_}, {"msg", msg}}.dump() << '\n';
  }
  std::function<void(const std::string&)> progress_fn() const {
    return [this](const std::string& m) { progress(m); };
  }
  void emit(const json& j) const { out_ << j.dump(2) << '\n'; }

  void write_manifest(const fs::path& dir, const KeyValues& resolved, std::uint64_t seed) const {
    json cfg = json::object();
    for (const auto& [k, v] : resolved.entries()) cfg[k] = v;
    json manifest{
        {"command", command_},
        {"args", args_},
        {"seed", seed},
        {"config", cfg},
        {"versions",
         {{"affect", AFFECT_VERSION},
          {"compiler", __VERSION__},
          {"cplusplus", __cplusplus},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}},
        {"threads", max_threads()},
    };
    write_json(dir / "manifest.json", manifest);
  }

  static void write_json(const fs::path& path, const json& j) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path.string());
    f << j.dump(2) << '\n';
  }

 private:
  std::string command_;
  std::vector<std::string> args_;
  std::ostream& out_;
  std::ostream& err_;
};

// Options whose value lands in the config key=value map only when given on
// the command line, so precedence is defaults < --config < flags.
class Overlay {
 public:
  void add(CLI::App* app, const std::string& flag, const std::string& key,
           const std::string& shown_default, const std::string& help, const char* type = "FLOAT") {
    values_.push_back(shown_default);
    auto* opt = app->add_option(flag, values_.back(), help)->default_str(shown_default)->type_name(type);
    items_.push_back({opt, key, &values_.back()});
  }
  void apply(KeyValues& kv) const {
    for (const auto& it : items_)
      if (it.option->count() > 0) kv.set(it.key, *it.value);
  }

 private:
  struct Item {
    CLI::Option* option;
    std::string key;
    std::string* value;
  };
  std::deque<std::string> values_;
  std::vector<Item> items_;
};

void add_training_flags(CLI::App* app, Overlay& o) {
  o.add(app, "--lr", "lr", "3e-05", "Peak learning rate");
  o.add(app, "--weight-decay", "weight_decay", "1e-05", "AdamW decoupled weight decay");
  o.add(app, "--batch-size", "batch_size", "32", "Segments per batch", "INT");
  o.add(app, "--epochs", "epochs", "20", "Training epochs", "INT");
  o.add(app, "--dropout", "dropout", "0.3", "Dropout probability");
  o.add(app, "--window", "window", "300", "Segment window length in frames", "INT");
  o.add(app, "--stride", "stride", "200", "Segment stride in frames", "INT");
  o.add(app, "--grad-clip", "grad_clip", "1", "Global gradient-norm clip");
}

KeyValues base_config(const Globals& g) {
  KeyValues kv;
  if (!g.config.empty()) kv.merge(KeyValues::load(g.config));
  return kv;
}

fs::path out_dir(const Globals& g, const std::string& fallback) {
  fs::path dir = g.out.empty() ? fs::path(fallback) : fs::path(g.out);
  fs::create_directories(dir);
  return dir;
}

std::size_t feature_dim_of(const Dataset& data) {
  if (data.videos.empty()) throw ContractError("dataset has no videos");
  std::size_t d = data.videos.front().features.dim(1);
  for (const auto& v : data.videos)
    if (v.features.dim(1) != d) throw ContractError("videos disagree on feature width");
  return d;
}

TrainConfig resolve_train_config(KeyValues kv, const Globals& g, Task task, std::size_t feature_dim) {
  kv.set("task", task_name(task));
  kv.set("feature_dim", feature_dim);
  if (g.seed) kv.set("seed", static_cast<std::size_t>(*g.seed));
  return TrainConfig::from_keyvalues(kv);
}

fs::path annotation_root(const fs::path& dir) {
  return fs::is_directory(dir / "annotations") ? dir / "annotations" : dir;
}

// ---- gen-synthetic ----

struct GenArgs {
  std::size_t num_videos = 10, frames = 600, latent_dim = 4, feature_dim = 32, folds = 5;
  double noise_std = 0.1;
  bool render_frames = false;
  std::size_t image_size = 32;
};

int run_gen_synthetic(const Globals& g, const GenArgs& a, const Runner& r) {
  SyntheticSpec spec;
  spec.num_videos = a.num_videos;
  spec.frames_per_video = a.frames;
  spec.latent_dim = a.latent_dim;
  spec.feature_dim = a.feature_dim;
  spec.noise_std = a.noise_std;
  spec.seed = g.seed.value_or(7);
  if (g.out.empty()) throw ConfigError("gen-synthetic needs --out");
  fs::path dir = out_dir(g, "data");

  auto ds = generate_synthetic(spec);
  ds.data.folds = assign_folds(ds.data.ids(), a.folds, spec.seed);
  write_dataset(dir, ds.data);
  write_generator_json(dir / "generator.json", ds);
  r.progress("oracle " + ds.oracle.to_json().dump());

  if (a.render_frames) {
    SyntheticImageRenderer renderer(spec.latent_dim, a.image_size, a.image_size, spec.seed + 1);
    for (std::size_t v = 0; v < ds.data.videos.size(); ++v) {
      fs::path vdir = dir / "frames" / ds.data.videos[v].id;
      fs::create_directories(vdir);
      const auto& z = ds.truth.latents[v];
      for (std::size_t f = 0; f < z.rows; ++f) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%05zu.pgm", f);
        write_pnm(vdir / name, renderer.render(std::span<const double>(z.values.data() + f * z.cols, z.cols)));
      }
    }
    r.progress("rendered frames for " + std::to_string(ds.data.videos.size()) + " videos");
  }

  KeyValues resolved;
  resolved.set("num_videos", spec.num_videos);
  resolved.set("frames_per_video", spec.frames_per_video);
  resolved.set("latent_dim", spec.latent_dim);
  resolved.set("feature_dim", spec.feature_dim);
  resolved.set("noise_std", spec.noise_std);
  resolved.set("folds", a.folds);
  r.write_manifest(dir, resolved, spec.seed);
  r.emit({{"out", dir.string()}, {"videos", ds.data.videos.size()}, {"oracle", ds.oracle.to_json()}});
  return 0;
}

// ---- train ----

struct TrainArgs {
  std::string task;
  std::string data = "data";
  int val_fold = 0;
  bool no_clip = false;
};

int run_train(const Globals& g, const TrainArgs& a, const Overlay& overlay, const Runner& r) {
  const Task task = parse_task(a.task);
  KeyValues kv = base_config(g);
  overlay.apply(kv);
  if (a.no_clip) kv.set("grad_clip", 0.0);
  Dataset data = load_dataset(a.data);
  TrainConfig cfg = resolve_train_config(kv, g, task, feature_dim_of(data));
  fs::path dir = out_dir(g, "runs/train");

  auto folds = data.folds.empty() ? assign_folds(data.ids(), 5, cfg.seed) : data.folds;
  std::vector<std::string> train_ids, val_ids;
  for (const auto& v : data.videos) {
    auto it = folds.find(v.id);
    if (it == folds.end()) throw ContractError("video '" + v.id + "' has no fold");
    (it->second == a.val_fold ? val_ids : train_ids).push_back(v.id);
  }
  if (val_ids.empty()) throw ConfigError("validation fold " + std::to_string(a.val_fold) + " is empty");

  Rng init(cfg.seed);
  TemporalModel model(cfg.model, init);
  std::ofstream log(dir / "train_log.csv");
  if (!log) throw IoError("cannot write " + (dir / "train_log.csv").string());
  TrainHooks hooks{&log, r.progress_fn()};
  auto result = train_task(model, data.sequences(task, train_ids), data.sequences(task, val_ids), cfg, hooks);
  result.checkpoint.header.set("kind", std::string("temporal"));
  result.checkpoint.save(dir / "checkpoint.ckpt");

  json epochs = json::array();
  for (const auto& e : result.epochs) {
    json rec{{"epoch", e.epoch}, {"mean_loss", e.mean_loss}};
    if (e.validation) rec["validation"] = e.validation->to_json();
    epochs.push_back(rec);
  }
  json metrics{{"task", task_name(task)},
               {"val_fold", a.val_fold},
               {"train_videos", train_ids},
               {"val_videos", val_ids},
               {"best_epoch", result.best_epoch},
               {"best", result.best ? result.best->to_json() : json(nullptr)},
               {"epochs", epochs},
               {"diverged", result.diverged},
               {"checkpoint", (dir / "checkpoint.ckpt").string()}};
  if (result.diverged) metrics["divergence"] = result.divergence;
  Runner::write_json(dir / "metrics.json", metrics);
  KeyValues resolved;
  cfg.to_keyvalues(resolved);
  resolved.set("val_fold", std::to_string(a.val_fold));
  r.write_manifest(dir, resolved, cfg.seed);
  r.emit(metrics);
  return result.diverged ? 2 : 0;
}

// ---- predict ----

struct PredictArgs {
  std::string checkpoint;
  std::string data = "data";
  int fold = -1;
};

int run_predict(const Globals& g, const PredictArgs& a, const Runner& r) {
  auto ckpt = Checkpoint::load(a.checkpoint);
  if (ckpt.header.get_or("kind", "temporal") != "temporal") {
    throw ContractError(a.checkpoint + " is not a temporal model checkpoint");
  }
  TemporalModel model = load_model(ckpt);
  auto seg = checkpoint_segmentation(ckpt);
  const Task task = model.config().task;
  Dataset data = load_dataset(a.data);
  fs::path dir = out_dir(g, "runs/predict");

  std::vector<VideoPrediction> preds;
  for (const auto& v : data.videos) {
    if (a.fold >= 0) {
      auto it = data.folds.find(v.id);
      if (it == data.folds.end() || it->second != a.fold) continue;
    }
    FrameSequence seq;
    seq.video_id = v.id;
    seq.features = v.features;
    seq.labels.task = task;
    seq.labels.values.assign(v.frames() * task_label_width(task),
                             task == Task::VA ? kInvalidVa : static_cast<double>(kInvalidLabel));
    seq.valid.assign(v.frames(), false);
    preds.push_back({v.id, task, predict_sequence(model, seq, seg)});
    r.progress("predicted " + v.id);
  }
  if (preds.empty()) throw ConfigError("no videos selected for prediction");
  write_predictions(preds, dir);
  KeyValues resolved = ckpt.header;
  resolved.set("checkpoint", a.checkpoint);
  resolved.set("fold", std::to_string(a.fold));
  r.write_manifest(dir, resolved, 0);
  json ids = json::array();
  for (const auto& p : preds) ids.push_back(p.video_id);
  r.emit({{"task", task_name(task)}, {"videos", ids}, {"out", dir.string()}});
  return 0;
}

// ---- evaluate ----

struct EvalArgs {
  std::string task, pred, gold;
  bool per_video = false;
};

int run_evaluate(const EvalArgs& a, const Runner& r) {
  const Task task = parse_task(a.task);
  auto gold = load_annotation_dir(annotation_root(a.gold), task);
  auto pred = load_annotation_dir(annotation_root(a.pred), task);
  if (gold.empty()) throw ContractError("no gold " + task_name(task) + " annotations under " + a.gold);
  std::vector<ScoredFrames> videos;
  for (const auto& [id, labels] : gold) {
    auto it = pred.find(id);
    if (it == pred.end()) throw ContractError("no prediction for video '" + id + "'");
    if (it->second.frames() != labels.frames()) {
      throw ContractError("video '" + id + "': " + std::to_string(it->second.frames()) +
                          " predicted frames for " + std::to_string(labels.frames()) + " annotated");
    }
    videos.push_back({it->second.values, labels.values});
  }
  MetricReport report;
  if (a.per_video) {
    report = score_per_video(task, videos, true);
  } else {
    ScoredFrames all;
    for (auto& v : videos) {
      all.outputs.insert(all.outputs.end(), v.outputs.begin(), v.outputs.end());
      all.labels.insert(all.labels.end(), v.labels.begin(), v.labels.end());
    }
    report = score_frames(task, all, true);
  }
  r.progress("scored " + std::to_string(gold.size()) + " videos");
  json j = report.to_json();
  j["videos"] = gold.size();
  r.emit(j);
  return 0;
}

// ---- run-folds ----

struct FoldArgs {
  std::size_t k = 5;
  std::string tasks = "va,expr,au";
  std::string data = "data";
  bool no_clip = false;
};

int run_run_folds(const Globals& g, const FoldArgs& a, const Overlay& overlay, const Runner& r) {
  std::vector<Task> tasks;
  std::stringstream ss(a.tasks);
  for (std::string t; std::getline(ss, t, ',');)
    if (!t.empty()) tasks.push_back(parse_task(t));
  KeyValues kv = base_config(g);
  overlay.apply(kv);
  if (a.no_clip) kv.set("grad_clip", 0.0);
  Dataset data = load_dataset(a.data);
  TrainConfig cfg = resolve_train_config(kv, g, tasks.empty() ? Task::VA : tasks.front(), feature_dim_of(data));
  fs::path dir = out_dir(g, "runs/folds");

  TrainHooks hooks;
  hooks.progress = r.progress_fn();
  FoldTable table = run_folds(data, a.k, tasks, cfg, hooks);
  json j = table.to_json();
  Runner::write_json(dir / "folds_report.json", j);
  std::ofstream(dir / "folds_table.txt") << table.to_text();
  for (std::istringstream lines(table.to_text()); !lines.eof();) {
    std::string line;
    std::getline(lines, line);
    if (!line.empty()) r.progress(line);
  }
  KeyValues resolved;
  cfg.to_keyvalues(resolved);
  resolved.set("k", a.k);
  resolved.set("tasks", a.tasks);
  r.write_manifest(dir, resolved, cfg.seed);
  r.emit(j);
  return 0;
}

// ---- MAE commands ----

// Synthetic labelled images: class = argmax over (+z_j, -z_j) of a Gaussian
// latent with classes/2 dimensions.
struct ImageSet {
  std::vector<Tensor> images;
  std::vector<int> labels;
  std::vector<std::string> names;
};

ImageSet synthetic_images(std::size_t count, std::size_t size, std::size_t classes, std::uint64_t seed) {
  const std::size_t latent = std::max<std::size_t>(1, classes / 2);
  SyntheticImageRenderer renderer(latent, size, size, seed);
  Rng rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  ImageSet set;
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<double> z(latent);
    for (auto& v : z) v = unit(rng);
    std::size_t best = 0;
    double best_v = -1e300;
    for (std::size_t c = 0; c < std::min(classes, 2 * latent); ++c) {
      double s = (c % 2 == 0 ? 1.0 : -1.0) * z[c / 2];
      if (s > best_v) best_v = s, best = c;
    }
    set.images.push_back(renderer.render(z).to_tensor());
    set.labels.push_back(static_cast<int>(best));
    set.names.push_back("synthetic_" + std::to_string(i));
  }
  return set;
}

ImageSet image_dir(const fs::path& dir, bool need_labels) {
  ImageSet set;
  std::map<std::string, int> labels;
  if (fs::exists(dir / "labels.txt")) {
    std::ifstream in(dir / "labels.txt");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      auto comma = line.find(',');
      if (comma == std::string::npos) throw ParseError((dir / "labels.txt").string(), lineno, "expected file,class");
      try {
        labels[line.substr(0, comma)] = std::stoi(line.substr(comma + 1));
      } catch (const std::exception&) {
        throw ParseError((dir / "labels.txt").string(), lineno, "bad class id");
      }
    }
  } else if (need_labels) {
    throw IoError("fine-tuning needs " + (dir / "labels.txt").string());
  }
  for (auto& [name, img] : load_image_dir(dir)) {
    set.images.push_back(img.to_tensor());
    set.names.push_back(name);
    if (need_labels) {
      auto it = labels.find(name);
      if (it == labels.end()) throw ContractError("no label for image " + name);
      set.labels.push_back(it->second);
    }
  }
  if (set.images.empty()) throw ContractError("no .pgm/.ppm images in " + dir.string());
  return set;
}

MaeTrainConfig mae_train_config(const KeyValues& kv, MaeTrainConfig base, const std::string& prefix,
                                std::uint64_t seed) {
  base.optim.lr_peak = kv.get_double(prefix + "lr", base.optim.lr_peak);
  base.optim.batch_size = kv.get_size(prefix + "batch_size", base.optim.batch_size);
  base.optim.epochs = kv.get_size(prefix + "epochs", base.optim.epochs);
  base.optim.weight_decay = kv.get_double(prefix + "weight_decay", base.optim.weight_decay);
  base.max_steps = kv.get_size(prefix + "steps", base.max_steps);
  base.seed = seed;
  base.optim.validate();
  return base;
}

void write_loss_log(const fs::path& path, const std::vector<double>& losses) {
  std::ofstream log(path);
  if (!log) throw IoError("cannot write " + path.string());
  log << "step,loss\n";
  char buf[32];
  for (std::size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.9g", losses[i]);
    log << i + 1 << ',' << buf << '\n';
  }
}

json loss_summary(const std::vector<double>& losses) {
  if (losses.empty()) return {{"steps", 0}};
  std::size_t tail = std::min<std::size_t>(10, losses.size());
  double mean = 0.0;
  for (std::size_t i = losses.size() - tail; i < losses.size(); ++i) mean += losses[i] / static_cast<double>(tail);
  return {{"steps", losses.size()}, {"first_loss", losses.front()}, {"final_loss", losses.back()},
          {"smoothed_final_loss", mean}};
}

struct MaeArgs {
  std::string images;
  std::size_t num_images = 64;
  std::string checkpoint;
  std::size_t classes = 8, hidden = 64;
  std::string frames;
};

int run_pretrain_mae(const Globals& g, const MaeArgs& a, const Overlay& overlay, const Runner& r) {
  KeyValues kv = base_config(g);
  overlay.apply(kv);
  const std::uint64_t seed = g.seed.value_or(kv.get_size("seed", 0));
  ImageSet set;
  if (!a.images.empty()) {
    set = image_dir(a.images, false);
    kv.set("mae_image_height", set.images[0].dim(0));
    kv.set("mae_image_width", set.images[0].dim(1));
    kv.set("mae_channels", set.images[0].dim(2));
  } else {
    MaeConfig probe = MaeConfig::from_keyvalues(kv);
    if (probe.image_height != probe.image_width || probe.channels != 1) {
      throw ConfigError("synthetic images are square and single-channel");
    }
    set = synthetic_images(a.num_images, probe.image_height, 8, seed + 1);
  }
  MaeConfig mc = MaeConfig::from_keyvalues(kv);
  auto tc = mae_train_config(kv, MaeTrainConfig::pretraining(), "mae_", seed);
  fs::path dir = out_dir(g, "runs/mae");

  Rng init(seed);
  MaeModel model(mc, init);
  r.progress("pre-training on " + std::to_string(set.images.size()) + " images");
  auto losses = pretrain_mae(model, set.images, tc);
  KeyValues header;
  header.set("kind", std::string("mae"));
  mc.to_keyvalues(header);
  Checkpoint::capture(model, header).save(dir / "mae.ckpt");
  write_loss_log(dir / "pretrain_log.csv", losses);

  KeyValues resolved = header;
  resolved.set("mae_lr", tc.optim.lr_peak);
  resolved.set("mae_batch_size", tc.optim.batch_size);
  resolved.set("mae_epochs", tc.optim.epochs);
  resolved.set("mae_weight_decay", tc.optim.weight_decay);
  resolved.set("mae_steps", tc.max_steps);
  r.write_manifest(dir, resolved, seed);
  json j = loss_summary(losses);
  j["checkpoint"] = (dir / "mae.ckpt").string();
  r.emit(j);
  return 0;
}

MaeClassifier load_classifier(const Checkpoint& ckpt, const ClassifierHeadConfig& fallback_head, Rng& rng) {
  MaeConfig mc = MaeConfig::from_keyvalues(ckpt.header);
  const std::string kind = ckpt.header.get_or("kind", "");
  if (kind == "mae") {
    MaeModel model(mc, rng);
    ckpt.restore(model);
    return finetune_head_swap(model, fallback_head, rng);
  }
  if (kind == "mae_classifier") {
    ClassifierHeadConfig head;
    head.hidden = ckpt.header.get_size("cls_hidden", head.hidden);
    head.classes = ckpt.header.get_size("cls_classes", head.classes);
    MaeClassifier cls(mc, head, rng);
    ckpt.restore(cls);
    return cls;
  }
  throw ContractError("checkpoint kind '" + kind + "' is not an MAE checkpoint");
}

int run_finetune_mae(const Globals& g, const MaeArgs& a, const Overlay& overlay, const Runner& r) {
  KeyValues kv = base_config(g);
  overlay.apply(kv);
  const std::uint64_t seed = g.seed.value_or(kv.get_size("seed", 0));
  auto ckpt = Checkpoint::load(a.checkpoint);
  if (ckpt.header.get_or("kind", "") != "mae") throw ContractError(a.checkpoint + " is not a pre-trained MAE checkpoint");
  MaeConfig mc = MaeConfig::from_keyvalues(ckpt.header);
  ImageSet set = a.images.empty() ? synthetic_images(a.num_images, mc.image_height, a.classes, seed + 2)
                                  : image_dir(a.images, true);
  for (int l : set.labels)
    if (l < 0 || l >= static_cast<int>(a.classes)) throw ConfigError("image label outside [0, classes)");
  ClassifierHeadConfig head{a.hidden, a.classes, 0.0};
  Rng rng(seed);
  MaeClassifier cls = load_classifier(ckpt, head, rng);
  auto tc = mae_train_config(kv, MaeTrainConfig::finetuning(), "ft_", seed);
  fs::path dir = out_dir(g, "runs/mae");

  r.progress("fine-tuning on " + std::to_string(set.images.size()) + " images");
  auto losses = finetune_classifier(cls, set.images, set.labels, tc);
  std::size_t correct = 0;
  {
    NoGradGuard guard;
    Tensor logits = cls.forward(set.images, nn::RunMode::eval());
    for (std::size_t i = 0; i < set.labels.size(); ++i) {
      const double* row = logits.data().data() + i * a.classes;
      int pred = static_cast<int>(std::max_element(row, row + a.classes) - row);
      correct += pred == set.labels[i];
    }
  }
  KeyValues header;
  header.set("kind", std::string("mae_classifier"));
  mc.to_keyvalues(header);
  header.set("cls_hidden", a.hidden);
  header.set("cls_classes", a.classes);
  Checkpoint::capture(cls, header).save(dir / "classifier.ckpt");
  write_loss_log(dir / "finetune_log.csv", losses);

  KeyValues resolved = header;
  resolved.set("ft_lr", tc.optim.lr_peak);
  resolved.set("ft_batch_size", tc.optim.batch_size);
  resolved.set("ft_epochs", tc.optim.epochs);
  resolved.set("ft_steps", tc.max_steps);
  resolved.set("source_checkpoint", a.checkpoint);
  r.write_manifest(dir, resolved, seed);
  json j = loss_summary(losses);
  j["train_accuracy"] = static_cast<double>(correct) / static_cast<double>(set.labels.size());
  j["checkpoint"] = (dir / "classifier.ckpt").string();
  r.emit(j);
  return 0;
}

int run_extract_features(const Globals& g, const MaeArgs& a, const Runner& r) {
  auto ckpt = Checkpoint::load(a.checkpoint);
  Rng rng(g.seed.value_or(0));
  MaeClassifier cls = load_classifier(ckpt, {a.hidden, a.classes, 0.0}, rng);
  if (a.frames.empty()) throw ConfigError("extract-features needs --frames");
  std::vector<fs::path> videos;
  for (const auto& e : fs::directory_iterator(a.frames))
    if (e.is_directory()) videos.push_back(e.path());
  std::sort(videos.begin(), videos.end());
  if (videos.empty()) throw ContractError("no per-video frame directories under " + a.frames);
  fs::path dir = out_dir(g, "runs/features");
  fs::create_directories(dir / "features");
  json ids = json::array();
  for (const auto& v : videos) {
    std::vector<Tensor> frames;
    for (auto& [name, img] : load_image_dir(v)) frames.push_back(img.to_tensor());
    if (frames.empty()) throw ContractError("no frames in " + v.string());
    save_tensor(dir / "features" / (v.filename().string() + ".bin"), extract_features(cls, frames));
    ids.push_back(v.filename().string());
    r.progress("features for " + v.filename().string() + ": " + std::to_string(frames.size()) + " frames");
  }
  KeyValues resolved = ckpt.header;
  resolved.set("checkpoint", a.checkpoint);
  resolved.set("frames", a.frames);
  r.write_manifest(dir, resolved, g.seed.value_or(0));
  r.emit({{"videos", ids}, {"feature_dim", cls.encoder().width()}, {"out", (dir / "features").string()}});
  return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Continuous emotion recognition: MAE features, TCN + transformer temporal model"};
  app.name("affect");
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(AFFECT_VERSION));

  Globals g;
  std::uint64_t seed_value = 0;
  std::vector<CLI::Option*> seed_opts;
  auto add_globals = [&](CLI::App* sub) {
    sub->add_option("--config", g.config, "key=value config file (flags override it)")
        ->check(CLI::ExistingFile);
    seed_opts.push_back(sub->add_option("--seed", seed_value, "Random seed"));
    sub->add_option("--out", g.out, "Output directory");
  };

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen-synthetic", "Generate a synthetic dataset with oracle scores");
  add_globals(c_gen);
  c_gen->add_option("--num-videos", gen.num_videos, "Videos")->capture_default_str();
  c_gen->add_option("--frames", gen.frames, "Frames per video")->capture_default_str();
  c_gen->add_option("--latent-dim", gen.latent_dim, "Latent dimension")->capture_default_str();
  c_gen->add_option("--feature-dim", gen.feature_dim, "Feature dimension")->capture_default_str();
  c_gen->add_option("--noise-std", gen.noise_std, "Feature noise std")->capture_default_str();
  c_gen->add_option("--folds", gen.folds, "Folds written to folds.txt")->capture_default_str();
  c_gen->add_flag("--render-frames", gen.render_frames, "Also render per-frame images under frames/");
  c_gen->add_option("--image-size", gen.image_size, "Rendered frame size")->capture_default_str();

  TrainArgs train;
  Overlay train_overlay;
  auto* c_train = app.add_subcommand("train", "Train the temporal model on one task");
  add_globals(c_train);
  c_train->add_option("--task", train.task, "va, expr or au")->required();
  c_train->add_option("--data", train.data, "Dataset root")->capture_default_str();
  c_train->add_option("--val-fold", train.val_fold, "Held-out fold")->capture_default_str();
  add_training_flags(c_train, train_overlay);
  c_train->add_flag("--no-grad-clip", train.no_clip, "Disable gradient clipping");

  PredictArgs predict;
  auto* c_predict = app.add_subcommand("predict", "Write per-frame predictions for a dataset");
  add_globals(c_predict);
  c_predict->add_option("--checkpoint", predict.checkpoint, "Temporal model checkpoint")->required();
  c_predict->add_option("--data", predict.data, "Dataset root")->capture_default_str();
  c_predict->add_option("--fold", predict.fold, "Only videos of this fold (-1: all)")->capture_default_str();

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("evaluate", "Score prediction files against annotations");
  add_globals(c_eval);
  c_eval->add_option("--task", eval.task, "va, expr or au")->required();
  c_eval->add_option("--pred", eval.pred, "Prediction directory")->required();
  c_eval->add_option("--gold", eval.gold, "Annotation directory")->required();
  c_eval->add_flag("--per-video", eval.per_video, "Average VA CCC per video instead of over all frames");

  FoldArgs folds;
  Overlay fold_overlay;
  auto* c_folds = app.add_subcommand("run-folds", "k-fold cross validation report");
  add_globals(c_folds);
  c_folds->add_option("--k", folds.k, "Folds")->capture_default_str();
  c_folds->add_option("--tasks", folds.tasks, "Comma-separated tasks")->capture_default_str();
  c_folds->add_option("--data", folds.data, "Dataset root")->capture_default_str();
  add_training_flags(c_folds, fold_overlay);
  c_folds->add_flag("--no-grad-clip", folds.no_clip, "Disable gradient clipping");

  MaeArgs mae;
  Overlay pre_overlay;
  auto* c_pre = app.add_subcommand("pretrain-mae", "Masked-autoencoder pre-training");
  add_globals(c_pre);
  c_pre->add_option("--images", mae.images, "Directory of .pgm/.ppm images (default: synthetic)");
  c_pre->add_option("--num-images", mae.num_images, "Synthetic images")->capture_default_str();
  pre_overlay.add(c_pre, "--patch-size", "mae_patch", "16", "Patch size", "INT");
  pre_overlay.add(c_pre, "--mask-ratio", "mae_mask_ratio", "0.75", "Masked patch fraction");
  pre_overlay.add(c_pre, "--lr", "mae_lr", "0.0005", "Peak learning rate");
  pre_overlay.add(c_pre, "--batch-size", "mae_batch_size", "1024", "Images per batch", "INT");
  pre_overlay.add(c_pre, "--epochs", "mae_epochs", "500", "Epochs", "INT");
  pre_overlay.add(c_pre, "--weight-decay", "mae_weight_decay", "1e-05", "AdamW weight decay");
  pre_overlay.add(c_pre, "--steps", "mae_steps", "0", "Stop after this many steps (0: no cap)", "INT");

  Overlay ft_overlay;
  auto* c_ft = app.add_subcommand("finetune-mae", "Replace the decoder with a classifier head and fine-tune");
  add_globals(c_ft);
  c_ft->add_option("--checkpoint", mae.checkpoint, "Pre-trained MAE checkpoint")->required();
  c_ft->add_option("--images", mae.images, "Image directory with labels.txt (default: synthetic)");
  c_ft->add_option("--num-images", mae.num_images, "Synthetic images")->capture_default_str();
  c_ft->add_option("--classes", mae.classes, "Classes")->capture_default_str();
  c_ft->add_option("--hidden", mae.hidden, "Head hidden width")->capture_default_str();
  ft_overlay.add(c_ft, "--lr", "ft_lr", "0.0001", "Peak learning rate");
  ft_overlay.add(c_ft, "--batch-size", "ft_batch_size", "256", "Images per batch", "INT");
  ft_overlay.add(c_ft, "--epochs", "ft_epochs", "20", "Epochs", "INT");
  ft_overlay.add(c_ft, "--steps", "ft_steps", "0", "Stop after this many steps (0: no cap)", "INT");

  auto* c_ext = app.add_subcommand("extract-features", "Pooled encoder features per frame");
  add_globals(c_ext);
  c_ext->add_option("--checkpoint", mae.checkpoint, "MAE or classifier checkpoint")->required();
  c_ext->add_option("--frames", mae.frames, "Directory with one image folder per video")->required();

  std::vector<std::string> argv_store{"affect"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return 1;
  }
  for (auto* o : seed_opts)
    if (o->count() > 0) g.seed = seed_value;

  auto* sub = app.get_subcommands().front();
  Runner runner(sub->get_name(), args, out, err);
  try {
    if (sub == c_gen) return run_gen_synthetic(g, gen, runner);
    if (sub == c_train) return run_train(g, train, train_overlay, runner);
    if (sub == c_predict) return run_predict(g, predict, runner);
    if (sub == c_eval) return run_evaluate(eval, runner);
    if (sub == c_folds) return run_run_folds(g, folds, fold_overlay, runner);
    if (sub == c_pre) return run_pretrain_mae(g, mae, pre_overlay, runner);
    if (sub == c_ft) return run_finetune_mae(g, mae, ft_overlay, runner);
    if (sub == c_ext) return run_extract_features(g, mae, runner);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace affect::cli
