#include "affect/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "affect/errors.hpp"
#include "affect/objectives.hpp"
#include "affect/serialize.hpp"

namespace fs = std::filesystem;

namespace affect {

bool Video::has(Task task) const {
  switch (task) {
    case Task::VA: return va.has_value();
    case Task::Expr: return expr.has_value();
    case Task::AU: return au.has_value();
  }
  return false;
}

const TaskLabels& Video::labels(Task task) const {
  if (!has(task)) throw ContractError("video '" + id + "' has no " + task_name(task) + " labels");
  switch (task) {
    case Task::VA: return *va;
    case Task::Expr: return *expr;
    case Task::AU: return *au;
  }
  return *va;
}

void Video::set_labels(TaskLabels labels) {
  switch (labels.task) {
    case Task::VA: va = std::move(labels); break;
    case Task::Expr: expr = std::move(labels); break;
    case Task::AU: au = std::move(labels); break;
  }
}

FrameSequence make_sequence(const Video& video, Task task) {
  FrameSequence seq;
  seq.video_id = video.id;
  seq.features = video.features;
  seq.labels = video.labels(task);
  seq.valid = seq.labels.validity();
  seq.validate();
  return seq;
}

const Video& Dataset::video(const std::string& id) const {
  for (const auto& v : videos)
    if (v.id == id) return v;
  throw ContractError("unknown video '" + id + "'");
}

std::vector<std::string> Dataset::ids() const {
  std::vector<std::string> out;
  for (const auto& v : videos) out.push_back(v.id);
  return out;
}

std::vector<FrameSequence> Dataset::sequences(Task task, const std::vector<std::string>& ids) const {
  std::vector<FrameSequence> out;
  for (const auto& v : videos) {
    if (!ids.empty() && std::find(ids.begin(), ids.end(), v.id) == ids.end()) continue;
    if (v.has(task)) out.push_back(make_sequence(v, task));
  }
  return out;
}

std::string annotation_header(Task task) {
  std::string h;
  switch (task) {
    case Task::VA: return "valence,arousal";
    case Task::Expr:
      for (std::size_t i = 0; i < kExprNames.size(); ++i) h += (i ? "," : "") + std::string(kExprNames[i]);
      return h;
    case Task::AU:
      for (std::size_t i = 0; i < kAuNames.size(); ++i) h += (i ? "," : "") + std::string(kAuNames[i]);
      return h;
  }
  return h;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto b = item.find_first_not_of(" \t\r");
    auto e = item.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : item.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& field, const std::string& source, std::size_t line) {
  try {
    std::size_t used = 0;
    double v = std::stod(field, &used);
    if (used != field.size()) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw ParseError(source, line, "'" + field + "' is not a number");
  }
}

int parse_int(const std::string& field, const std::string& source, std::size_t line) {
  double v = parse_number(field, source, line);
  if (v != std::floor(v)) throw ParseError(source, line, "'" + field + "' is not an integer");
  return static_cast<int>(v);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

TaskLabels parse_annotation(std::istream& in, Task task, const std::string& source) {
  TaskLabels labels;
  labels.task = task;
  const std::size_t width = task_label_width(task);
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError(source, 1, "missing header line");
  ++lineno;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto fields = split_fields(line);
    if (fields.size() != width) {
      throw ParseError(source, lineno, "expected " + std::to_string(width) + " fields, got " +
                                           std::to_string(fields.size()));
    }
    if (task == Task::VA) {
      double v = parse_number(fields[0], source, lineno);
      double a = parse_number(fields[1], source, lineno);
      bool invalid = v == kInvalidVa || a == kInvalidVa;
      if (!invalid && (v < -1.0 || v > 1.0 || a < -1.0 || a > 1.0)) {
        throw ParseError(source, lineno, "valence/arousal outside [-1, 1]");
      }
      labels.values.push_back(invalid ? kInvalidVa : v);
      labels.values.push_back(invalid ? kInvalidVa : a);
    } else if (task == Task::Expr) {
      int c = parse_int(fields[0], source, lineno);
      if (c != kInvalidLabel && (c < 0 || c >= static_cast<int>(kExprClasses))) {
        throw ParseError(source, lineno, "expression class " + std::to_string(c) + " outside 0..7");
      }
      labels.values.push_back(c);
    } else {
      for (const auto& f : fields) {
        int b = parse_int(f, source, lineno);
        if (b != kInvalidLabel && b != 0 && b != 1) {
          throw ParseError(source, lineno, "action unit value " + std::to_string(b) + " is not 0, 1 or -1");
        }
        labels.values.push_back(b);
      }
    }
  }
  return labels;
}

TaskLabels read_annotation_file(const fs::path& path, Task task) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open annotation file " + path.string());
  return parse_annotation(in, task, path.string());
}

void write_annotation_file(const fs::path& path, const TaskLabels& labels) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << annotation_header(labels.task) << '\n';
  const std::size_t width = task_label_width(labels.task);
  for (std::size_t f = 0; f < labels.frames(); ++f) {
    for (std::size_t c = 0; c < width; ++c) {
      if (c) out << ',';
      double v = labels.at(f, c);
      if (labels.task == Task::VA) {
        out << fmt(v);
      } else {
        out << static_cast<int>(v);
      }
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::map<std::string, TaskLabels> load_annotation_dir(const fs::path& root, Task task) {
  fs::path dir = root / task_dir_name(task);
  if (!fs::is_directory(dir)) throw IoError("missing annotation directory " + dir.string());
  std::map<std::string, TaskLabels> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
    out.emplace(entry.path().stem().string(), read_annotation_file(entry.path(), task));
  }
  return out;
}

std::vector<FrameSequence> load_annotations(const fs::path& root, Task task) {
  std::vector<FrameSequence> out;
  for (auto& [id, labels] : load_annotation_dir(root / "annotations", task)) {
    Video v;
    v.id = id;
    v.features = load_tensor(root / "features" / (id + ".bin"));
    if (v.features.rank() != 2 || v.features.dim(0) != labels.frames()) {
      throw ContractError("video '" + id + "': features " + shape_str(v.features.shape()) +
                          " do not match " + std::to_string(labels.frames()) + " annotated frames");
    }
    v.set_labels(std::move(labels));
    out.push_back(make_sequence(v, task));
  }
  return out;
}

void write_folds(const fs::path& path, const std::map<std::string, int>& folds) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& [id, fold] : folds) out << id << ',' << fold << '\n';
}

std::map<std::string, int> read_folds(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open folds file " + path.string());
  std::map<std::string, int> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fields = split_fields(line);
    if (fields.size() != 2) throw ParseError(path.string(), lineno, "expected video_id,fold");
    int fold = parse_int(fields[1], path.string(), lineno);
    if (fold < 0) throw ParseError(path.string(), lineno, "fold must be >= 0");
    out[fields[0]] = fold;
  }
  return out;
}

std::map<std::string, int> assign_folds(std::vector<std::string> ids, std::size_t k,
                                        std::uint64_t seed) {
  if (k < 1) throw ConfigError("fold count must be >= 1");
  if (ids.size() < k) {
    throw ConfigError(std::to_string(ids.size()) + " videos cannot fill " + std::to_string(k) +
                      " folds");
  }
  std::sort(ids.begin(), ids.end());
  Rng rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  std::map<std::string, int> out;
  for (std::size_t i = 0; i < ids.size(); ++i) out[ids[i]] = static_cast<int>(i % k);
  return out;
}

void write_dataset(const fs::path& root, const Dataset& data) {
  fs::create_directories(root / "features");
  for (Task t : {Task::VA, Task::Expr, Task::AU}) {
    bool any = std::any_of(data.videos.begin(), data.videos.end(), [&](auto& v) { return v.has(t); });
    if (any) fs::create_directories(root / "annotations" / task_dir_name(t));
  }
  for (const auto& v : data.videos) {
    save_tensor(root / "features" / (v.id + ".bin"), v.features);
    for (Task t : {Task::VA, Task::Expr, Task::AU}) {
      if (v.has(t)) {
        write_annotation_file(root / "annotations" / task_dir_name(t) / (v.id + ".txt"), v.labels(t));
      }
    }
  }
  if (!data.folds.empty()) write_folds(root / "folds.txt", data.folds);
}

Dataset load_dataset(const fs::path& root) {
  if (!fs::is_directory(root / "features")) throw IoError("no features/ directory under " + root.string());
  Dataset data;
  std::vector<fs::path> blobs;
  for (const auto& e : fs::directory_iterator(root / "features"))
    if (e.is_regular_file() && e.path().extension() == ".bin") blobs.push_back(e.path());
  std::sort(blobs.begin(), blobs.end());
  for (const auto& b : blobs) {
    Video v;
    v.id = b.stem().string();
    v.features = load_tensor(b);
    if (v.features.rank() != 2) throw ContractError("features for '" + v.id + "' are not [frames x dim]");
    data.videos.push_back(std::move(v));
  }
  for (Task t : {Task::VA, Task::Expr, Task::AU}) {
    if (!fs::is_directory(root / "annotations" / task_dir_name(t))) continue;
    for (auto& [id, labels] : load_annotation_dir(root / "annotations", t)) {
      auto it = std::find_if(data.videos.begin(), data.videos.end(), [&](auto& v) { return v.id == id; });
      if (it == data.videos.end()) throw ContractError("annotations for '" + id + "' have no features");
      if (labels.frames() != it->frames()) {
        throw ContractError("video '" + id + "': " + std::to_string(labels.frames()) + " " +
                            task_name(t) + " labels for " + std::to_string(it->frames()) + " frames");
      }
      it->set_labels(std::move(labels));
    }
  }
  if (fs::exists(root / "folds.txt")) data.folds = read_folds(root / "folds.txt");
  return data;
}

void write_predictions(std::span<const VideoPrediction> preds, const fs::path& dir,
                       bool au_probabilities) {
  for (const auto& p : preds) {
    const std::size_t out_dim = task_output_dim(p.task);
    if (p.values.rank() != 2 || p.values.dim(1) != out_dim) {
      throw ShapeError("prediction for '" + p.video_id + "' must be [frames x " +
                       std::to_string(out_dim) + "], got " + shape_str(p.values.shape()));
    }
    const std::size_t n = p.values.dim(0);
    auto v = p.values.data();
    TaskLabels labels;
    labels.task = p.task;
    std::vector<double> probs;
    for (std::size_t f = 0; f < n; ++f) {
      const double* row = v.data() + f * out_dim;
      switch (p.task) {
        case Task::VA:
          labels.values.push_back(std::clamp(row[0], -1.0, 1.0));
          labels.values.push_back(std::clamp(row[1], -1.0, 1.0));
          break;
        case Task::Expr:
          labels.values.push_back(static_cast<double>(std::max_element(row, row + out_dim) - row));
          break;
        case Task::AU:
          for (std::size_t u = 0; u < out_dim; ++u) {
            double prob = 1.0 / (1.0 + std::exp(-row[u]));
            labels.values.push_back(prob >= 0.5 ? 1.0 : 0.0);
            probs.push_back(prob);
          }
          break;
      }
    }
    fs::create_directories(dir / task_dir_name(p.task));
    write_annotation_file(dir / task_dir_name(p.task) / (p.video_id + ".txt"), labels);
    if (p.task == Task::AU && au_probabilities) {
      fs::create_directories(dir / "AU_prob");
      std::ofstream out(dir / "AU_prob" / (p.video_id + ".txt"));
      if (!out) throw IoError("cannot write AU probability sidecar for " + p.video_id);
      out << annotation_header(Task::AU) << '\n';
      for (std::size_t f = 0; f < n; ++f) {
        for (std::size_t u = 0; u < out_dim; ++u) out << (u ? "," : "") << fmt(probs[f * out_dim + u]);
        out << '\n';
      }
    }
  }
}

void SyntheticSpec::validate() const {
  if (num_videos < 1 || frames_per_video < 1 || latent_dim < 1 || feature_dim < 1) {
    throw ConfigError("synthetic spec sizes must all be >= 1");
  }
  if (feature_dim < latent_dim) throw ConfigError("feature_dim must be >= latent_dim");
  if (noise_std < 0.0) throw ConfigError("noise_std must be >= 0");
}

nlohmann::json Matrix::to_json() const {
  return {{"rows", rows}, {"cols", cols}, {"values", values}};
}

nlohmann::json OracleScores::to_json() const {
  return {{"ccc_v", ccc_valence}, {"ccc_a", ccc_arousal}, {"expr_macro_f1", expr_f1},
          {"au_macro_f1", au_f1}};
}

namespace {

constexpr double kLatentDecay = 0.95;
constexpr double kLatentStep = 0.05;
constexpr double kSmoothing = 0.7;

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  Matrix m{rows, cols, std::vector<double>(rows * cols)};
  for (auto& v : m.values) v = normal(rng);
  return m;
}

void normalize_rows(Matrix& m, double norm) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) sq += m.at(r, c) * m.at(r, c);
    double f = norm / std::sqrt(sq);
    for (std::size_t c = 0; c < m.cols; ++c) m.values[r * m.cols + c] *= f;
  }
}

// Rows +q_i / -q_i of a random orthogonal basis, so every class owns an
// equally likely cone of latent space. Falls back to random unit rows when
// the latent space is too small for eight distinct directions.
Matrix expression_matrix(std::size_t latent, Rng& rng) {
  Matrix m = gaussian_matrix(kExprClasses, latent, 1.0, rng);
  if (latent * 2 >= kExprClasses) {
    Matrix g = gaussian_matrix(latent, latent, 1.0, rng);
    Eigen::MatrixXd a = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        g.values.data(), static_cast<Eigen::Index>(latent), static_cast<Eigen::Index>(latent));
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ();
    for (std::size_t k = 0; k < kExprClasses; ++k) {
      double sign = (k % 2 == 0) ? 1.0 : -1.0;
      for (std::size_t c = 0; c < latent; ++c)
        m.values[k * latent + c] = sign * q(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(k / 2));
    }
  }
  normalize_rows(m, 1.0);
  return m;
}

Matrix pseudo_inverse(const Matrix& a) {
  Eigen::MatrixXd m = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      a.values.data(), static_cast<Eigen::Index>(a.rows), static_cast<Eigen::Index>(a.cols));
  Eigen::MatrixXd pinv = m.completeOrthogonalDecomposition().pseudoInverse();
  Matrix out{a.cols, a.rows, std::vector<double>(a.rows * a.cols)};
  for (std::size_t r = 0; r < out.rows; ++r)
    for (std::size_t c = 0; c < out.cols; ++c)
      out.values[r * out.cols + c] = pinv(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  return out;
}

// y = M x for one row vector x.
void apply(const Matrix& m, const double* x, double* y) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) acc += m.at(r, c) * x[c];
    y[r] = acc;
  }
}

// Labels and oracle outputs share this: task outputs from a latent row.
void latent_outputs(const GeneratorTruth& t, Task task, const double* z, double* out) {
  switch (task) {
    case Task::VA:
      apply(t.valence_arousal, z, out);
      for (std::size_t i = 0; i < kVaDims; ++i) out[i] = std::tanh(out[i]);
      break;
    case Task::Expr: apply(t.expression, z, out); break;
    case Task::AU: apply(t.action_units, z, out); break;
  }
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticDataset ds;
  ds.spec = spec;
  Rng rng(spec.seed);
  const std::size_t L = spec.latent_dim, D = spec.feature_dim, n = spec.frames_per_video;

  auto& t = ds.truth;
  t.mixing = gaussian_matrix(D, L, 1.0 / std::sqrt(static_cast<double>(L)), rng);
  t.valence_arousal = gaussian_matrix(kVaDims, L, 1.0, rng);
  normalize_rows(t.valence_arousal, 1.0);
  t.expression = expression_matrix(L, rng);
  t.action_units = gaussian_matrix(kAuUnits, L, 1.0, rng);
  normalize_rows(t.action_units, 1.0);
  t.unmixing = pseudo_inverse(t.mixing);

  // Innovation scale giving the AR(1) walk unit stationary variance, and the
  // stationary std of its exponential smoothing.
  const double rho = kLatentDecay, a = kSmoothing;
  const double eta_std = std::sqrt(1.0 - rho * rho) / kLatentStep;
  const double smooth_std =
      std::sqrt((1.0 - a) * (1.0 - a) * (1.0 + a * rho) / ((1.0 - a * a) * (1.0 - a * rho)));

  std::normal_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, spec.noise_std > 0 ? spec.noise_std : 1.0);
  const int width = static_cast<int>(std::to_string(spec.num_videos - 1).size());
  for (std::size_t vi = 0; vi < spec.num_videos; ++vi) {
    Video video;
    char name[32];
    std::snprintf(name, sizeof name, "video%0*zu", std::max(width, 2), vi);
    video.id = name;

    Matrix z{n, L, std::vector<double>(n * L)};
    std::vector<double> walk(L), smooth(L);
    for (auto& w : walk) w = unit(rng);
    smooth = walk;
    for (auto& s : smooth) s *= smooth_std;
    // Burn in the smoother so the first frame is already stationary.
    for (int i = 0; i < 50; ++i) {
      for (std::size_t j = 0; j < L; ++j) {
        walk[j] = rho * walk[j] + kLatentStep * eta_std * unit(rng);
        smooth[j] = a * smooth[j] + (1.0 - a) * walk[j];
      }
    }
    for (std::size_t f = 0; f < n; ++f) {
      for (std::size_t j = 0; j < L; ++j) {
        walk[j] = rho * walk[j] + kLatentStep * eta_std * unit(rng);
        smooth[j] = a * smooth[j] + (1.0 - a) * walk[j];
        z.values[f * L + j] = smooth[j] / smooth_std;
      }
    }

    std::vector<double> feats(n * D);
    for (std::size_t f = 0; f < n; ++f) {
      apply(t.mixing, z.values.data() + f * L, feats.data() + f * D);
      if (spec.noise_std > 0)
        for (std::size_t c = 0; c < D; ++c) feats[f * D + c] += noise(rng);
    }
    video.features = Tensor::from_vector({n, D}, std::move(feats));

    TaskLabels va{Task::VA, {}}, expr{Task::Expr, {}}, au{Task::AU, {}};
    std::vector<double> buf(kAuUnits);
    for (std::size_t f = 0; f < n; ++f) {
      const double* zf = z.values.data() + f * L;
      latent_outputs(t, Task::VA, zf, buf.data());
      va.values.insert(va.values.end(), buf.begin(), buf.begin() + kVaDims);
      latent_outputs(t, Task::Expr, zf, buf.data());
      expr.values.push_back(static_cast<double>(std::max_element(buf.begin(), buf.begin() + kExprClasses) - buf.begin()));
      latent_outputs(t, Task::AU, zf, buf.data());
      for (std::size_t u = 0; u < kAuUnits; ++u) au.values.push_back(buf[u] > 0.0 ? 1.0 : 0.0);
    }
    video.set_labels(std::move(va));
    video.set_labels(std::move(expr));
    video.set_labels(std::move(au));
    t.latents.push_back(std::move(z));
    ds.data.videos.push_back(std::move(video));
  }
  ds.data.folds = assign_folds(ds.data.ids(), std::min<std::size_t>(5, spec.num_videos), spec.seed);
  ds.oracle = oracle_scores(ds);
  return ds;
}

Tensor oracle_predict(const GeneratorTruth& truth, const Tensor& features, Task task) {
  const std::size_t n = features.dim(0), L = truth.unmixing.rows;
  const std::size_t out_dim = task_output_dim(task);
  if (features.dim(1) != truth.unmixing.cols) throw ShapeError("oracle: feature width mismatch");
  auto x = features.data();
  std::vector<double> z(L), out(n * out_dim);
  for (std::size_t f = 0; f < n; ++f) {
    apply(truth.unmixing, x.data() + f * truth.unmixing.cols, z.data());
    latent_outputs(truth, task, z.data(), out.data() + f * out_dim);
  }
  return Tensor::from_vector({n, out_dim}, std::move(out));
}

OracleScores oracle_scores(const SyntheticDataset& ds, const std::vector<std::string>& ids) {
  OracleScores s;
  for (Task task : {Task::VA, Task::Expr, Task::AU}) {
    ScoredFrames frames;
    for (const auto& v : ds.data.videos) {
      if (!ids.empty() && std::find(ids.begin(), ids.end(), v.id) == ids.end()) continue;
      Tensor p = oracle_predict(ds.truth, v.features, task);
      frames.outputs.insert(frames.outputs.end(), p.data().begin(), p.data().end());
      const auto& l = v.labels(task).values;
      frames.labels.insert(frames.labels.end(), l.begin(), l.end());
    }
    auto r = score_frames(task, frames, false);
    if (task == Task::VA) {
      s.ccc_valence = *r.ccc_valence;
      s.ccc_arousal = *r.ccc_arousal;
    } else if (task == Task::Expr) {
      s.expr_f1 = *r.macro_f1;
    } else {
      s.au_f1 = *r.macro_f1;
    }
  }
  return s;
}

void write_generator_json(const fs::path& path, const SyntheticDataset& ds) {
  nlohmann::json j;
  j["spec"] = {{"num_videos", ds.spec.num_videos},   {"frames_per_video", ds.spec.frames_per_video},
               {"latent_dim", ds.spec.latent_dim},   {"feature_dim", ds.spec.feature_dim},
               {"noise_std", ds.spec.noise_std},     {"seed", ds.spec.seed}};
  j["mixing"] = ds.truth.mixing.to_json();
  j["valence_arousal"] = ds.truth.valence_arousal.to_json();
  j["expression"] = ds.truth.expression.to_json();
  j["action_units"] = ds.truth.action_units.to_json();
  j["unmixing"] = ds.truth.unmixing.to_json();
  j["oracle"] = ds.oracle.to_json();
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

SyntheticImageRenderer::SyntheticImageRenderer(std::size_t latent_dim, std::size_t height,
                                               std::size_t width, std::uint64_t seed)
    : height_(height), width_(width) {
  Rng rng(seed);
  std::uniform_int_distribution<int> freq(0, 2);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  for (std::size_t j = 0; j < latent_dim; ++j) {
    int fy = freq(rng), fx = freq(rng);
    if (fy == 0 && fx == 0) fx = 1;
    double ph = phase(rng);
    std::vector<double> b(height * width);
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x)
        b[y * width + x] = std::cos(2.0 * std::numbers::pi *
                                        (fy * static_cast<double>(y) / static_cast<double>(height) +
                                         fx * static_cast<double>(x) / static_cast<double>(width)) +
                                    ph);
    basis_.push_back(std::move(b));
  }
}

Image SyntheticImageRenderer::render(std::span<const double> z) const {
  if (z.size() != basis_.size()) throw ShapeError("renderer latent size mismatch");
  Image img;
  img.height = height_;
  img.width = width_;
  img.channels = 1;
  img.pixels.assign(height_ * width_, 0.0);
  for (std::size_t j = 0; j < basis_.size(); ++j)
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] += z[j] * basis_[j][i];
  for (auto& p : img.pixels) p = 1.0 / (1.0 + std::exp(-1.5 * p));
  return img;
}

Image SyntheticImageRenderer::render_random(Rng& rng) const {
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<double> z(basis_.size());
  for (auto& v : z) v = unit(rng);
  return render(z);
}

}  // namespace affect
