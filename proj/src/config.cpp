#include "srlora/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <type_traits>

#include "srlora/error.hpp"

namespace srlora {

using nlohmann::json;

Mode parse_mode(const std::string& name) {
  if (name == "lora_static") return Mode::lora_static;
  if (name == "pissa_static") return Mode::pissa_static;
  if (name == "srlora") return Mode::srlora;
  fail_validation("unknown mode '" + name + "' (expected lora_static|pissa_static|srlora)");
}

std::string to_string(Mode m) {
  switch (m) {
    case Mode::lora_static: return "lora_static";
    case Mode::pissa_static: return "pissa_static";
    case Mode::srlora: return "srlora";
  }
  return "?";
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) fail_validation(where + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) fail_validation(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    fail_validation(where + "." + key + ": " + e.what());
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(out)) fail_validation(where + "." + key + ": must be finite");
  }
}

}  // namespace

RunConfig config_from_json(const json& j) {
  reject_unknown(j,
                 {"seed", "n_all", "batch_size", "learning_rate", "momentum", "rank", "alpha", "gamma",
                  "r_target", "beta1", "beta2", "reset_scope", "mode", "loss", "architecture", "dataset",
                  "eval_every", "probe_samples", "export_importance", "output_dir"},
                 "config");
  RunConfig c;
  read(j, "seed", c.seed, "config");
  read(j, "n_all", c.n_all, "config");
  read(j, "batch_size", c.batch_size, "config");
  read(j, "learning_rate", c.learning_rate, "config");
  read(j, "momentum", c.momentum, "config");
  read(j, "rank", c.rank, "config");
  read(j, "alpha", c.alpha, "config");
  read(j, "gamma", c.gamma, "config");
  c.r_target = c.rank;
  read(j, "r_target", c.r_target, "config");
  read(j, "beta1", c.beta1, "config");
  read(j, "beta2", c.beta2, "config");
  read(j, "eval_every", c.eval_every, "config");
  read(j, "probe_samples", c.probe_samples, "config");
  read(j, "export_importance", c.export_importance, "config");
  read(j, "output_dir", c.output_dir, "config");

  std::string text;
  if (j.contains("reset_scope")) {
    read(j, "reset_scope", text, "config");
    if (text == "recycled") c.reset_scope = ResetScope::recycled;
    else if (text == "all") c.reset_scope = ResetScope::all;
    else fail_validation("config.reset_scope: expected recycled|all, got '" + text + "'");
  }
  if (j.contains("mode")) {
    read(j, "mode", text, "config");
    c.mode = parse_mode(text);
  }
  if (j.contains("loss")) {
    read(j, "loss", text, "config");
    c.loss = parse_loss(text);
  }

  if (const auto it = j.find("architecture"); it != j.end()) {
    reject_unknown(*it, {"layers", "pretrained_std", "lora_init_std"}, "config.architecture");
    read(*it, "pretrained_std", c.pretrained_std, "config.architecture");
    read(*it, "lora_init_std", c.lora_init_std, "config.architecture");
    if (const auto layers = it->find("layers"); layers != it->end()) {
      if (!layers->is_array()) fail_validation("config.architecture.layers: expected an array");
      for (const json& l : *layers) {
        reject_unknown(l, {"in", "out", "activation", "adapted"}, "config.architecture.layers[]");
        LayerConfig lc;
        read(l, "in", lc.in, "layer");
        read(l, "out", lc.out, "layer");
        read(l, "adapted", lc.adapted, "layer");
        if (l.contains("activation")) {
          read(l, "activation", text, "layer");
          lc.activation = parse_activation(text);
        }
        c.layers.push_back(lc);
      }
    }
  }

  if (const auto it = j.find("dataset"); it != j.end()) {
    if (!it->is_object() || !it->contains("kind")) fail_validation("config.dataset: needs a 'kind'");
    read(*it, "kind", text, "config.dataset");
    if (text == "teacher_student") {
      reject_unknown(*it,
                     {"kind", "d_in", "d_out", "k_star", "w0_std", "delta_scale", "noise_std", "n_train",
                      "n_eval"},
                     "config.dataset");
      TeacherConfig& t = c.dataset.teacher;
      c.dataset.kind = DatasetKind::teacher_student;
      read(*it, "d_in", t.d_in, "config.dataset");
      read(*it, "d_out", t.d_out, "config.dataset");
      read(*it, "k_star", t.k_star, "config.dataset");
      read(*it, "w0_std", t.w0_std, "config.dataset");
      read(*it, "delta_scale", t.delta_scale, "config.dataset");
      read(*it, "noise_std", t.noise_std, "config.dataset");
      read(*it, "n_train", t.n_train, "config.dataset");
      read(*it, "n_eval", t.n_eval, "config.dataset");
    } else if (text == "csv") {
      reject_unknown(*it, {"kind", "path", "feature_columns", "label_column"}, "config.dataset");
      c.dataset.kind = DatasetKind::csv;
      read(*it, "path", c.dataset.csv.path, "config.dataset");
      read(*it, "feature_columns", c.dataset.csv.feature_columns, "config.dataset");
      read(*it, "label_column", c.dataset.csv.label_column, "config.dataset");
    } else {
      fail_validation("config.dataset.kind: expected teacher_student|csv, got '" + text + "'");
    }
  }
  return c;
}

json config_to_json(const RunConfig& c) {
  json layers = json::array();
  for (const LayerConfig& l : c.layers) {
    layers.push_back({{"in", l.in}, {"out", l.out}, {"activation", to_string(l.activation)}, {"adapted", l.adapted}});
  }
  json dataset;
  if (c.dataset.kind == DatasetKind::teacher_student) {
    const TeacherConfig& t = c.dataset.teacher;
    dataset = {{"kind", "teacher_student"}, {"d_in", t.d_in},       {"d_out", t.d_out},
               {"k_star", t.k_star},        {"w0_std", t.w0_std},   {"delta_scale", t.delta_scale},
               {"noise_std", t.noise_std},  {"n_train", t.n_train}, {"n_eval", t.n_eval}};
  } else {
    dataset = {{"kind", "csv"},
               {"path", c.dataset.csv.path},
               {"feature_columns", c.dataset.csv.feature_columns},
               {"label_column", c.dataset.csv.label_column}};
  }
  return {{"seed", c.seed},
          {"n_all", c.n_all},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"rank", c.rank},
          {"alpha", c.alpha},
          {"gamma", c.gamma},
          {"r_target", c.r_target},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"reset_scope", c.reset_scope == ResetScope::all ? "all" : "recycled"},
          {"mode", to_string(c.mode)},
          {"loss", to_string(c.loss)},
          {"architecture",
           {{"layers", layers}, {"pretrained_std", c.pretrained_std}, {"lora_init_std", c.lora_init_std}}},
          {"dataset", dataset},
          {"eval_every", c.eval_every},
          {"probe_samples", c.probe_samples},
          {"export_importance", c.export_importance},
          {"output_dir", c.output_dir}};
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_io("cannot open config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail_validation("config '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

std::vector<LayerConfig> resolved_layers(const RunConfig& c) {
  if (!c.layers.empty()) return c.layers;
  if (c.dataset.kind == DatasetKind::teacher_student) {
    return {LayerConfig{c.dataset.teacher.d_in, c.dataset.teacher.d_out, Activation::identity, true}};
  }
  fail_validation("config.architecture.layers is required for csv datasets");
}

void validate(const RunConfig& c) {
  if (c.batch_size == 0) fail_validation("config.batch_size must be >= 1");
  if (c.eval_every == 0) fail_validation("config.eval_every must be >= 1");
  if (c.probe_samples == 0) fail_validation("config.probe_samples must be >= 1");
  if (!(c.learning_rate > 0.0)) fail_validation("config.learning_rate must be positive");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) fail_validation("config.momentum must lie in [0, 1)");
  if (!(c.alpha > 0.0)) fail_validation("config.alpha must be positive");
  if (!(c.beta1 > 0.0 && c.beta1 < 1.0) || !(c.beta2 > 0.0 && c.beta2 < 1.0)) {
    fail_validation("config.beta1 and config.beta2 must lie in (0, 1)");
  }
  if (c.rank == 0) fail_validation("config.rank must be >= 1");

  const std::vector<LayerConfig> layers = resolved_layers(c);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerConfig& l = layers[i];
    const std::string where = "config.architecture.layers[" + std::to_string(i) + "]";
    if (l.in == 0 || l.out == 0) fail_validation(where + ": in/out must be positive");
    if (c.rank > std::min(l.in, l.out)) {
      fail_validation(where + ": rank " + std::to_string(c.rank) + " exceeds min(in, out)");
    }
    if (i > 0 && layers[i - 1].out != l.in) fail_validation(where + ": does not chain with previous layer");
  }

  if (c.dataset.kind == DatasetKind::teacher_student) {
    const TeacherConfig& t = c.dataset.teacher;
    if (t.n_train == 0 || t.n_eval == 0) fail_validation("config.dataset: n_train and n_eval must be >= 1");
    if (t.k_star > std::min(t.d_in, t.d_out)) fail_validation("config.dataset.k_star exceeds min(d_in, d_out)");
    if (!(t.noise_std >= 0.0)) fail_validation("config.dataset.noise_std must be >= 0");
    if (layers.front().in != t.d_in || layers.back().out != t.d_out) {
      fail_validation("config: architecture does not map d_in=" + std::to_string(t.d_in) + " to d_out=" +
                      std::to_string(t.d_out));
    }
    if (c.loss != LossKind::mse) fail_validation("config: teacher_student datasets use the mse loss");
  } else {
    if (c.dataset.csv.path.empty()) fail_validation("config.dataset.path is required");
    if (c.dataset.csv.feature_columns.empty()) fail_validation("config.dataset.feature_columns is empty");
    if (c.dataset.csv.label_column.empty()) fail_validation("config.dataset.label_column is required");
    if (layers.front().in != c.dataset.csv.feature_columns.size()) {
      fail_validation("config: first layer input width does not match the feature column count");
    }
  }

  if (c.mode == Mode::srlora) {
    build_schedule(c.rank, c.gamma, c.r_target, c.n_all);
  }
}

}  // namespace srlora
