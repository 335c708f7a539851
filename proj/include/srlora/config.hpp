#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "srlora/data.hpp"
#include "srlora/model.hpp"
#include "srlora/recompose.hpp"

namespace srlora {

enum class Mode { lora_static, pissa_static, srlora };

Mode parse_mode(const std::string& name);
std::string to_string(Mode m);

struct LayerConfig {
  std::size_t in = 0;
  std::size_t out = 0;
  Activation activation = Activation::identity;
  bool adapted = true;
};

struct TeacherConfig {
  std::size_t d_in = 32;
  std::size_t d_out = 32;
  std::size_t k_star = 16;
  double w0_std = 0.0;  // <= 0 means 1/sqrt(d_in)
  double delta_scale = 1.0;
  double noise_std = 0.0;
  std::size_t n_train = 1024;
  std::size_t n_eval = 1024;
};

enum class DatasetKind { teacher_student, csv };

struct DatasetConfig {
  DatasetKind kind = DatasetKind::teacher_student;
  TeacherConfig teacher;
  CsvSchema csv;
};

/// Everything a run depends on. Field names match the JSON document.
struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t n_all = 1000;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t rank = 8;
  double alpha = 8.0;
  double gamma = 0.5;
  std::size_t r_target = 8;
  double beta1 = 0.85;
  double beta2 = 0.85;
  ResetScope reset_scope = ResetScope::recycled;
  Mode mode = Mode::srlora;
  LossKind loss = LossKind::mse;
  /// Empty with a teacher-student dataset: one identity layer d_in -> d_out.
  std::vector<LayerConfig> layers;
  double pretrained_std = 0.0;  // <= 0 means 1/sqrt(fan_in)
  double lora_init_std = 0.0;   // <= 0 means 1/sqrt(fan_in)
  DatasetConfig dataset;
  std::size_t eval_every = 50;
  std::size_t probe_samples = 64;
  bool export_importance = false;
  std::string output_dir = "run";
};

/// Unknown keys are rejected. Missing keys keep their defaults.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& c);
RunConfig load_config(const std::string& path);

/// Checks ranges and, in srlora mode, the schedule preconditions.
void validate(const RunConfig& c);

/// The architecture actually trained (fills in the teacher-student default).
std::vector<LayerConfig> resolved_layers(const RunConfig& c);

}  // namespace srlora
