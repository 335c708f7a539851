#pragma once

#include <chrono>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "srlora/config.hpp"
#include "srlora/data.hpp"
#include "srlora/model.hpp"
#include "srlora/recompose.hpp"

namespace srlora {

/// SGD with heavy-ball momentum: v ← μv + g; p ← p − lr·v.
struct SgdMomentum {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::vector<Matrix> velocity;  // index-aligned with the params passed to apply_step

  friend bool operator==(const SgdMomentum&, const SgdMomentum&) = default;
};

/// Velocity buffers are created (zero) on first use.
void apply_step(SgdMomentum& opt, std::span<Matrix* const> params, std::span<const Matrix* const> grads);

struct MetricRow {
  std::size_t step = 0;
  std::optional<double> train_loss;  // mean batch loss since the previous row
  double eval_loss = 0.0;
  double wall_time = 0.0;  // seconds since the trainer started; not persisted
  bool switch_flag = false;

  friend bool operator==(const MetricRow& x, const MetricRow& y) {
    return x.step == y.step && x.train_loss == y.train_loss && x.eval_loss == y.eval_loss &&
           x.switch_flag == y.switch_flag;
  }
};

struct MetricLog {
  std::vector<MetricRow> rows;

  friend bool operator==(const MetricLog&, const MetricLog&) = default;
};

/// step,train_loss,eval_loss,switch_flag. Wall time is left out so that
/// identical runs produce identical files.
void write_metrics_csv(std::ostream& out, const MetricLog& log);

/// Network-level record of one switch step.
struct SwitchRecord {
  std::size_t step = 0;
  double probe_relative_change = 0.0;  // ‖f_after(x) − f_before(x)‖_F / ‖f_before(x)‖_F
  double eval_loss_before = 0.0;
  double eval_loss_after = 0.0;
  std::size_t layers_recomposed = 0;
  std::size_t layers_skipped = 0;

  friend bool operator==(const SwitchRecord&, const SwitchRecord&) = default;
};

struct ImportanceRow {
  std::size_t step = 0;
  std::size_t layer = 0;
  std::size_t slot = 0;
  std::optional<std::size_t> singular_index;
  double score = 0.0;

  friend bool operator==(const ImportanceRow&, const ImportanceRow&) = default;
};

/// step,layer_id,slot,singular_index,score
void write_importance_csv(std::ostream& out, const std::vector<ImportanceRow>& rows);

/// Drives training. Step t = 1..n_all either recomposes every adapted layer
/// (t is a switch step, srlora mode) or takes one mini-batch gradient step
/// with importance tracking.
class Trainer {
 public:
  explicit Trainer(RunConfig config);

  void run_until(std::size_t step);
  void run() { run_until(config_.n_all); }

  std::size_t step() const noexcept { return step_; }
  const RunConfig& config() const noexcept { return config_; }
  const SrloraNet& net() const noexcept { return net_; }
  const MetricLog& log() const noexcept { return log_; }
  const SlotLedger& ledger() const noexcept { return ledger_; }
  const SwitchSchedule& schedule() const noexcept { return schedule_; }
  const std::vector<SwitchRecord>& switches() const noexcept { return switches_; }
  const std::vector<ImportanceRow>& importance_rows() const noexcept { return importance_rows_; }
  const SgdMomentum& optimizer() const noexcept { return optimizer_; }
  const BatchStream& stream() const noexcept { return stream_; }
  const Dataset& train_set() const noexcept { return train_; }
  const Dataset& eval_set() const noexcept { return eval_; }
  const Matrix& probe() const noexcept { return probe_; }

  /// Pretrained weight of each layer (before any adapter initialization).
  const std::vector<Matrix>& pretrained() const noexcept { return pretrained_; }
  /// Hidden update of the teacher-student task (empty for csv datasets).
  const Matrix& teacher_delta() const noexcept { return teacher_delta_; }

  double evaluate() const;

  void save_checkpoint(const std::string& path) const;
  void save_checkpoint(std::ostream& out) const;
  static Trainer resume(RunConfig config, const std::string& path);
  static Trainer resume(RunConfig config, std::istream& in);

 private:
  void train_step();
  void switch_step();
  void log_row(bool switch_flag);
  void zero_velocity_slots(std::size_t layer, const std::vector<std::size_t>& slots);

  RunConfig config_;
  SwitchSchedule schedule_;
  Dataset train_;
  Dataset eval_;
  Matrix probe_;
  std::vector<Matrix> pretrained_;
  Matrix teacher_delta_;
  SrloraNet net_;
  SgdMomentum optimizer_;
  BatchStream stream_{1, Rng()};
  SlotLedger ledger_;
  MetricLog log_;
  std::vector<SwitchRecord> switches_;
  std::vector<ImportanceRow> importance_rows_;
  std::size_t step_ = 0;
  double window_loss_sum_ = 0.0;
  std::size_t window_count_ = 0;
  std::chrono::steady_clock::time_point started_;
};

struct TrainResult {
  SrloraNet net;
  MetricLog log;
  SlotLedger ledger;
  std::vector<SwitchRecord> switches;
};

/// Validates, runs to n_all, returns the outcome. Writes nothing.
TrainResult train(const RunConfig& config);

/// Writes metrics.csv, ledger.csv, checkpoint.srlc, resolved-config.json
/// (and importance.csv when enabled) into `dir`; returns the paths written.
std::vector<std::string> write_run_artifacts(const Trainer& trainer, const std::string& dir);

}  // namespace srlora
