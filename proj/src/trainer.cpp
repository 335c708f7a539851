#include "srlora/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "srlora/csv.hpp"
#include "srlora/error.hpp"

namespace srlora {

void apply_step(SgdMomentum& opt, std::span<Matrix* const> params, std::span<const Matrix* const> grads) {
  if (params.size() != grads.size()) fail_validation("apply_step: parameter and gradient counts differ");
  if (opt.velocity.size() < params.size()) opt.velocity.resize(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& p = *params[k];
    const Matrix& g = *grads[k];
    require_same_shape(p, g, "apply_step");
    Matrix& v = opt.velocity[k];
    if (v.empty()) v = Matrix(p.rows(), p.cols());
    require_same_shape(p, v, "apply_step (velocity)");
    auto pd = p.data();
    auto gd = g.data();
    auto vd = v.data();
    for (std::size_t i = 0; i < pd.size(); ++i) {
      vd[i] = opt.momentum * vd[i] + gd[i];
      pd[i] -= opt.learning_rate * vd[i];
    }
  }
}

void write_metrics_csv(std::ostream& out, const MetricLog& log) {
  out << "step,train_loss,eval_loss,switch_flag\n";
  for (const MetricRow& r : log.rows) {
    out << r.step << ',';
    if (r.train_loss) out << csv::format_double(*r.train_loss);
    out << ',' << csv::format_double(r.eval_loss) << ',' << (r.switch_flag ? 1 : 0) << '\n';
  }
}

void write_importance_csv(std::ostream& out, const std::vector<ImportanceRow>& rows) {
  out << "step,layer_id,slot,singular_index,score\n";
  for (const ImportanceRow& r : rows) {
    out << r.step << ',' << r.layer << ',' << r.slot << ',';
    if (r.singular_index) out << *r.singular_index;
    out << ',' << csv::format_double(r.score) << '\n';
  }
}

namespace {

double default_std(double configured, std::size_t fan_in) {
  return configured > 0.0 ? configured : 1.0 / std::sqrt(static_cast<double>(fan_in));
}

}  // namespace

Trainer::Trainer(RunConfig config) : config_(std::move(config)), started_(std::chrono::steady_clock::now()) {
  validate(config_);
  const std::vector<LayerConfig> layers = resolved_layers(config_);

  if (config_.mode == Mode::srlora) {
    schedule_ = build_schedule(config_.rank, config_.gamma, config_.r_target, config_.n_all);
  } else {
    schedule_.r = config_.rank;
    schedule_.r_target = config_.rank;
    schedule_.n_all = config_.n_all;
  }

  // Independent streams for the task, the two sample sets, initialization and batching.
  Rng root(config_.seed);
  const std::uint64_t teacher_seed = root.next_u64();
  const std::uint64_t train_seed = root.next_u64();
  const std::uint64_t eval_seed = root.next_u64();
  Rng init_rng(root.next_u64());
  const std::uint64_t batch_seed = root.next_u64();

  std::optional<Matrix> teacher_w0;
  if (config_.dataset.kind == DatasetKind::teacher_student) {
    const TeacherConfig& t = config_.dataset.teacher;
    TeacherSpec spec = make_teacher(t.d_out, t.d_in, t.k_star, default_std(t.w0_std, t.d_in), t.delta_scale,
                                    t.noise_std, teacher_seed);
    spec.seed = train_seed;
    train_ = gen_teacher_student(spec, t.n_train);
    spec.seed = eval_seed;
    eval_ = gen_teacher_student(spec, t.n_eval);
    teacher_delta_ = spec.delta_star;
    teacher_w0 = spec.w0;
  } else {
    train_ = load_csv(config_.dataset.csv);
    eval_ = train_;
    if (layers.back().out != train_.targets.rows()) {
      fail_validation("config: last layer width " + std::to_string(layers.back().out) + " but dataset has " +
                      std::to_string(train_.targets.rows()) + " classes");
    }
  }

  std::vector<DenseLayer> dense;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const LayerConfig& lc = layers[li];
    Matrix w0 = (teacher_w0 && layers.size() == 1)
                    ? *teacher_w0
                    : gaussian(init_rng, lc.out, lc.in, 0.0, default_std(config_.pretrained_std, lc.in));
    DenseLayer d;
    if (!lc.adapted) {
      d.linear = lora_init(w0, config_.rank, config_.alpha, init_rng, 0.0);
    } else if (config_.mode == Mode::lora_static) {
      d.linear = lora_init(w0, config_.rank, config_.alpha, init_rng, default_std(config_.lora_init_std, lc.in));
    } else {
      d.linear = pissa_init(w0, config_.rank, config_.alpha);
      for (std::size_t k = 0; k < config_.rank; ++k) ledger_.activate(li, k, k, 0);
    }
    d.bias = Matrix(lc.out, 1);
    d.activation = lc.activation;
    d.adapted = lc.adapted;
    d.importance = ImportanceState::for_layer(d.linear, config_.beta1, config_.beta2);
    pretrained_.push_back(std::move(w0));
    dense.push_back(std::move(d));
  }
  net_ = SrloraNet(std::move(dense));

  optimizer_.learning_rate = config_.learning_rate;
  optimizer_.momentum = config_.momentum;
  stream_ = BatchStream(config_.batch_size, Rng(batch_seed));

  const std::size_t probe_cols = std::min(config_.probe_samples, eval_.samples());
  std::vector<std::size_t> cols(probe_cols);
  for (std::size_t k = 0; k < probe_cols; ++k) cols[k] = k;
  probe_ = gather_columns(eval_.inputs, cols);

  log_row(false);
}

double Trainer::evaluate() const {
  return loss_and_grad(config_.loss, net_predict(net_, eval_.inputs), eval_.targets).first;
}

void Trainer::run_until(std::size_t target) {
  if (target > config_.n_all) {
    fail_validation("run_until: step " + std::to_string(target) + " beyond n_all=" + std::to_string(config_.n_all));
  }
  while (step_ < target) {
    ++step_;
    const bool is_switch = config_.mode == Mode::srlora && schedule_.is_switch_step(step_);
    if (is_switch) {
      switch_step();
    } else {
      train_step();
    }
    if (is_switch || step_ % config_.eval_every == 0 || step_ == config_.n_all) log_row(is_switch);
  }
}

void Trainer::train_step() {
  const auto [x, y] = stream_.next(train_);
  const auto [out, cache] = net_forward(net_, x);
  const auto [loss, d_out] = loss_and_grad(config_.loss, out, y);
  const NetGrads grads = net_backward(net_, cache, d_out);

  std::vector<Matrix*> params;
  std::vector<const Matrix*> grad_refs;
  for (std::size_t li = 0; li < net_.size(); ++li) {
    DenseLayer& l = net_.mutable_layer(li);
    if (l.adapted) {
      ema_update(l.importance, grads.layers[li], l.linear);
      params.push_back(&l.linear.b);
      grad_refs.push_back(&grads.layers[li].d_b);
      params.push_back(&l.linear.a);
      grad_refs.push_back(&grads.layers[li].d_a);
    }
    params.push_back(&l.bias);
    grad_refs.push_back(&grads.bias[li]);
  }
  apply_step(optimizer_, params, grad_refs);

  window_loss_sum_ += loss;
  ++window_count_;
}

void Trainer::zero_velocity_slots(std::size_t layer, const std::vector<std::size_t>& slots) {
  std::size_t idx = 0;
  for (std::size_t li = 0; li < layer; ++li) idx += net_.layer(li).adapted ? 3 : 1;
  if (idx + 1 >= optimizer_.velocity.size()) return;  // no gradient step taken yet
  Matrix& vb = optimizer_.velocity[idx];
  Matrix& va = optimizer_.velocity[idx + 1];
  for (std::size_t k : slots) {
    if (!vb.empty())
      for (std::size_t i = 0; i < vb.rows(); ++i) vb(i, k) = 0.0;
    if (!va.empty())
      for (std::size_t j = 0; j < va.cols(); ++j) va(k, j) = 0.0;
  }
}

void Trainer::switch_step() {
  SwitchRecord rec;
  rec.step = step_;
  const Matrix before = net_predict(net_, probe_);
  rec.eval_loss_before = evaluate();

  for (std::size_t li = 0; li < net_.size(); ++li) {
    if (!net_.layer(li).adapted) continue;
    DenseLayer& l = net_.mutable_layer(li);
    const SwitchOutcome outcome =
        recompose_step(l.linear, l.importance, schedule_, ledger_, li, step_, config_.reset_scope);
    if (outcome.skipped) {
      ++rec.layers_skipped;
    } else {
      ++rec.layers_recomposed;
      zero_velocity_slots(li, outcome.recycled);
    }
  }

  const Matrix after = net_predict(net_, probe_);
  rec.probe_relative_change = relative_error(after, before, before);
  rec.eval_loss_after = evaluate();
  switches_.push_back(rec);
}

void Trainer::log_row(bool switch_flag) {
  MetricRow row;
  row.step = step_;
  if (window_count_ > 0) row.train_loss = window_loss_sum_ / static_cast<double>(window_count_);
  row.eval_loss = evaluate();
  row.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  row.switch_flag = switch_flag;
  log_.rows.push_back(row);
  window_loss_sum_ = 0.0;
  window_count_ = 0;

  if (config_.export_importance) {
    for (std::size_t li = 0; li < net_.size(); ++li) {
      const DenseLayer& l = net_.layer(li);
      if (!l.adapted) continue;
      const std::vector<double> scores = slot_scores(l.importance);
      for (std::size_t k = 0; k < scores.size(); ++k) {
        importance_rows_.push_back({step_, li, k, l.linear.slot_direction[k], scores[k]});
      }
    }
  }
}

TrainResult train(const RunConfig& config) {
  Trainer t(config);
  t.run();
  return {t.net(), t.log(), t.ledger(), t.switches()};
}

std::vector<std::string> write_run_artifacts(const Trainer& trainer, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail_io("cannot create output directory '" + dir + "': " + ec.message());

  std::vector<std::string> written;
  auto open = [&](const std::string& name) {
    const std::string path = (fs::path(dir) / name).string();
    std::ofstream out(path, std::ios::binary);
    if (!out) fail_io("cannot write '" + path + "'");
    written.push_back(path);
    return out;
  };
  auto close = [&](std::ofstream& out) {
    out.flush();
    if (!out) fail_io("failed writing '" + written.back() + "'");
  };

  {
    auto out = open("metrics.csv");
    write_metrics_csv(out, trainer.log());
    close(out);
  }
  {
    auto out = open("ledger.csv");
    write_ledger_csv(out, trainer.ledger());
    close(out);
  }
  {
    auto out = open("checkpoint.srlc");
    trainer.save_checkpoint(out);
    close(out);
  }
  {
    RunConfig resolved = trainer.config();
    resolved.layers = resolved_layers(resolved);
    resolved.output_dir = dir;
    auto out = open("resolved-config.json");
    out << config_to_json(resolved).dump(2) << '\n';
    close(out);
  }
  if (trainer.config().export_importance) {
    auto out = open("importance.csv");
    write_importance_csv(out, trainer.importance_rows());
    close(out);
  }
  return written;
}

}  // namespace srlora
