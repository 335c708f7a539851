#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>

#include <json.hpp>

#include "srlora/csv.hpp"
#include "srlora/error.hpp"
#include "srlora/trainer.hpp"
#include "verify.hpp"

namespace srlora::cli {

namespace fs = std::filesystem;

namespace {

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::validation: return kValidation;
    case ErrorKind::runtime: return kRuntime;
    case ErrorKind::io: return kIo;
  }
  return kRuntime;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_io("cannot open '" + path.string() + "'");
  return in;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_io("cannot write '" + path.string() + "'");
  return out;
}

RunConfig read_resolved_config(const fs::path& run_dir) {
  const fs::path path = run_dir / "resolved-config.json";
  if (!fs::exists(path)) fail_io("'" + path.string() + "' not found; is this a run directory?");
  return load_config(path.string());
}

double final_eval_loss(const RunConfig& config) {
  Trainer t(config);
  t.run();
  return t.log().rows.back().eval_loss;
}

}  // namespace

int cmd_train(const std::string& config_path, const std::optional<std::string>& out_dir,
              const std::optional<std::uint64_t>& seed, std::ostream& out) {
  if (!fs::exists(config_path)) fail_io("config file '" + config_path + "' does not exist");
  RunConfig config = load_config(config_path);
  if (seed) config.seed = *seed;
  if (out_dir) config.output_dir = *out_dir;

  Trainer trainer(config);
  trainer.run();
  for (const std::string& path : write_run_artifacts(trainer, config.output_dir)) out << path << '\n';

  const MetricRow& last = trainer.log().rows.back();
  out << "final eval_loss " << csv::format_double(last.eval_loss) << " after " << trainer.step() << " steps, "
      << trainer.switches().size() << " switches, " << csv::format_double(last.wall_time) << " s\n";
  return kOk;
}

int cmd_verify(const std::string& suite, std::ostream& out) {
  const std::vector<verify::PropertyResult> results = verify::run_suite(suite);
  std::size_t failed = 0;
  for (const auto& r : results) {
    out << (r.passed ? "[PASS] " : "[FAIL] ") << r.suite << ": " << r.name;
    if (!r.detail.empty()) out << " -- " << r.detail;
    out << '\n';
    failed += r.passed ? 0 : 1;
  }
  out << results.size() - failed << "/" << results.size() << " properties passed\n";
  return failed == 0 ? kOk : kRuntime;
}

int cmd_report(const std::string& run_dir, const std::string& kind, std::ostream& out) {
  const fs::path dir(run_dir);
  if (!fs::is_directory(dir)) fail_io("run directory '" + run_dir + "' does not exist");

  if (kind == "intervals" || kind == "variance") {
    const RunConfig config = read_resolved_config(dir);
    auto in = open_in(dir / "ledger.csv");
    const SlotLedger ledger = read_ledger_csv(in);
    if (kind == "variance") {
      const fs::path path = dir / "variance.csv";
      auto o = open_out(path);
      write_variance_csv(o, interval_variance(ledger, config.n_all));
      out << path.string() << '\n';
      return kOk;
    }
    const fs::path path = dir / "intervals.csv";
    auto o = open_out(path);
    o << "layer_id,slot,singular_index,activated_step,duration\n";
    for (const Episode& e : ledger.episodes()) {
      const std::size_t end = e.retired_step.value_or(std::max(config.n_all, e.activated_step));
      o << e.layer << ',' << e.slot << ',' << e.singular_index << ',' << e.activated_step << ','
        << end - e.activated_step << '\n';
    }
    out << path.string() << '\n';
    return kOk;
  }

  if (kind == "loss") {
    auto in = open_in(dir / "metrics.csv");
    std::string line;
    if (!std::getline(in, line) || line != "step,train_loss,eval_loss,switch_flag") {
      fail_io("metrics.csv has an unexpected header");
    }
    const fs::path path = dir / "loss.csv";
    auto o = open_out(path);
    o << "step,train_loss,eval_loss\n";
    while (std::getline(in, line)) {
      const auto f = csv::split_line(line);
      if (f.size() != 4) fail_io("metrics.csv: malformed row '" + line + "'");
      o << f[0] << ',' << f[1] << ',' << f[2] << '\n';
    }
    out << path.string() << '\n';
    return kOk;
  }
  fail_validation("unknown report kind '" + kind + "' (expected intervals|variance|loss)");
}

int cmd_compare(const std::string& config_a, const std::string& config_b, const std::vector<std::uint64_t>& seeds,
                const std::optional<std::string>& out_dir, std::ostream& out) {
  for (const std::string& p : {config_a, config_b}) {
    if (!fs::exists(p)) fail_io("config file '" + p + "' does not exist");
  }
  if (seeds.empty()) fail_validation("compare needs at least one --seed");
  const RunConfig a = load_config(config_a);
  const RunConfig b = load_config(config_b);
  validate(a);
  validate(b);

  auto comparable = [](const RunConfig& c) {
    nlohmann::json j = config_to_json(c);
    for (const char* key : {"mode", "r_target", "seed", "output_dir", "export_importance"}) j.erase(key);
    return j;
  };
  if (comparable(a) != comparable(b)) {
    fail_validation("compare: configs may differ only in mode and r_target");
  }

  struct Outcome {
    std::uint64_t seed;
    std::future<double> loss_a, loss_b;
  };
  std::vector<Outcome> runs;
  for (std::uint64_t seed : seeds) {
    RunConfig ca = a;
    RunConfig cb = b;
    ca.seed = cb.seed = seed;
    runs.push_back({seed, std::async(std::launch::async, final_eval_loss, ca),
                    std::async(std::launch::async, final_eval_loss, cb)});
  }

  const fs::path dir = out_dir.value_or(a.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail_io("cannot create output directory '" + dir.string() + "': " + ec.message());
  const fs::path path = dir / "compare.csv";
  auto o = open_out(path);
  o << "seed,final_loss_a,final_loss_b\n";
  std::size_t wins_a = 0, wins_b = 0, ties = 0;
  for (Outcome& r : runs) {
    const double la = r.loss_a.get();
    const double lb = r.loss_b.get();
    o << r.seed << ',' << csv::format_double(la) << ',' << csv::format_double(lb) << '\n';
    if (la < lb) ++wins_a;
    else if (lb < la) ++wins_b;
    else ++ties;
  }
  o.flush();
  if (!o) fail_io("failed writing '" + path.string() + "'");
  out << path.string() << '\n';
  out << "a (" << to_string(a.mode) << ", r_target=" << a.r_target << ") wins " << wins_a << ", b ("
      << to_string(b.mode) << ", r_target=" << b.r_target << ") wins " << wins_b << ", ties " << ties << '\n';
  return kOk;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"srlora: subspace-recomposed low-rank adaptation on linear layers"};
  app.require_subcommand(1);

  std::string config_path, suite, kind, run_dir;
  std::vector<std::string> compare_configs;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::uint64_t> seeds;

  auto* train = app.add_subcommand("train", "Train one run and write its artifacts");
  train->add_option("--config", config_path, "Run config (JSON)")->required();
  train->add_option("--out", out_dir, "Output directory (overrides config)");
  train->add_option("--seed", seed, "Seed (overrides config)");

  auto* verify_cmd = app.add_subcommand("verify", "Run a property suite with fixed seeds");
  verify_cmd->add_option("--suite", suite, "svd|gradients|preservation|schedule|all")->required();

  auto* report = app.add_subcommand("report", "Derive a CSV report from a run directory");
  report->add_option("--out", run_dir, "Run directory produced by train")->required();
  report->add_option("--kind", kind, "intervals|variance|loss")->required();

  auto* compare = app.add_subcommand("compare", "Compare two configs over seeds");
  compare->add_option("--config", compare_configs, "Exactly two configs: a then b")->required()->expected(2);
  compare->add_option("--seed", seeds, "Seed (repeatable)")->required();
  compare->add_option("--out", out_dir, "Directory for compare.csv");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  }

  try {
    if (*train) return cmd_train(config_path, out_dir, seed, out);
    if (*verify_cmd) return cmd_verify(suite, out);
    if (*report) return cmd_report(run_dir, kind, out);
    if (*compare) return cmd_compare(compare_configs.at(0), compare_configs.at(1), seeds, out_dir, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kValidation;
}

}  // namespace srlora::cli
