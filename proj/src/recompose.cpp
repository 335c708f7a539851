#include "srlora/recompose.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "srlora/csv.hpp"
#include "srlora/error.hpp"
#include "srlora/log.hpp"

namespace srlora {

bool SwitchSchedule::is_switch_step(std::size_t step) const {
  return std::binary_search(switch_steps.begin(), switch_steps.end(), step);
}

SwitchSchedule build_schedule(std::size_t r, double gamma, std::size_t r_target, std::size_t n_all) {
  if (r == 0) fail_validation("schedule: rank must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    fail_validation("schedule: gamma=" + csv::format_double(gamma) + " outside (0, 1]");
  }
  const double recycled = gamma * static_cast<double>(r);
  const double rounded = std::round(recycled);
  if (std::fabs(recycled - rounded) > 1e-9 || rounded < 1.0) {
    fail_validation("schedule: gamma*r=" + csv::format_double(recycled) + " is not a positive integer");
  }
  if (r_target < r) {
    fail_validation("schedule: r_target=" + std::to_string(r_target) + " is below r=" + std::to_string(r));
  }

  SwitchSchedule s;
  s.r = r;
  s.r_prime = static_cast<std::size_t>(rounded);
  s.r_target = r_target;
  s.n_all = n_all;
  if ((r_target - r) % s.r_prime != 0) {
    fail_validation("schedule: r_target-r=" + std::to_string(r_target - r) +
                    " is not divisible by gamma*r=" + std::to_string(s.r_prime));
  }
  s.n_switch = (r_target - r) / s.r_prime;
  if (s.n_switch == 0) return s;
  if (n_all < s.n_switch) {
    fail_validation("schedule: n_all=" + std::to_string(n_all) + " is smaller than n_switch=" +
                    std::to_string(s.n_switch));
  }
  s.t_interval = n_all / s.n_switch;
  s.switch_steps.reserve(s.n_switch);
  for (std::size_t k = 1; k <= s.n_switch; ++k) s.switch_steps.push_back(k * s.t_interval);
  return s;
}

void SlotLedger::activate(std::size_t layer, std::size_t slot, std::size_t singular_index,
                          std::size_t step) {
  for (const Episode& e : episodes_) {
    if (e.layer == layer && e.slot == slot && !e.retired_step) {
      fail_runtime("ledger: slot " + std::to_string(slot) + " of layer " + std::to_string(layer) +
                   " is already active");
    }
  }
  episodes_.push_back({layer, slot, singular_index, step, std::nullopt});
}

void SlotLedger::retire(std::size_t layer, std::size_t slot, std::size_t step) {
  for (Episode& e : episodes_) {
    if (e.layer == layer && e.slot == slot && !e.retired_step) {
      e.retired_step = step;
      return;
    }
  }
}

std::set<std::size_t> SlotLedger::activated_indices(std::size_t layer) const {
  std::set<std::size_t> out;
  for (const Episode& e : episodes_)
    if (e.layer == layer) out.insert(e.singular_index);
  return out;
}

std::optional<std::string> SlotLedger::check_invariants() const {
  std::map<std::pair<std::size_t, std::size_t>, std::vector<const Episode*>> by_slot;
  std::set<std::pair<std::size_t, std::size_t>> seen;  // (layer, singular index)
  for (const Episode& e : episodes_) {
    if (!seen.insert({e.layer, e.singular_index}).second) {
      return "singular index " + std::to_string(e.singular_index) + " reused in layer " +
             std::to_string(e.layer);
    }
    if (e.retired_step && *e.retired_step < e.activated_step) {
      return "episode retired before activation (layer " + std::to_string(e.layer) + ", slot " +
             std::to_string(e.slot) + ")";
    }
    by_slot[{e.layer, e.slot}].push_back(&e);
  }
  for (const auto& [key, list] : by_slot) {
    for (std::size_t i = 0; i + 1 < list.size(); ++i) {
      const Episode& cur = *list[i];
      const Episode& next = *list[i + 1];
      if (!cur.retired_step || *cur.retired_step > next.activated_step) {
        return "overlapping episodes in layer " + std::to_string(key.first) + ", slot " +
               std::to_string(key.second);
      }
    }
  }
  return std::nullopt;
}

SlotLedger SlotLedger::from_episodes(std::vector<Episode> episodes) {
  SlotLedger l;
  l.episodes_ = std::move(episodes);
  return l;
}

std::vector<std::size_t> select_low_importance(const std::vector<double>& scores, std::size_t r_prime) {
  if (r_prime > scores.size()) {
    fail_validation("select_low_importance: r'=" + std::to_string(r_prime) + " exceeds rank " +
                    std::to_string(scores.size()));
  }
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t x, std::size_t y) { return scores[x] < scores[y]; });
  idx.resize(r_prime);
  std::sort(idx.begin(), idx.end());
  return idx;
}

namespace {

void check_slots(const LoraLinear& layer, const std::vector<std::size_t>& slots, const char* context) {
  std::set<std::size_t> unique;
  for (std::size_t k : slots) {
    if (k >= layer.rank || !unique.insert(k).second) {
      fail_validation(std::string(context) + ": invalid or repeated slot " + std::to_string(k) +
                      " for rank " + std::to_string(layer.rank));
    }
  }
}

}  // namespace

void fuse_slots(LoraLinear& layer, const std::vector<std::size_t>& slots) {
  check_slots(layer, slots, "fuse_slots");
  if (slots.empty()) return;
  layer.w += slot_product(layer, slots);
  for (std::size_t k : slots) {
    for (std::size_t i = 0; i < layer.b.rows(); ++i) layer.b(i, k) = 0.0;
    for (std::size_t j = 0; j < layer.a.cols(); ++j) layer.a(k, j) = 0.0;
  }
}

bool reinit_slots(LoraLinear& layer, const std::vector<std::size_t>& slots) {
  check_slots(layer, slots, "reinit_slots");
  if (slots.empty()) return true;
  if (layer.next_direction + slots.size() > layer.direction_capacity()) {
    log_warning("reinit_slots: direction bank exhausted (next=" + std::to_string(layer.next_direction) +
                ", need " + std::to_string(slots.size()) + ", capacity " +
                std::to_string(layer.direction_capacity()) + ")");
    return false;
  }
  std::vector<std::size_t> ordered = slots;
  std::sort(ordered.begin(), ordered.end());
  for (std::size_t k : ordered) load_direction(layer, k, layer.next_direction++);
  layer.w -= slot_product(layer, ordered);
  return true;
}

SwitchOutcome recompose_step(LoraLinear& layer, ImportanceState& state, const SwitchSchedule& schedule,
                             SlotLedger& ledger, std::size_t layer_id, std::size_t step,
                             ResetScope reset_scope) {
  if (!schedule.is_switch_step(step)) {
    fail_validation("recompose_step: step " + std::to_string(step) + " is not a scheduled switch");
  }
  SwitchOutcome out;
  if (layer.next_direction + schedule.r_prime > layer.direction_capacity()) {
    log_warning("layer " + std::to_string(layer_id) + ": skipping switch at step " + std::to_string(step) +
                ", only " + std::to_string(layer.direction_capacity() - layer.next_direction) +
                " unused directions left");
    out.skipped = true;
    return out;
  }

  const std::vector<std::size_t> low = select_low_importance(slot_scores(state), schedule.r_prime);
  fuse_slots(layer, low);
  for (std::size_t k : low) ledger.retire(layer_id, k, step);
  reinit_slots(layer, low);
  for (std::size_t k : low) ledger.activate(layer_id, k, *layer.slot_direction[k], step);

  if (reset_scope == ResetScope::all) {
    std::vector<std::size_t> every(layer.rank);
    std::iota(every.begin(), every.end(), std::size_t{0});
    reset_slots(state, every);
  } else {
    reset_slots(state, low);
  }
  out.recycled = low;
  return out;
}

std::vector<VarianceRow> interval_variance(const SlotLedger& ledger, std::size_t n_all) {
  // Welford's running update, per layer.
  struct Acc {
    std::size_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;
  };
  std::map<std::size_t, Acc> acc;
  for (const Episode& e : ledger.episodes()) {
    const std::size_t end = e.retired_step.value_or(std::max(n_all, e.activated_step));
    const double x = static_cast<double>(end - e.activated_step);
    Acc& a = acc[e.layer];
    ++a.n;
    const double delta = x - a.mean;
    a.mean += delta / static_cast<double>(a.n);
    a.m2 += delta * (x - a.mean);
  }
  std::vector<VarianceRow> rows;
  for (const auto& [layer, a] : acc) rows.push_back({layer, a.m2 / static_cast<double>(a.n), a.n});
  return rows;
}

void write_ledger_csv(std::ostream& out, const SlotLedger& ledger) {
  out << "layer_id,slot,singular_index,activated_step,retired_step\n";
  for (const Episode& e : ledger.episodes()) {
    out << e.layer << ',' << e.slot << ',' << e.singular_index << ',' << e.activated_step << ',';
    if (e.retired_step) out << *e.retired_step;
    out << '\n';
  }
}

SlotLedger read_ledger_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) fail_io("ledger csv: missing header");
  if (csv::split_line(line) !=
      std::vector<std::string>{"layer_id", "slot", "singular_index", "activated_step", "retired_step"}) {
    fail_io("ledger csv: unexpected header '" + line + "'");
  }
  std::vector<Episode> episodes;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = csv::split_line(line);
    const std::string where = "ledger csv line " + std::to_string(line_no);
    if (f.size() != 5) fail_io(where + ": expected 5 fields");
    Episode e;
    e.layer = csv::parse_size(f[0], where);
    e.slot = csv::parse_size(f[1], where);
    e.singular_index = csv::parse_size(f[2], where);
    e.activated_step = csv::parse_size(f[3], where);
    if (!f[4].empty()) e.retired_step = csv::parse_size(f[4], where);
    episodes.push_back(e);
  }
  return SlotLedger::from_episodes(std::move(episodes));
}

void write_variance_csv(std::ostream& out, const std::vector<VarianceRow>& rows) {
  out << "layer_id,variance,episode_count\n";
  for (const VarianceRow& r : rows)
    out << r.layer << ',' << csv::format_double(r.variance) << ',' << r.episode_count << '\n';
}

}  // namespace srlora
