#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "srlora/adapter.hpp"
#include "srlora/importance.hpp"

namespace srlora {

/// When to recompose. Switch k (1-based) happens at step k·t_interval.
struct SwitchSchedule {
  std::size_t r = 0;
  std::size_t r_prime = 0;  // slots recycled per switch, gamma·r
  std::size_t r_target = 0;
  std::size_t n_all = 0;
  std::size_t n_switch = 0;  // (r_target − r) / r_prime
  std::size_t t_interval = 0;
  std::vector<std::size_t> switch_steps;

  bool is_switch_step(std::size_t step) const;
};

/// Rejects a non-integral or zero gamma·r, r_target < r, (r_target − r) not
/// divisible by gamma·r, and n_all < n_switch.
SwitchSchedule build_schedule(std::size_t r, double gamma, std::size_t r_target, std::size_t n_all);

/// One tenure of a singular direction in a slot.
struct Episode {
  std::size_t layer = 0;
  std::size_t slot = 0;
  std::size_t singular_index = 0;
  std::size_t activated_step = 0;
  std::optional<std::size_t> retired_step;

  friend bool operator==(const Episode&, const Episode&) = default;
};

/// Activation history of every (layer, slot).
class SlotLedger {
 public:
  void activate(std::size_t layer, std::size_t slot, std::size_t singular_index, std::size_t step);
  void retire(std::size_t layer, std::size_t slot, std::size_t step);

  const std::vector<Episode>& episodes() const noexcept { return episodes_; }
  bool empty() const noexcept { return episodes_.empty(); }

  /// Singular indices ever activated in `layer`.
  std::set<std::size_t> activated_indices(std::size_t layer) const;

  /// Describes the first violated invariant (ordering, overlap, reuse of a
  /// singular index within a layer), or nullopt.
  std::optional<std::string> check_invariants() const;

  static SlotLedger from_episodes(std::vector<Episode> episodes);

  friend bool operator==(const SlotLedger&, const SlotLedger&) = default;

 private:
  std::vector<Episode> episodes_;
};

/// The r_prime slots with the smallest scores, ties to the lower index;
/// returned in ascending slot order.
std::vector<std::size_t> select_low_importance(const std::vector<double>& scores, std::size_t r_prime);

/// w += scale·b[:, S]·a[S, :], then zero those columns of b and rows of a.
void fuse_slots(LoraLinear& layer, const std::vector<std::size_t>& slots);

/// Refill `slots` (ascending) from the next unused singular directions of the
/// pretrained weight and subtract their product from w. Returns false, logs a
/// warning and changes nothing if the direction bank cannot supply them.
bool reinit_slots(LoraLinear& layer, const std::vector<std::size_t>& slots);

enum class ResetScope { recycled, all };

struct SwitchOutcome {
  std::vector<std::size_t> recycled;  // empty when skipped
  bool skipped = false;
};

/// One full recomposition of a layer at a scheduled switch step: score,
/// select, fuse, reinitialize, reset importance, update the ledger. Skipped
/// (with a warning) when the layer has too few unused directions left.
SwitchOutcome recompose_step(LoraLinear& layer, ImportanceState& state, const SwitchSchedule& schedule,
                             SlotLedger& ledger, std::size_t layer_id, std::size_t step,
                             ResetScope reset_scope = ResetScope::recycled);

struct VarianceRow {
  std::size_t layer = 0;
  double variance = 0.0;  // population variance of episode durations
  std::size_t episode_count = 0;
};

/// Per-layer variance of active-interval lengths; open episodes end at n_all.
std::vector<VarianceRow> interval_variance(const SlotLedger& ledger, std::size_t n_all);

// CSV: layer_id,slot,singular_index,activated_step,retired_step (empty if open)
void write_ledger_csv(std::ostream& out, const SlotLedger& ledger);
SlotLedger read_ledger_csv(std::istream& in);
// CSV: layer_id,variance,episode_count
void write_variance_csv(std::ostream& out, const std::vector<VarianceRow>& rows);

}  // namespace srlora
