// Checkpoint container:
//   "SRLC" | u32 version | u64 manifest length | manifest (JSON, UTF-8)
//   | u32 record count | count × (u32 name length | name | SRLM matrix record)
// The manifest carries every scalar and list; matrices travel as records.

#include <array>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "srlora/error.hpp"
#include "srlora/trainer.hpp"

namespace srlora {

using nlohmann::json;

namespace {

constexpr std::array<char, 4> kMagic{'S', 'R', 'L', 'C'};
constexpr std::uint32_t kVersion = 1;

void put_le(std::ostream& out, std::uint64_t v, int width) {
  for (int i = 0; i < width; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint64_t get_le(std::istream& in, int width, const char* what) {
  std::array<unsigned char, 8> b{};
  in.read(reinterpret_cast<char*>(b.data()), width);
  if (in.gcount() != width) fail_io(std::string("checkpoint truncated while reading ") + what);
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

json optional_index(const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); }

std::optional<std::size_t> read_optional_index(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<std::size_t>();
}

Matrix row_vector(const std::vector<double>& v) {
  Matrix m(1, v.size());
  for (std::size_t k = 0; k < v.size(); ++k) m(0, k) = v[k];
  return m;
}

std::string layer_key(std::size_t li, const char* field) { return "layer" + std::to_string(li) + "." + field; }

}  // namespace

void Trainer::save_checkpoint(std::ostream& out) const {
  std::vector<std::pair<std::string, const Matrix*>> records;
  std::vector<Matrix> owned;  // row-vector copies of singular values
  owned.reserve(net_.size());

  json layers = json::array();
  for (std::size_t li = 0; li < net_.size(); ++li) {
    const DenseLayer& l = net_.layer(li);
    json slots = json::array();
    for (const auto& d : l.linear.slot_direction) slots.push_back(optional_index(d));
    layers.push_back({{"rank", l.linear.rank},
                      {"alpha", l.linear.alpha},
                      {"next_direction", l.linear.next_direction},
                      {"slot_direction", slots},
                      {"activation", to_string(l.activation)},
                      {"adapted", l.adapted},
                      {"importance_step", l.importance.step}});
    owned.push_back(row_vector(l.linear.svd0.s));
    records.emplace_back(layer_key(li, "w"), &l.linear.w);
    records.emplace_back(layer_key(li, "b"), &l.linear.b);
    records.emplace_back(layer_key(li, "a"), &l.linear.a);
    records.emplace_back(layer_key(li, "bias"), &l.bias);
    records.emplace_back(layer_key(li, "svd0.u"), &l.linear.svd0.u);
    records.emplace_back(layer_key(li, "svd0.s"), &owned.back());
    records.emplace_back(layer_key(li, "svd0.v"), &l.linear.svd0.v);
    records.emplace_back(layer_key(li, "importance.i_bar_b"), &l.importance.i_bar_b);
    records.emplace_back(layer_key(li, "importance.u_bar_b"), &l.importance.u_bar_b);
    records.emplace_back(layer_key(li, "importance.i_bar_a"), &l.importance.i_bar_a);
    records.emplace_back(layer_key(li, "importance.u_bar_a"), &l.importance.u_bar_a);
  }
  json velocity_present = json::array();
  for (std::size_t k = 0; k < optimizer_.velocity.size(); ++k) {
    const bool present = !optimizer_.velocity[k].empty();
    velocity_present.push_back(present);
    if (present) records.emplace_back("velocity" + std::to_string(k), &optimizer_.velocity[k]);
  }

  json episodes = json::array();
  for (const Episode& e : ledger_.episodes()) {
    episodes.push_back({e.layer, e.slot, e.singular_index, e.activated_step, optional_index(e.retired_step)});
  }
  json metrics = json::array();
  for (const MetricRow& r : log_.rows) {
    metrics.push_back({r.step, r.train_loss ? json(*r.train_loss) : json(nullptr), r.eval_loss, r.switch_flag});
  }
  json switches = json::array();
  for (const SwitchRecord& s : switches_) {
    switches.push_back({s.step, s.probe_relative_change, s.eval_loss_before, s.eval_loss_after,
                        s.layers_recomposed, s.layers_skipped});
  }
  json importance = json::array();
  for (const ImportanceRow& r : importance_rows_) {
    importance.push_back({r.step, r.layer, r.slot, optional_index(r.singular_index), r.score});
  }
  json names = json::array();
  for (const auto& [name, m] : records) names.push_back(name);

  const json manifest = {
      {"format", "srlora-checkpoint"},
      {"mode", to_string(config_.mode)},
      {"step", step_},
      {"layers", layers},
      {"optimizer",
       {{"learning_rate", optimizer_.learning_rate},
        {"momentum", optimizer_.momentum},
        {"velocity_present", velocity_present}}},
      {"stream",
       {{"batch_size", stream_.batch_size()},
        {"rng_seed", stream_.rng().seed()},
        {"rng_counter", stream_.rng().counter()},
        {"order", stream_.order()},
        {"position", stream_.position()}}},
      {"loss_window", {{"sum", window_loss_sum_}, {"count", window_count_}}},
      {"ledger", episodes},
      {"metrics", metrics},
      {"switches", switches},
      {"importance_rows", importance},
      {"records", names},
  };
  const std::string text = manifest.dump();

  out.write(kMagic.data(), kMagic.size());
  put_le(out, kVersion, 4);
  put_le(out, text.size(), 8);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put_le(out, records.size(), 4);
  for (const auto& [name, m] : records) {
    put_le(out, name.size(), 4);
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_matrix(out, *m);
  }
  if (!out) fail_io("failed writing checkpoint");
}

void Trainer::save_checkpoint(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_io("cannot write checkpoint '" + path + "'");
  save_checkpoint(out);
}

Trainer Trainer::resume(RunConfig config, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_io("cannot open checkpoint '" + path + "'");
  return resume(std::move(config), in);
}

Trainer Trainer::resume(RunConfig config, std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != 4 || magic != kMagic) fail_io("not a checkpoint (bad magic)");
  if (get_le(in, 4, "version") != kVersion) fail_io("unsupported checkpoint version");
  const std::uint64_t manifest_len = get_le(in, 8, "manifest length");
  if (manifest_len > (1ull << 32)) fail_io("checkpoint manifest length implausible");
  std::string text(manifest_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(manifest_len));
  if (static_cast<std::uint64_t>(in.gcount()) != manifest_len) fail_io("checkpoint truncated in manifest");

  const std::uint64_t count = get_le(in, 4, "record count");
  std::map<std::string, Matrix> records;
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::uint64_t len = get_le(in, 4, "record name length");
    if (len > 4096) fail_io("checkpoint record name too long");
    std::string name(len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(len));
    if (static_cast<std::uint64_t>(in.gcount()) != len) fail_io("checkpoint truncated in record name");
    records.emplace(std::move(name), read_matrix(in));
  }
  if (in.peek() != std::char_traits<char>::eof()) fail_io("checkpoint has trailing bytes");

  Trainer t(std::move(config));
  try {
    const json m = json::parse(text);
    if (m.at("format") != "srlora-checkpoint") fail_io("checkpoint manifest has the wrong format tag");
    if (m.at("mode").get<std::string>() != to_string(t.config_.mode)) {
      fail_validation("checkpoint mode '" + m.at("mode").get<std::string>() + "' does not match config mode '" +
                      to_string(t.config_.mode) + "'");
    }
    if (m.at("records").size() != count) fail_io("checkpoint record count disagrees with manifest");

    auto take = [&](const std::string& name, const Matrix& like) {
      const auto it = records.find(name);
      if (it == records.end()) fail_io("checkpoint is missing record '" + name + "'");
      if (!like.empty()) require_same_shape(it->second, like, name.c_str());
      return it->second;
    };

    const json& layers = m.at("layers");
    if (layers.size() != t.net_.size()) fail_validation("checkpoint layer count does not match config");
    for (std::size_t li = 0; li < t.net_.size(); ++li) {
      const json& lj = layers[li];
      DenseLayer& l = t.net_.mutable_layer(li);
      if (lj.at("rank").get<std::size_t>() != l.linear.rank || lj.at("adapted").get<bool>() != l.adapted) {
        fail_validation("checkpoint layer " + std::to_string(li) + " does not match config");
      }
      l.linear.alpha = lj.at("alpha").get<double>();
      l.linear.scale = l.linear.alpha / static_cast<double>(l.linear.rank);
      l.linear.next_direction = lj.at("next_direction").get<std::size_t>();
      l.linear.slot_direction.clear();
      for (const json& d : lj.at("slot_direction")) l.linear.slot_direction.push_back(read_optional_index(d));
      if (l.linear.slot_direction.size() != l.linear.rank) fail_io("checkpoint slot metadata length mismatch");
      l.linear.w = take(layer_key(li, "w"), l.linear.w);
      l.linear.b = take(layer_key(li, "b"), l.linear.b);
      l.linear.a = take(layer_key(li, "a"), l.linear.a);
      l.bias = take(layer_key(li, "bias"), l.bias);
      l.linear.svd0.u = take(layer_key(li, "svd0.u"), l.linear.svd0.u);
      l.linear.svd0.v = take(layer_key(li, "svd0.v"), l.linear.svd0.v);
      const Matrix s = take(layer_key(li, "svd0.s"), Matrix());
      l.linear.svd0.s.assign(s.data().begin(), s.data().end());
      if (l.linear.svd0.s.size() != l.linear.svd0.u.cols()) fail_io("checkpoint singular value count mismatch");
      l.importance.i_bar_b = take(layer_key(li, "importance.i_bar_b"), l.importance.i_bar_b);
      l.importance.u_bar_b = take(layer_key(li, "importance.u_bar_b"), l.importance.u_bar_b);
      l.importance.i_bar_a = take(layer_key(li, "importance.i_bar_a"), l.importance.i_bar_a);
      l.importance.u_bar_a = take(layer_key(li, "importance.u_bar_a"), l.importance.u_bar_a);
      l.importance.step = lj.at("importance_step").get<std::size_t>();
    }

    const json& opt = m.at("optimizer");
    t.optimizer_.learning_rate = opt.at("learning_rate").get<double>();
    t.optimizer_.momentum = opt.at("momentum").get<double>();
    t.optimizer_.velocity.clear();
    const json& present = opt.at("velocity_present");
    for (std::size_t k = 0; k < present.size(); ++k) {
      t.optimizer_.velocity.push_back(present[k].get<bool>() ? take("velocity" + std::to_string(k), Matrix())
                                                             : Matrix());
    }

    const json& st = m.at("stream");
    if (st.at("batch_size").get<std::size_t>() != t.config_.batch_size) {
      fail_validation("checkpoint batch size does not match config");
    }
    t.stream_.restore(Rng(st.at("rng_seed").get<std::uint64_t>(), st.at("rng_counter").get<std::uint64_t>()),
                      st.at("order").get<std::vector<std::size_t>>(), st.at("position").get<std::size_t>());

    t.window_loss_sum_ = m.at("loss_window").at("sum").get<double>();
    t.window_count_ = m.at("loss_window").at("count").get<std::size_t>();
    t.step_ = m.at("step").get<std::size_t>();
    if (t.step_ > t.config_.n_all) fail_validation("checkpoint step exceeds config n_all");

    std::vector<Episode> episodes;
    for (const json& e : m.at("ledger")) {
      episodes.push_back({e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>(), e.at(2).get<std::size_t>(),
                          e.at(3).get<std::size_t>(), read_optional_index(e.at(4))});
    }
    t.ledger_ = SlotLedger::from_episodes(std::move(episodes));

    t.log_.rows.clear();
    for (const json& r : m.at("metrics")) {
      MetricRow row;
      row.step = r.at(0).get<std::size_t>();
      if (!r.at(1).is_null()) row.train_loss = r.at(1).get<double>();
      row.eval_loss = r.at(2).get<double>();
      row.switch_flag = r.at(3).get<bool>();
      t.log_.rows.push_back(row);
    }
    t.switches_.clear();
    for (const json& s : m.at("switches")) {
      t.switches_.push_back({s.at(0).get<std::size_t>(), s.at(1).get<double>(), s.at(2).get<double>(),
                             s.at(3).get<double>(), s.at(4).get<std::size_t>(), s.at(5).get<std::size_t>()});
    }
    t.importance_rows_.clear();
    for (const json& r : m.at("importance_rows")) {
      t.importance_rows_.push_back({r.at(0).get<std::size_t>(), r.at(1).get<std::size_t>(),
                                    r.at(2).get<std::size_t>(), read_optional_index(r.at(3)),
                                    r.at(4).get<double>()});
    }
  } catch (const json::exception& e) {
    fail_io(std::string("corrupt checkpoint manifest: ") + e.what());
  }
  return t;
}

}  // namespace srlora
