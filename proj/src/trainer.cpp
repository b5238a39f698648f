#include "xmadapt/trainer.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "xmadapt/error.hpp"
#include "xmadapt/rng.hpp"

namespace xmadapt {

namespace {

// Epoch-shuffle stream tag; offset keeps epochs clear of the per-sample and
// weight-init streams that may share the same seed.
constexpr uint64_t kShuffleStreamBase = 0x0EB0000ULL;

std::vector<Parameter*> trainable_subset(const std::vector<Parameter*>& params) {
  std::vector<Parameter*> out;
  for (Parameter* p : params)
    if (p->trainable()) out.push_back(p);
  return out;
}

}  // namespace

OptimizerState OptimizerState::init(const std::vector<Parameter*>& params,
                                    const AdamWConfig& cfg) {
  OptimizerState state;
  state.cfg = cfg;
  for (const Parameter* p : params) {
    if (!p->trainable()) continue;
    Slot slot;
    slot.name = p->name;
    slot.m.assign(static_cast<size_t>(p->value.numel()), 0.0f);
    slot.v.assign(static_cast<size_t>(p->value.numel()), 0.0f);
    state.slots.push_back(std::move(slot));
  }
  return state;
}

void adamw_step(const std::vector<Parameter*>& params, OptimizerState& state) {
  std::vector<Parameter*> trainable = trainable_subset(params);
  if (trainable.size() != state.slots.size())
    throw ContractError("adamw_step: optimizer state has " + std::to_string(state.slots.size()) +
                        " slots but " + std::to_string(trainable.size()) +
                        " parameters are trainable");
  state.t += 1;
  const AdamWConfig& c = state.cfg;
  const double bc1 = 1.0 - std::pow(static_cast<double>(c.beta1), static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(static_cast<double>(c.beta2), static_cast<double>(state.t));
  for (size_t i = 0; i < trainable.size(); ++i) {
    Parameter* p = trainable[i];
    OptimizerState::Slot& slot = state.slots[i];
    if (slot.name != p->name)
      throw ContractError("adamw_step: state slot '" + slot.name + "' does not match parameter '" +
                          p->name + "'");
    if (!p->value.has_grad())
      throw ContractError("adamw_step: parameter '" + p->name + "' has no gradient");
    const std::vector<float>& g = p->value.grad();
    std::vector<float>& w = p->value.mutable_data();
    if (slot.m.size() != w.size())
      throw ContractError("adamw_step: state slot '" + slot.name + "' has wrong size");
    for (size_t k = 0; k < w.size(); ++k) {
      slot.m[k] = c.beta1 * slot.m[k] + (1.0f - c.beta1) * g[k];
      slot.v[k] = c.beta2 * slot.v[k] + (1.0f - c.beta2) * g[k] * g[k];
      const float mhat = static_cast<float>(slot.m[k] / bc1);
      const float vhat = static_cast<float>(slot.v[k] / bc2);
      w[k] -= c.lr * (mhat / (std::sqrt(vhat) + c.eps) + c.weight_decay * w[k]);
    }
  }
}

void freeze_backbones(GliomaNet& net) {
  for (Parameter* p : net.encoder_parameters()) p->set_trainable(false);
}

ParamReport count_params(GliomaNet& net) {
  ParamReport r;
  for (Parameter* p : net.parameters()) {
    r.total += p->value.numel();
    if (p->trainable()) r.trainable += p->value.numel();
  }
  r.percent = r.total > 0 ? 100.0 * static_cast<double>(r.trainable) /
                                static_cast<double>(r.total)
                          : 0.0;
  return r;
}

EvalResult evaluate(const GliomaNet& net, const Manifest& data,
                    const std::vector<std::string>& ids, int64_t batch_size) {
  if (ids.empty()) throw ContractError("evaluate: empty id list");
  if (batch_size < 1) throw ConfigError("evaluate: batch_size must be >= 1");
  NoGradGuard no_grad;
  EvalResult result;
  for (size_t off = 0; off < ids.size(); off += static_cast<size_t>(batch_size)) {
    size_t end = std::min(ids.size(), off + static_cast<size_t>(batch_size));
    std::vector<std::string> chunk(ids.begin() + static_cast<int64_t>(off),
                                   ids.begin() + static_cast<int64_t>(end));
    Batch batch = load_batch(data, chunk, net.config().variant);
    Tensor logits = net.forward(batch.input);
    const int64_t s = batch.mask.dim(1);
    for (size_t i = 0; i < chunk.size(); ++i) {
      BinaryMask pred = argmax_mask(logits, static_cast<int64_t>(i));
      BinaryMask gt = mask_from_tensor(
          reshape(slice(batch.mask, 0, static_cast<int64_t>(i), 1), {s, s}));
      EvalRecord rec;
      rec.id = chunk[i];
      rec.dice_percent = dice_score(pred, gt);
      rec.hd95 = hd95(pred, gt);
      result.records.push_back(std::move(rec));
    }
  }
  result.aggregate = aggregate_records(result.records);
  return result;
}

std::vector<EpochRow> train(GliomaNet& net, const Manifest& data, const TrainConfig& cfg,
                            OptimizerState& opt, int64_t start_epoch) {
  if (cfg.epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (cfg.eval_every < 0) throw ConfigError("train: eval_every must be >= 0");
  cfg.loss.validate();
  if (data.train_ids.empty()) throw ContractError("train: manifest has no train split");

  std::vector<Parameter*> params = net.parameters();
  std::vector<Parameter*> trainable = trainable_subset(params);
  if (trainable.empty()) throw ContractError("train: no trainable parameters");

  // Each training sample is read from disk once, not once per epoch.
  std::unordered_map<std::string, SampleTensors> cache;
  auto cached = [&](const std::string& id) -> const SampleTensors* {
    auto it = cache.find(id);
    if (it == cache.end()) it = cache.emplace(id, load_sample(data, id)).first;
    return &it->second;
  };

  std::vector<EpochRow> rows;
  for (int64_t e = 0; e < cfg.epochs; ++e) {
    const int64_t epoch = start_epoch + e;
    std::vector<std::string> order = data.train_ids;
    SplitMix64 rng(cfg.seed, kShuffleStreamBase + static_cast<uint64_t>(epoch));
    shuffle(order, rng);

    double loss_sum = 0.0;
    int64_t steps = 0;
    for (size_t off = 0; off < order.size(); off += static_cast<size_t>(cfg.batch_size)) {
      size_t end = std::min(order.size(), off + static_cast<size_t>(cfg.batch_size));
      std::vector<std::string> chunk(order.begin() + static_cast<int64_t>(off),
                                     order.begin() + static_cast<int64_t>(end));
      std::vector<const SampleTensors*> ptrs;
      ptrs.reserve(chunk.size());
      for (const std::string& id : chunk) ptrs.push_back(cached(id));
      Batch batch = assemble_batch(ptrs, chunk, net.config().variant);
      Tensor logits = net.forward(batch.input);
      Tensor loss = combined_loss(logits, batch.mask, cfg.loss);
      const float loss_value = loss.item();
      if (!std::isfinite(loss_value))
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                           ", step " + std::to_string(steps) + " (batch starts at " +
                           chunk.front() + ")");
      for (Parameter* p : trainable) p->value.zero_grad();
      backward(loss);
      adamw_step(params, opt);
      loss_sum += static_cast<double>(loss_value);
      ++steps;
    }

    EpochRow row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(steps);
    if (cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0 && !data.test_ids.empty())
      row.eval = evaluate(net, data, data.test_ids, cfg.batch_size).aggregate;
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_history_csv(const std::string& path, const std::vector<EpochRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "epoch,train_loss,dice_percent,hd95,hd95_undefined_count\n";
  out << std::setprecision(17);
  for (const EpochRow& r : rows) {
    out << r.epoch << ',' << r.train_loss << ',';
    if (r.eval) {
      out << r.eval->mean_dice << ',';
      if (r.eval->mean_hd95) out << *r.eval->mean_hd95;
      out << ',' << r.eval->hd95_undefined;
    } else {
      out << ",,";
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// Checkpoint I/O
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'X', 'M', 'C', 'K'};
constexpr uint8_t kVersion = 0x01;

void put_u32_le(std::string& buf, uint32_t v) {
  buf.push_back(static_cast<char>(v & 0xFF));
  buf.push_back(static_cast<char>((v >> 8) & 0xFF));
  buf.push_back(static_cast<char>((v >> 16) & 0xFF));
  buf.push_back(static_cast<char>((v >> 24) & 0xFF));
}

void put_f32_le(std::string& buf, float f) {
  uint32_t v;
  std::memcpy(&v, &f, sizeof v);
  put_u32_le(buf, v);
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;

  bool need(size_t n) const { return pos + n <= buf.size(); }
  uint8_t u8() {
    if (!need(1)) throw FormatError("checkpoint truncated");
    return static_cast<uint8_t>(buf[pos++]);
  }
  uint32_t u32() {
    if (!need(4)) throw FormatError("checkpoint truncated");
    uint32_t v = static_cast<uint8_t>(buf[pos]) | (static_cast<uint8_t>(buf[pos + 1]) << 8) |
                 (static_cast<uint8_t>(buf[pos + 2]) << 16) |
                 (static_cast<uint8_t>(buf[pos + 3]) << 24);
    pos += 4;
    return v;
  }
  float f32() {
    uint32_t v = u32();
    float f;
    std::memcpy(&f, &v, sizeof f);
    return f;
  }
  std::string bytes(size_t n) {
    if (!need(n)) throw FormatError("checkpoint truncated");
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

struct Entry {
  bool trainable = false;
  Shape shape;
  std::vector<float> data;
};

void append_entry(std::string& buf, const std::string& name, bool trainable, const Shape& shape,
                  const std::vector<float>& data) {
  put_u32_le(buf, static_cast<uint32_t>(name.size()));
  buf.append(name);
  buf.push_back(trainable ? 1 : 0);
  put_u32_le(buf, static_cast<uint32_t>(shape.size()));
  for (int64_t d : shape) put_u32_le(buf, static_cast<uint32_t>(d));
  for (float f : data) put_f32_le(buf, f);
}

bool is_optimizer_entry(const std::string& name) {
  if (name == "t") return true;
  auto ends_with = [&](const char* suffix) {
    size_t n = std::strlen(suffix);
    return name.size() > n && name.compare(name.size() - n, n, suffix) == 0;
  };
  return ends_with(".m") || ends_with(".v");
}

}  // namespace

void checkpoint_save(const std::string& path, GliomaNet& net, const OptimizerState* opt) {
  std::string buf;
  buf.append(kMagic, 4);
  buf.push_back(static_cast<char>(kVersion));

  std::vector<Parameter*> params = net.parameters();
  uint32_t count = static_cast<uint32_t>(params.size());
  if (opt != nullptr) count += static_cast<uint32_t>(2 * opt->slots.size() + 1);
  put_u32_le(buf, count);

  for (Parameter* p : params)
    append_entry(buf, p->name, p->trainable(), p->value.shape(), p->value.data());
  if (opt != nullptr) {
    for (const OptimizerState::Slot& s : opt->slots) {
      Shape shape{static_cast<int64_t>(s.m.size())};
      append_entry(buf, s.name + ".m", false, shape, s.m);
      append_entry(buf, s.name + ".v", false, shape, s.v);
    }
    append_entry(buf, "t", false, {1}, {static_cast<float>(opt->t)});
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("failed writing '" + path + "'");
}

void checkpoint_load(const std::string& path, GliomaNet& net, OptimizerState* opt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (!in) throw IoError("failed reading '" + path + "'");
  const std::string buf = ss.str();

  Reader r{buf};
  if (r.bytes(4) != std::string(kMagic, 4)) throw FormatError("bad checkpoint magic");
  if (r.u8() != kVersion) throw FormatError("unsupported checkpoint version");
  const uint32_t count = r.u32();

  std::map<std::string, Entry> entries;
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = r.u32();
    std::string name = r.bytes(name_len);
    Entry e;
    e.trainable = r.u8() != 0;
    const uint32_t ndim = r.u32();
    int64_t numel = 1;
    for (uint32_t d = 0; d < ndim; ++d) {
      int64_t dim = static_cast<int64_t>(r.u32());
      if (dim <= 0) throw FormatError("checkpoint entry '" + name + "' has a non-positive dim");
      e.shape.push_back(dim);
      numel *= dim;
    }
    e.data.resize(static_cast<size_t>(numel));
    for (int64_t k = 0; k < numel; ++k) e.data[static_cast<size_t>(k)] = r.f32();
    if (!entries.emplace(std::move(name), std::move(e)).second)
      throw FormatError("checkpoint has a duplicate entry");
  }
  if (r.pos != buf.size()) throw FormatError("checkpoint has trailing bytes");

  std::set<std::string> consumed;
  for (Parameter* p : net.parameters()) {
    auto it = entries.find(p->name);
    if (it == entries.end())
      throw FormatError("checkpoint is missing parameter '" + p->name + "'");
    const Entry& e = it->second;
    if (e.shape != p->value.shape())
      throw FormatError("checkpoint parameter '" + p->name + "' has shape " + shape_str(e.shape) +
                        ", expected " + shape_str(p->value.shape()));
    p->value.mutable_data() = e.data;
    p->set_trainable(e.trainable);
    consumed.insert(p->name);
  }

  if (opt != nullptr) {
    OptimizerState fresh;
    fresh.cfg = opt->cfg;
    for (Parameter* p : net.parameters()) {
      if (!p->trainable()) continue;
      auto want = [&](const std::string& suffix) -> const Entry& {
        auto it = entries.find(p->name + suffix);
        if (it == entries.end())
          throw FormatError("checkpoint is missing optimizer entry '" + p->name + suffix + "'");
        if (shape_numel(it->second.shape) != p->value.numel())
          throw FormatError("checkpoint optimizer entry '" + p->name + suffix +
                            "' has the wrong size");
        consumed.insert(p->name + suffix);
        return it->second;
      };
      OptimizerState::Slot slot;
      slot.name = p->name;
      slot.m = want(".m").data;
      slot.v = want(".v").data;
      fresh.slots.push_back(std::move(slot));
    }
    auto it = entries.find("t");
    if (it == entries.end() || it->second.data.size() != 1)
      throw FormatError("checkpoint is missing the optimizer step counter");
    fresh.t = static_cast<int64_t>(it->second.data[0]);
    consumed.insert("t");
    *opt = std::move(fresh);
  }

  for (const auto& [name, entry] : entries) {
    if (consumed.count(name)) continue;
    if (opt == nullptr && is_optimizer_entry(name)) continue;  // net-only load
    throw FormatError("checkpoint has an unknown entry '" + name + "'");
  }
}

}  // namespace xmadapt
