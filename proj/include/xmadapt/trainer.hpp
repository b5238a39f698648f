#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "xmadapt/fusion.hpp"
#include "xmadapt/losses.hpp"
#include "xmadapt/metrics.hpp"
#include "xmadapt/synthdata.hpp"

namespace xmadapt {

struct AdamWConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 0.01f;
};

// Moment buffers exist only for trainable parameters, keyed by name and kept
// in parameter-collection order.
struct OptimizerState {
  struct Slot {
    std::string name;
    std::vector<float> m, v;
  };
  AdamWConfig cfg;
  int64_t t = 0;  // completed steps
  std::vector<Slot> slots;

  static OptimizerState init(const std::vector<Parameter*>& params, const AdamWConfig& cfg);
};

// One decoupled-weight-decay Adam update over every trainable parameter:
//   m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2
//   p <- p - lr*(mhat/(sqrt(vhat)+eps) + weight_decay*p)
// Missing gradients or a state/parameter mismatch raise ContractError.
void adamw_step(const std::vector<Parameter*>& params, OptimizerState& state);

// The paper's freeze/train split: every encoder parameter becomes frozen;
// lifts, adapters and decoder stay trainable.
void freeze_backbones(GliomaNet& net);

struct ParamReport {
  int64_t total = 0;
  int64_t trainable = 0;
  double percent = 0.0;  // 100 * trainable / total
};

ParamReport count_params(GliomaNet& net);

struct TrainConfig {
  int64_t epochs = 30;
  int64_t batch_size = 8;
  uint64_t seed = 42;     // shuffle seed
  LossConfig loss;
  int64_t eval_every = 5;  // test-split eval when (epoch+1) % eval_every == 0; 0 = never
};

struct EpochRow {
  int64_t epoch = 0;       // absolute epoch index
  double train_loss = 0;   // mean step loss
  std::optional<EvalAggregate> eval;
};

// Argmax evaluation over the given ids (NoGrad). Records follow id order;
// the aggregate excludes and counts hd95-undefined samples.
struct EvalResult {
  std::vector<EvalRecord> records;
  EvalAggregate aggregate;
};
EvalResult evaluate(const GliomaNet& net, const Manifest& data,
                    const std::vector<std::string>& ids, int64_t batch_size);

// Minibatch training over the manifest's train split. Epoch e (absolute
// index start_epoch + e) shuffles ids with the stream derived from
// (cfg.seed, absolute epoch), so resumed runs replay the identical order.
// The last partial batch is kept. Non-finite loss aborts with NumericError
// naming the epoch, step and first batch id.
std::vector<EpochRow> train(GliomaNet& net, const Manifest& data, const TrainConfig& cfg,
                            OptimizerState& opt, int64_t start_epoch = 0);

// History CSV: header epoch,train_loss,dice_percent,hd95,hd95_undefined_count;
// eval columns empty on epochs without evaluation, full double precision.
void write_history_csv(const std::string& path, const std::vector<EpochRow>& rows);

// Checkpoint ("XMCK"): magic, version 0x01, entry count (u32 LE), then per
// entry: name length (u32 LE) + name, trainable byte, ndim (u32 LE), dims
// (u32 LE each), float32 LE data. Optimizer buffers ride along as
// "<param>.m" / "<param>.v" plus a scalar "t"; pass opt = nullptr to skip
// them (saving) or ignore them (loading).
void checkpoint_save(const std::string& path, GliomaNet& net, const OptimizerState* opt);
void checkpoint_load(const std::string& path, GliomaNet& net, OptimizerState* opt);

}  // namespace xmadapt
