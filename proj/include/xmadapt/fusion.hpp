#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "xmadapt/tensor.hpp"
#include "xmadapt/vit.hpp"

namespace xmadapt {

enum class Modality { T1, T1ce, T2, Flair };

std::string modality_name(Modality m);

// Which wiring the model uses: one modality, all four stacked (early
// fusion), or the dual-stream adapter model (cross).
struct ModelVariant {
  enum class Kind { Single, Early, Cross };
  Kind kind = Kind::Cross;
  Modality modality = Modality::T1;  // meaningful only for Single

  static ModelVariant parse(const std::string& text);  // ConfigError on bad text
  std::string str() const;  // "single:t1" | "single:t1ce" | "single:t2" | "single:flair" | "early" | "cross"
  int64_t input_channels() const { return kind == Kind::Single ? 1 : kind == Kind::Early ? 4 : 2; }
  bool operator==(const ModelVariant& o) const {
    return kind == o.kind && (kind != Kind::Single || modality == o.modality);
  }
};

struct ModelConfig {
  BackboneConfig backbone;
  int64_t adapter_depth = 4;  // n: adapters on the first n blocks (Cross only)
  ModelVariant variant;
  uint64_t seed = 42;  // weight-init seed

  void validate() const;  // ConfigError on violation
};

// Per-layer fusion projection: C = f(F_T1 (+) F_T2), a pointwise linear map
// from the concatenated 2c channels down to c. Stored as w: [c, 2c] with the
// T1-group half first, plus bias b: [c]. Evaluated as the mathematically
// identical half-split sum (F_T1 w1^T) + (F_T2 w2^T) + b, whose float
// rounding is symmetric under swapping the streams together with the halves
// of w — which is what the stream-swap covariance property asserts exactly.
struct AdapterBlock {
  Parameter w;  // [c, 2c], zero-initialised
  Parameter b;  // [c], zero-initialised

  Tensor forward(const Tensor& f_t1, const Tensor& f_t2) const;
};

// Inputs for one forward pass. Cross uses the two group tensors (channel
// order T1,T1ce and T2,Flair); Early/Single use `stacked`.
struct ModelInput {
  Tensor t1_group;  // [B, 2, S, S]
  Tensor t2_group;  // [B, 2, S, S]
  Tensor stacked;   // [B, 4, S, S] (early) or [B, 1, S, S] (single)
};

// Elementwise sum of the two final feature maps.
Tensor fuse_high_level(const Tensor& feat_t1, const Tensor& feat_t2);

// The full segmentation model in any of its variants. Construction leaves
// every parameter trainable; trainer::freeze_backbones applies the paper's
// freeze/train split.
class GliomaNet {
 public:
  explicit GliomaNet(const ModelConfig& cfg);

  // 1x1 channel lift of a k-channel input to the 3 encoder channels.
  // stream: 0 = T1 group (or the only lift), 1 = T2 group.
  Tensor channel_lift(const Tensor& x, int stream) const;

  // Lockstep dual encoding with adapter injection on the first n layers
  // (Cross only): X^{l+1} = C_l + F^l per stream, one shared C_l per layer.
  std::pair<Tensor, Tensor> dual_encode(const Tensor& x_t1, const Tensor& x_t2) const;

  // Promptless decoder: log2(p) transposed-style 2x stages (pointwise
  // projection to 4w channels, depth-to-space, pointwise mix + gelu), then a
  // pointwise head to 2 class channels. fused: [B, c, S/p, S/p] -> [B, 2, S, S].
  Tensor decode_mask(const Tensor& fused) const;

  Tensor forward(const ModelInput& input) const;

  const ModelConfig& config() const { return cfg_; }
  std::vector<Parameter*> parameters();
  std::vector<Parameter*> encoder_parameters();
  const std::vector<VitEncoder>& encoders() const { return encoders_; }
  std::vector<AdapterBlock>& adapters() { return adapters_; }

 private:
  struct Lift {
    Parameter w;  // [3, k]
    Parameter b;  // [3]
  };
  struct DecoderStage {
    Parameter proj_w, proj_b;  // [4*w_out, w_in], [4*w_out]
    Parameter mix_w, mix_b;    // [w_out, w_out], [w_out]
  };

  ModelConfig cfg_;
  std::vector<Lift> lifts_;            // 2 for Cross, else 1
  std::vector<VitEncoder> encoders_;   // 2 for Cross (identical init), else 1
  std::vector<AdapterBlock> adapters_; // n for Cross, else empty
  std::vector<DecoderStage> stages_;
  Parameter head_w_, head_b_;          // [2, w_last], [2]
};

// Stage output widths for the decoder at embed dim c: c for the first stage,
// then max(8, 3c/2^(i+1)); exposed for the parameter-accounting oracle.
std::vector<int64_t> decoder_stage_widths(int64_t embed_dim, int stages);

}  // namespace xmadapt
