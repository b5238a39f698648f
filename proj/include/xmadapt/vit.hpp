#pragma once

#include <functional>
#include <string>
#include <vector>

#include "xmadapt/tensor.hpp"

namespace xmadapt {

// A named leaf tensor; the unit of freezing, optimisation and checkpointing.
// Trainable state is carried by the tensor's requires_grad flag so the
// autodiff core and the optimizer can never disagree about it.
struct Parameter {
  std::string name;
  Tensor value;

  Parameter() = default;
  Parameter(std::string n, Tensor v, bool trainable) : name(std::move(n)), value(std::move(v)) {
    value.set_requires_grad(trainable);
  }

  bool trainable() const { return value.requires_grad(); }
  void set_trainable(bool on) { value.set_requires_grad(on); }
};

struct BackboneConfig {
  int64_t image_size = 64;  // S
  int64_t patch_size = 8;   // p
  int64_t embed_dim = 64;   // c
  int64_t depth = 8;        // L
  int64_t heads = 4;        // h
  float mlp_ratio = 4.0f;

  void validate() const;  // ConfigError on violation
  int64_t grid() const { return image_size / patch_size; }
  int64_t tokens() const { return grid() * grid(); }
  int64_t head_dim() const { return embed_dim / heads; }
  int64_t mlp_hidden() const {
    return static_cast<int64_t>(mlp_ratio * static_cast<float>(embed_dim) + 0.5f);
  }
};

// Pre-norm transformer block: x + MHA(LN(x)), then + MLP(LN(.)).
struct EncoderBlock {
  Parameter ln1_gamma, ln1_beta;
  Parameter wq, bq, wk, bk, wv, bv, wo, bo;
  Parameter ln2_gamma, ln2_beta;
  Parameter mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

// Toy ViT encoder: non-overlapping patch embedding with a learned positional
// embedding, then `depth` pre-norm blocks with full global attention.
// Weight init: normal sigma = 0.02 for every projection and the positional
// embedding, zeros for biases, gamma = 1 / beta = 0 for layer norms. Weights
// can be replaced wholesale through the named-parameter checkpoint loader,
// which is the hook for substituting externally pretrained weights.
class VitEncoder {
 public:
  // Draws all weights from rng in a fixed order; two encoders built from
  // identically seeded generators are bit-identical.
  VitEncoder(const BackboneConfig& cfg, SplitMix64& rng, const std::string& name_prefix);

  // [B, 3, S, S] -> [B, T, c]: linear patch projection plus positional embedding.
  Tensor patch_embed(const Tensor& image) const;

  // One block; layer indexes into [0, depth).
  Tensor block_forward(int layer, const Tensor& x) const;

  // [B, T, c] tokens -> [B, c, S/p, S/p] feature map.
  Tensor to_map(const Tensor& tokens) const;

  // Substitution hook: called after block l with its output F^l; the return
  // value becomes the next block's input X^{l+1} (and, after the last block,
  // the tokens used for the final map). Must preserve the token shape.
  using Hook = std::function<Tensor(int layer, const Tensor& f)>;

  struct Features {
    std::vector<Tensor> per_layer;  // raw F^l for l = 0..depth-1 (pre-hook)
    Tensor final_map;               // [B, c, S/p, S/p]
  };
  Features forward(const Tensor& image, const Hook& hook = nullptr) const;

  const BackboneConfig& config() const { return cfg_; }
  void collect_parameters(std::vector<Parameter*>& out);

 private:
  BackboneConfig cfg_;
  Parameter patch_w_;  // [3*p*p, c]
  Parameter patch_b_;  // [c]
  Parameter pos_;      // [T, c]
  std::vector<EncoderBlock> blocks_;
};

}  // namespace xmadapt
