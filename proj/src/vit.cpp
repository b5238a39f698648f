#include "xmadapt/vit.hpp"

#include <cmath>

#include "xmadapt/error.hpp"

namespace xmadapt {

namespace {

constexpr float kLnEps = 1e-5f;
constexpr float kInitStd = 0.02f;

Parameter normal_param(std::string name, Shape shape, SplitMix64& rng) {
  return Parameter(std::move(name), Tensor::randn(std::move(shape), rng, kInitStd), true);
}

Parameter zeros_param(std::string name, Shape shape) {
  return Parameter(std::move(name), Tensor::zeros(std::move(shape)), true);
}

Parameter ones_param(std::string name, Shape shape) {
  return Parameter(std::move(name), Tensor::full(std::move(shape), 1.0f), true);
}

}  // namespace

void BackboneConfig::validate() const {
  if (image_size <= 0 || patch_size <= 0 || embed_dim <= 0 || depth < 1 || heads <= 0)
    throw ConfigError("backbone dimensions must be positive (depth >= 1)");
  if (image_size % patch_size != 0)
    throw ConfigError("image_size " + std::to_string(image_size) +
                      " is not divisible by patch_size " + std::to_string(patch_size));
  if (embed_dim % heads != 0)
    throw ConfigError("embed_dim " + std::to_string(embed_dim) +
                      " is not divisible by heads " + std::to_string(heads));
  if (mlp_ratio <= 0.0f) throw ConfigError("mlp_ratio must be positive");
}

VitEncoder::VitEncoder(const BackboneConfig& cfg, SplitMix64& rng,
                       const std::string& name_prefix)
    : cfg_(cfg) {
  cfg_.validate();
  int64_t c = cfg_.embed_dim;
  int64_t pp = cfg_.patch_size * cfg_.patch_size;
  int64_t hidden = cfg_.mlp_hidden();

  // Draw order is part of the construction contract: identically seeded
  // generators must yield identical encoders.
  patch_w_ = normal_param(name_prefix + ".patch_w", {3 * pp, c}, rng);
  patch_b_ = zeros_param(name_prefix + ".patch_b", {c});
  pos_ = normal_param(name_prefix + ".pos", {cfg_.tokens(), c}, rng);

  blocks_.resize(static_cast<size_t>(cfg_.depth));
  for (int64_t l = 0; l < cfg_.depth; ++l) {
    std::string bp = name_prefix + ".block" + std::to_string(l);
    EncoderBlock& blk = blocks_[static_cast<size_t>(l)];
    blk.ln1_gamma = ones_param(bp + ".ln1_gamma", {c});
    blk.ln1_beta = zeros_param(bp + ".ln1_beta", {c});
    blk.wq = normal_param(bp + ".wq", {c, c}, rng);
    blk.bq = zeros_param(bp + ".bq", {c});
    blk.wk = normal_param(bp + ".wk", {c, c}, rng);
    blk.bk = zeros_param(bp + ".bk", {c});
    blk.wv = normal_param(bp + ".wv", {c, c}, rng);
    blk.bv = zeros_param(bp + ".bv", {c});
    blk.wo = normal_param(bp + ".wo", {c, c}, rng);
    blk.bo = zeros_param(bp + ".bo", {c});
    blk.ln2_gamma = ones_param(bp + ".ln2_gamma", {c});
    blk.ln2_beta = zeros_param(bp + ".ln2_beta", {c});
    blk.mlp_w1 = normal_param(bp + ".mlp_w1", {c, hidden}, rng);
    blk.mlp_b1 = zeros_param(bp + ".mlp_b1", {hidden});
    blk.mlp_w2 = normal_param(bp + ".mlp_w2", {hidden, c}, rng);
    blk.mlp_b2 = zeros_param(bp + ".mlp_b2", {c});
  }
}

Tensor VitEncoder::patch_embed(const Tensor& image) const {
  if (image.ndim() != 4 || image.dim(1) != 3 || image.dim(2) != cfg_.image_size ||
      image.dim(3) != cfg_.image_size)
    throw DimensionError("patch_embed: expected [B,3," + std::to_string(cfg_.image_size) +
                         "," + std::to_string(cfg_.image_size) + "], got " +
                         shape_str(image.shape()));
  Tensor cols = unfold_patches(image, cfg_.patch_size);       // [B, T, 3*p*p]
  Tensor tok = add(matmul(cols, patch_w_.value), patch_b_.value);  // [B, T, c]
  return add(tok, pos_.value);  // positional embedding broadcast over batch
}

Tensor VitEncoder::block_forward(int layer, const Tensor& x) const {
  if (layer < 0 || layer >= static_cast<int>(blocks_.size()))
    throw ContractError("block_forward: layer " + std::to_string(layer) +
                        " out of range for depth " + std::to_string(blocks_.size()));
  if (x.ndim() != 3 || x.dim(2) != cfg_.embed_dim)
    throw DimensionError("block_forward: expected [B,T," + std::to_string(cfg_.embed_dim) +
                         "], got " + shape_str(x.shape()));
  const EncoderBlock& blk = blocks_[static_cast<size_t>(layer)];
  int64_t bsz = x.dim(0), t = x.dim(1);
  int64_t h = cfg_.heads, dh = cfg_.head_dim();

  Tensor a = layernorm(x, blk.ln1_gamma.value, blk.ln1_beta.value, kLnEps);
  auto split_heads = [&](const Tensor& m) {
    return permute(reshape(m, {bsz, t, h, dh}), {0, 2, 1, 3});  // [B, h, T, dh]
  };
  Tensor q = split_heads(add(matmul(a, blk.wq.value), blk.bq.value));
  Tensor key = split_heads(add(matmul(a, blk.wk.value), blk.bk.value));
  Tensor v = split_heads(add(matmul(a, blk.wv.value), blk.bv.value));

  Tensor att = matmul(q, permute(key, {0, 1, 3, 2}));  // [B, h, T, T]
  att = affine(att, 1.0f / std::sqrt(static_cast<float>(dh)), 0.0f);
  att = softmax(att, -1);
  Tensor o = matmul(att, v);                                  // [B, h, T, dh]
  o = reshape(permute(o, {0, 2, 1, 3}), {bsz, t, h * dh});    // [B, T, c]
  o = add(matmul(o, blk.wo.value), blk.bo.value);
  Tensor x1 = add(x, o);

  Tensor m = layernorm(x1, blk.ln2_gamma.value, blk.ln2_beta.value, kLnEps);
  m = gelu(add(matmul(m, blk.mlp_w1.value), blk.mlp_b1.value));
  m = add(matmul(m, blk.mlp_w2.value), blk.mlp_b2.value);
  return add(x1, m);
}

Tensor VitEncoder::to_map(const Tensor& tokens) const {
  int64_t g = cfg_.grid();
  if (tokens.ndim() != 3 || tokens.dim(1) != g * g || tokens.dim(2) != cfg_.embed_dim)
    throw DimensionError("to_map: expected [B," + std::to_string(g * g) + "," +
                         std::to_string(cfg_.embed_dim) + "], got " +
                         shape_str(tokens.shape()));
  return reshape(permute(tokens, {0, 2, 1}), {tokens.dim(0), cfg_.embed_dim, g, g});
}

VitEncoder::Features VitEncoder::forward(const Tensor& image, const Hook& hook) const {
  Features out;
  Tensor x = patch_embed(image);
  for (int l = 0; l < static_cast<int>(cfg_.depth); ++l) {
    Tensor f = block_forward(l, x);
    out.per_layer.push_back(f);
    if (hook) {
      Tensor next = hook(l, f);
      if (!next.defined() || next.shape() != f.shape())
        throw DimensionError("substitution hook at layer " + std::to_string(l) +
                             " returned shape " +
                             (next.defined() ? shape_str(next.shape()) : "<undefined>") +
                             ", expected " + shape_str(f.shape()));
      x = next;
    } else {
      x = f;
    }
  }
  out.final_map = to_map(x);
  return out;
}

void VitEncoder::collect_parameters(std::vector<Parameter*>& out) {
  out.push_back(&patch_w_);
  out.push_back(&patch_b_);
  out.push_back(&pos_);
  for (EncoderBlock& blk : blocks_) {
    out.push_back(&blk.ln1_gamma);
    out.push_back(&blk.ln1_beta);
    out.push_back(&blk.wq);
    out.push_back(&blk.bq);
    out.push_back(&blk.wk);
    out.push_back(&blk.bk);
    out.push_back(&blk.wv);
    out.push_back(&blk.bv);
    out.push_back(&blk.wo);
    out.push_back(&blk.bo);
    out.push_back(&blk.ln2_gamma);
    out.push_back(&blk.ln2_beta);
    out.push_back(&blk.mlp_w1);
    out.push_back(&blk.mlp_b1);
    out.push_back(&blk.mlp_w2);
    out.push_back(&blk.mlp_b2);
  }
}

}  // namespace xmadapt
