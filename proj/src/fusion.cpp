#include "xmadapt/fusion.hpp"

#include <cmath>

#include "xmadapt/error.hpp"

namespace xmadapt {

namespace {

// Distinct init streams so adding parameters to one module never shifts the
// draws of another.
constexpr uint64_t kStreamEncoder = 0x0E;
constexpr uint64_t kStreamDecoder = 0xDE;

constexpr float kInitStd = 0.02f;

}  // namespace

std::string modality_name(Modality m) {
  switch (m) {
    case Modality::T1: return "t1";
    case Modality::T1ce: return "t1ce";
    case Modality::T2: return "t2";
    case Modality::Flair: return "flair";
  }
  throw ContractError("unknown modality");
}

ModelVariant ModelVariant::parse(const std::string& text) {
  ModelVariant v;
  if (text == "early") {
    v.kind = Kind::Early;
  } else if (text == "cross") {
    v.kind = Kind::Cross;
  } else if (text.rfind("single:", 0) == 0) {
    v.kind = Kind::Single;
    std::string m = text.substr(7);
    if (m == "t1") v.modality = Modality::T1;
    else if (m == "t1ce") v.modality = Modality::T1ce;
    else if (m == "t2") v.modality = Modality::T2;
    else if (m == "flair") v.modality = Modality::Flair;
    else throw ConfigError("unknown modality in variant '" + text + "'");
  } else {
    throw ConfigError("unknown variant '" + text +
                      "' (expected single:t1|single:t1ce|single:t2|single:flair|early|cross)");
  }
  return v;
}

std::string ModelVariant::str() const {
  switch (kind) {
    case Kind::Early: return "early";
    case Kind::Cross: return "cross";
    case Kind::Single: return "single:" + modality_name(modality);
  }
  throw ContractError("unknown variant kind");
}

void ModelConfig::validate() const {
  backbone.validate();
  if (adapter_depth < 0 || adapter_depth > backbone.depth)
    throw ConfigError("adapter_depth " + std::to_string(adapter_depth) +
                      " must lie in [0, depth=" + std::to_string(backbone.depth) + "]");
  int64_t p = backbone.patch_size;
  if ((p & (p - 1)) != 0)
    throw ConfigError("patch_size " + std::to_string(p) +
                      " must be a power of two (the decoder doubles resolution per stage)");
}

Tensor AdapterBlock::forward(const Tensor& f_t1, const Tensor& f_t2) const {
  if (f_t1.shape() != f_t2.shape())
    throw DimensionError("adapter_forward: stream shapes differ, " +
                         shape_str(f_t1.shape()) + " vs " + shape_str(f_t2.shape()));
  int64_t c = w.value.dim(0);
  if (f_t1.dim(-1) != c)
    throw DimensionError("adapter_forward: feature dim " + shape_str(f_t1.shape()) +
                         " does not match projection " + shape_str(w.value.shape()));
  Tensor w1 = permute(slice(w.value, 1, 0, c), {1, 0});  // [c, c], acts on f_t1
  Tensor w2 = permute(slice(w.value, 1, c, c), {1, 0});  // [c, c], acts on f_t2
  Tensor y = add(matmul(f_t1, w1), matmul(f_t2, w2));
  return add(y, b.value);
}

Tensor fuse_high_level(const Tensor& feat_t1, const Tensor& feat_t2) {
  if (feat_t1.shape() != feat_t2.shape())
    throw DimensionError("fuse_high_level: shape mismatch " + shape_str(feat_t1.shape()) +
                         " vs " + shape_str(feat_t2.shape()));
  return add(feat_t1, feat_t2);
}

std::vector<int64_t> decoder_stage_widths(int64_t embed_dim, int stages) {
  std::vector<int64_t> widths;
  for (int i = 0; i < stages; ++i) {
    int64_t w = i == 0 ? embed_dim : std::max<int64_t>(8, (3 * embed_dim) >> (i + 1));
    widths.push_back(w);
  }
  return widths;
}

GliomaNet::GliomaNet(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  int64_t c = cfg_.backbone.embed_dim;

  // Channel lifts. Deterministic inits chosen so the untrained lift already
  // passes sensible channels through: identity-ish rows plus averaging rows.
  auto make_lift = [&](const std::string& prefix, int64_t k) {
    Lift lift;
    std::vector<float> w(static_cast<size_t>(3 * k), 0.0f);
    if (k == 1) {
      w = {1.0f, 1.0f, 1.0f};
    } else if (k == 2) {
      w = {1.0f, 0.0f, 0.0f, 1.0f, 0.5f, 0.5f};
    } else if (k == 4) {
      w = {0.5f, 0.5f, 0.0f, 0.0f, 0.0f, 0.0f, 0.5f, 0.5f, 0.25f, 0.25f, 0.25f, 0.25f};
    } else {
      throw ConfigError("channel lift supports 1, 2 or 4 input channels, got " +
                        std::to_string(k));
    }
    lift.w = Parameter(prefix + ".w", Tensor::from_data({3, k}, std::move(w)), true);
    lift.b = Parameter(prefix + ".b", Tensor::zeros({3}), true);
    return lift;
  };

  bool cross = cfg_.variant.kind == ModelVariant::Kind::Cross;
  if (cross) {
    lifts_.push_back(make_lift("lift_t1", 2));
    lifts_.push_back(make_lift("lift_t2", 2));
    // Both streams start from the same "pretrained" weights: identical
    // generators, identical draw order.
    SplitMix64 rng1(cfg_.seed, kStreamEncoder);
    encoders_.emplace_back(cfg_.backbone, rng1, "enc_t1");
    SplitMix64 rng2(cfg_.seed, kStreamEncoder);
    encoders_.emplace_back(cfg_.backbone, rng2, "enc_t2");
    for (int64_t l = 0; l < cfg_.adapter_depth; ++l) {
      AdapterBlock blk;
      std::string ap = "adapter" + std::to_string(l);
      blk.w = Parameter(ap + ".w", Tensor::zeros({c, 2 * c}), true);
      blk.b = Parameter(ap + ".b", Tensor::zeros({c}), true);
      adapters_.push_back(std::move(blk));
    }
  } else {
    lifts_.push_back(make_lift("lift", cfg_.variant.input_channels()));
    SplitMix64 rng(cfg_.seed, kStreamEncoder);
    encoders_.emplace_back(cfg_.backbone, rng, "enc");
  }

  // Decoder: one 2x stage per halving between S/p and S.
  int stages = 0;
  for (int64_t p = cfg_.backbone.patch_size; p > 1; p >>= 1) ++stages;
  std::vector<int64_t> widths = decoder_stage_widths(c, stages);
  SplitMix64 drng(cfg_.seed, kStreamDecoder);
  int64_t w_in = c;
  for (int i = 0; i < stages; ++i) {
    int64_t w_out = widths[static_cast<size_t>(i)];
    DecoderStage st;
    std::string sp = "dec.stage" + std::to_string(i);
    st.proj_w = Parameter(sp + ".proj_w", Tensor::randn({4 * w_out, w_in}, drng, kInitStd), true);
    st.proj_b = Parameter(sp + ".proj_b", Tensor::zeros({4 * w_out}), true);
    st.mix_w = Parameter(sp + ".mix_w", Tensor::randn({w_out, w_out}, drng, kInitStd), true);
    st.mix_b = Parameter(sp + ".mix_b", Tensor::zeros({w_out}), true);
    stages_.push_back(std::move(st));
    w_in = w_out;
  }
  head_w_ = Parameter("dec.head_w", Tensor::randn({2, w_in}, drng, kInitStd), true);
  head_b_ = Parameter("dec.head_b", Tensor::zeros({2}), true);
}

Tensor GliomaNet::channel_lift(const Tensor& x, int stream) const {
  if (stream < 0 || stream >= static_cast<int>(lifts_.size()))
    throw ContractError("channel_lift: no lift for stream " + std::to_string(stream));
  const Lift& lift = lifts_[static_cast<size_t>(stream)];
  int64_t k = lift.w.value.dim(1);
  if (x.ndim() != 4 || x.dim(1) != k)
    throw DimensionError("channel_lift: expected [B," + std::to_string(k) +
                         ",S,S], got " + shape_str(x.shape()));
  return conv1x1(x, lift.w.value, lift.b.value);
}

std::pair<Tensor, Tensor> GliomaNet::dual_encode(const Tensor& x_t1,
                                                 const Tensor& x_t2) const {
  if (cfg_.variant.kind != ModelVariant::Kind::Cross)
    throw ContractError("dual_encode requires the cross variant, model is " +
                        cfg_.variant.str());
  const VitEncoder& e1 = encoders_[0];
  const VitEncoder& e2 = encoders_[1];
  int64_t n = cfg_.adapter_depth;

  Tensor a = e1.patch_embed(x_t1);
  Tensor b = e2.patch_embed(x_t2);
  for (int l = 0; l < static_cast<int>(cfg_.backbone.depth); ++l) {
    Tensor f1 = e1.block_forward(l, a);
    Tensor f2 = e2.block_forward(l, b);
    if (l < n) {
      // One shared C per layer, added residually to both streams.
      Tensor c = adapters_[static_cast<size_t>(l)].forward(f1, f2);
      a = add(c, f1);
      b = add(c, f2);
    } else {
      a = f1;
      b = f2;
    }
  }
  return {e1.to_map(a), e2.to_map(b)};
}

Tensor GliomaNet::decode_mask(const Tensor& fused) const {
  int64_t g = cfg_.backbone.grid();
  if (fused.ndim() != 4 || fused.dim(1) != cfg_.backbone.embed_dim || fused.dim(2) != g ||
      fused.dim(3) != g)
    throw DimensionError("decode_mask: expected [B," +
                         std::to_string(cfg_.backbone.embed_dim) + "," + std::to_string(g) +
                         "," + std::to_string(g) + "], got " + shape_str(fused.shape()));
  Tensor x = fused;
  for (const DecoderStage& st : stages_) {
    x = depth_to_space2(conv1x1(x, st.proj_w.value, st.proj_b.value));
    x = gelu(conv1x1(x, st.mix_w.value, st.mix_b.value));
  }
  return conv1x1(x, head_w_.value, head_b_.value);  // [B, 2, S, S]
}

Tensor GliomaNet::forward(const ModelInput& input) const {
  switch (cfg_.variant.kind) {
    case ModelVariant::Kind::Cross: {
      if (!input.t1_group.defined() || !input.t2_group.defined())
        throw DataError("cross variant needs both modality-group tensors");
      Tensor x1 = channel_lift(input.t1_group, 0);
      Tensor x2 = channel_lift(input.t2_group, 1);
      auto [f1, f2] = dual_encode(x1, x2);
      return decode_mask(fuse_high_level(f1, f2));
    }
    case ModelVariant::Kind::Early:
    case ModelVariant::Kind::Single: {
      if (!input.stacked.defined())
        throw DataError(cfg_.variant.str() + " variant needs the stacked input tensor");
      Tensor x = channel_lift(input.stacked, 0);
      return decode_mask(encoders_[0].forward(x).final_map);
    }
  }
  throw ContractError("unknown variant kind");
}

std::vector<Parameter*> GliomaNet::parameters() {
  std::vector<Parameter*> out;
  for (Lift& lift : lifts_) {
    out.push_back(&lift.w);
    out.push_back(&lift.b);
  }
  for (VitEncoder& enc : encoders_) enc.collect_parameters(out);
  for (AdapterBlock& blk : adapters_) {
    out.push_back(&blk.w);
    out.push_back(&blk.b);
  }
  for (DecoderStage& st : stages_) {
    out.push_back(&st.proj_w);
    out.push_back(&st.proj_b);
    out.push_back(&st.mix_w);
    out.push_back(&st.mix_b);
  }
  out.push_back(&head_w_);
  out.push_back(&head_b_);
  return out;
}

std::vector<Parameter*> GliomaNet::encoder_parameters() {
  std::vector<Parameter*> out;
  for (VitEncoder& enc : encoders_) enc.collect_parameters(out);
  return out;
}

}  // namespace xmadapt
