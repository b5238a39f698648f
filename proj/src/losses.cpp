#include "xmadapt/losses.hpp"

#include "xmadapt/error.hpp"

namespace xmadapt {

void LossConfig::validate() const {
  if (lambda_dice < 0.0f || lambda_ce < 0.0f)
    throw ConfigError("loss weights must be nonnegative");
  if (lambda_dice + lambda_ce <= 0.0f)
    throw ConfigError("at least one loss weight must be positive");
  if (smooth_eps <= 0.0f) throw ConfigError("dice smoothing eps must be positive");
}

Tensor foreground_prob(const Tensor& logits) {
  if (logits.ndim() != 4 || logits.dim(1) != 2)
    throw DimensionError("foreground_prob: expected [B,2,S,S], got " +
                         shape_str(logits.shape()));
  Tensor l0 = slice(logits, 1, 0, 1);
  Tensor l1 = slice(logits, 1, 1, 1);
  Tensor p = sigmoid(sub(l1, l0));  // [B,1,S,S]
  return reshape(p, {logits.dim(0), logits.dim(2), logits.dim(3)});
}

Tensor dice_loss(const Tensor& pred_prob, const Tensor& gt, float eps) {
  if (pred_prob.shape() != gt.shape())
    throw DimensionError("dice_loss: shape mismatch " + shape_str(pred_prob.shape()) +
                         " vs " + shape_str(gt.shape()));
  if (pred_prob.ndim() != 3)
    throw DimensionError("dice_loss: expected [B,S,S], got " + shape_str(pred_prob.shape()));
  if (eps <= 0.0f) throw ContractError("dice_loss: eps must be positive");
  for (float v : pred_prob.data())
    if (!(v >= 0.0f && v <= 1.0f))
      throw ContractError("dice_loss: pred_prob value outside [0,1]");
  for (float v : gt.data())
    if (v != 0.0f && v != 1.0f)
      throw ContractError("dice_loss: gt value outside {0,1}");

  int64_t b = pred_prob.dim(0);
  int64_t px = pred_prob.dim(1) * pred_prob.dim(2);
  Tensor p = reshape(pred_prob, {b, px});
  Tensor g = reshape(gt, {b, px});
  Tensor inter = sum_last(mul(p, g));                    // [B]
  Tensor sums = add(sum_last(p), sum_last(g));           // [B]
  Tensor ratio = div(affine(inter, 2.0f, eps), affine(sums, 1.0f, eps));
  return mean(affine(ratio, -1.0f, 1.0f));               // mean over batch of 1 - dice
}

Tensor ce_loss(const Tensor& logits, const Tensor& gt) {
  if (logits.ndim() != 4 || logits.dim(1) != 2)
    throw DimensionError("ce_loss: expected [B,2,S,S] logits, got " +
                         shape_str(logits.shape()));
  return pixel_ce_mean(logits, gt);
}

Tensor combined_loss(const Tensor& logits, const Tensor& gt, const LossConfig& cfg) {
  cfg.validate();
  Tensor d = dice_loss(foreground_prob(logits), gt, cfg.smooth_eps);
  Tensor c = ce_loss(logits, gt);
  return add(affine(d, cfg.lambda_dice, 0.0f), affine(c, cfg.lambda_ce, 0.0f));
}

}  // namespace xmadapt
