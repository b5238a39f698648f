#pragma once

#include "xmadapt/tensor.hpp"

namespace xmadapt {

struct LossConfig {
  float lambda_dice = 1.0f;  // weight of the Dice term
  float lambda_ce = 1.0f;    // weight of the cross-entropy term
  float smooth_eps = 1.0f;   // Dice smoothing in numerator and denominator

  void validate() const;  // ConfigError on violation
};

// Foreground probability from 2-class logits: softmax channel 1 computed in
// its numerically stable 2-class form sigmoid(l1 - l0). [B,2,S,S] -> [B,S,S].
Tensor foreground_prob(const Tensor& logits);

// Soft Dice loss, batch-averaged:
//   1 - (2*sum(p*g) + eps) / (sum(p) + sum(g) + eps)
// pred_prob must lie in [0,1], gt in {0,1} (contract errors otherwise).
Tensor dice_loss(const Tensor& pred_prob, const Tensor& gt, float eps);

// Pixelwise 2-class cross entropy, mean over all pixels, log-sum-exp stable.
// logits: [B, 2, S, S]; gt: [B, S, S] binary.
Tensor ce_loss(const Tensor& logits, const Tensor& gt);

// lambda_dice * dice_loss(foreground_prob(logits), gt) + lambda_ce * ce_loss(logits, gt)
Tensor combined_loss(const Tensor& logits, const Tensor& gt, const LossConfig& cfg);

}  // namespace xmadapt
