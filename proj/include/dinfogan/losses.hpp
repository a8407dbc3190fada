#pragma once

#include <torch/torch.h>

namespace dinfogan {

// Weights of the composite objective. The defaults are shared by every dataset.
struct LossWeights {
  double background = 0.5;  // w_bg
  double target = 1.0;      // w_t
  double adversarial = 0.5;
  double classification = 0.5;
  double image = 1.0;
  double info_z = 1.0;
  double info_s = 1.0;
  double info_real = 1.0;
  double cr = 1.0;

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

// Probabilities are clamped to [kProbEps, 1 - kProbEps] before any log.
inline constexpr double kProbEps = 1e-7;

// All losses return 0-dim tensors and are differentiable in their inputs.
// Probability batches are 1-D; code batches are [b, dim]; images are [b, ...].

// Minimized by D (non-saturating GAN, equivalent to maximizing the GAN value).
torch::Tensor adv_loss_discriminator(const torch::Tensor& d_real_x, const torch::Tensor& d_fake_x,
                                     const torch::Tensor& d_real_y, const torch::Tensor& d_fake_y,
                                     const LossWeights& w);

// Non-saturating generator side: -log D(fake).
torch::Tensor adv_loss_generator(const torch::Tensor& d_fake_x, const torch::Tensor& d_fake_y, const LossWeights& w);

// Domain classifier on real images: background -> 0, target -> 1.
torch::Tensor class_loss_discriminator(const torch::Tensor& c_real_x, const torch::Tensor& c_real_y,
                                       const LossWeights& w);

torch::Tensor class_loss_generator(const torch::Tensor& c_fake_x, const torch::Tensor& c_fake_y,
                                   const LossWeights& w);

// Encoder outputs and the codes they should recover. The salient targets for
// generated background images and real background images are zero.
struct InfoTerms {
  torch::Tensor qz_fake_x, z_x, qs_fake_x;
  torch::Tensor qz_fake_y, z_y, qs_fake_y, s_y;
  torch::Tensor qs_real_x;
};

// L1 code recovery: per-sample sum of absolute errors, averaged over the batch.
torch::Tensor info_loss(const InfoTerms& t, const LossWeights& w);

// Per-pixel mean L1 between reconstructions and real images.
torch::Tensor image_reconstruction_loss(const torch::Tensor& x_real, const torch::Tensor& x_rec,
                                        const torch::Tensor& y_real, const torch::Tensor& y_rec,
                                        const LossWeights& w);

// Mean softmax cross-entropy of logits [b, M] against shared indices [b].
torch::Tensor cr_loss(const torch::Tensor& logits, const torch::Tensor& shared_index);

struct GeneratorLossParts {
  torch::Tensor adversarial;
  torch::Tensor classification;
  torch::Tensor info;
  torch::Tensor image;
  torch::Tensor cr;  // undefined when the contrastive head is off
};

struct DiscriminatorLossParts {
  torch::Tensor adversarial;
  torch::Tensor classification;
};

// adv + class + info + image + w_cr * cr
torch::Tensor total_generator_objective(const GeneratorLossParts& parts, const LossWeights& w);

// adv + class
torch::Tensor total_discriminator_objective(const DiscriminatorLossParts& parts);

}  // namespace dinfogan
