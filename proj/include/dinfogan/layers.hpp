#pragma once

#include <torch/torch.h>

#include "dinfogan/latent.hpp"

namespace dinfogan {

// Weight normalized by its largest singular value, estimated with one power
// iteration per training-mode forward. Eval mode reuses the stored vectors, so
// the normalized weight is a fixed differentiable function of `weight_orig`.
class SpectralNormalizer {
 public:
  SpectralNormalizer() = default;
  SpectralNormalizer(torch::nn::Module& owner, const torch::Tensor& weight_orig);

  torch::Tensor normalized(const torch::Tensor& weight_orig, bool training) const;
  // Power iterations without touching the weight; run after (re)initialization.
  void refine(const torch::Tensor& weight_orig, int iterations);

 private:
  torch::Tensor u_;
  torch::Tensor v_;
};

struct SNConv2dImpl : torch::nn::Module {
  SNConv2dImpl(torch::nn::Conv2dOptions options);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2dOptions options;
  torch::Tensor weight_orig;
  torch::Tensor bias;
  SpectralNormalizer sn;
};
TORCH_MODULE(SNConv2d);

struct SNLinearImpl : torch::nn::Module {
  SNLinearImpl(int64_t in_features, int64_t out_features);
  torch::Tensor forward(const torch::Tensor& x);

  torch::Tensor weight_orig;
  torch::Tensor bias;
  SpectralNormalizer sn;
};
TORCH_MODULE(SNLinear);

// Query/key/value attention over spatial positions with a residual gate
// `gamma` that starts at zero, so a fresh block is the identity map.
struct SelfAttentionImpl : torch::nn::Module {
  explicit SelfAttentionImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d query{nullptr};
  torch::nn::Conv2d key{nullptr};
  torch::nn::Conv2d value{nullptr};
  torch::Tensor gamma;
};
TORCH_MODULE(SelfAttention);

// A convolution or linear map, optionally spectrally normalized, behind one forward().
struct WeightLayerImpl : torch::nn::Module {
  struct Conv {
    int64_t in, out, kernel, stride, padding;
  };
  struct Linear {
    int64_t in, out;
  };

  WeightLayerImpl(Conv c, bool spectral_norm);
  WeightLayerImpl(Linear l, bool spectral_norm);

  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::AnyModule layer;
};
TORCH_MODULE(WeightLayer);

// Zero-mean N(0, 0.02) weights for every conv/deconv/linear layer, zero biases,
// batch-norm scale 1 / offset 0, fresh power-iteration vectors. All draws come
// from `rng`, so two calls with equally seeded sources give identical modules.
void init_weights(torch::nn::Module& root, Rng& rng);

}  // namespace dinfogan
