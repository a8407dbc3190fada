#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "dinfogan/latent.hpp"
#include "dinfogan/layers.hpp"

namespace dinfogan {

enum class RunMode { train, eval };

// Network shape. Images are NCHW tensors with values in [-1, 1].
//
// image_size 64 is the DCGAN-style stack (batch norm, no spectral norm, no
// attention); 128 is the spectral-norm trunk with fully connected heads and a
// self-attention generator. image_size 32 drops one stage from the 64 stack
// and exists for CPU-scale runs.
struct ArchitectureConfig {
  int64_t image_size = 64;
  int64_t channels = 3;
  int64_t common_dim = 64;
  int64_t salient_dim = 64;
  double noise_std = 0.2;
  double lrelu_slope = 0.2;
  bool use_spectral_norm = false;
  bool use_self_attention = false;
  bool cr_enabled = false;
  // Width of the first trunk stage / last generator stage (64 by default).
  int64_t base_width = 64;

  static ArchitectureConfig for_image_size(int64_t image_size, int64_t channels, int64_t common_dim,
                                           int64_t salient_dim);
  void validate() const;
  bool operator==(const ArchitectureConfig&) const = default;
};

struct GeneratorImpl : torch::nn::Module {
  explicit GeneratorImpl(const ArchitectureConfig& cfg);
  // z: [b, L], s: [b, M] -> [b, c, H, W] in [-1, 1].
  torch::Tensor forward(const torch::Tensor& z, const torch::Tensor& s);

  ArchitectureConfig cfg;
  torch::nn::Linear project{nullptr};  // 128 variant only
  torch::nn::Sequential body;
};
TORCH_MODULE(Generator);

// Shared convolution stack. In train mode, N(0, noise_std) noise is added to
// the input of every layer; `noise` must then be non-null.
struct TrunkImpl : torch::nn::Module {
  TrunkImpl(const ArchitectureConfig& cfg, int64_t in_channels);
  torch::Tensor forward(const torch::Tensor& x, Rng* noise);

  int64_t feature_channels() const { return out_channels_; }

  ArchitectureConfig cfg;
  std::vector<WeightLayer> layers;
  std::vector<torch::nn::BatchNorm2d> norms;  // nullptr entries where a stage has none

 private:
  int64_t out_channels_ = 0;
};
TORCH_MODULE(Trunk);

// One output head on the trunk's 4x4 feature map. Raw (pre-activation) outputs.
struct HeadImpl : torch::nn::Module {
  HeadImpl(const ArchitectureConfig& cfg, int64_t feature_channels, int64_t outputs, bool hidden_layer);
  torch::Tensor forward(const torch::Tensor& features, Rng* noise);

  ArchitectureConfig cfg;
  WeightLayer hidden{nullptr};
  WeightLayer out{nullptr};
};
TORCH_MODULE(Head);

struct DiscriminatorOutput {
  torch::Tensor d;    // [b] probability of "real"
  torch::Tensor c;    // [b] probability of "target domain"
  torch::Tensor q_z;  // [b, L]
  torch::Tensor q_s;  // [b, M]
};

struct DiscriminatorImpl : torch::nn::Module {
  explicit DiscriminatorImpl(const ArchitectureConfig& cfg);
  DiscriminatorOutput forward(const torch::Tensor& images, Rng* noise);

  ArchitectureConfig cfg;
  Trunk trunk{nullptr};
  Head head_d{nullptr};
  Head head_c{nullptr};
  Head head_qz{nullptr};
  Head head_qs{nullptr};
};
TORCH_MODULE(Discriminator);

// Contrastive head H: its own trunk over the channel-wise concatenation of two
// images, followed by a Q_s-shaped head emitting M logits.
struct CrHeadImpl : torch::nn::Module {
  explicit CrHeadImpl(const ArchitectureConfig& cfg);
  torch::Tensor forward(const torch::Tensor& image_a, const torch::Tensor& image_b, Rng* noise);

  ArchitectureConfig cfg;
  Trunk trunk{nullptr};
  Head head{nullptr};
};
TORCH_MODULE(CrHead);

struct ModelBundle {
  ArchitectureConfig arch;
  Generator generator{nullptr};
  Discriminator discriminator{nullptr};
  CrHead cr_head{nullptr};  // null unless arch.cr_enabled

  void set_mode(RunMode mode);
  void to(torch::Dtype dtype);

  std::vector<torch::Tensor> generator_parameters() const;
  std::vector<torch::Tensor> trunk_parameters() const;
  std::vector<torch::Tensor> adversarial_parameters() const;  // trunk + D head + C head
  std::vector<torch::Tensor> encoder_head_parameters() const; // Q_z + Q_s heads
  std::vector<torch::Tensor> cr_parameters() const;
};

// Floating dtype of the bundle's parameters.
torch::Dtype bundle_dtype(const ModelBundle& bundle);

ModelBundle build_models(const ArchitectureConfig& cfg, Rng& rng);
ModelBundle build_models(const ArchitectureConfig& cfg, uint64_t seed);

// Eval-mode, no-grad generation.
torch::Tensor generate(ModelBundle& bundle, const torch::Tensor& z, const torch::Tensor& s);

// Runs all four heads. Sets the bundle's discriminator to `mode`; train mode
// injects noise drawn from `rng` and uses batch statistics.
DiscriminatorOutput discriminate(ModelBundle& bundle, const torch::Tensor& images, RunMode mode, Rng* rng);

// Logits over the shared salient index for image pairs; throws
// UnsupportedOperation when the bundle has no contrastive head.
torch::Tensor cr_predict(ModelBundle& bundle, const torch::Tensor& image_a, const torch::Tensor& image_b,
                         RunMode mode, Rng* rng);

void check_images(const ArchitectureConfig& cfg, const torch::Tensor& images, int64_t channel_factor = 1);

}  // namespace dinfogan
