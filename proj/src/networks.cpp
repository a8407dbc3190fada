#include "dinfogan/networks.hpp"

#include <string>

#include "dinfogan/errors.hpp"

namespace dinfogan {

namespace nn = torch::nn;

namespace {

int64_t stages_to_4x4(int64_t image_size) {
  int64_t n = 0;
  for (int64_t s = image_size; s > 4; s /= 2) ++n;
  return n;
}

torch::Tensor add_noise(const torch::Tensor& x, double stddev, bool training, Rng* noise) {
  if (!training || stddev <= 0.0) return x;
  if (noise == nullptr) throw ContractViolation("train-mode discriminator forward needs a noise source");
  // Drawn in float32 for every dtype so a float64 copy of a model sees the same noise.
  return x + torch::randn(x.sizes(), *noise, x.options().dtype(torch::kFloat32)).to(x.scalar_type()) * stddev;
}

void append(std::vector<torch::Tensor>& dst, const std::vector<torch::Tensor>& src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

}  // namespace

ArchitectureConfig ArchitectureConfig::for_image_size(int64_t image_size, int64_t channels, int64_t common_dim,
                                                      int64_t salient_dim) {
  ArchitectureConfig cfg;
  cfg.image_size = image_size;
  cfg.channels = channels;
  cfg.common_dim = common_dim;
  cfg.salient_dim = salient_dim;
  cfg.use_spectral_norm = image_size == 128;
  cfg.use_self_attention = image_size == 128;
  return cfg;
}

void ArchitectureConfig::validate() const {
  if (image_size != 32 && image_size != 64 && image_size != 128)
    throw ConfigError("arch.image_size must be 32, 64 or 128 (got " + std::to_string(image_size) + ")");
  if (channels != 1 && channels != 3)
    throw ConfigError("arch.channels must be 1 or 3 (got " + std::to_string(channels) + ")");
  if (common_dim <= 0 || salient_dim <= 0) throw ConfigError("arch latent dimensions must be positive");
  if (noise_std < 0.0) throw ConfigError("arch.noise_std must be >= 0");
  if (!(lrelu_slope > 0.0 && lrelu_slope < 1.0)) throw ConfigError("arch.lrelu_slope must lie in (0, 1)");
  if (base_width <= 0) throw ConfigError("arch.base_width must be positive");
  const bool large = image_size == 128;
  if (use_spectral_norm != large || use_self_attention != large)
    throw ConfigError("arch: spectral norm and self-attention are used exactly when image_size == 128");
  if (cr_enabled && salient_dim < 2) throw ConfigError("arch.cr_enabled needs salient_dim >= 2");
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

GeneratorImpl::GeneratorImpl(const ArchitectureConfig& c) : cfg(c) {
  cfg.validate();
  const int64_t in = cfg.common_dim + cfg.salient_dim;
  const int64_t w = cfg.base_width;

  if (cfg.image_size == 128) {
    // 4 -> 8 -> 16 -> 32 (attention) -> 64 -> 64 -> 128
    project = register_module("project", nn::Linear(in, 8 * w * 16));
    auto up = [] { return nn::Upsample(nn::UpsampleOptions().scale_factor(std::vector<double>{2, 2}).mode(torch::kNearest)); };
    auto conv_bn_relu = [this](int64_t cin, int64_t cout) {
      body->push_back(nn::Conv2d(nn::Conv2dOptions(cin, cout, 3).padding(1)));
      body->push_back(nn::BatchNorm2d(cout));
      body->push_back(nn::ReLU());
    };
    body->push_back(up());
    conv_bn_relu(8 * w, 16 * w);
    body->push_back(up());
    conv_bn_relu(16 * w, 8 * w);
    body->push_back(up());
    conv_bn_relu(8 * w, 4 * w);
    if (cfg.use_self_attention) body->push_back(SelfAttention(4 * w));
    body->push_back(up());
    conv_bn_relu(4 * w, 4 * w);
    conv_bn_relu(4 * w, 2 * w);
    body->push_back(up());
    conv_bn_relu(2 * w, w);
    body->push_back(nn::Conv2d(nn::Conv2dOptions(w, cfg.channels, 3).padding(1)));
    body->push_back(nn::Tanh());
  } else {
    // (z+s, 1, 1) -> 4x4 -> ... -> image_size
    const int64_t ups = stages_to_4x4(cfg.image_size);
    int64_t ch = w << (ups - 1);
    body->push_back(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, ch, 4).bias(false)));
    body->push_back(nn::BatchNorm2d(ch));
    body->push_back(nn::ReLU());
    for (int64_t i = 1; i < ups; ++i) {
      body->push_back(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(ch, ch / 2, 4).stride(2).padding(1).bias(false)));
      body->push_back(nn::BatchNorm2d(ch / 2));
      body->push_back(nn::ReLU());
      ch /= 2;
    }
    body->push_back(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(ch, cfg.channels, 4).stride(2).padding(1).bias(false)));
    body->push_back(nn::Tanh());
  }
  register_module("body", body);
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& z, const torch::Tensor& s) {
  if (z.dim() != 2 || z.size(1) != cfg.common_dim || s.dim() != 2 || s.size(1) != cfg.salient_dim ||
      z.size(0) != s.size(0))
    throw ContractViolation("generator expects z [b, " + std::to_string(cfg.common_dim) + "] and s [b, " +
                            std::to_string(cfg.salient_dim) + "]");
  auto code = torch::cat({z, s}, 1);
  if (cfg.image_size == 128) {
    auto x = project->forward(code).view({code.size(0), 8 * cfg.base_width, 4, 4});
    return body->forward(x);
  }
  return body->forward(code.view({code.size(0), code.size(1), 1, 1}));
}

// ---------------------------------------------------------------------------
// Discriminator trunk and heads
// ---------------------------------------------------------------------------

TrunkImpl::TrunkImpl(const ArchitectureConfig& c, int64_t in_channels) : cfg(c) {
  cfg.validate();
  const int64_t w = cfg.base_width;
  std::vector<int64_t> widths;
  if (cfg.image_size == 128) {
    widths = {w, 2 * w, 4 * w, 8 * w, 8 * w};
  } else {
    for (int64_t i = 0; i < stages_to_4x4(cfg.image_size); ++i) widths.push_back(w << i);
  }
  int64_t cin = in_channels;
  for (size_t i = 0; i < widths.size(); ++i) {
    const auto idx = std::to_string(i);
    layers.push_back(register_module(
        "conv" + idx, WeightLayer(WeightLayerImpl::Conv{cin, widths[i], 4, 2, 1}, cfg.use_spectral_norm)));
    if (!cfg.use_spectral_norm && i > 0) {
      norms.push_back(register_module("bn" + idx, nn::BatchNorm2d(widths[i])));
    } else {
      norms.emplace_back(nullptr);
    }
    cin = widths[i];
  }
  out_channels_ = cin;
}

torch::Tensor TrunkImpl::forward(const torch::Tensor& x, Rng* noise) {
  auto h = x;
  for (size_t i = 0; i < layers.size(); ++i) {
    h = layers[i]->forward(add_noise(h, cfg.noise_std, is_training(), noise));
    if (!norms[i].is_empty()) h = norms[i]->forward(h);
    h = torch::leaky_relu(h, cfg.lrelu_slope);
  }
  return h;
}

HeadImpl::HeadImpl(const ArchitectureConfig& c, int64_t feature_channels, int64_t outputs, bool hidden_layer)
    : cfg(c) {
  if (cfg.image_size == 128) {
    const int64_t flat = feature_channels * 16;
    if (hidden_layer) {
      hidden = register_module("hidden", WeightLayer(WeightLayerImpl::Linear{flat, 128}, cfg.use_spectral_norm));
      out = register_module("out", WeightLayer(WeightLayerImpl::Linear{128, outputs}, cfg.use_spectral_norm));
    } else {
      out = register_module("out", WeightLayer(WeightLayerImpl::Linear{flat, outputs}, false));
    }
  } else {
    out = register_module("out", WeightLayer(WeightLayerImpl::Conv{feature_channels, outputs, 4, 1, 0}, false));
  }
}

torch::Tensor HeadImpl::forward(const torch::Tensor& features, Rng* noise) {
  const bool training = is_training();
  if (cfg.image_size == 128) {
    auto h = features.flatten(1);
    if (!hidden.is_empty()) {
      h = torch::leaky_relu(hidden->forward(add_noise(h, cfg.noise_std, training, noise)), cfg.lrelu_slope);
    }
    return out->forward(add_noise(h, cfg.noise_std, training, noise));
  }
  return out->forward(add_noise(features, cfg.noise_std, training, noise)).flatten(1);
}

DiscriminatorImpl::DiscriminatorImpl(const ArchitectureConfig& c) : cfg(c) {
  trunk = register_module("trunk", Trunk(cfg, cfg.channels));
  const int64_t f = trunk->feature_channels();
  head_d = register_module("head_d", Head(cfg, f, 1, false));
  head_c = register_module("head_c", Head(cfg, f, 1, false));
  head_qz = register_module("head_qz", Head(cfg, f, cfg.common_dim, true));
  head_qs = register_module("head_qs", Head(cfg, f, cfg.salient_dim, true));
}

DiscriminatorOutput DiscriminatorImpl::forward(const torch::Tensor& images, Rng* noise) {
  check_images(cfg, images);
  auto features = trunk->forward(images, noise);
  DiscriminatorOutput out;
  out.d = torch::sigmoid(head_d->forward(features, noise)).squeeze(1);
  out.c = torch::sigmoid(head_c->forward(features, noise)).squeeze(1);
  out.q_z = head_qz->forward(features, noise);
  out.q_s = head_qs->forward(features, noise);
  return out;
}

CrHeadImpl::CrHeadImpl(const ArchitectureConfig& c) : cfg(c) {
  trunk = register_module("trunk", Trunk(cfg, 2 * cfg.channels));
  head = register_module("head", Head(cfg, trunk->feature_channels(), cfg.salient_dim, true));
}

torch::Tensor CrHeadImpl::forward(const torch::Tensor& image_a, const torch::Tensor& image_b, Rng* noise) {
  check_images(cfg, image_a);
  check_images(cfg, image_b);
  if (image_a.size(0) != image_b.size(0)) throw ContractViolation("contrastive head needs equal batch sizes");
  return head->forward(trunk->forward(torch::cat({image_a, image_b}, 1), noise), noise);
}

// ---------------------------------------------------------------------------
// Bundle
// ---------------------------------------------------------------------------

void ModelBundle::set_mode(RunMode mode) {
  const bool on = mode == RunMode::train;
  generator->train(on);
  discriminator->train(on);
  if (!cr_head.is_empty()) cr_head->train(on);
}

void ModelBundle::to(torch::Dtype dtype) {
  generator->to(dtype);
  discriminator->to(dtype);
  if (!cr_head.is_empty()) cr_head->to(dtype);
}

std::vector<torch::Tensor> ModelBundle::generator_parameters() const { return generator->parameters(); }

std::vector<torch::Tensor> ModelBundle::trunk_parameters() const { return discriminator->trunk->parameters(); }

std::vector<torch::Tensor> ModelBundle::adversarial_parameters() const {
  auto p = discriminator->trunk->parameters();
  append(p, discriminator->head_d->parameters());
  append(p, discriminator->head_c->parameters());
  return p;
}

std::vector<torch::Tensor> ModelBundle::encoder_head_parameters() const {
  auto p = discriminator->head_qz->parameters();
  append(p, discriminator->head_qs->parameters());
  return p;
}

std::vector<torch::Tensor> ModelBundle::cr_parameters() const {
  if (cr_head.is_empty()) return {};
  return cr_head->parameters();
}

torch::Dtype bundle_dtype(const ModelBundle& bundle) {
  return bundle.generator->parameters().front().scalar_type();
}

ModelBundle build_models(const ArchitectureConfig& cfg, Rng& rng) {
  cfg.validate();
  ModelBundle b;
  b.arch = cfg;
  b.generator = Generator(cfg);
  b.discriminator = Discriminator(cfg);
  init_weights(*b.generator, rng);
  init_weights(*b.discriminator, rng);
  if (cfg.cr_enabled) {
    b.cr_head = CrHead(cfg);
    init_weights(*b.cr_head, rng);
  }
  return b;
}

ModelBundle build_models(const ArchitectureConfig& cfg, uint64_t seed) {
  auto rng = make_rng(seed);
  return build_models(cfg, rng);
}

void check_images(const ArchitectureConfig& cfg, const torch::Tensor& images, int64_t channel_factor) {
  if (images.dim() != 4 || images.size(0) < 1 || images.size(1) != cfg.channels * channel_factor ||
      images.size(2) != cfg.image_size || images.size(3) != cfg.image_size)
    throw ContractViolation("expected images [b, " + std::to_string(cfg.channels * channel_factor) + ", " +
                            std::to_string(cfg.image_size) + ", " + std::to_string(cfg.image_size) + "], got " +
                            c10::str(images.sizes()));
}

torch::Tensor generate(ModelBundle& bundle, const torch::Tensor& z, const torch::Tensor& s) {
  torch::NoGradGuard no_grad;
  bundle.generator->eval();
  return bundle.generator->forward(z, s);
}

DiscriminatorOutput discriminate(ModelBundle& bundle, const torch::Tensor& images, RunMode mode, Rng* rng) {
  bundle.discriminator->train(mode == RunMode::train);
  return bundle.discriminator->forward(images, rng);
}

torch::Tensor cr_predict(ModelBundle& bundle, const torch::Tensor& image_a, const torch::Tensor& image_b,
                         RunMode mode, Rng* rng) {
  if (bundle.cr_head.is_empty()) throw UnsupportedOperation("contrastive head is disabled (arch.cr_enabled=false)");
  bundle.cr_head->train(mode == RunMode::train);
  return bundle.cr_head->forward(image_a, image_b, rng);
}

}  // namespace dinfogan
