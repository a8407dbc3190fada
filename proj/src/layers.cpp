#include "dinfogan/layers.hpp"

#include <cmath>

namespace dinfogan {

namespace F = torch::nn::functional;

namespace {

constexpr double kSnEps = 1e-12;
constexpr int kSnWarmup = 15;

torch::Tensor unit(const torch::Tensor& t) { return t / (t.norm() + kSnEps); }

}  // namespace

SpectralNormalizer::SpectralNormalizer(torch::nn::Module& owner, const torch::Tensor& weight_orig) {
  const auto rows = weight_orig.size(0);
  const auto cols = weight_orig.numel() / rows;
  u_ = owner.register_buffer("sn_u", unit(torch::randn({rows})));
  v_ = owner.register_buffer("sn_v", unit(torch::randn({cols})));
  refine(weight_orig, kSnWarmup);
}

void SpectralNormalizer::refine(const torch::Tensor& weight_orig, int iterations) {
  torch::NoGradGuard no_grad;
  auto mat = weight_orig.reshape({weight_orig.size(0), -1});
  for (int i = 0; i < iterations; ++i) {
    v_.copy_(unit(torch::mv(mat.t(), u_)));
    u_.copy_(unit(torch::mv(mat, v_)));
  }
}

torch::Tensor SpectralNormalizer::normalized(const torch::Tensor& weight_orig, bool training) const {
  auto mat = weight_orig.reshape({weight_orig.size(0), -1});
  if (training) {
    torch::NoGradGuard no_grad;
    auto v = unit(torch::mv(mat.t(), u_));
    auto u = unit(torch::mv(mat, v));
    v_.copy_(v);
    u_.copy_(u);
  }
  auto sigma = torch::dot(u_, torch::mv(mat, v_));
  return weight_orig / sigma;
}

SNConv2dImpl::SNConv2dImpl(torch::nn::Conv2dOptions opts) : options(std::move(opts)) {
  const auto k = options.kernel_size();
  weight_orig = register_parameter(
      "weight_orig", torch::empty({options.out_channels(), options.in_channels(), (*k)[0], (*k)[1]}).normal_(0, 0.02));
  bias = register_parameter("bias", torch::zeros({options.out_channels()}));
  sn = SpectralNormalizer(*this, weight_orig);
}

torch::Tensor SNConv2dImpl::forward(const torch::Tensor& x) {
  const auto& stride = options.stride();
  const auto& pad = std::get<torch::ExpandingArray<2>>(options.padding());
  return F::conv2d(x, sn.normalized(weight_orig, is_training()),
                   F::Conv2dFuncOptions().bias(bias).stride(stride).padding(pad));
}

SNLinearImpl::SNLinearImpl(int64_t in_features, int64_t out_features) {
  weight_orig = register_parameter("weight_orig", torch::empty({out_features, in_features}).normal_(0, 0.02));
  bias = register_parameter("bias", torch::zeros({out_features}));
  sn = SpectralNormalizer(*this, weight_orig);
}

torch::Tensor SNLinearImpl::forward(const torch::Tensor& x) {
  return F::linear(x, sn.normalized(weight_orig, is_training()), bias);
}

SelfAttentionImpl::SelfAttentionImpl(int64_t channels) {
  const int64_t inner = std::max<int64_t>(1, channels / 8);
  query = register_module("query", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, inner, 1)));
  key = register_module("key", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, inner, 1)));
  value = register_module("value", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, 1)));
  gamma = register_parameter("gamma", torch::zeros({1}));
}

torch::Tensor SelfAttentionImpl::forward(const torch::Tensor& x) {
  const auto b = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
  auto q = query->forward(x).view({b, -1, h * w}).permute({0, 2, 1});  // [b, N, c']
  auto k = key->forward(x).view({b, -1, h * w});                        // [b, c', N]
  auto attn = torch::softmax(torch::bmm(q, k), -1);                     // [b, N, N]
  auto v = value->forward(x).view({b, c, h * w});                       // [b, c, N]
  auto out = torch::bmm(v, attn.permute({0, 2, 1})).view({b, c, h, w});
  return gamma * out + x;
}

WeightLayerImpl::WeightLayerImpl(Conv c, bool spectral_norm) {
  auto opts = torch::nn::Conv2dOptions(c.in, c.out, c.kernel).stride(c.stride).padding(c.padding);
  if (spectral_norm) {
    layer = torch::nn::AnyModule(register_module("sn_conv", SNConv2d(opts)));
  } else {
    layer = torch::nn::AnyModule(register_module("conv", torch::nn::Conv2d(opts)));
  }
}

WeightLayerImpl::WeightLayerImpl(Linear l, bool spectral_norm) {
  if (spectral_norm) {
    layer = torch::nn::AnyModule(register_module("sn_linear", SNLinear(l.in, l.out)));
  } else {
    layer = torch::nn::AnyModule(register_module("linear", torch::nn::Linear(l.in, l.out)));
  }
}

torch::Tensor WeightLayerImpl::forward(const torch::Tensor& x) { return layer.forward(x); }

void init_weights(torch::nn::Module& root, Rng& rng) {
  torch::NoGradGuard no_grad;
  for (auto& m : root.modules(/*include_self=*/true)) {
    if (auto* conv = m->as<torch::nn::Conv2d>()) {
      conv->weight.normal_(0.0, 0.02, rng);
      if (conv->bias.defined()) conv->bias.zero_();
    } else if (auto* deconv = m->as<torch::nn::ConvTranspose2d>()) {
      deconv->weight.normal_(0.0, 0.02, rng);
      if (deconv->bias.defined()) deconv->bias.zero_();
    } else if (auto* lin = m->as<torch::nn::Linear>()) {
      lin->weight.normal_(0.0, 0.02, rng);
      lin->bias.zero_();
    } else if (auto* sc = m->as<SNConv2d>()) {
      sc->weight_orig.normal_(0.0, 0.02, rng);
      sc->bias.zero_();
    } else if (auto* sl = m->as<SNLinear>()) {
      sl->weight_orig.normal_(0.0, 0.02, rng);
      sl->bias.zero_();
    } else if (auto* bn = m->as<torch::nn::BatchNorm2d>()) {
      bn->weight.fill_(1.0);
      bn->bias.zero_();
      bn->running_mean.zero_();
      bn->running_var.fill_(1.0);
      bn->num_batches_tracked.zero_();
    } else if (auto* sa = m->as<SelfAttention>()) {
      sa->gamma.zero_();
    }
    for (auto& buf : m->named_buffers(/*recurse=*/false)) {
      if (buf.key() == "sn_u" || buf.key() == "sn_v") {
        auto& t = buf.value();
        t.normal_(0.0, 1.0, rng);
        t.div_(t.norm() + kSnEps);
      }
    }
    if (auto* sc = m->as<SNConv2d>()) sc->sn.refine(sc->weight_orig, kSnWarmup);
    if (auto* sl = m->as<SNLinear>()) sl->sn.refine(sl->weight_orig, kSnWarmup);
  }
}

}  // namespace dinfogan
