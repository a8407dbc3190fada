#include <functional>

#include <doctest.h>

#include "dinfogan/losses.hpp"
#include "dinfogan/networks.hpp"
#include "support/helpers.hpp"

using namespace dinfogan;

namespace {

ArchitectureConfig tiny(int64_t size = 32) {
  auto a = ArchitectureConfig::for_image_size(size, 1, 2, 3);
  a.base_width = size == 128 ? 2 : 4;
  a.cr_enabled = true;
  return a;
}

// Compares autograd to central differences for `param`. `f` must be a pure
// function of the parameter values.
double check_param(torch::Tensor param, const std::function<torch::Tensor()>& f, double h, int64_t max_elems = 24) {
  auto analytic = torch::autograd::grad({f()}, {param})[0].detach().clone();
  auto flat = param.view({-1});
  const int64_t n = std::min<int64_t>(flat.numel(), max_elems);
  auto num = torch::zeros({n}, torch::kFloat64), ana = torch::zeros({n}, torch::kFloat64);
  torch::NoGradGuard guard;
  for (int64_t i = 0; i < n; ++i) {
    const int64_t j = i * flat.numel() / n;
    const double orig = flat[j].item<double>();
    flat[j] = orig + h;
    const double up = f().item<double>();
    flat[j] = orig - h;
    const double down = f().item<double>();
    flat[j] = orig;
    num[i] = (up - down) / (2 * h);
    ana[i] = analytic.view({-1})[j].to(torch::kFloat64);
  }
  return helpers::relative_error(ana, num);
}

}  // namespace

TEST_CASE("loss gradients match closed forms") {
  helpers::Gen g(1);
  const LossWeights w;
  auto p = g.probs(5).requires_grad_(true);
  auto q = g.probs(5).requires_grad_(true);
  auto loss = adv_loss_generator(p, q, w);
  auto gp = torch::autograd::grad({loss}, {p})[0];
  // d/dp of w_a * w_bg * mean(-log p) is -w_a * w_bg / (n p).
  CHECK(torch::allclose(gp, -0.5 * 0.5 / (5.0 * p.detach()), 1e-9, 1e-12));

  auto x = g.reals({3, 4}).requires_grad_(true);
  auto target = g.reals({3, 4});
  InfoTerms t;
  t.qz_fake_x = x;
  t.z_x = target;
  t.qs_fake_x = torch::zeros({3, 2}, torch::kFloat64);
  t.qz_fake_y = torch::zeros({3, 4}, torch::kFloat64);
  t.z_y = torch::zeros({3, 4}, torch::kFloat64);
  t.qs_fake_y = torch::zeros({3, 2}, torch::kFloat64);
  t.s_y = torch::zeros({3, 2}, torch::kFloat64);
  t.qs_real_x = torch::zeros({3, 2}, torch::kFloat64);
  auto gx = torch::autograd::grad({info_loss(t, w)}, {x})[0];
  CHECK(torch::allclose(gx, 0.5 * torch::sign(x.detach() - target) / 3.0));

  auto logits = g.reals({4, 3}).requires_grad_(true);
  auto k = torch::tensor(std::vector<int64_t>{0, 2, 1, 1});
  auto gl = torch::autograd::grad({cr_loss(logits, k)}, {logits})[0];
  auto expected = (torch::softmax(logits.detach(), 1) - torch::one_hot(k, 3).to(torch::kFloat64)) / 4.0;
  CHECK(torch::allclose(gl, expected, 1e-9, 1e-12));
}

TEST_CASE("finite differences through the trunk for every head, double precision") {
  for (int64_t size : {32, 128}) {
    CAPTURE(size);
    auto bundle = build_models(tiny(size), 3);
    bundle.to(torch::kFloat64);
    bundle.set_mode(RunMode::eval);
    auto rng = make_rng(4);
    auto images = (torch::rand({2, 1, size, size}, rng) * 2 - 1).to(torch::kFloat64);
    auto& D = bundle.discriminator;
    auto first = D->trunk->layers.front()->parameters().front();
    const std::vector<std::pair<const char*, std::function<torch::Tensor(const DiscriminatorOutput&)>>> heads = {
        {"d", [](const DiscriminatorOutput& o) { return torch::log(o.d).sum(); }},
        {"c", [](const DiscriminatorOutput& o) { return torch::log1p(-o.c).sum(); }},
        {"q_z", [](const DiscriminatorOutput& o) { return (o.q_z * o.q_z).sum(); }},
        {"q_s", [](const DiscriminatorOutput& o) { return (o.q_s - 0.3).pow(2).sum(); }},
    };
    for (const auto& [name, reduce] : heads) {
      CAPTURE(name);
      auto f = [&, reduce = reduce] { return reduce(D->forward(images, nullptr)); };
      CHECK(check_param(first, f, 1e-7) <= 1e-4);
    }
    auto gen_first = bundle.generator->parameters().front();
    auto z = torch::randn({2, 2}, rng).to(torch::kFloat64), s = torch::randn({2, 3}, rng).to(torch::kFloat64);
    auto proj = torch::randn({2, 1, size, size}, rng).to(torch::kFloat64);
    auto fg = [&] { return (bundle.generator->forward(z, s) * proj).sum(); };
    CHECK(check_param(gen_first, fg, 1e-7) <= 1e-4);
    auto cr_first = bundle.cr_head->trunk->layers.front()->parameters().front();
    auto k = torch::tensor(std::vector<int64_t>{1, 2});
    auto fc = [&] { return cr_loss(bundle.cr_head->forward(images, images.flip(0), nullptr), k); };
    CHECK(check_param(cr_first, fc, 1e-7) <= 1e-4);
  }
}

TEST_CASE("single-precision gradients with train-mode noise against a double copy") {
  // Float32 central differences through batch norm and leaky ReLU are dominated
  // by truncation, so the reference derivative comes from a float64 copy whose
  // own gradient is checked against central differences.
  auto single = build_models(tiny(32), 5);
  auto twin = build_models(tiny(32), 5);
  twin.to(torch::kFloat64);
  single.set_mode(RunMode::train);
  twin.set_mode(RunMode::train);
  auto gen = make_rng(6);
  auto images = torch::rand({4, 1, 32, 32}, gen) * 2 - 1;
  const LossWeights w;
  // Replaying the same noise stream keeps the function fixed between evaluations.
  auto loss = [&](ModelBundle& b) {
    auto rng = make_rng(77);
    auto out = b.discriminator->forward(images.to(bundle_dtype(b)), &rng);
    return adv_loss_discriminator(out.d, out.d.flip(0), out.d, out.d.flip(0), w) + out.q_s.pow(2).sum(1).mean();
  };
  auto ps = single.discriminator->trunk->parameters();
  auto pd = twin.discriminator->trunk->parameters();
  REQUIRE(ps.size() == pd.size());
  for (size_t i = 0; i < ps.size(); ++i) {
    CAPTURE(i);
    auto analytic = torch::autograd::grad({loss(single)}, {ps[i]})[0].to(torch::kFloat64);
    auto exact = torch::autograd::grad({loss(twin)}, {pd[i]})[0];
    // Convolution biases ahead of batch norm have an exactly zero gradient.
    if (exact.norm().item<double>() < 1e-10) {
      CHECK(analytic.abs().max().item<double>() < 1e-6);
      continue;
    }
    CHECK(check_param(pd[i], [&] { return loss(twin); }, 1e-7) <= 1e-4);
    CHECK(helpers::relative_error(analytic, exact) <= 1e-2);
  }
}
