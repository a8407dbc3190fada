#include <filesystem>
#include <fstream>
#include <set>

#include <doctest.h>

#include "dinfogan/checkpoint.hpp"
#include "dinfogan/errors.hpp"
#include "dinfogan/networks.hpp"
#include "support/fixtures.hpp"
#include "support/helpers.hpp"

using namespace dinfogan;
namespace fs = std::filesystem;

namespace {

ArchitectureConfig small_arch(int64_t size, int64_t channels, bool cr = false) {
  auto a = ArchitectureConfig::for_image_size(size, channels, 3, 4);
  a.base_width = size == 128 ? 4 : 8;
  a.cr_enabled = cr;
  return a;
}

bool same_parameters(torch::nn::Module& a, torch::nn::Module& b) {
  auto pa = a.named_parameters(), pb = b.named_parameters();
  if (pa.size() != pb.size()) return false;
  for (const auto& kv : pa) {
    if (!torch::equal(kv.value(), pb[kv.key()])) return false;
  }
  auto ba = a.named_buffers(), bb = b.named_buffers();
  for (const auto& kv : ba) {
    if (!torch::equal(kv.value(), bb[kv.key()])) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("architecture validation") {
  auto a = ArchitectureConfig::for_image_size(128, 1, 8, 8);
  CHECK(a.use_spectral_norm);
  CHECK(a.use_self_attention);
  CHECK_FALSE(ArchitectureConfig::for_image_size(64, 3, 8, 8).use_spectral_norm);
  CHECK_NOTHROW(a.validate());
  a.use_self_attention = false;
  CHECK_THROWS_AS(a.validate(), ConfigError);
  auto b = ArchitectureConfig::for_image_size(48, 3, 8, 8);
  CHECK_THROWS_WITH_AS(b.validate(), doctest::Contains("image_size"), ConfigError);
  auto c = ArchitectureConfig::for_image_size(64, 2, 8, 8);
  CHECK_THROWS_AS(c.validate(), ConfigError);
  auto d = ArchitectureConfig::for_image_size(64, 3, 8, 1);
  d.cr_enabled = true;
  CHECK_THROWS_AS(d.validate(), ConfigError);
}

TEST_CASE("output shapes for every image size") {
  for (int64_t size : {32, 64, 128}) {
    for (int64_t ch : {1, 3}) {
      CAPTURE(size);
      CAPTURE(ch);
      auto arch = small_arch(size, ch, true);
      auto bundle = build_models(arch, 11);
      auto rng = make_rng(3);
      const auto z = torch::randn({2, 3}, rng), s = torch::randn({2, 4}, rng);
      const auto img = generate(bundle, z, s);
      CHECK(img.sizes() == torch::IntArrayRef({2, ch, size, size}));
      CHECK(img.abs().max().item<double>() <= 1.0);
      for (auto mode : {RunMode::eval, RunMode::train}) {
        auto out = discriminate(bundle, img, mode, &rng);
        CHECK(out.d.sizes() == torch::IntArrayRef({2}));
        CHECK(out.c.sizes() == torch::IntArrayRef({2}));
        CHECK(out.q_z.sizes() == torch::IntArrayRef({2, 3}));
        CHECK(out.q_s.sizes() == torch::IntArrayRef({2, 4}));
        CHECK(out.d.min().item<double>() >= 0.0);
        CHECK(out.d.max().item<double>() <= 1.0);
        CHECK(out.c.min().item<double>() >= 0.0);
        CHECK(out.c.max().item<double>() <= 1.0);
      }
      CHECK(cr_predict(bundle, img, img, RunMode::eval, nullptr).sizes() == torch::IntArrayRef({2, 4}));
    }
  }
}

TEST_CASE("full width 128 network runs forward") {
  auto arch = ArchitectureConfig::for_image_size(128, 1, 16, 16);
  auto bundle = build_models(arch, 1);
  auto rng = make_rng(2);
  const auto img = generate(bundle, torch::randn({2, 16}, rng), torch::randn({2, 16}, rng));
  CHECK(img.sizes() == torch::IntArrayRef({2, 1, 128, 128}));
  auto out = discriminate(bundle, img, RunMode::train, &rng);
  CHECK(out.q_s.sizes() == torch::IntArrayRef({2, 16}));
  CHECK(torch::isfinite(out.d).all().item<bool>());
}

TEST_CASE("initialization is seed deterministic") {
  auto arch = small_arch(32, 1, true);
  auto a = build_models(arch, 5), b = build_models(arch, 5), c = build_models(arch, 6);
  CHECK(same_parameters(*a.generator, *b.generator));
  CHECK(same_parameters(*a.discriminator, *b.discriminator));
  CHECK(same_parameters(*a.cr_head, *b.cr_head));
  CHECK_FALSE(same_parameters(*a.generator, *c.generator));
}

TEST_CASE("initial weights follow the N(0, 0.02) scheme") {
  auto bundle = build_models(ArchitectureConfig::for_image_size(64, 3, 64, 64), 9);
  for (const auto& p : bundle.discriminator->named_parameters()) {
    if (p.key().find("weight") == std::string::npos || p.key().find("bn") != std::string::npos) continue;
    if (p.value().numel() < 1000) continue;
    CAPTURE(p.key());
    CHECK(std::abs(p.value().mean().item<double>()) < 0.002);
    CHECK(p.value().std().item<double>() == doctest::Approx(0.02).epsilon(0.05));
  }
}

TEST_CASE("heads share the trunk and own disjoint parameters") {
  auto bundle = build_models(small_arch(32, 1, true), 1);
  auto key = [](const torch::Tensor& t) { return t.unsafeGetTensorImpl(); };
  std::set<const void*> trunk, adv, enc, gen, cr;
  for (auto& t : bundle.trunk_parameters()) trunk.insert(key(t));
  for (auto& t : bundle.adversarial_parameters()) adv.insert(key(t));
  for (auto& t : bundle.encoder_head_parameters()) enc.insert(key(t));
  for (auto& t : bundle.generator_parameters()) gen.insert(key(t));
  for (auto& t : bundle.cr_parameters()) cr.insert(key(t));
  for (auto* p : trunk) CHECK(adv.count(p) == 1);
  for (auto* p : enc) {
    CHECK(adv.count(p) == 0);
    CHECK(gen.count(p) == 0);
  }
  for (auto* p : cr) {
    CHECK(adv.count(p) == 0);
    CHECK(gen.count(p) == 0);
  }
  CHECK(adv.size() + enc.size() == bundle.discriminator->parameters().size());
}

TEST_CASE("trunk features feed every head") {
  auto bundle = build_models(small_arch(32, 1), 4);
  auto rng = make_rng(1);
  auto img = torch::rand({3, 1, 32, 32}, rng) * 2 - 1;
  auto out = discriminate(bundle, img, RunMode::eval, nullptr);
  const auto loss = out.d.sum() + out.c.sum() + out.q_z.sum() + out.q_s.sum();
  auto first = bundle.discriminator->trunk->layers.front()->parameters().front();
  auto grads = torch::autograd::grad({out.q_s.sum()}, {first}, {}, true);
  CHECK(grads[0].abs().sum().item<double>() > 0.0);
  grads = torch::autograd::grad({out.d.sum()}, {first}, {}, true);
  CHECK(grads[0].abs().sum().item<double>() > 0.0);
  CHECK(torch::isfinite(loss).item<bool>());
}

TEST_CASE("eval mode is deterministic and train mode draws noise") {
  auto bundle = build_models(small_arch(32, 1), 4);
  auto rng = make_rng(1);
  auto img = torch::rand({4, 1, 32, 32}, rng) * 2 - 1;
  auto a = discriminate(bundle, img, RunMode::eval, nullptr);
  auto b = discriminate(bundle, img, RunMode::eval, nullptr);
  CHECK(torch::equal(a.q_s, b.q_s));
  auto r1 = make_rng(8), r2 = make_rng(8), r3 = make_rng(9);
  auto t1 = discriminate(bundle, img, RunMode::train, &r1);
  auto t2 = discriminate(bundle, img, RunMode::train, &r2);
  auto t3 = discriminate(bundle, img, RunMode::train, &r3);
  CHECK(torch::equal(t1.q_z, t2.q_z));
  CHECK_FALSE(torch::equal(t1.q_z, t3.q_z));
  CHECK_THROWS_AS(discriminate(bundle, img, RunMode::train, nullptr), ContractViolation);
}

TEST_CASE("shape contracts") {
  auto bundle = build_models(small_arch(32, 1), 4);
  CHECK_THROWS_AS(generate(bundle, torch::zeros({2, 4}), torch::zeros({2, 4})), ContractViolation);
  CHECK_THROWS_AS(generate(bundle, torch::zeros({2, 3}), torch::zeros({1, 4})), ContractViolation);
  CHECK_THROWS_AS(discriminate(bundle, torch::zeros({2, 3, 32, 32}), RunMode::eval, nullptr), ContractViolation);
  CHECK_THROWS_AS(discriminate(bundle, torch::zeros({2, 1, 64, 64}), RunMode::eval, nullptr), ContractViolation);
  CHECK_THROWS_AS(cr_predict(bundle, torch::zeros({1, 1, 32, 32}), torch::zeros({1, 1, 32, 32}), RunMode::eval,
                             nullptr),
                  UnsupportedOperation);
  auto with_cr = build_models(small_arch(32, 1, true), 4);
  CHECK_THROWS_AS(cr_predict(with_cr, torch::zeros({1, 1, 32, 32}), torch::zeros({2, 1, 32, 32}), RunMode::eval,
                             nullptr),
                  ContractViolation);
}

TEST_CASE("self-attention starts as the identity") {
  SelfAttention att(16);
  auto x = torch::randn({2, 16, 4, 4});
  CHECK(torch::allclose(att->forward(x), x));
  {
    torch::NoGradGuard g;
    att->gamma.fill_(0.5);
  }
  CHECK_FALSE(torch::allclose(att->forward(x), x));
}

TEST_CASE("spectral normalization bounds the largest singular value") {
  SNLinear lin(12, 7);
  {
    torch::NoGradGuard g;
    lin->weight_orig.normal_(0, 3);
  }
  lin->train();
  for (int i = 0; i < 50; ++i) lin->forward(torch::zeros({1, 12}));
  lin->eval();
  auto w = lin->sn.normalized(lin->weight_orig, false);
  const double sigma = torch::linalg_svdvals(w.to(torch::kFloat64)).max().item<double>();
  CHECK(sigma == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("checkpoint round trip preserves outputs") {
  const auto dir = fixtures::temp_dir("ckpt");
  auto arch = small_arch(32, 1, true);
  auto bundle = build_models(arch, 21);
  {
    // Move the batch-norm running statistics off their defaults.
    auto rng = make_rng(1);
    discriminate(bundle, torch::rand({4, 1, 32, 32}, rng), RunMode::train, &rng);
  }
  save_bundle(dir, bundle, CheckpointMeta{arch, 7, 2, 21});
  const auto meta = read_checkpoint_meta(dir);
  CHECK(meta.step == 7);
  CHECK(meta.epoch == 2);
  CHECK(meta.arch == arch);
  auto loaded = load_bundle(dir, &arch);
  CHECK(same_parameters(*bundle.discriminator, *loaded.discriminator));
  CHECK(same_parameters(*bundle.cr_head, *loaded.cr_head));
  auto rng = make_rng(2);
  auto z = torch::randn({2, 3}, rng), s = torch::randn({2, 4}, rng);
  CHECK(torch::equal(generate(bundle, z, s), generate(loaded, z, s)));

  auto other = arch;
  other.salient_dim = 5;
  CHECK_THROWS_AS(load_bundle(dir, &other), ArchitectureMismatch);
  fs::remove(dir / "generator.pt");
  CHECK_THROWS_AS(load_bundle(dir), ArchitectureMismatch);
  CHECK_THROWS(read_checkpoint_meta(dir / "missing"));
  fs::remove_all(dir);
}

TEST_CASE("atomic directory writes replace the old contents") {
  const auto root = fixtures::temp_dir("atomic");
  const auto target = root / "final";
  write_directory_atomically(target, [](const fs::path& d) { std::ofstream(d / "a") << "1"; });
  write_directory_atomically(target, [](const fs::path& d) { std::ofstream(d / "b") << "2"; });
  CHECK_FALSE(fs::exists(target / "a"));
  CHECK(fs::exists(target / "b"));
  CHECK_THROWS(write_directory_atomically(target, [](const fs::path&) { throw std::runtime_error("boom"); }));
  CHECK(fs::exists(target / "b"));
  fs::remove_all(root);
}
