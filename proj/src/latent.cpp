#include "dinfogan/latent.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include "dinfogan/errors.hpp"

namespace dinfogan {

Rng make_rng(uint64_t seed) { return at::make_generator<at::CPUGeneratorImpl>(seed); }

std::string to_string(Domain d) { return d == Domain::background ? "background" : "target"; }

std::string to_string(CommonPrior p) {
  return p == CommonPrior::standard_normal ? "standard_normal" : "uniform_pm1";
}

std::string to_string(SalientPrior p) {
  return p == SalientPrior::standard_normal ? "standard_normal" : "uniform_0_1";
}

Domain domain_from_string(const std::string& s) {
  if (s == "background") return Domain::background;
  if (s == "target") return Domain::target;
  throw ConfigError("unknown domain '" + s + "'");
}

CommonPrior common_prior_from_string(const std::string& s) {
  if (s == "standard_normal") return CommonPrior::standard_normal;
  if (s == "uniform_pm1") return CommonPrior::uniform_pm1;
  throw ConfigError("unknown common prior '" + s + "'");
}

SalientPrior salient_prior_from_string(const std::string& s) {
  if (s == "standard_normal") return SalientPrior::standard_normal;
  if (s == "uniform_0_1") return SalientPrior::uniform_0_1;
  throw ConfigError("unknown salient prior '" + s + "'");
}

void PriorConfig::validate() const {
  if (common_dim <= 0) throw ConfigError("prior.common_dim must be positive");
  if (salient_dim <= 0) throw ConfigError("prior.salient_dim must be positive");
}

void check_latent_code(const LatentCode& code, const PriorConfig& cfg, Domain domain) {
  if (code.z.dim() != 2 || code.z.size(1) != cfg.common_dim)
    throw ContractViolation("latent z must be [batch, L]");
  if (code.s.dim() != 2 || code.s.size(1) != cfg.salient_dim || code.s.size(0) != code.z.size(0))
    throw ContractViolation("latent s must be [batch, M] with the batch of z");
  if (!torch::isfinite(code.z).all().item<bool>() || !torch::isfinite(code.s).all().item<bool>())
    throw ContractViolation("latent code contains non-finite values");
  if (domain == Domain::background && code.s.abs().max().item<double>() != 0.0)
    throw ContractViolation("background latent code must have s == 0");
}

namespace {

void require_batch(int64_t batch) {
  if (batch < 1) throw ContractViolation("latent batch must be >= 1");
}

torch::Tensor draw_common(torch::IntArrayRef shape, const PriorConfig& cfg, Rng& rng) {
  if (cfg.common_prior == CommonPrior::standard_normal) return torch::randn(shape, rng);
  return torch::rand(shape, rng) * 2.0 - 1.0;
}

torch::Tensor draw_salient(torch::IntArrayRef shape, const PriorConfig& cfg, Rng& rng) {
  if (cfg.salient_target_prior == SalientPrior::standard_normal) return torch::randn(shape, rng);
  // rand() is on [0, 1); flip it onto (0, 1].
  return 1.0 - torch::rand(shape, rng);
}

}  // namespace

torch::Tensor sample_common(int64_t batch, const PriorConfig& cfg, Rng& rng) {
  require_batch(batch);
  return draw_common({batch, cfg.common_dim}, cfg, rng);
}

torch::Tensor sample_salient(int64_t batch, Domain domain, const PriorConfig& cfg, Rng& rng) {
  require_batch(batch);
  if (domain == Domain::background) return torch::zeros({batch, cfg.salient_dim});
  return draw_salient({batch, cfg.salient_dim}, cfg, rng);
}

LatentCode sample_code(int64_t batch, Domain domain, const PriorConfig& cfg, Rng& rng) {
  LatentCode code;
  code.z = sample_common(batch, cfg, rng);
  code.s = sample_salient(batch, domain, cfg, rng);
  return code;
}

CrBatch sample_cr_batch(int64_t batch, const PriorConfig& cfg, Rng& rng) {
  require_batch(batch);
  const int64_t m = cfg.salient_dim;
  if (m < 2) throw ConfigError("contrastive pairs need salient_dim >= 2");

  CrBatch out;
  out.z = draw_common({batch, cfg.common_dim}, cfg, rng);
  out.s1 = draw_salient({batch, m}, cfg, rng);
  out.s2 = draw_salient({batch, m}, cfg, rng);
  out.shared_index = torch::randint(0, m, {batch}, rng, torch::kLong);

  auto shared_mask = torch::one_hot(out.shared_index, m).to(torch::kBool);
  out.s2 = torch::where(shared_mask, out.s1, out.s2);

  // Finite-precision collisions on non-shared coordinates get redrawn.
  for (;;) {
    auto collide = (out.s1 == out.s2).logical_and(shared_mask.logical_not());
    if (!collide.any().item<bool>()) break;
    out.s2 = torch::where(collide, draw_salient({batch, m}, cfg, rng), out.s2);
  }
  return out;
}

CrPair sample_cr_pair(const PriorConfig& cfg, Rng& rng) {
  CrBatch b = sample_cr_batch(1, cfg, rng);
  return CrPair{b.z[0], b.s1[0], b.s2[0], b.shared_index[0].item<int64_t>()};
}

}  // namespace dinfogan
