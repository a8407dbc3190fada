#pragma once

#include <cstdint>
#include <string>

#include <torch/torch.h>

namespace dinfogan {

using Rng = at::Generator;

// CPU random source whose whole state is determined by `seed`.
Rng make_rng(uint64_t seed);

enum class Domain : int { background = 0, target = 1 };

enum class CommonPrior { standard_normal, uniform_pm1 };
enum class SalientPrior { standard_normal, uniform_0_1 };

std::string to_string(Domain d);
std::string to_string(CommonPrior p);
std::string to_string(SalientPrior p);
Domain domain_from_string(const std::string& s);
CommonPrior common_prior_from_string(const std::string& s);
SalientPrior salient_prior_from_string(const std::string& s);

struct PriorConfig {
  int64_t common_dim = 64;   // L
  int64_t salient_dim = 64;  // M
  CommonPrior common_prior = CommonPrior::standard_normal;
  SalientPrior salient_target_prior = SalientPrior::standard_normal;

  // Throws ConfigError when a dimension is not positive.
  void validate() const;
  bool operator==(const PriorConfig&) const = default;
};

// Batched (z, s) codes: z is [batch, L], s is [batch, M].
struct LatentCode {
  torch::Tensor z;
  torch::Tensor s;
};

// Checks shapes, finiteness, and the background s == 0 rule.
void check_latent_code(const LatentCode& code, const PriorConfig& cfg, Domain domain);

torch::Tensor sample_common(int64_t batch, const PriorConfig& cfg, Rng& rng);

// Background codes are exactly zero (Dirac prior at the origin).
torch::Tensor sample_salient(int64_t batch, Domain domain, const PriorConfig& cfg, Rng& rng);

LatentCode sample_code(int64_t batch, Domain domain, const PriorConfig& cfg, Rng& rng);

// Two salient codes sharing exactly coordinate `shared_index`, with a common z.
struct CrPair {
  torch::Tensor z;   // [L]
  torch::Tensor s1;  // [M]
  torch::Tensor s2;  // [M]
  int64_t shared_index = 0;
};

struct CrBatch {
  torch::Tensor z;              // [batch, L]
  torch::Tensor s1;             // [batch, M]
  torch::Tensor s2;             // [batch, M]
  torch::Tensor shared_index;   // [batch] int64
};

CrPair sample_cr_pair(const PriorConfig& cfg, Rng& rng);
CrBatch sample_cr_batch(int64_t batch, const PriorConfig& cfg, Rng& rng);

}  // namespace dinfogan
