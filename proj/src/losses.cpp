#include "dinfogan/losses.hpp"

#include <string>

#include "dinfogan/errors.hpp"

namespace dinfogan {

void LossWeights::validate() const {
  const std::pair<const char*, double> fields[] = {
      {"weights.background", background}, {"weights.target", target},       {"weights.adversarial", adversarial},
      {"weights.classification", classification}, {"weights.image", image}, {"weights.info_z", info_z},
      {"weights.info_s", info_s},         {"weights.info_real", info_real}, {"weights.cr", cr}};
  for (const auto& [name, v] : fields) {
    if (!(v >= 0.0)) throw ConfigError(std::string(name) + " must be a non-negative number");
  }
}

namespace {

void require_probs(const torch::Tensor& p, const char* name) {
  if (!p.defined() || p.numel() == 0) throw ContractViolation(std::string(name) + ": empty batch");
  if (p.dim() != 1) throw ContractViolation(std::string(name) + ": expected a 1-D batch of probabilities");
}

torch::Tensor safe(const torch::Tensor& p) { return p.clamp(kProbEps, 1.0 - kProbEps); }

torch::Tensor mean_neg_log(const torch::Tensor& p) { return -torch::log(safe(p)).mean(); }

torch::Tensor mean_neg_log1m(const torch::Tensor& p) { return -torch::log1p(-safe(p)).mean(); }

void require_same(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (!a.defined() || !b.defined() || a.sizes() != b.sizes())
    throw ContractViolation(std::string(what) + ": shape mismatch");
  if (a.numel() == 0) throw ContractViolation(std::string(what) + ": empty batch");
}

// Per-sample L1 norm of (pred - target), averaged over the batch.
torch::Tensor batch_l1(const torch::Tensor& pred, const torch::Tensor& target, const char* what) {
  require_same(pred, target, what);
  return (pred - target).abs().flatten(1).sum(1).mean();
}

torch::Tensor batch_l1_zero(const torch::Tensor& pred, const char* what) {
  if (!pred.defined() || pred.dim() < 2 || pred.numel() == 0) throw ContractViolation(std::string(what) + ": empty batch");
  return pred.abs().flatten(1).sum(1).mean();
}

}  // namespace

torch::Tensor adv_loss_discriminator(const torch::Tensor& d_real_x, const torch::Tensor& d_fake_x,
                                     const torch::Tensor& d_real_y, const torch::Tensor& d_fake_y,
                                     const LossWeights& w) {
  require_probs(d_real_x, "d_real_x");
  require_probs(d_fake_x, "d_fake_x");
  require_probs(d_real_y, "d_real_y");
  require_probs(d_fake_y, "d_fake_y");
  auto bg = mean_neg_log(d_real_x) + mean_neg_log1m(d_fake_x);
  auto tg = mean_neg_log(d_real_y) + mean_neg_log1m(d_fake_y);
  return w.adversarial * (w.background * bg + w.target * tg);
}

torch::Tensor adv_loss_generator(const torch::Tensor& d_fake_x, const torch::Tensor& d_fake_y, const LossWeights& w) {
  require_probs(d_fake_x, "d_fake_x");
  require_probs(d_fake_y, "d_fake_y");
  return w.adversarial * (w.background * mean_neg_log(d_fake_x) + w.target * mean_neg_log(d_fake_y));
}

torch::Tensor class_loss_discriminator(const torch::Tensor& c_real_x, const torch::Tensor& c_real_y,
                                       const LossWeights& w) {
  require_probs(c_real_x, "c_real_x");
  require_probs(c_real_y, "c_real_y");
  // BCE(p, 0) = -log(1 - p), BCE(p, 1) = -log(p)
  return w.classification * (mean_neg_log1m(c_real_x) + mean_neg_log(c_real_y));
}

torch::Tensor class_loss_generator(const torch::Tensor& c_fake_x, const torch::Tensor& c_fake_y,
                                   const LossWeights& w) {
  require_probs(c_fake_x, "c_fake_x");
  require_probs(c_fake_y, "c_fake_y");
  return w.classification * (mean_neg_log1m(c_fake_x) + mean_neg_log(c_fake_y));
}

torch::Tensor info_loss(const InfoTerms& t, const LossWeights& w) {
  auto bg = w.info_z * batch_l1(t.qz_fake_x, t.z_x, "info qz_fake_x") +
            w.info_s * batch_l1_zero(t.qs_fake_x, "info qs_fake_x");
  auto tg = w.info_z * batch_l1(t.qz_fake_y, t.z_y, "info qz_fake_y") +
            w.info_s * batch_l1(t.qs_fake_y, t.s_y, "info qs_fake_y");
  auto real = batch_l1_zero(t.qs_real_x, "info qs_real_x");
  return w.background * bg + w.target * tg + w.info_real * real;
}

torch::Tensor image_reconstruction_loss(const torch::Tensor& x_real, const torch::Tensor& x_rec,
                                        const torch::Tensor& y_real, const torch::Tensor& y_rec,
                                        const LossWeights& w) {
  require_same(x_real, x_rec, "image loss (background)");
  require_same(y_real, y_rec, "image loss (target)");
  return w.image * (w.background * (x_rec - x_real).abs().mean() + w.target * (y_rec - y_real).abs().mean());
}

torch::Tensor cr_loss(const torch::Tensor& logits, const torch::Tensor& shared_index) {
  if (!logits.defined() || logits.dim() != 2 || logits.size(0) == 0)
    throw ContractViolation("cr_loss: logits must be a non-empty [b, M] batch");
  if (logits.size(1) < 2) throw ContractViolation("cr_loss: needs M >= 2");
  if (!shared_index.defined() || shared_index.dim() != 1 || shared_index.size(0) != logits.size(0))
    throw ContractViolation("cr_loss: shared_index must be [b]");
  const auto lo = shared_index.min().item<int64_t>();
  const auto hi = shared_index.max().item<int64_t>();
  if (lo < 0 || hi >= logits.size(1))
    throw ContractViolation("cr_loss: shared index out of range [0, " + std::to_string(logits.size(1)) + ")");
  return torch::nn::functional::cross_entropy(logits, shared_index.to(torch::kLong));
}

torch::Tensor total_generator_objective(const GeneratorLossParts& parts, const LossWeights& w) {
  auto total = parts.adversarial + parts.classification + parts.info + parts.image;
  if (parts.cr.defined()) total = total + w.cr * parts.cr;
  return total;
}

torch::Tensor total_discriminator_objective(const DiscriminatorLossParts& parts) {
  return parts.adversarial + parts.classification;
}

}  // namespace dinfogan
