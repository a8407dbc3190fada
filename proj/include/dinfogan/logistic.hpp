#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

namespace dinfogan {

struct LogisticOptions {
  double l2 = 1.0;        // penalty 0.5 * l2 * ||W||^2 on the weights (intercepts unpenalized)
  int64_t max_iter = 200;  // L-BFGS iteration budget
  double tolerance = 1e-9;
  bool operator==(const LogisticOptions&) const = default;
};

// Multinomial logistic regression on standardized features, fitted with L-BFGS
// in double precision. Deterministic: the initial point is zero.
class LogisticRegression {
 public:
  explicit LogisticRegression(LogisticOptions opts = {}) : opts_(opts) {}

  // x: [n, d] (any floating dtype), labels in [0, classes).
  void fit(const torch::Tensor& x, const std::vector<int64_t>& labels, int64_t classes);
  std::vector<int64_t> predict(const torch::Tensor& x) const;
  // Class probabilities [n, classes].
  torch::Tensor predict_proba(const torch::Tensor& x) const;

  const torch::Tensor& weights() const { return weights_; }  // [d, classes], standardized space
  const torch::Tensor& bias() const { return bias_; }        // [classes]

 private:
  torch::Tensor logits(const torch::Tensor& x) const;

  LogisticOptions opts_;
  torch::Tensor mean_, scale_, weights_, bias_;
};

// Stratified fold assignment: samples of each class are shuffled with `seed`
// and dealt round-robin into `folds` folds. Returns the fold of every sample.
std::vector<int64_t> stratified_folds(const std::vector<int64_t>& labels, int64_t folds, uint64_t seed);

}  // namespace dinfogan
