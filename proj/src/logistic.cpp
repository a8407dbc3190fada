#include "dinfogan/logistic.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "dinfogan/errors.hpp"

namespace dinfogan {

void LogisticRegression::fit(const torch::Tensor& x_in, const std::vector<int64_t>& labels, int64_t classes) {
  if (x_in.dim() != 2 || x_in.size(0) != static_cast<int64_t>(labels.size()))
    throw ContractViolation("logistic regression needs x [n, d] with one label per row");
  if (classes < 2) throw UndefinedMetric("logistic regression needs at least two classes");
  for (auto l : labels)
    if (l < 0 || l >= classes) throw ContractViolation("label out of range");

  const auto x = x_in.to(torch::kFloat64);
  mean_ = x.mean(0);
  scale_ = x.std(0, /*unbiased=*/false);
  // Constant columns carry no signal; leave them unscaled.
  scale_ = torch::where(scale_ > 1e-12, scale_, torch::ones_like(scale_));
  const auto xs = (x - mean_) / scale_;
  const auto y = torch::tensor(labels, torch::kLong);
  const int64_t n = x.size(0), d = x.size(1);

  auto W = torch::zeros({d, classes}, torch::kFloat64).requires_grad_(true);
  auto b = torch::zeros({classes}, torch::kFloat64).requires_grad_(true);
  torch::optim::LBFGS solver({W, b}, torch::optim::LBFGSOptions(1.0)
                                         .max_iter(opts_.max_iter)
                                         .tolerance_grad(opts_.tolerance)
                                         .tolerance_change(opts_.tolerance * 1e-3)
                                         .history_size(20)
                                         .line_search_fn("strong_wolfe"));
  auto closure = [&]() -> torch::Tensor {
    solver.zero_grad();
    const auto logits = torch::matmul(xs, W) + b;
    auto loss = torch::nn::functional::cross_entropy(
                    logits, y, torch::nn::functional::CrossEntropyFuncOptions().reduction(torch::kSum)) +
                0.5 * opts_.l2 * W.pow(2).sum();
    // Scaling by 1/n keeps the solver's tolerances independent of sample count.
    loss = loss / static_cast<double>(n);
    loss.backward();
    return loss;
  };
  solver.step(closure);
  weights_ = W.detach();
  bias_ = b.detach();
}

torch::Tensor LogisticRegression::logits(const torch::Tensor& x) const {
  if (!weights_.defined()) throw ContractViolation("logistic regression used before fit");
  if (x.dim() != 2 || x.size(1) != weights_.size(0)) throw ContractViolation("feature width differs from fit");
  return torch::matmul((x.to(torch::kFloat64) - mean_) / scale_, weights_) + bias_;
}

torch::Tensor LogisticRegression::predict_proba(const torch::Tensor& x) const { return torch::softmax(logits(x), 1); }

std::vector<int64_t> LogisticRegression::predict(const torch::Tensor& x) const {
  const auto arg = logits(x).argmax(1).contiguous();
  return std::vector<int64_t>(arg.data_ptr<int64_t>(), arg.data_ptr<int64_t>() + arg.numel());
}

std::vector<int64_t> stratified_folds(const std::vector<int64_t>& labels, int64_t folds, uint64_t seed) {
  if (folds < 2) throw ConfigError("folds must be >= 2");
  std::map<int64_t, std::vector<int64_t>> by_class;
  for (size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(static_cast<int64_t>(i));
  std::mt19937_64 rng(seed);
  std::vector<int64_t> fold(labels.size(), 0);
  int64_t next = 0;
  for (auto& [label, members] : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    // Continue the round-robin across classes so fold sizes stay balanced.
    for (auto i : members) fold[static_cast<size_t>(i)] = next++ % folds;
  }
  return fold;
}

}  // namespace dinfogan
