#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace helpers {

// Small hand-rolled generator for property tests.
class Gen {
 public:
  explicit Gen(uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int64_t integer(int64_t lo, int64_t hi) { return std::uniform_int_distribution<int64_t>(lo, hi)(rng_); }
  uint64_t seed() { return rng_(); }

  // 1-D tensor of probabilities strictly inside (lo, hi).
  torch::Tensor probs(int64_t n, double lo = 0.02, double hi = 0.98, torch::Dtype dt = torch::kFloat64) {
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) x = uniform(lo, hi);
    return torch::tensor(v, torch::kFloat64).to(dt);
  }

  torch::Tensor reals(std::vector<int64_t> shape, double lo = -2.0, double hi = 2.0,
                      torch::Dtype dt = torch::kFloat64) {
    int64_t n = 1;
    for (auto s : shape) n *= s;
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) x = uniform(lo, hi);
    return torch::tensor(v, torch::kFloat64).reshape(shape).to(dt);
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

// Central finite-difference gradient of a scalar function of one tensor,
// evaluated element by element on a double copy.
inline torch::Tensor numeric_grad(const std::function<double(const torch::Tensor&)>& f, const torch::Tensor& x,
                                  double h = 1e-6) {
  auto base = x.detach().clone();
  auto g = torch::zeros_like(base);
  auto flat = base.view({-1});
  auto gflat = g.view({-1});
  for (int64_t i = 0; i < flat.numel(); ++i) {
    const double orig = flat[i].item<double>();
    flat[i] = orig + h;
    const double up = f(base);
    flat[i] = orig - h;
    const double down = f(base);
    flat[i] = orig;
    gflat[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double relative_error(const torch::Tensor& a, const torch::Tensor& b) {
  const double num = (a - b).to(torch::kFloat64).norm().item<double>();
  const double den = std::max(a.to(torch::kFloat64).norm().item<double>(), b.to(torch::kFloat64).norm().item<double>());
  return den < 1e-12 ? num : num / den;
}

}  // namespace helpers
