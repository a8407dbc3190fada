#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "dinfogan/data.hpp"
#include "dinfogan/latent.hpp"
#include "dinfogan/logistic.hpp"
#include "dinfogan/networks.hpp"

namespace dinfogan {

// Encoder estimates for every sample of a dataset (eval mode, no noise).
struct LatentTable {
  std::vector<std::string> ids;
  torch::Tensor z_hat;  // float64 [N, L]
  torch::Tensor s_hat;  // float64 [N, M]
  std::vector<Domain> domains;
  std::vector<int64_t> attributes;  // -1 when absent

  int64_t size() const { return static_cast<int64_t>(ids.size()); }

  // Tab-separated: id, domain, attribute, z_0..z_{L-1}, s_0..s_{M-1}, one header row.
  void write_tsv(const std::filesystem::path& path) const;
  static LatentTable read_tsv(const std::filesystem::path& path);
};

LatentTable encode_dataset(ModelBundle& bundle, const CaDataset& dataset, int64_t batch_size = 256);

enum class Feature { s_hat, z_hat };
std::string to_string(Feature f);

struct Accuracy {
  double mean = 0.0;
  double std = 0.0;  // population std over folds
  int64_t folds = 0;
  std::vector<double> per_fold;
};

// Stratified k-fold accuracy of a logistic-regression probe predicting the
// attribute from one feature block. Rows without an attribute are ignored.
// Throws UndefinedMetric with fewer than two classes or a class smaller than
// `folds`.
Accuracy separation_score(const LatentTable& table, Feature feature, int64_t folds = 5, uint64_t seed = 0,
                          const LogisticOptions& opts = {});
// Same protocol on a raw feature matrix.
Accuracy separation_score(const torch::Tensor& features, const std::vector<int64_t>& labels, int64_t folds,
                          uint64_t seed, const LogisticOptions& opts = {});

struct FvaeOptions {
  int64_t train_votes = 800;
  int64_t eval_votes = 200;
  int64_t batch = 64;
  uint64_t seed = 0;
  bool operator==(const FvaeOptions&) const = default;
};

struct FvaeResult {
  double score = 0.0;
  std::vector<int64_t> excluded_dims;  // zero global variance
  std::vector<std::string> warnings;
};

// Maps sample indices to representations [K, D].
using Encoder = std::function<torch::Tensor(std::span<const int64_t>)>;

// Majority-vote FactorVAE metric. `factors` is [N, F] (discrete factor values).
// Per vote a factor k is drawn uniformly, a value of k is taken from a random
// sample, and `batch` samples sharing that value are encoded; the vote is the
// dimension with the least normalized variance. Dimensions with zero global
// variance are excluded; a vote where every dimension is excluded maps to the
// most frequent training factor.
FvaeResult fvae_score(const torch::Tensor& factors, const Encoder& encoder, const FvaeOptions& opts = {});
// Uses Q_s of `bundle` on the factor-carrying samples of `dataset`.
FvaeResult fvae_score(ModelBundle& bundle, const CaDataset& dataset, const FvaeOptions& opts = {});

struct SwapResult {
  torch::Tensor x_swapped;  // G(z_x, s_y)
  torch::Tensor y_swapped;  // G(z_y, s_x)
  torch::Tensor x_rec;      // G(z_x, 0)
  torch::Tensor y_rec;      // G(z_y, s_y)
  LatentCode code_x;        // encoder estimates
  LatentCode code_y;
};

SwapResult swap(ModelBundle& bundle, const torch::Tensor& x_real, const torch::Tensor& y_real);
// Exchanges the salient parts of two codes.
std::pair<LatentCode, LatentCode> swap_codes(const LatentCode& a, const LatentCode& b);

struct Grid {
  torch::Tensor images;  // float [n, C, H, W]
  torch::Tensor canvas;  // uint8 [C, rows*H, cols*W]
};

std::vector<double> traversal_values(double lo, double hi, int64_t steps);
// One row: s is zero except coordinate `dim`, swept over [lo, hi]; z fixed ([L]).
Grid traversal_grid(ModelBundle& bundle, const torch::Tensor& z, int64_t dim, double lo = -1.5, double hi = 1.5,
                    int64_t steps = 6);
// Per row one shared z; column 0 uses s = 0, the rest fresh target-prior draws.
Grid generation_grid(ModelBundle& bundle, const PriorConfig& prior, int64_t rows, int64_t cols, uint64_t seed);

enum class GridKind { recon, swap, traverse, generate };
std::string to_string(GridKind g);
GridKind grid_from_string(const std::string& s);

struct EvalOptions {
  int64_t folds = 5;
  uint64_t seed = 0;
  LogisticOptions logistic;
  FvaeOptions fvae;
  std::vector<GridKind> grids;
  std::vector<int64_t> traverse_dims;  // empty = dimension 0
  int64_t traverse_steps = 6;
  double traverse_lo = -1.5;
  double traverse_hi = 1.5;
  int64_t grid_rows = 4;
  int64_t grid_cols = 8;
  int64_t swap_pairs = 8;
  int64_t batch_size = 256;
  bool operator==(const EvalOptions&) const = default;
};

struct EvaluationReport {
  std::string dataset;
  int64_t samples = 0;
  Accuracy acc_s;
  Accuracy acc_z;
  std::optional<double> fvae;
  std::vector<std::string> warnings;
  std::vector<std::filesystem::path> grid_paths;
  std::filesystem::path latent_table;

  nlohmann::json to_json() const;
};

// Encodes `dataset`, scores both feature blocks, computes fvae when the
// dataset carries factors, writes latents.tsv, the requested grids and
// report.json under `out_dir`.
EvaluationReport evaluate(ModelBundle& bundle, const PriorConfig& prior, const CaDataset& dataset,
                          const EvalOptions& opts, const std::filesystem::path& out_dir);

}  // namespace dinfogan
