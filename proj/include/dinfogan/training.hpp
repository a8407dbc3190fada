#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "dinfogan/data.hpp"
#include "dinfogan/latent.hpp"
#include "dinfogan/losses.hpp"
#include "dinfogan/networks.hpp"

namespace dinfogan {

enum class OptimizerKind { adam };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);

struct TrainConfig {
  LossWeights weights;
  PriorConfig prior;
  ArchitectureConfig arch;  // latent dimensions follow `prior`
  double lr_g = 2e-4;
  double lr_d = 2e-4;
  double lr_cr = 2e-4;
  int64_t loops_g = 1;
  int64_t loops_d = 1;
  int64_t loops_cr = 1;
  int64_t batch_size = 128;
  int64_t epochs = 500;
  uint64_t seed = 0;
  int64_t checkpoint_every = 1000;  // steps; 0 writes only the final checkpoint
  int64_t max_steps = 0;            // 0 = run all epochs
  OptimizerKind optimizer = OptimizerKind::adam;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;

  // Default settings per dataset: cifar_mnist, celeba, dsprites_mnist,
  // large (the 128x128 architecture) and micro (CPU-scale synthetic data).
  static TrainConfig for_dataset(const std::string& dataset);

  // Every problem found, each naming its field.
  std::vector<std::string> problems() const;
  // Throws ConfigError listing all problems.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// One line of metrics.jsonl. `values` holds every loss component of the step
// (last loop iteration when a loop count is above one).
struct MetricsRecord {
  int64_t step = 0;
  int64_t epoch = 0;
  std::map<std::string, double> values;
  double wall_time = 0.0;  // seconds since the run (or resume) started
};

std::string to_json_line(const MetricsRecord& r);
MetricsRecord metrics_from_json_line(const std::string& line);
std::vector<MetricsRecord> read_metrics(const std::filesystem::path& file);

// Mutable training state: networks, optimizer moments, counters and the RNG
// that drives every latent draw and trunk noise sample.
class Trainer {
 public:
  explicit Trainer(TrainConfig cfg);

  // One alternating update on equally sized real batches (float NCHW in [-1, 1]).
  // Throws TrainingDiverged when a loss turns non-finite.
  MetricsRecord train_step(const torch::Tensor& batch_x, const torch::Tensor& batch_y);

  // Checkpoint directory: the bundle files plus optimizer, RNG and counter blobs.
  void save_checkpoint(const std::filesystem::path& dir);
  // Restores everything save_checkpoint wrote; the stored architecture must match.
  void load_checkpoint(const std::filesystem::path& dir);

  const TrainConfig& config() const { return cfg_; }
  ModelBundle& bundle() { return bundle_; }
  Rng& rng() { return rng_; }
  int64_t step() const { return step_; }
  int64_t epoch() const { return epoch_; }
  void set_epoch(int64_t e) { epoch_ = e; }
  // Directory that receives divergence.json when training diverges.
  void set_diagnostic_dir(std::filesystem::path dir) { diag_dir_ = std::move(dir); }

 private:
  void check_finite(const std::string& name, const torch::Tensor& loss, const std::map<std::string, double>& so_far);
  void record_grad_norms();

  TrainConfig cfg_;
  ModelBundle bundle_;
  Rng rng_;
  std::unique_ptr<torch::optim::Adam> opt_d_;
  std::unique_ptr<torch::optim::Adam> opt_g_;
  std::unique_ptr<torch::optim::Adam> opt_cr_;
  int64_t step_ = 0;
  int64_t epoch_ = 0;
  std::map<std::string, double> grad_norms_;
  std::optional<std::filesystem::path> diag_dir_;
};

// Index order of one epoch: each domain's indices reshuffled (and cycled when
// the domain is smaller) to cover steps_per_epoch * batch positions. A pure
// function of (seed, epoch).
struct EpochPlan {
  int64_t steps = 0;
  std::vector<int64_t> background;
  std::vector<int64_t> target;
};

int64_t steps_per_epoch(const CaDataset& ds, int64_t batch_size);
EpochPlan plan_epoch(const CaDataset& ds, int64_t batch_size, uint64_t seed, int64_t epoch);

struct TrainOptions {
  std::optional<std::filesystem::path> resume;  // checkpoint directory
  std::function<void(const MetricsRecord&)> on_step;
  // Extra record written into the manifest next to the config (e.g. data identity).
  nlohmann::json manifest_extra;
};

struct TrainResult {
  std::filesystem::path run_dir;
  std::filesystem::path final_checkpoint;
  int64_t steps = 0;
  std::optional<MetricsRecord> last;
};

// Run directory layout:
//   manifest.json             resolved TrainConfig (+ extras), written first
//   metrics.jsonl             one MetricsRecord per step
//   checkpoints/step-<k>/     periodic checkpoints
//   checkpoints/final/        checkpoint after the last step
//   divergence.json           only when a loss became non-finite
TrainResult train(const TrainConfig& cfg, const CaDataset& dataset, const std::filesystem::path& run_dir,
                  const TrainOptions& opts = {});

std::filesystem::path checkpoint_name(const std::filesystem::path& run_dir, int64_t step);

}  // namespace dinfogan
