#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "dinfogan/latent.hpp"
#include "dinfogan/sources.hpp"

namespace dinfogan {

struct CaSample {
  std::string id;
  torch::Tensor image;  // float [C, H, W] in [-1, 1]
  Domain domain = Domain::background;
  std::optional<int64_t> attribute;
  std::optional<std::vector<double>> factors;
};

struct Provenance {
  uint64_t seed = 0;
  std::map<std::string, std::string> source_checksums;  // file name -> sha256
};

// An image collection tagged with domains. Pixels are kept as uint8 and
// mapped to [-1, 1] on access.
struct CaDataset {
  std::string name;
  Split split = Split::train;
  torch::Tensor pixels;  // uint8 [N, C, H, W]
  std::vector<std::string> ids;
  std::vector<Domain> domains;
  std::vector<int64_t> attributes;  // -1 when a sample has none
  torch::Tensor factors;            // float64 [N, F], undefined when the dataset has no factors
  std::vector<std::string> factor_names;
  Provenance provenance;

  int64_t size() const { return static_cast<int64_t>(ids.size()); }
  int64_t channels() const { return pixels.size(1); }
  int64_t image_size() const { return pixels.size(2); }
  bool has_factors() const { return factors.defined(); }

  CaSample sample(int64_t i) const;
  // float [K, C, H, W] in [-1, 1]
  torch::Tensor images(std::span<const int64_t> indices) const;
  std::vector<int64_t> indices(Domain d) const;
  int64_t count(Domain d) const;

  // Throws ContractViolation when column lengths disagree or a background
  // sample carries an attribute.
  void validate() const;

  // sha256 over the index (ids, domains, attributes, factors) and pixel bytes.
  std::string checksum() const;
};

// Index-only slice; pixels are copied.
CaDataset subset(const CaDataset& ds, std::span<const int64_t> indices);

struct DataSources {
  std::filesystem::path mnist_dir;
  std::filesystem::path cifar_dir;
  std::filesystem::path dsprites_npz;
  std::filesystem::path celeba_root;
  std::map<std::string, std::string> checksums;  // expected sha256 by file name
  bool operator==(const DataSources&) const = default;
};

// 64x64x3. Train: 25,000 plain CIFAR-10 backgrounds + 25,000 CIFAR-10 images
// with an MNIST digit overlaid (attribute = digit). Test: 10,000 CIFAR-10 test
// images, 1,000 per overlaid digit class.
CaDataset build_cifar_mnist(const DataSources& src, uint64_t seed, Split split);

struct DspritesMnistOptions {
  int64_t train_per_domain = 25000;
  int64_t test_per_domain = 5000;
  bool operator==(const DspritesMnistOptions&) const = default;
};

// 64x64x1. Background: digits 1-4 on a 2x2 grid. Target: the same plus one
// dSprites sprite drawn opaquely on top; factors = (shape, scale, pos_x,
// pos_y, orientation) class indices, attribute = shape.
CaDataset build_dsprites_mnist(const DataSources& src, uint64_t seed, Split split,
                               const DspritesMnistOptions& opts = {});

struct CelebaCounts {
  int64_t train_background = 10000;
  int64_t train_per_accessory = 5000;
  int64_t test_per_accessory = 5000;
  bool operator==(const CelebaCounts&) const = default;
};

// 64x64x3 faces. Background: neither eyeglasses nor hat. Target: exactly one of
// them (attribute 0 = glasses, 1 = hat). Images are taken by ascending id;
// the test split continues where the training split stopped.
CaDataset load_celeba_accessories(const std::filesystem::path& root, Split split, const CelebaCounts& counts = {},
                                  const std::map<std::string, std::string>& checksums = {});

struct CaSplits {
  CaDataset train;
  CaDataset test;
};

// 32x32x1 synthetic set with n_train / n_test images per domain. Backgrounds
// are smooth dark noise; targets add a bright 8x8 square whose quadrant
// (attribute 0..3) is uniform.
CaSplits build_micro_ca(uint64_t seed, int64_t n_train, int64_t n_test);

// Pixel value above which a micro-dataset pixel counts as part of the square.
inline constexpr uint8_t kMicroBrightThreshold = 128;

// ---------------------------------------------------------------------------
// Named datasets and the on-disk cache
// ---------------------------------------------------------------------------

struct DatasetSpec {
  std::string name = "micro";  // micro | cifar_mnist | dsprites_mnist | celeba
  uint64_t seed = 0;
  int64_t image_size = 0;  // 0 keeps the builder's native size; otherwise images are resized
  DataSources sources;
  int64_t micro_train = 4096;
  int64_t micro_test = 1024;
  DspritesMnistOptions dsprites;
  CelebaCounts celeba;
  bool operator==(const DatasetSpec&) const = default;
};

const std::vector<std::string>& dataset_names();
// Native (channels, image side) of a named dataset.
std::pair<int64_t, int64_t> native_shape(const std::string& name);
// Bilinear resize of every image to side x side.
CaDataset resized(const CaDataset& ds, int64_t side);

CaDataset build_dataset(const DatasetSpec& spec, Split split);

// Cache layout: <dir>/index.json (metadata + one record per sample id) and
// <dir>/pixels.bin (raw uint8 NCHW blob).
void save_dataset(const std::filesystem::path& dir, const CaDataset& ds);
CaDataset load_dataset(const std::filesystem::path& dir);

// <root>/<name>-seed<seed>[-<size>px]/<split>
std::filesystem::path dataset_cache_dir(const std::filesystem::path& root, const DatasetSpec& spec, Split split);

// Loads from the cache when present (unless `rebuild`), otherwise builds and stores.
CaDataset load_or_build(const DatasetSpec& spec, Split split, const std::filesystem::path& cache_root,
                        bool rebuild = false);

}  // namespace dinfogan
