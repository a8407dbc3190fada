#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace dinfogan {

enum class Split { train, test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct LabeledImages {
  torch::Tensor images;  // uint8 [N, C, H, W]
  std::vector<int64_t> labels;
};

// MNIST idx files, raw or gzip-compressed. `dir` holds the standard file
// names (train-images-idx3-ubyte[.gz], ..., t10k-labels-idx1-ubyte[.gz]).
LabeledImages read_mnist(const std::filesystem::path& images_file, const std::filesystem::path& labels_file);
LabeledImages read_mnist_split(const std::filesystem::path& dir, Split split);
std::vector<std::filesystem::path> mnist_files(const std::filesystem::path& dir, Split split);

// CIFAR-10 binary batches (data_batch_1..5.bin / test_batch.bin).
LabeledImages read_cifar10(const std::filesystem::path& dir, Split split);
std::vector<std::filesystem::path> cifar10_files(const std::filesystem::path& dir, Split split);

// ---------------------------------------------------------------------------
// .npy / .npz
// ---------------------------------------------------------------------------

struct NpyHeader {
  std::string descr;  // e.g. "|u1", "<i8", "<f8"
  bool fortran_order = false;
  std::vector<int64_t> shape;

  int64_t count() const;
  size_t item_size() const;
};

NpyHeader parse_npy_header(std::string_view dict);

// Zip container holding .npy members (stored or deflated, zip64 aware).
class NpzFile {
 public:
  explicit NpzFile(std::filesystem::path path);

  std::vector<std::string> members() const;
  bool contains(const std::string& member) const;

  // Decompresses `member` sequentially; `on_data` receives consecutive chunks
  // of the array payload with their byte offset, after `on_header`.
  void stream(const std::string& member, const std::function<void(const NpyHeader&)>& on_header,
              const std::function<void(int64_t offset, const uint8_t* data, size_t size)>& on_data) const;

  // Whole member as a tensor (little-endian numeric dtypes only).
  torch::Tensor read(const std::string& member) const;

 private:
  struct Entry {
    uint16_t method = 0;
    uint64_t compressed_size = 0;
    uint64_t uncompressed_size = 0;
    uint64_t local_header_offset = 0;
  };
  std::filesystem::path path_;
  std::map<std::string, Entry> entries_;
};

// dSprites archive: `latents_classes` [N, 6] int64 (color, shape, scale,
// orientation, posX, posY) and binary `imgs` [N, 64, 64].
torch::Tensor read_dsprites_latent_classes(const std::filesystem::path& npz);
// Images at strictly increasing `indices`, as uint8 [K, 1, 64, 64] with values {0, 255}.
torch::Tensor read_dsprites_images(const std::filesystem::path& npz, std::span<const int64_t> indices);

// ---------------------------------------------------------------------------
// CelebA
// ---------------------------------------------------------------------------

struct CelebaAttributes {
  std::vector<std::string> names;
  std::vector<std::string> files;        // e.g. "000001.jpg"
  std::vector<std::vector<int8_t>> rows;  // +1 / -1 per attribute

  int column(const std::string& name) const;
};

CelebaAttributes read_celeba_attributes(const std::filesystem::path& attr_file);

// ---------------------------------------------------------------------------
// Checksums
// ---------------------------------------------------------------------------

std::string sha256_hex(std::span<const uint8_t> bytes);
std::string sha256_file(const std::filesystem::path& path);

// Hashes every file; when `expected` names a file, a mismatch throws
// IngestionError listing every file with expected/actual digests.
std::map<std::string, std::string> verify_sources(const std::vector<std::filesystem::path>& files,
                                                  const std::map<std::string, std::string>& expected);

}  // namespace dinfogan
