#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace fixtures {

// Synthetic stand-ins for the public source archives, written in their
// native on-disk formats so the real readers are exercised.

// MNIST idx files. Each digit is a class-specific stroke pattern plus jitter.
// Test class 5 is short by `short_five` images (the real test set has 892).
void write_mnist(const std::filesystem::path& dir, int64_t n_train, int64_t n_test, bool gzip, uint64_t seed,
                 int64_t short_five = 0);

// CIFAR-10 binary batches: 5 train files and test_batch.bin.
void write_cifar10(const std::filesystem::path& dir, int64_t n_train, int64_t n_test, uint64_t seed);

// .npy member for write_npz.
struct NpyMember {
  std::string name;   // e.g. "imgs.npy"
  std::string descr;  // e.g. "|u1"
  std::vector<int64_t> shape;
  std::vector<uint8_t> payload;
};

std::vector<uint8_t> npy_bytes(const NpyMember& m);
// Zip archive; members are deflated when `deflate`, stored otherwise.
void write_npz(const std::filesystem::path& path, const std::vector<NpyMember>& members, bool deflate);

// dSprites-style archive: `n` seeded combinations of (color, shape, scale,
// orientation, posX, posY) kept in product order. Sprites are filled
// squares, diamonds and discs.
void write_dsprites(const std::filesystem::path& path, int64_t n, bool deflate, uint64_t seed);

// CelebA root with list_attr_celeba.txt and img_align_celeba/ JPEGs (small
// images). Counts are per attribute pattern.
struct CelebaLayout {
  int64_t plain = 0;
  int64_t glasses = 0;
  int64_t hat = 0;
  int64_t both = 0;
  int64_t width = 48;
  int64_t height = 56;
};
void write_celeba(const std::filesystem::path& root, const CelebaLayout& layout, uint64_t seed);

// Fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& tag);

}  // namespace fixtures
