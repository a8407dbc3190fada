#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>

#include "dinfogan/networks.hpp"

namespace dinfogan {

// On-disk layout of one checkpoint directory:
//   meta.json           architecture, step, epoch, seed
//   generator.pt        one serialized module per network
//   discriminator.pt
//   cr_head.pt          only when arch.cr_enabled
// Training adds optimizer and RNG blobs next to these (see training.hpp).
struct CheckpointMeta {
  ArchitectureConfig arch;
  int64_t step = 0;
  int64_t epoch = 0;
  uint64_t seed = 0;
};

void save_bundle(const std::filesystem::path& dir, ModelBundle& bundle, const CheckpointMeta& meta);

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& dir);

// Rebuilds the networks from meta.json and loads their parameters. Throws
// ArchitectureMismatch when `expected` is given and differs from the stored
// architecture, or when a blob does not fit the stored architecture.
ModelBundle load_bundle(const std::filesystem::path& dir, const ArchitectureConfig* expected = nullptr);

// Runs `writer` on a sibling temporary directory, then renames it onto
// `final_dir` (replacing an older checkpoint of the same name).
void write_directory_atomically(const std::filesystem::path& final_dir,
                                const std::function<void(const std::filesystem::path&)>& writer);

}  // namespace dinfogan
