#include "dinfogan/checkpoint.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "dinfogan/config.hpp"
#include "dinfogan/errors.hpp"

namespace dinfogan {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

template <typename Holder>
void load_module(Holder& module, const fs::path& path) {
  if (!fs::exists(path)) throw ArchitectureMismatch("checkpoint blob missing: " + path.string());
  try {
    torch::load(module, path.string());
  } catch (const c10::Error& e) {
    throw ArchitectureMismatch("checkpoint blob " + path.string() +
                               " does not match the architecture: " + e.what_without_backtrace());
  }
}

}  // namespace

void save_bundle(const fs::path& dir, ModelBundle& bundle, const CheckpointMeta& meta) {
  fs::create_directories(dir);
  json j;
  j["format_version"] = kFormatVersion;
  j["arch"] = meta.arch;
  j["step"] = meta.step;
  j["epoch"] = meta.epoch;
  j["seed"] = meta.seed;
  {
    std::ofstream os(dir / "meta.json");
    os << j.dump(2) << '\n';
    if (!os) throw std::runtime_error("cannot write " + (dir / "meta.json").string());
  }
  torch::save(bundle.generator, (dir / "generator.pt").string());
  torch::save(bundle.discriminator, (dir / "discriminator.pt").string());
  if (!bundle.cr_head.is_empty()) torch::save(bundle.cr_head, (dir / "cr_head.pt").string());
}

CheckpointMeta read_checkpoint_meta(const fs::path& dir) {
  std::ifstream is(dir / "meta.json");
  if (!is) throw std::runtime_error("not a checkpoint directory (no meta.json): " + dir.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw std::runtime_error("corrupt checkpoint metadata " + (dir / "meta.json").string() + ": " + e.what());
  }
  if (j.value("format_version", 0) != kFormatVersion)
    throw ArchitectureMismatch("unsupported checkpoint format in " + dir.string());
  CheckpointMeta meta;
  meta.arch = j.at("arch").get<ArchitectureConfig>();
  meta.step = j.at("step").get<int64_t>();
  meta.epoch = j.at("epoch").get<int64_t>();
  meta.seed = j.at("seed").get<uint64_t>();
  return meta;
}

ModelBundle load_bundle(const fs::path& dir, const ArchitectureConfig* expected) {
  const CheckpointMeta meta = read_checkpoint_meta(dir);
  if (expected != nullptr && !(*expected == meta.arch))
    throw ArchitectureMismatch("checkpoint architecture " + json(meta.arch).dump() +
                               " does not match the requested " + json(*expected).dump());
  ModelBundle bundle = build_models(meta.arch, meta.seed);
  load_module(bundle.generator, dir / "generator.pt");
  load_module(bundle.discriminator, dir / "discriminator.pt");
  if (!bundle.cr_head.is_empty()) load_module(bundle.cr_head, dir / "cr_head.pt");
  return bundle;
}

void write_directory_atomically(const fs::path& final_dir, const std::function<void(const fs::path&)>& writer) {
  fs::path tmp = final_dir;
  tmp += ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  writer(tmp);
  fs::path old = final_dir;
  old += ".old";
  fs::remove_all(old);
  if (fs::exists(final_dir)) fs::rename(final_dir, old);
  fs::rename(tmp, final_dir);
  fs::remove_all(old);
}

}  // namespace dinfogan
