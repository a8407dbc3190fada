// Command-line entry point: dataset builds, training, evaluation and grids.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "dinfogan/checkpoint.hpp"
#include "dinfogan/config.hpp"
#include "dinfogan/data.hpp"
#include "dinfogan/errors.hpp"
#include "dinfogan/evaluation.hpp"
#include "dinfogan/image_io.hpp"
#include "dinfogan/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dinfogan;

namespace {

constexpr int kOk = 0;
constexpr int kRuntimeFailure = 1;
constexpr int kUsageError = 2;

struct ConfigFlags {
  std::string config;
  std::vector<std::string> overrides;
  bool rebuild = false;

  void add_to(CLI::App* cmd) {
    cmd->add_option("-c,--config", config, "Run configuration (JSON)")->check(CLI::ExistingFile);
    cmd->add_option("--set", overrides, "Override one key, e.g. --set train.lr_g=1e-4 (repeatable)");
    cmd->add_flag("--rebuild", rebuild, "Ignore and replace cached datasets");
  }
};

json read_json_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read " + path.string());
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + " is not valid JSON: " + e.what());
  }
}

// Config for commands that start from a checkpoint: the checkpoint's training
// section is the default unless the config file provides one.
RunConfig resolve_with_checkpoint(const ConfigFlags& flags, const fs::path& ckpt,
                                  std::vector<std::string> extra_overrides = {}) {
  json user = flags.config.empty() ? json::object() : read_json_file(flags.config);
  if (!user.is_object()) throw ConfigError("a run configuration must be a JSON object");
  const fs::path stored = ckpt / "train_config.json";
  if (!user.contains("train") && fs::exists(stored)) user["train"] = read_json_file(stored);
  auto overrides = flags.overrides;
  overrides.insert(overrides.end(), extra_overrides.begin(), extra_overrides.end());
  return resolve_run_config(user, overrides);
}

ModelBundle load_checkpoint_for(const RunConfig& cfg, const fs::path& ckpt) {
  if (!fs::exists(ckpt / "meta.json")) throw ConfigError("not a checkpoint directory: " + ckpt.string());
  return load_bundle(ckpt, &cfg.train.arch);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

CaDataset dataset_for(const RunConfig& cfg, Split split, bool rebuild) {
  return load_or_build(cfg.dataset, split, resolve_cache_root(cfg), rebuild);
}

std::vector<int64_t> first_n(const std::vector<int64_t>& v, int64_t n) {
  return {v.begin(), v.begin() + std::min<int64_t>(n, static_cast<int64_t>(v.size()))};
}

// ---------------------------------------------------------------------------

int cmd_build_data(const std::string& name, std::optional<uint64_t> seed, const std::string& out,
                   const ConfigFlags& flags) {
  json user = flags.config.empty() ? json::object() : read_json_file(flags.config);
  auto overrides = flags.overrides;
  overrides.push_back("dataset.name=\"" + name + "\"");
  if (seed) overrides.push_back("dataset.seed=" + std::to_string(*seed));
  if (!out.empty()) overrides.push_back("cache_dir=" + json(out).dump());
  const RunConfig cfg = resolve_run_config(user, overrides);
  const fs::path root = resolve_cache_root(cfg);
  const auto train = load_or_build(cfg.dataset, Split::train, root, flags.rebuild);
  const auto test = load_or_build(cfg.dataset, Split::test, root, flags.rebuild);
  std::cout << "dataset=" << cfg.dataset.name << " seed=" << cfg.dataset.seed << '\n';
  std::cout << "train=" << train.size() << " test=" << test.size() << '\n';
  for (const auto* ds : {&train, &test}) {
    std::cout << to_string(ds->split) << ": background=" << ds->count(Domain::background)
              << " target=" << ds->count(Domain::target) << " checksum=" << ds->checksum() << '\n';
    for (const auto& [file, digest] : ds->provenance.source_checksums)
      std::cout << "  source " << file << " sha256=" << digest << '\n';
  }
  std::cout << "cache=" << dataset_cache_dir(root, cfg.dataset, Split::train).parent_path().string() << '\n';
  return kOk;
}

int cmd_train(const ConfigFlags& flags, const std::string& resume, bool quiet) {
  json user = flags.config.empty() ? json::object() : read_json_file(flags.config);
  const RunConfig cfg = resolve_run_config(user, flags.overrides);
  const auto data = dataset_for(cfg, Split::train, flags.rebuild);
  const fs::path run_dir = cfg.output_dir;
  fs::create_directories(run_dir);
  {
    std::ofstream os(run_dir / "run_config.json");
    os << json(cfg).dump(2) << '\n';
  }
  TrainOptions opts;
  if (!resume.empty()) {
    if (!fs::exists(fs::path(resume) / "meta.json")) throw ConfigError("not a checkpoint directory: " + resume);
    opts.resume = resume;
  }
  opts.manifest_extra = json{{"run_config", cfg}};
  if (!quiet) {
    opts.on_step = [](const MetricsRecord& r) {
      if (r.step % 50 != 0 && r.step != 1) return;
      std::cerr << "step " << r.step << " epoch " << r.epoch;
      for (const auto& [k, v] : r.values) std::cerr << ' ' << k << '=' << fmt(v);
      std::cerr << '\n';
    };
  }
  const TrainResult result = train(cfg.train, data, run_dir, opts);
  std::cout << "steps=" << result.steps << '\n';
  if (result.last)
    for (const auto& [k, v] : result.last->values) std::cout << k << '=' << fmt(v) << '\n';
  std::cout << "checkpoint=" << result.final_checkpoint.string() << '\n';
  return kOk;
}

int cmd_eval(const ConfigFlags& flags, const std::string& ckpt, const std::string& split_name,
             const std::string& grids, const std::vector<int64_t>& dims, const std::string& out) {
  std::vector<std::string> extra;
  if (!grids.empty()) {
    json list = json::array();
    std::stringstream ss(grids);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) list.push_back(item);
    extra.push_back("eval.grids=" + list.dump());
  }
  if (!dims.empty()) extra.push_back("eval.traverse_dims=" + json(dims).dump());
  const RunConfig cfg = resolve_with_checkpoint(flags, ckpt, extra);
  ModelBundle bundle = load_checkpoint_for(cfg, ckpt);
  const auto data = dataset_for(cfg, split_from_string(split_name), flags.rebuild);
  const fs::path out_dir = out.empty() ? fs::path(cfg.output_dir) / "eval" : fs::path(out);
  const auto report = evaluate(bundle, cfg.train.prior, data, cfg.eval, out_dir);
  std::cout << "acc_s=" << fmt(report.acc_s.mean) << " +- " << fmt(report.acc_s.std) << '\n';
  std::cout << "acc_z=" << fmt(report.acc_z.mean) << " +- " << fmt(report.acc_z.std) << '\n';
  std::cout << "fvae=" << (report.fvae ? fmt(*report.fvae) : std::string("null")) << '\n';
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  for (const auto& p : report.grid_paths) std::cout << "grid=" << p.string() << '\n';
  std::cout << "report=" << (out_dir / "report.json").string() << '\n';
  return kOk;
}

int cmd_generate(const ConfigFlags& flags, const std::string& ckpt, const std::string& out, int64_t rows,
                 int64_t cols, uint64_t seed) {
  const RunConfig cfg = resolve_with_checkpoint(flags, ckpt);
  ModelBundle bundle = load_checkpoint_for(cfg, ckpt);
  const auto grid = generation_grid(bundle, cfg.train.prior, rows, cols, seed);
  fs::create_directories(fs::absolute(out).parent_path());
  write_png(out, grid.canvas);
  std::cout << "grid=" << out << '\n';
  return kOk;
}

int cmd_swap(const ConfigFlags& flags, const std::string& ckpt, const std::string& out, int64_t pairs,
             const std::string& split_name) {
  const RunConfig cfg = resolve_with_checkpoint(flags, ckpt);
  ModelBundle bundle = load_checkpoint_for(cfg, ckpt);
  const auto data = dataset_for(cfg, split_from_string(split_name), flags.rebuild);
  const auto bx = first_n(data.indices(Domain::background), pairs);
  const auto ty = first_n(data.indices(Domain::target), pairs);
  const int64_t n = std::min<int64_t>(static_cast<int64_t>(bx.size()), static_cast<int64_t>(ty.size()));
  if (n == 0) throw std::runtime_error("swap needs samples from both domains");
  const auto x = data.images(first_n(bx, n)), y = data.images(first_n(ty, n));
  const auto r = swap(bundle, x, y);
  fs::create_directories(fs::absolute(out).parent_path());
  write_png(out, tile_grid(torch::cat({x, y, r.x_swapped, r.y_swapped}), 4, n));
  std::cout << "grid=" << out << '\n';
  return kOk;
}

int cmd_traverse(const ConfigFlags& flags, const std::string& ckpt, const std::string& out_dir,
                 std::vector<int64_t> dims, int64_t steps, double lo, double hi, int64_t index,
                 const std::string& split_name) {
  const RunConfig cfg = resolve_with_checkpoint(flags, ckpt);
  ModelBundle bundle = load_checkpoint_for(cfg, ckpt);
  const auto data = dataset_for(cfg, split_from_string(split_name), flags.rebuild);
  if (index < 0 || index >= data.size()) throw std::out_of_range("--index outside the dataset");
  torch::Tensor z;
  {
    torch::NoGradGuard no_grad;
    z = discriminate(bundle, data.images(std::vector<int64_t>{index}), RunMode::eval, nullptr).q_z;
  }
  if (dims.empty()) dims.push_back(0);
  fs::create_directories(out_dir);
  for (auto d : dims) {
    const auto g = traversal_grid(bundle, z, d, lo, hi, steps);
    const auto path = fs::path(out_dir) / ("traverse_dim" + std::to_string(d) + ".png");
    write_png(path, g.canvas);
    std::cout << "grid=" << path.string() << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrastive-analysis GAN: dataset builds, training, evaluation and image grids"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  // build-data
  auto* build = app.add_subcommand("build-data", "Build (or load) a dataset's train and test splits into the cache");
  std::string build_name;
  std::optional<uint64_t> build_seed;
  std::string build_out;
  ConfigFlags build_flags;
  build->add_option("dataset", build_name, "Dataset name")->required()->check(CLI::IsMember(dataset_names()));
  build->add_option("--seed", build_seed, "Builder seed (default: dataset.seed of the config)");
  build->add_option("--out", build_out, "Cache root (default: $DINFOGAN_CACHE or .dinfogan-cache)");
  build_flags.add_to(build);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model; writes a run directory");
  ConfigFlags train_flags;
  std::string resume;
  bool quiet = false;
  train_flags.add_to(train_cmd);
  train_cmd->add_option("--resume", resume, "Checkpoint directory to resume from");
  train_cmd->add_flag("-q,--quiet", quiet, "No per-step progress on stderr");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint and emit grids");
  ConfigFlags eval_flags;
  std::string eval_ckpt, eval_split = "test", eval_grids, eval_out;
  std::vector<int64_t> eval_dims;
  eval_flags.add_to(eval_cmd);
  eval_cmd->add_option("--ckpt", eval_ckpt, "Checkpoint directory")->required();
  eval_cmd->add_option("--split", eval_split, "Dataset split")->check(CLI::IsMember({"train", "test"}));
  eval_cmd->add_option("--grids", eval_grids, "Comma list of recon,swap,traverse,generate");
  eval_cmd->add_option("--dim", eval_dims, "Salient dimension to traverse (repeatable)");
  eval_cmd->add_option("--out", eval_out, "Output directory (default: <output_dir>/eval)");

  // generate
  auto* gen_cmd = app.add_subcommand("generate", "Write a generation grid (column 0 background, rest target)");
  ConfigFlags gen_flags;
  std::string gen_ckpt, gen_out = "generate.png";
  int64_t gen_rows = 4, gen_cols = 8;
  uint64_t gen_seed = 0;
  gen_flags.add_to(gen_cmd);
  gen_cmd->add_option("--ckpt", gen_ckpt, "Checkpoint directory")->required();
  gen_cmd->add_option("--out", gen_out, "PNG path");
  gen_cmd->add_option("--rows", gen_rows, "Rows (one shared z each)")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--cols", gen_cols, "Columns")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--seed", gen_seed, "Latent seed");

  // swap
  auto* swap_cmd = app.add_subcommand("swap", "Write a salient-code swap grid for real image pairs");
  ConfigFlags swap_flags;
  std::string swap_ckpt, swap_out = "swap.png", swap_split = "test";
  int64_t swap_pairs = 8;
  swap_flags.add_to(swap_cmd);
  swap_cmd->add_option("--ckpt", swap_ckpt, "Checkpoint directory")->required();
  swap_cmd->add_option("--out", swap_out, "PNG path");
  swap_cmd->add_option("--pairs", swap_pairs, "Number of background/target pairs")->check(CLI::PositiveNumber);
  swap_cmd->add_option("--split", swap_split, "Dataset split")->check(CLI::IsMember({"train", "test"}));

  // traverse
  auto* trav_cmd = app.add_subcommand("traverse", "Write salient-dimension traversal rows");
  ConfigFlags trav_flags;
  std::string trav_ckpt, trav_out = "traversals", trav_split = "test";
  std::vector<int64_t> trav_dims;
  int64_t trav_steps = 6, trav_index = 0;
  double trav_lo = -1.5, trav_hi = 1.5;
  trav_flags.add_to(trav_cmd);
  trav_cmd->add_option("--ckpt", trav_ckpt, "Checkpoint directory")->required();
  trav_cmd->add_option("--out-dir", trav_out, "Output directory");
  trav_cmd->add_option("--dim", trav_dims, "Salient dimension (repeatable; default 0)");
  trav_cmd->add_option("--steps", trav_steps, "Images per row")->check(CLI::PositiveNumber);
  trav_cmd->add_option("--lo", trav_lo, "Sweep start");
  trav_cmd->add_option("--hi", trav_hi, "Sweep end");
  trav_cmd->add_option("--index", trav_index, "Dataset sample whose z is held fixed");
  trav_cmd->add_option("--split", trav_split, "Dataset split")->check(CLI::IsMember({"train", "test"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsageError;
  }

  try {
    if (*build) return cmd_build_data(build_name, build_seed, build_out, build_flags);
    if (*train_cmd) return cmd_train(train_flags, resume, quiet);
    if (*eval_cmd) return cmd_eval(eval_flags, eval_ckpt, eval_split, eval_grids, eval_dims, eval_out);
    if (*gen_cmd) return cmd_generate(gen_flags, gen_ckpt, gen_out, gen_rows, gen_cols, gen_seed);
    if (*swap_cmd) return cmd_swap(swap_flags, swap_ckpt, swap_out, swap_pairs, swap_split);
    if (*trav_cmd)
      return cmd_traverse(trav_flags, trav_ckpt, trav_out, trav_dims, trav_steps, trav_lo, trav_hi, trav_index,
                          trav_split);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const ArchitectureMismatch& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return kUsageError;
}
