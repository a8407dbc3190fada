#include "dinfogan/config.hpp"

#include <cstdlib>
#include <fstream>

#include "dinfogan/errors.hpp"

namespace dinfogan {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Component forms
// ---------------------------------------------------------------------------

void to_json(json& j, const ArchitectureConfig& c) {
  j = json{{"image_size", c.image_size},
           {"channels", c.channels},
           {"common_dim", c.common_dim},
           {"salient_dim", c.salient_dim},
           {"noise_std", c.noise_std},
           {"lrelu_slope", c.lrelu_slope},
           {"use_spectral_norm", c.use_spectral_norm},
           {"use_self_attention", c.use_self_attention},
           {"cr_enabled", c.cr_enabled},
           {"base_width", c.base_width}};
}

void from_json(const json& j, ArchitectureConfig& c) {
  j.at("image_size").get_to(c.image_size);
  j.at("channels").get_to(c.channels);
  j.at("common_dim").get_to(c.common_dim);
  j.at("salient_dim").get_to(c.salient_dim);
  j.at("noise_std").get_to(c.noise_std);
  j.at("lrelu_slope").get_to(c.lrelu_slope);
  j.at("use_spectral_norm").get_to(c.use_spectral_norm);
  j.at("use_self_attention").get_to(c.use_self_attention);
  j.at("cr_enabled").get_to(c.cr_enabled);
  j.at("base_width").get_to(c.base_width);
}

void to_json(json& j, const PriorConfig& c) {
  j = json{{"common_dim", c.common_dim},
           {"salient_dim", c.salient_dim},
           {"common_prior", to_string(c.common_prior)},
           {"salient_target_prior", to_string(c.salient_target_prior)}};
}

void from_json(const json& j, PriorConfig& c) {
  j.at("common_dim").get_to(c.common_dim);
  j.at("salient_dim").get_to(c.salient_dim);
  c.common_prior = common_prior_from_string(j.at("common_prior").get<std::string>());
  c.salient_target_prior = salient_prior_from_string(j.at("salient_target_prior").get<std::string>());
}

void to_json(json& j, const LossWeights& w) {
  j = json{{"background", w.background}, {"target", w.target}, {"adversarial", w.adversarial},
           {"classification", w.classification}, {"image", w.image}, {"info_z", w.info_z},
           {"info_s", w.info_s}, {"info_real", w.info_real}, {"cr", w.cr}};
}

void from_json(const json& j, LossWeights& w) {
  j.at("background").get_to(w.background);
  j.at("target").get_to(w.target);
  j.at("adversarial").get_to(w.adversarial);
  j.at("classification").get_to(w.classification);
  j.at("image").get_to(w.image);
  j.at("info_z").get_to(w.info_z);
  j.at("info_s").get_to(w.info_s);
  j.at("info_real").get_to(w.info_real);
  j.at("cr").get_to(w.cr);
}

void to_json(json& j, const TrainConfig& c) {
  json arch = c.arch;
  arch.erase("common_dim");
  arch.erase("salient_dim");
  j = json{{"weights", c.weights},
           {"prior", c.prior},
           {"arch", arch},
           {"lr_g", c.lr_g},
           {"lr_d", c.lr_d},
           {"lr_cr", c.lr_cr},
           {"loops_g", c.loops_g},
           {"loops_d", c.loops_d},
           {"loops_cr", c.loops_cr},
           {"batch_size", c.batch_size},
           {"epochs", c.epochs},
           {"seed", c.seed},
           {"checkpoint_every", c.checkpoint_every},
           {"max_steps", c.max_steps},
           {"optimizer", to_string(c.optimizer)},
           {"adam_beta1", c.adam_beta1},
           {"adam_beta2", c.adam_beta2}};
}

void from_json(const json& j, TrainConfig& c) {
  j.at("weights").get_to(c.weights);
  j.at("prior").get_to(c.prior);
  json arch = j.at("arch");
  arch["common_dim"] = c.prior.common_dim;
  arch["salient_dim"] = c.prior.salient_dim;
  arch.get_to(c.arch);
  j.at("lr_g").get_to(c.lr_g);
  j.at("lr_d").get_to(c.lr_d);
  j.at("lr_cr").get_to(c.lr_cr);
  j.at("loops_g").get_to(c.loops_g);
  j.at("loops_d").get_to(c.loops_d);
  j.at("loops_cr").get_to(c.loops_cr);
  j.at("batch_size").get_to(c.batch_size);
  j.at("epochs").get_to(c.epochs);
  j.at("seed").get_to(c.seed);
  j.at("checkpoint_every").get_to(c.checkpoint_every);
  j.at("max_steps").get_to(c.max_steps);
  c.optimizer = optimizer_from_string(j.at("optimizer").get<std::string>());
  j.at("adam_beta1").get_to(c.adam_beta1);
  j.at("adam_beta2").get_to(c.adam_beta2);
}

void to_json(json& j, const DatasetSpec& s) {
  j = json{{"name", s.name},
           {"seed", s.seed},
           {"image_size", s.image_size},
           {"sources",
            {{"mnist_dir", s.sources.mnist_dir.string()},
             {"cifar_dir", s.sources.cifar_dir.string()},
             {"dsprites_npz", s.sources.dsprites_npz.string()},
             {"celeba_root", s.sources.celeba_root.string()},
             {"checksums", s.sources.checksums}}},
           {"micro", {{"n_train", s.micro_train}, {"n_test", s.micro_test}}},
           {"dsprites", {{"train_per_domain", s.dsprites.train_per_domain}, {"test_per_domain", s.dsprites.test_per_domain}}},
           {"celeba",
            {{"train_background", s.celeba.train_background},
             {"train_per_accessory", s.celeba.train_per_accessory},
             {"test_per_accessory", s.celeba.test_per_accessory}}}};
}

void from_json(const json& j, DatasetSpec& s) {
  j.at("name").get_to(s.name);
  j.at("seed").get_to(s.seed);
  j.at("image_size").get_to(s.image_size);
  const auto& src = j.at("sources");
  s.sources.mnist_dir = src.at("mnist_dir").get<std::string>();
  s.sources.cifar_dir = src.at("cifar_dir").get<std::string>();
  s.sources.dsprites_npz = src.at("dsprites_npz").get<std::string>();
  s.sources.celeba_root = src.at("celeba_root").get<std::string>();
  s.sources.checksums = src.at("checksums").get<std::map<std::string, std::string>>();
  j.at("micro").at("n_train").get_to(s.micro_train);
  j.at("micro").at("n_test").get_to(s.micro_test);
  j.at("dsprites").at("train_per_domain").get_to(s.dsprites.train_per_domain);
  j.at("dsprites").at("test_per_domain").get_to(s.dsprites.test_per_domain);
  j.at("celeba").at("train_background").get_to(s.celeba.train_background);
  j.at("celeba").at("train_per_accessory").get_to(s.celeba.train_per_accessory);
  j.at("celeba").at("test_per_accessory").get_to(s.celeba.test_per_accessory);
}

void to_json(json& j, const EvalOptions& o) {
  std::vector<std::string> grids;
  for (auto g : o.grids) grids.push_back(to_string(g));
  j = json{{"folds", o.folds},
           {"seed", o.seed},
           {"logistic", {{"l2", o.logistic.l2}, {"max_iter", o.logistic.max_iter}, {"tolerance", o.logistic.tolerance}}},
           {"fvae",
            {{"train_votes", o.fvae.train_votes},
             {"eval_votes", o.fvae.eval_votes},
             {"batch", o.fvae.batch},
             {"seed", o.fvae.seed}}},
           {"grids", grids},
           {"traverse_dims", o.traverse_dims},
           {"traverse_steps", o.traverse_steps},
           {"traverse_lo", o.traverse_lo},
           {"traverse_hi", o.traverse_hi},
           {"grid_rows", o.grid_rows},
           {"grid_cols", o.grid_cols},
           {"swap_pairs", o.swap_pairs},
           {"batch_size", o.batch_size}};
}

void from_json(const json& j, EvalOptions& o) {
  j.at("folds").get_to(o.folds);
  j.at("seed").get_to(o.seed);
  j.at("logistic").at("l2").get_to(o.logistic.l2);
  j.at("logistic").at("max_iter").get_to(o.logistic.max_iter);
  j.at("logistic").at("tolerance").get_to(o.logistic.tolerance);
  j.at("fvae").at("train_votes").get_to(o.fvae.train_votes);
  j.at("fvae").at("eval_votes").get_to(o.fvae.eval_votes);
  j.at("fvae").at("batch").get_to(o.fvae.batch);
  j.at("fvae").at("seed").get_to(o.fvae.seed);
  o.grids.clear();
  for (const auto& g : j.at("grids")) o.grids.push_back(grid_from_string(g.get<std::string>()));
  j.at("traverse_dims").get_to(o.traverse_dims);
  j.at("traverse_steps").get_to(o.traverse_steps);
  j.at("traverse_lo").get_to(o.traverse_lo);
  j.at("traverse_hi").get_to(o.traverse_hi);
  j.at("grid_rows").get_to(o.grid_rows);
  j.at("grid_cols").get_to(o.grid_cols);
  j.at("swap_pairs").get_to(o.swap_pairs);
  j.at("batch_size").get_to(o.batch_size);
}

void to_json(json& j, const RunConfig& c) {
  j = json{{"dataset", c.dataset},
           {"train", c.train},
           {"eval", c.eval},
           {"output_dir", c.output_dir},
           {"cache_dir", c.cache_dir}};
}

void from_json(const json& j, RunConfig& c) {
  j.at("dataset").get_to(c.dataset);
  j.at("train").get_to(c.train);
  j.at("eval").get_to(c.eval);
  j.at("output_dir").get_to(c.output_dir);
  j.at("cache_dir").get_to(c.cache_dir);
}

// ---------------------------------------------------------------------------
// RunConfig
// ---------------------------------------------------------------------------

RunConfig RunConfig::for_dataset(const std::string& dataset) {
  RunConfig c;
  c.dataset.name = dataset;
  c.train = TrainConfig::for_dataset(dataset);
  c.output_dir = "runs/" + dataset;
  return c;
}

std::vector<std::string> RunConfig::problems() const {
  std::vector<std::string> out = train.problems();
  auto check = [&](bool ok, const std::string& msg) {
    if (!ok) out.push_back(msg);
  };
  const auto& names = dataset_names();
  const bool known = std::find(names.begin(), names.end(), dataset.name) != names.end();
  check(known, "dataset.name '" + dataset.name + "' is not one of micro, cifar_mnist, dsprites_mnist, celeba");
  check(dataset.image_size == 0 || dataset.image_size == 32 || dataset.image_size == 64 || dataset.image_size == 128,
        "dataset.image_size must be 0 (native), 32, 64 or 128");
  if (known) {
    const auto [channels, side] = native_shape(dataset.name);
    const int64_t size = dataset.image_size > 0 ? dataset.image_size : side;
    check(channels == train.arch.channels, "train.arch.channels must be " + std::to_string(channels) + " for " +
                                               dataset.name);
    check(size == train.arch.image_size, "train.arch.image_size must equal the dataset image size (" +
                                             std::to_string(size) + "); set dataset.image_size to resize");
  }
  check(dataset.micro_train > 0 && dataset.micro_test > 0, "dataset.micro.n_train and n_test must be positive");
  check(dataset.dsprites.train_per_domain > 0 && dataset.dsprites.test_per_domain > 0,
        "dataset.dsprites counts must be positive");
  check(dataset.celeba.train_background > 0 && dataset.celeba.train_per_accessory > 0 &&
            dataset.celeba.test_per_accessory > 0,
        "dataset.celeba counts must be positive");
  check(eval.folds >= 2, "eval.folds must be >= 2");
  check(eval.logistic.l2 >= 0.0, "eval.logistic.l2 must be >= 0");
  check(eval.logistic.max_iter >= 1, "eval.logistic.max_iter must be >= 1");
  check(eval.logistic.tolerance > 0.0, "eval.logistic.tolerance must be > 0");
  check(eval.fvae.train_votes >= 1 && eval.fvae.eval_votes >= 1, "eval.fvae vote counts must be >= 1");
  check(eval.fvae.batch >= 2, "eval.fvae.batch must be >= 2");
  check(eval.traverse_steps >= 1, "eval.traverse_steps must be >= 1");
  for (auto d : eval.traverse_dims)
    check(d >= 0 && d < train.prior.salient_dim,
          "eval.traverse_dims entry " + std::to_string(d) + " is outside [0, salient_dim)");
  check(eval.grid_rows >= 1 && eval.grid_cols >= 1, "eval.grid_rows and grid_cols must be >= 1");
  check(eval.swap_pairs >= 1, "eval.swap_pairs must be >= 1");
  check(eval.batch_size >= 1, "eval.batch_size must be >= 1");
  check(!output_dir.empty(), "output_dir must not be empty");
  return out;
}

// ---------------------------------------------------------------------------
// Resolution
// ---------------------------------------------------------------------------

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key.path=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &j;
  size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override '" + assignment + "' has an empty key segment");
    if (!node->is_object()) {
      if (!node->is_null()) throw ConfigError("override '" + assignment + "' descends into a non-object");
      *node = json::object();
    }
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

namespace {

std::string type_name(const json& v) {
  if (v.is_number_float()) return "a real number";
  if (v.is_number_unsigned()) return "a non-negative integer";
  if (v.is_number_integer()) return "an integer";
  return std::string("a ") + v.type_name();
}

void merge(json& base, const json& user, const std::string& prefix, std::vector<std::string>& errors) {
  for (const auto& [key, value] : user.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) {
      errors.push_back("unknown key '" + path + "'");
      continue;
    }
    json& slot = base[key];
    if (slot.is_object()) {
      if (!value.is_object()) {
        errors.push_back(path + " must be an object");
      } else if (slot.empty()) {
        slot = value;  // free-form map (e.g. checksums)
      } else {
        merge(slot, value, path, errors);
      }
      continue;
    }
    bool ok = false;
    if (slot.is_number_float()) ok = value.is_number();
    else if (slot.is_number_unsigned()) ok = value.is_number_unsigned();
    else if (slot.is_number_integer()) ok = value.is_number_integer();
    else if (slot.is_boolean()) ok = value.is_boolean();
    else if (slot.is_string()) ok = value.is_string();
    else if (slot.is_array()) ok = value.is_array();
    if (!ok) {
      errors.push_back(path + " must be " + type_name(slot) + ", got " + value.dump());
      continue;
    }
    slot = value;
  }
}

}  // namespace

RunConfig resolve_run_config(const json& user_in, const std::vector<std::string>& overrides) {
  json user = user_in.is_null() ? json::object() : user_in;
  if (!user.is_object()) throw ConfigError("a run configuration must be a JSON object");
  for (const auto& o : overrides) apply_override(user, o);

  std::vector<std::string> errors;
  std::string name = "micro";
  if (user.contains("dataset") && user["dataset"].is_object() && user["dataset"].contains("name")) {
    const auto& n = user["dataset"]["name"];
    if (n.is_string()) name = n.get<std::string>();
  }
  const auto& names = dataset_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    errors.push_back("dataset.name '" + name + "' is not one of micro, cifar_mnist, dsprites_mnist, celeba");
    name = "micro";
    user["dataset"].erase("name");
  }
  json merged = RunConfig::for_dataset(name);
  merge(merged, user, "", errors);

  RunConfig cfg;
  bool parsed = false;
  try {
    merged.get_to(cfg);
    parsed = true;
  } catch (const json::exception& e) {
    errors.push_back(e.what());
  } catch (const ConfigError& e) {
    errors.push_back(e.what());
  }
  if (parsed) {
    const auto p = cfg.problems();
    errors.insert(errors.end(), p.begin(), p.end());
  }
  if (!errors.empty()) {
    std::string msg = "invalid configuration (" + std::to_string(errors.size()) + " problem" +
                      (errors.size() == 1 ? "" : "s") + "):";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return cfg;
}

RunConfig load_run_config(const fs::path& path, const std::vector<std::string>& overrides) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return resolve_run_config(j, overrides);
}

fs::path resolve_cache_root(const RunConfig& c) {
  if (!c.cache_dir.empty()) return c.cache_dir;
  if (const char* env = std::getenv("DINFOGAN_CACHE"); env != nullptr && *env != '\0') return env;
  return ".dinfogan-cache";
}

}  // namespace dinfogan
