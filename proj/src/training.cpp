#include "dinfogan/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "dinfogan/checkpoint.hpp"
#include "dinfogan/config.hpp"
#include "dinfogan/errors.hpp"

namespace dinfogan {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::adam:
      return "adam";
  }
  return "adam";
}

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + s + "' (expected adam)");
}

// ---------------------------------------------------------------------------
// TrainConfig
// ---------------------------------------------------------------------------

TrainConfig TrainConfig::for_dataset(const std::string& dataset) {
  TrainConfig c;
  if (dataset == "micro") {
    c.prior.common_dim = 8;
    c.prior.salient_dim = 8;
    c.arch = ArchitectureConfig::for_image_size(32, 1, 8, 8);
    c.arch.base_width = 16;
    c.batch_size = 64;
    c.epochs = 50;
    c.checkpoint_every = 500;
  } else if (dataset == "cifar_mnist") {
    c.arch = ArchitectureConfig::for_image_size(64, 3, 64, 64);
    c.arch.cr_enabled = true;
  } else if (dataset == "celeba") {
    c.arch = ArchitectureConfig::for_image_size(64, 3, 64, 64);
  } else if (dataset == "dsprites_mnist") {
    c.arch = ArchitectureConfig::for_image_size(64, 1, 64, 64);
    c.arch.cr_enabled = true;
    c.lr_g = c.lr_d = c.lr_cr = 5e-5;
    c.loops_g = 2;
  } else if (dataset == "large") {
    c.arch = ArchitectureConfig::for_image_size(128, 1, 64, 64);
    c.arch.cr_enabled = true;
    c.lr_g = c.lr_d = c.lr_cr = 1e-4;
    c.batch_size = 32;
  } else {
    throw ConfigError("no training defaults for dataset '" + dataset + "'");
  }
  return c;
}

std::vector<std::string> TrainConfig::problems() const {
  std::vector<std::string> out;
  auto check = [&](bool ok, const std::string& msg) {
    if (!ok) out.push_back(msg);
  };
  const std::pair<const char*, double> weights_list[] = {
      {"background", weights.background},     {"target", weights.target}, {"adversarial", weights.adversarial},
      {"classification", weights.classification}, {"image", weights.image},   {"info_z", weights.info_z},
      {"info_s", weights.info_s},             {"info_real", weights.info_real}, {"cr", weights.cr}};
  for (const auto& [name, v] : weights_list)
    check(std::isfinite(v) && v >= 0.0, "train.weights." + std::string(name) + " must be a finite value >= 0");
  check(prior.common_dim > 0, "train.prior.common_dim must be positive");
  check(prior.salient_dim > 0, "train.prior.salient_dim must be positive");
  check(arch.common_dim == prior.common_dim && arch.salient_dim == prior.salient_dim,
        "train.arch latent dimensions must equal train.prior's");
  try {
    arch.validate();
  } catch (const ConfigError& e) {
    out.push_back(std::string("train.") + e.what());
  }
  for (const auto& [name, v] : {std::pair{"lr_g", lr_g}, {"lr_d", lr_d}, {"lr_cr", lr_cr}})
    check(std::isfinite(v) && v >= 0.0, std::string("train.") + name + " must be >= 0");
  for (const auto& [name, v] : {std::pair{"loops_g", loops_g}, {"loops_d", loops_d}, {"loops_cr", loops_cr}})
    check(v >= 1, std::string("train.") + name + " must be >= 1");
  check(batch_size >= 1, "train.batch_size must be >= 1");
  check(epochs >= 1, "train.epochs must be >= 1");
  check(checkpoint_every >= 0, "train.checkpoint_every must be >= 0");
  check(max_steps >= 0, "train.max_steps must be >= 0");
  check(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "train.adam_beta1 must lie in [0, 1)");
  check(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "train.adam_beta2 must lie in [0, 1)");
  return out;
}

void TrainConfig::validate() const {
  const auto p = problems();
  if (p.empty()) return;
  std::string msg = "invalid training configuration:";
  for (const auto& s : p) msg += "\n  " + s;
  throw ConfigError(msg);
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

std::string to_json_line(const MetricsRecord& r) {
  json j;
  j["step"] = r.step;
  j["epoch"] = r.epoch;
  for (const auto& [k, v] : r.values) j[k] = v;
  j["wall_time"] = r.wall_time;
  return j.dump();
}

MetricsRecord metrics_from_json_line(const std::string& line) {
  const json j = json::parse(line);
  MetricsRecord r;
  for (const auto& [k, v] : j.items()) {
    if (k == "step") r.step = v.get<int64_t>();
    else if (k == "epoch") r.epoch = v.get<int64_t>();
    else if (k == "wall_time") r.wall_time = v.get<double>();
    else r.values[k] = v.is_null() ? std::nan("") : v.get<double>();
  }
  return r;
}

std::vector<MetricsRecord> read_metrics(const fs::path& file) {
  std::ifstream is(file);
  if (!is) throw std::runtime_error("cannot read metrics log " + file.string());
  std::vector<MetricsRecord> out;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) out.push_back(metrics_from_json_line(line));
  return out;
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

namespace {

torch::optim::AdamOptions adam(double lr, const TrainConfig& c) {
  return torch::optim::AdamOptions(lr).betas({c.adam_beta1, c.adam_beta2});
}

void zero_all(ModelBundle& b) {
  b.generator->zero_grad(true);
  b.discriminator->zero_grad(true);
  if (!b.cr_head.is_empty()) b.cr_head->zero_grad(true);
}

double grad_norm(const std::vector<torch::Tensor>& params) {
  double total = 0.0;
  for (const auto& p : params)
    if (p.grad().defined()) total += p.grad().to(torch::kFloat64).pow(2).sum().item<double>();
  return std::sqrt(total);
}

double scalar(const torch::Tensor& t) { return t.detach().to(torch::kFloat64).item<double>(); }

void save_optimizer(const torch::optim::Optimizer& opt, const fs::path& path) {
  torch::serialize::OutputArchive ar;
  opt.save(ar);
  ar.save_to(path.string());
}

void load_optimizer(torch::optim::Optimizer& opt, const fs::path& path) {
  torch::serialize::InputArchive ar;
  ar.load_from(path.string());
  opt.load(ar);
}

}  // namespace

Trainer::Trainer(TrainConfig cfg) : cfg_(std::move(cfg)), rng_(make_rng(cfg_.seed)) {
  cfg_.validate();
  Rng init = make_rng(cfg_.seed);
  bundle_ = build_models(cfg_.arch, init);
  // The training stream is separate from the initialization stream.
  rng_ = make_rng(cfg_.seed ^ 0x9e3779b97f4a7c15ULL);

  opt_d_ = std::make_unique<torch::optim::Adam>(bundle_.adversarial_parameters(), adam(cfg_.lr_d, cfg_));
  auto g_params = bundle_.generator_parameters();
  for (const auto& p : bundle_.encoder_head_parameters()) g_params.push_back(p);
  for (const auto& p : bundle_.trunk_parameters()) g_params.push_back(p);
  opt_g_ = std::make_unique<torch::optim::Adam>(g_params, adam(cfg_.lr_g, cfg_));
  if (cfg_.arch.cr_enabled) {
    // The contrastive term updates H and G; the discriminator trunk is left alone.
    auto cr_params = bundle_.cr_parameters();
    for (const auto& p : bundle_.generator_parameters()) cr_params.push_back(p);
    opt_cr_ = std::make_unique<torch::optim::Adam>(cr_params, adam(cfg_.lr_cr, cfg_));
  }
}

void Trainer::record_grad_norms() {
  grad_norms_["generator"] = grad_norm(bundle_.generator_parameters());
  grad_norms_["trunk"] = grad_norm(bundle_.trunk_parameters());
  grad_norms_["encoder_heads"] = grad_norm(bundle_.encoder_head_parameters());
  if (!bundle_.cr_head.is_empty()) {
    std::vector<torch::Tensor> h = bundle_.cr_head->parameters();
    grad_norms_["cr_head"] = grad_norm(h);
  }
}

void Trainer::check_finite(const std::string& name, const torch::Tensor& loss,
                           const std::map<std::string, double>& so_far) {
  const double v = scalar(loss);
  if (std::isfinite(v)) return;
  json dump;
  dump["step"] = step_ + 1;
  dump["epoch"] = epoch_;
  dump["failed_component"] = name;
  json comps = json::object();
  for (const auto& [k, x] : so_far) comps[k] = std::isfinite(x) ? json(x) : json(std::to_string(x));
  comps[name] = std::to_string(v);
  dump["components"] = comps;
  dump["last_grad_norms"] = grad_norms_;
  const std::string text = dump.dump(2);
  if (diag_dir_) {
    std::ofstream os(*diag_dir_ / "divergence.json");
    os << text << '\n';
  }
  throw TrainingDiverged("non-finite " + name + " at step " + std::to_string(step_ + 1) + "\n" + text);
}

MetricsRecord Trainer::train_step(const torch::Tensor& batch_x, const torch::Tensor& batch_y) {
  if (batch_x.dim() != 4 || batch_x.sizes() != batch_y.sizes())
    throw ContractViolation("train_step needs equally shaped real batches [b, C, H, W]");
  check_images(cfg_.arch, batch_x);
  const int64_t b = batch_x.size(0);
  const auto& w = cfg_.weights;
  const auto& prior = cfg_.prior;
  auto& G = bundle_.generator;
  auto& D = bundle_.discriminator;
  std::map<std::string, double> values;

  bundle_.set_mode(RunMode::train);
  const auto real = torch::cat({batch_x, batch_y});
  const auto g_params = bundle_.generator_parameters();

  for (int64_t loop = 0; loop < cfg_.loops_d; ++loop) {
    const LatentCode cx = sample_code(b, Domain::background, prior, rng_);
    const LatentCode cy = sample_code(b, Domain::target, prior, rng_);
    torch::Tensor fake;
    {
      torch::NoGradGuard no_grad;
      fake = torch::cat({G->forward(cx.z, cx.s), G->forward(cy.z, cy.s)});
    }
    const auto out_real = D->forward(real, &rng_);
    const auto out_fake = D->forward(fake, &rng_);
    DiscriminatorLossParts parts;
    parts.adversarial = adv_loss_discriminator(out_real.d.slice(0, 0, b), out_fake.d.slice(0, 0, b),
                                               out_real.d.slice(0, b), out_fake.d.slice(0, b), w);
    parts.classification = class_loss_discriminator(out_real.c.slice(0, 0, b), out_real.c.slice(0, b), w);
    const auto total = total_discriminator_objective(parts);
    values["d_adv"] = scalar(parts.adversarial);
    values["d_class"] = scalar(parts.classification);
    check_finite("d_total", total, values);
    values["d_total"] = scalar(total);
    zero_all(bundle_);
    total.backward();
    record_grad_norms();
    opt_d_->step();
  }

  GeneratorLossParts gparts;
  for (int64_t loop = 0; loop < cfg_.loops_g; ++loop) {
    const LatentCode cx = sample_code(b, Domain::background, prior, rng_);
    const LatentCode cy = sample_code(b, Domain::target, prior, rng_);
    const auto fake = torch::cat({G->forward(cx.z, cx.s), G->forward(cy.z, cy.s)});
    const auto out_fake = D->forward(fake, &rng_);
    const auto out_real = D->forward(real, &rng_);

    gparts.adversarial = adv_loss_generator(out_fake.d.slice(0, 0, b), out_fake.d.slice(0, b), w);
    gparts.classification = class_loss_generator(out_fake.c.slice(0, 0, b), out_fake.c.slice(0, b), w);

    InfoTerms info;
    info.qz_fake_x = out_fake.q_z.slice(0, 0, b);
    info.z_x = cx.z;
    info.qs_fake_x = out_fake.q_s.slice(0, 0, b);
    info.qz_fake_y = out_fake.q_z.slice(0, b);
    info.z_y = cy.z;
    info.qs_fake_y = out_fake.q_s.slice(0, b);
    info.s_y = cy.s;
    info.qs_real_x = out_real.q_s.slice(0, 0, b);
    gparts.info = info_loss(info, w);

    const auto qz_real_x = out_real.q_z.slice(0, 0, b);
    const auto qz_real_y = out_real.q_z.slice(0, b);
    const auto qs_real_y = out_real.q_s.slice(0, b);
    const auto x_rec = G->forward(qz_real_x, torch::zeros_like(qs_real_y));
    const auto y_rec = G->forward(qz_real_y, qs_real_y);
    gparts.image = image_reconstruction_loss(batch_x, x_rec, batch_y, y_rec, w);

    values["g_adv"] = scalar(gparts.adversarial);
    values["g_class"] = scalar(gparts.classification);
    values["g_info"] = scalar(gparts.info);
    values["g_image"] = scalar(gparts.image);
    const auto adversarial_side = gparts.adversarial + gparts.classification;
    const auto encoder_side = gparts.info + gparts.image;
    check_finite("g_adversarial_side", adversarial_side, values);
    check_finite("g_encoder_side", encoder_side, values);

    zero_all(bundle_);
    // The adversarial and class terms train G only; the D/C heads and the
    // trunk receive nothing from them here.
    auto grads = torch::autograd::grad({adversarial_side}, g_params, {}, /*retain_graph=*/true,
                                       /*create_graph=*/false, /*allow_unused=*/true);
    encoder_side.backward();
    for (size_t i = 0; i < g_params.size(); ++i) {
      if (!grads[i].defined()) continue;
      torch::Tensor p = g_params[i];
      if (p.grad().defined()) p.mutable_grad().add_(grads[i]);
      else p.mutable_grad() = grads[i].clone();
    }
    record_grad_norms();
    opt_g_->step();
  }

  if (cfg_.arch.cr_enabled) {
    auto& H = bundle_.cr_head;
    for (int64_t loop = 0; loop < cfg_.loops_cr; ++loop) {
      const CrBatch pairs = sample_cr_batch(b, prior, rng_);
      const auto a = G->forward(pairs.z, pairs.s1);
      const auto bb = G->forward(pairs.z, pairs.s2);
      const auto logits = H->forward(a, bb, &rng_);
      gparts.cr = cr_loss(logits, pairs.shared_index);
      const auto weighted = gparts.cr * w.cr;
      check_finite("cr", weighted, values);
      values["cr"] = scalar(gparts.cr);
      zero_all(bundle_);
      weighted.backward();
      record_grad_norms();
      opt_cr_->step();
    }
  }
  values["g_total"] = scalar(total_generator_objective(gparts, w));
  zero_all(bundle_);

  ++step_;
  MetricsRecord rec;
  rec.step = step_;
  rec.epoch = epoch_;
  rec.values = std::move(values);
  return rec;
}

void Trainer::save_checkpoint(const fs::path& dir) {
  CheckpointMeta meta{cfg_.arch, step_, epoch_, cfg_.seed};
  save_bundle(dir, bundle_, meta);
  save_optimizer(*opt_d_, dir / "optim_d.pt");
  save_optimizer(*opt_g_, dir / "optim_g.pt");
  if (opt_cr_) save_optimizer(*opt_cr_, dir / "optim_cr.pt");
  torch::save(rng_.get_state(), (dir / "rng.pt").string());
  json cfg = cfg_;
  std::ofstream os(dir / "train_config.json");
  os << cfg.dump(2) << '\n';
  if (!os) throw std::runtime_error("cannot write " + (dir / "train_config.json").string());
}

void Trainer::load_checkpoint(const fs::path& dir) {
  const CheckpointMeta meta = read_checkpoint_meta(dir);
  if (!(meta.arch == cfg_.arch))
    throw ArchitectureMismatch("checkpoint " + dir.string() + " was written for a different architecture");
  ModelBundle loaded = load_bundle(dir, &cfg_.arch);
  // Copy into the existing modules so the optimizers keep their parameter handles.
  {
    torch::NoGradGuard no_grad;
    auto copy = [](torch::nn::Module& dst, torch::nn::Module& src) {
      auto d = dst.named_parameters(true), s = src.named_parameters(true);
      for (auto& item : d) item.value().copy_(s[item.key()]);
      auto db = dst.named_buffers(true), sb = src.named_buffers(true);
      for (auto& item : db) item.value().copy_(sb[item.key()]);
    };
    copy(*bundle_.generator, *loaded.generator);
    copy(*bundle_.discriminator, *loaded.discriminator);
    if (!bundle_.cr_head.is_empty()) copy(*bundle_.cr_head, *loaded.cr_head);
  }
  load_optimizer(*opt_d_, dir / "optim_d.pt");
  load_optimizer(*opt_g_, dir / "optim_g.pt");
  if (opt_cr_) load_optimizer(*opt_cr_, dir / "optim_cr.pt");
  torch::Tensor state;
  torch::load(state, (dir / "rng.pt").string());
  rng_.set_state(state);
  step_ = meta.step;
  epoch_ = meta.epoch;
}

// ---------------------------------------------------------------------------
// Epoch planning and the outer loop
// ---------------------------------------------------------------------------

int64_t steps_per_epoch(const CaDataset& ds, int64_t batch_size) {
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  return std::max(ds.count(Domain::background), ds.count(Domain::target)) / batch_size;
}

namespace {

std::vector<int64_t> cover(const std::vector<int64_t>& pool, int64_t needed, std::mt19937_64& rng) {
  std::vector<int64_t> out;
  out.reserve(static_cast<size_t>(needed));
  while (static_cast<int64_t>(out.size()) < needed) {
    auto shuffled = pool;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto take = std::min<int64_t>(needed - static_cast<int64_t>(out.size()), static_cast<int64_t>(pool.size()));
    out.insert(out.end(), shuffled.begin(), shuffled.begin() + take);
  }
  return out;
}

}  // namespace

EpochPlan plan_epoch(const CaDataset& ds, int64_t batch_size, uint64_t seed, int64_t epoch) {
  const auto bg = ds.indices(Domain::background);
  const auto tg = ds.indices(Domain::target);
  if (bg.empty() || tg.empty()) throw ContractViolation("training data needs both background and target samples");
  EpochPlan plan;
  plan.steps = steps_per_epoch(ds, batch_size);
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(epoch),
                    static_cast<uint32_t>(epoch >> 32), 0xdau};
  std::mt19937_64 rng(seq);
  plan.background = cover(bg, plan.steps * batch_size, rng);
  plan.target = cover(tg, plan.steps * batch_size, rng);
  return plan;
}

fs::path checkpoint_name(const fs::path& run_dir, int64_t step) {
  std::string s = std::to_string(step);
  if (s.size() < 8) s.insert(0, 8 - s.size(), '0');
  return run_dir / "checkpoints" / ("step-" + s);
}

namespace {

void truncate_metrics(const fs::path& file, int64_t last_step) {
  if (!fs::exists(file)) return;
  std::vector<std::string> keep;
  {
    std::ifstream is(file);
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      if (json::parse(line).at("step").get<int64_t>() <= last_step) keep.push_back(line);
    }
  }
  std::ofstream os(file, std::ios::trunc);
  for (const auto& l : keep) os << l << '\n';
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const CaDataset& dataset, const fs::path& run_dir, const TrainOptions& opts) {
  cfg.validate();
  if (dataset.count(Domain::background) == 0 || dataset.count(Domain::target) == 0)
    throw ContractViolation("dataset '" + dataset.name + "' must contain both domains");
  if (dataset.channels() != cfg.arch.channels || dataset.image_size() != cfg.arch.image_size)
    throw ConfigError("dataset images are " + std::to_string(dataset.channels()) + "x" +
                      std::to_string(dataset.image_size()) + " but the architecture expects " +
                      std::to_string(cfg.arch.channels) + "x" + std::to_string(cfg.arch.image_size));
  fs::create_directories(run_dir / "checkpoints");
  {
    json manifest;
    manifest["train"] = cfg;
    manifest["dataset"] = {{"name", dataset.name},
                           {"split", to_string(dataset.split)},
                           {"size", dataset.size()},
                           {"checksum", dataset.checksum()}};
    if (!opts.manifest_extra.is_null()) manifest["extra"] = opts.manifest_extra;
    std::ofstream os(run_dir / "manifest.json");
    os << manifest.dump(2) << '\n';
    if (!os) throw std::runtime_error("cannot write " + (run_dir / "manifest.json").string());
  }

  Trainer trainer(cfg);
  trainer.set_diagnostic_dir(run_dir);
  const fs::path metrics_file = run_dir / "metrics.jsonl";
  if (opts.resume) {
    trainer.load_checkpoint(*opts.resume);
    truncate_metrics(metrics_file, trainer.step());
  } else {
    std::ofstream(metrics_file, std::ios::trunc);
  }

  const int64_t spe = steps_per_epoch(dataset, cfg.batch_size);
  if (spe == 0)
    throw ConfigError("batch_size " + std::to_string(cfg.batch_size) + " exceeds the larger domain of '" +
                      dataset.name + "'");
  int64_t total = spe * cfg.epochs;
  if (cfg.max_steps > 0) total = std::min(total, cfg.max_steps);

  std::ofstream log(metrics_file, std::ios::app);
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result;
  result.run_dir = run_dir;
  auto write_ckpt = [&](const fs::path& dir) {
    write_directory_atomically(dir, [&](const fs::path& tmp) { trainer.save_checkpoint(tmp); });
  };

  while (trainer.step() < total) {
    const int64_t epoch = trainer.step() / spe;
    const EpochPlan plan = plan_epoch(dataset, cfg.batch_size, cfg.seed, epoch);
    trainer.set_epoch(epoch);
    for (int64_t j = trainer.step() % spe; j < spe && trainer.step() < total; ++j) {
      const std::span<const int64_t> ix(plan.background.data() + j * cfg.batch_size, cfg.batch_size);
      const std::span<const int64_t> iy(plan.target.data() + j * cfg.batch_size, cfg.batch_size);
      MetricsRecord rec = trainer.train_step(dataset.images(ix), dataset.images(iy));
      rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      log << to_json_line(rec) << '\n';
      log.flush();
      if (!log) throw std::runtime_error("cannot append to " + metrics_file.string());
      if (opts.on_step) opts.on_step(rec);
      result.last = rec;
      if (cfg.checkpoint_every > 0 && trainer.step() % cfg.checkpoint_every == 0)
        write_ckpt(checkpoint_name(run_dir, trainer.step()));
    }
  }
  // A finished epoch advances the counter stored with the final checkpoint.
  trainer.set_epoch(trainer.step() / spe);
  result.final_checkpoint = run_dir / "checkpoints" / "final";
  write_ckpt(result.final_checkpoint);
  result.steps = trainer.step();
  return result;
}

}  // namespace dinfogan
