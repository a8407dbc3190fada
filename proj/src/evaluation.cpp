#include "dinfogan/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "dinfogan/errors.hpp"
#include "dinfogan/image_io.hpp"

namespace dinfogan {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// LatentTable
// ---------------------------------------------------------------------------

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, '\t')) out.push_back(cell);
  return out;
}

}  // namespace

void LatentTable::write_tsv(const fs::path& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  const int64_t L = z_hat.size(1), M = s_hat.size(1);
  os << "id\tdomain\tattribute";
  for (int64_t i = 0; i < L; ++i) os << "\tz_" << i;
  for (int64_t i = 0; i < M; ++i) os << "\ts_" << i;
  os << '\n';
  const auto z = z_hat.contiguous(), s = s_hat.contiguous();
  const double* zp = z.data_ptr<double>();
  const double* sp = s.data_ptr<double>();
  for (int64_t r = 0; r < size(); ++r) {
    os << ids[r] << '\t' << to_string(domains[r]) << '\t';
    if (attributes[r] >= 0) os << attributes[r];
    for (int64_t i = 0; i < L; ++i) os << '\t' << format_double(zp[r * L + i]);
    for (int64_t i = 0; i < M; ++i) os << '\t' << format_double(sp[r * M + i]);
    os << '\n';
  }
  if (!os) throw std::runtime_error("cannot write " + path.string());
}

LatentTable LatentTable::read_tsv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(is, line);
  const auto header = split_tabs(line);
  int64_t L = 0, M = 0;
  for (const auto& h : header) {
    if (h.rfind("z_", 0) == 0) ++L;
    if (h.rfind("s_", 0) == 0) ++M;
  }
  if (header.size() != static_cast<size_t>(3 + L + M) || header[0] != "id")
    throw std::runtime_error("malformed latent table header in " + path.string());
  LatentTable t;
  std::vector<double> z, s;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split_tabs(line);
    if (cells.size() != header.size()) throw std::runtime_error("malformed latent table row in " + path.string());
    t.ids.push_back(cells[0]);
    t.domains.push_back(domain_from_string(cells[1]));
    t.attributes.push_back(cells[2].empty() ? -1 : std::stoll(cells[2]));
    for (int64_t i = 0; i < L; ++i) z.push_back(std::stod(cells[3 + i]));
    for (int64_t i = 0; i < M; ++i) s.push_back(std::stod(cells[3 + L + i]));
  }
  t.z_hat = torch::tensor(z, torch::kFloat64).reshape({t.size(), L});
  t.s_hat = torch::tensor(s, torch::kFloat64).reshape({t.size(), M});
  return t;
}

namespace {

void check_dataset_fits(const ModelBundle& bundle, const CaDataset& ds) {
  if (ds.channels() != bundle.arch.channels || ds.image_size() != bundle.arch.image_size)
    throw ArchitectureMismatch("dataset '" + ds.name + "' has " + std::to_string(ds.channels()) + "x" +
                               std::to_string(ds.image_size()) + " images; the model expects " +
                               std::to_string(bundle.arch.channels) + "x" + std::to_string(bundle.arch.image_size));
}

LatentCode encode(ModelBundle& bundle, const torch::Tensor& images) {
  torch::NoGradGuard no_grad;
  const auto out = discriminate(bundle, images, RunMode::eval, nullptr);
  return {out.q_z, out.q_s};
}

}  // namespace

LatentTable encode_dataset(ModelBundle& bundle, const CaDataset& ds, int64_t batch_size) {
  check_dataset_fits(bundle, ds);
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  LatentTable t;
  t.ids = ds.ids;
  t.domains = ds.domains;
  t.attributes = ds.attributes;
  std::vector<torch::Tensor> zs, ss;
  std::vector<int64_t> idx;
  for (int64_t start = 0; start < ds.size(); start += batch_size) {
    idx.resize(static_cast<size_t>(std::min(batch_size, ds.size() - start)));
    std::iota(idx.begin(), idx.end(), start);
    const auto code = encode(bundle, ds.images(idx).to(bundle_dtype(bundle)));
    zs.push_back(code.z.to(torch::kFloat64));
    ss.push_back(code.s.to(torch::kFloat64));
  }
  if (zs.empty()) {
    t.z_hat = torch::zeros({0, bundle.arch.common_dim}, torch::kFloat64);
    t.s_hat = torch::zeros({0, bundle.arch.salient_dim}, torch::kFloat64);
  } else {
    t.z_hat = torch::cat(zs);
    t.s_hat = torch::cat(ss);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Separation score
// ---------------------------------------------------------------------------

std::string to_string(Feature f) { return f == Feature::s_hat ? "s_hat" : "z_hat"; }

Accuracy separation_score(const torch::Tensor& features, const std::vector<int64_t>& labels_in, int64_t folds,
                          uint64_t seed, const LogisticOptions& opts) {
  if (features.dim() != 2 || features.size(0) != static_cast<int64_t>(labels_in.size()))
    throw ContractViolation("separation_score needs one label per feature row");
  if (folds < 2) throw ConfigError("folds must be >= 2");
  std::map<int64_t, int64_t> counts;
  for (auto l : labels_in) ++counts[l];
  if (counts.size() < 2) throw UndefinedMetric("separation score is undefined for a single-class table");
  std::map<int64_t, int64_t> remap;
  for (const auto& [label, n] : counts) {
    if (n < folds)
      throw UndefinedMetric("class " + std::to_string(label) + " has " + std::to_string(n) +
                            " samples, fewer than the " + std::to_string(folds) + " folds");
    const int64_t next = static_cast<int64_t>(remap.size());
    remap[label] = next;
  }
  std::vector<int64_t> labels;
  for (auto l : labels_in) labels.push_back(remap[l]);
  const auto fold = stratified_folds(labels, folds, seed);
  const auto x = features.to(torch::kFloat64);

  Accuracy acc;
  acc.folds = folds;
  for (int64_t f = 0; f < folds; ++f) {
    std::vector<int64_t> train_rows, test_rows, train_labels;
    for (size_t i = 0; i < labels.size(); ++i) {
      if (fold[i] == f) {
        test_rows.push_back(static_cast<int64_t>(i));
      } else {
        train_rows.push_back(static_cast<int64_t>(i));
        train_labels.push_back(labels[i]);
      }
    }
    LogisticRegression clf(opts);
    clf.fit(x.index_select(0, torch::tensor(train_rows)), train_labels, static_cast<int64_t>(remap.size()));
    const auto pred = clf.predict(x.index_select(0, torch::tensor(test_rows)));
    int64_t correct = 0;
    for (size_t i = 0; i < test_rows.size(); ++i) correct += pred[i] == labels[static_cast<size_t>(test_rows[i])];
    acc.per_fold.push_back(static_cast<double>(correct) / static_cast<double>(test_rows.size()));
  }
  acc.mean = std::accumulate(acc.per_fold.begin(), acc.per_fold.end(), 0.0) / static_cast<double>(folds);
  double var = 0.0;
  for (auto a : acc.per_fold) var += (a - acc.mean) * (a - acc.mean);
  acc.std = std::sqrt(var / static_cast<double>(folds));
  return acc;
}

Accuracy separation_score(const LatentTable& table, Feature feature, int64_t folds, uint64_t seed,
                          const LogisticOptions& opts) {
  std::vector<int64_t> rows, labels;
  for (int64_t i = 0; i < table.size(); ++i) {
    if (table.attributes[i] < 0) continue;
    rows.push_back(i);
    labels.push_back(table.attributes[i]);
  }
  const auto& block = feature == Feature::s_hat ? table.s_hat : table.z_hat;
  return separation_score(block.index_select(0, torch::tensor(rows, torch::kLong)), labels, folds, seed, opts);
}

// ---------------------------------------------------------------------------
// FactorVAE score
// ---------------------------------------------------------------------------

FvaeResult fvae_score(const torch::Tensor& factors_in, const Encoder& encoder, const FvaeOptions& opts) {
  if (factors_in.dim() != 2 || factors_in.size(0) == 0) throw ContractViolation("fvae needs factors [N, F]");
  if (opts.train_votes < 1 || opts.eval_votes < 1 || opts.batch < 2)
    throw ConfigError("fvae needs >= 1 vote of each kind and batch >= 2");
  const auto factors = factors_in.to(torch::kFloat64).contiguous();
  const int64_t n = factors.size(0), F = factors.size(1);

  std::vector<int64_t> all(static_cast<size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  const auto rep = encoder(all).to(torch::kFloat64).contiguous();
  if (rep.dim() != 2 || rep.size(0) != n) throw ContractViolation("encoder must return one row per sample");
  const int64_t D = rep.size(1);

  FvaeResult result;
  const auto global_std = rep.std(0, /*unbiased=*/false);
  std::vector<int64_t> kept;
  for (int64_t d = 0; d < D; ++d) {
    if (global_std[d].item<double>() > 1e-12) kept.push_back(d);
    else result.excluded_dims.push_back(d);
  }
  if (!result.excluded_dims.empty())
    result.warnings.push_back(std::to_string(result.excluded_dims.size()) +
                              " representation dimension(s) have zero variance and were excluded");
  torch::Tensor normalized;
  if (!kept.empty()) {
    const auto k = torch::tensor(kept, torch::kLong);
    normalized = (rep.index_select(1, k) / global_std.index_select(0, k)).contiguous();
  }

  // Members of every (factor, value) group.
  std::vector<std::map<double, std::vector<int64_t>>> groups(static_cast<size_t>(F));
  const double* fp = factors.data_ptr<double>();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t f = 0; f < F; ++f) groups[f][fp[i * F + f]].push_back(i);

  std::mt19937_64 rng(opts.seed);
  const int64_t sentinel = D;
  auto vote = [&](int64_t& factor) -> int64_t {
    factor = std::uniform_int_distribution<int64_t>(0, F - 1)(rng);
    const int64_t anchor = std::uniform_int_distribution<int64_t>(0, n - 1)(rng);
    const auto& pool = groups[factor].at(fp[anchor * F + factor]);
    std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
    std::vector<int64_t> batch(static_cast<size_t>(opts.batch));
    for (auto& b : batch) b = pool[pick(rng)];
    if (kept.empty()) return sentinel;
    const auto var = normalized.index_select(0, torch::tensor(batch, torch::kLong)).var(0, /*unbiased=*/false);
    return kept[static_cast<size_t>(var.argmin().item<int64_t>())];
  };

  std::vector<std::vector<int64_t>> counts(static_cast<size_t>(D + 1), std::vector<int64_t>(static_cast<size_t>(F), 0));
  std::vector<int64_t> factor_totals(static_cast<size_t>(F), 0);
  for (int64_t v = 0; v < opts.train_votes; ++v) {
    int64_t factor = 0;
    const int64_t d = vote(factor);
    ++counts[d][factor];
    ++factor_totals[factor];
  }
  const int64_t majority_factor =
      std::max_element(factor_totals.begin(), factor_totals.end()) - factor_totals.begin();
  std::vector<int64_t> classifier(static_cast<size_t>(D + 1), majority_factor);
  for (int64_t d = 0; d < D; ++d) {
    const auto& row = counts[d];
    if (std::accumulate(row.begin(), row.end(), int64_t{0}) == 0) continue;
    classifier[d] = std::max_element(row.begin(), row.end()) - row.begin();
  }

  int64_t correct = 0;
  for (int64_t v = 0; v < opts.eval_votes; ++v) {
    int64_t factor = 0;
    const int64_t d = vote(factor);
    correct += classifier[d] == factor;
  }
  result.score = static_cast<double>(correct) / static_cast<double>(opts.eval_votes);
  return result;
}

FvaeResult fvae_score(ModelBundle& bundle, const CaDataset& ds, const FvaeOptions& opts) {
  if (!ds.has_factors()) throw ContractViolation("dataset '" + ds.name + "' carries no ground-truth factors");
  check_dataset_fits(bundle, ds);
  const auto rows = ds.indices(Domain::target);
  if (rows.empty()) throw ContractViolation("fvae needs target samples");
  const auto factors = ds.factors.index_select(0, torch::tensor(rows, torch::kLong));
  Encoder enc = [&](std::span<const int64_t> local) {
    std::vector<torch::Tensor> parts;
    constexpr size_t kChunk = 256;
    for (size_t start = 0; start < local.size(); start += kChunk) {
      std::vector<int64_t> idx;
      for (size_t i = start; i < std::min(local.size(), start + kChunk); ++i) idx.push_back(rows[local[i]]);
      parts.push_back(encode(bundle, ds.images(idx).to(bundle_dtype(bundle))).s);
    }
    return torch::cat(parts);
  };
  return fvae_score(factors, enc, opts);
}

// ---------------------------------------------------------------------------
// Swap, traversal and generation grids
// ---------------------------------------------------------------------------

std::pair<LatentCode, LatentCode> swap_codes(const LatentCode& a, const LatentCode& b) {
  return {LatentCode{a.z, b.s}, LatentCode{b.z, a.s}};
}

SwapResult swap(ModelBundle& bundle, const torch::Tensor& x_real, const torch::Tensor& y_real) {
  if (x_real.sizes() != y_real.sizes()) throw ContractViolation("swap needs equally shaped image batches");
  check_images(bundle.arch, x_real);
  SwapResult r;
  r.code_x = encode(bundle, x_real);
  r.code_y = encode(bundle, y_real);
  const auto [xs, ys] = swap_codes(r.code_x, r.code_y);
  r.x_swapped = generate(bundle, xs.z, xs.s);
  r.y_swapped = generate(bundle, ys.z, ys.s);
  r.x_rec = generate(bundle, r.code_x.z, torch::zeros_like(r.code_x.s));
  r.y_rec = generate(bundle, r.code_y.z, r.code_y.s);
  return r;
}

std::vector<double> traversal_values(double lo, double hi, int64_t steps) {
  if (steps < 1) throw ConfigError("traversal steps must be >= 1");
  if (steps == 1) return {0.5 * (lo + hi)};
  std::vector<double> v;
  for (int64_t i = 0; i < steps; ++i)
    v.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(steps - 1));
  return v;
}

Grid traversal_grid(ModelBundle& bundle, const torch::Tensor& z_in, int64_t dim, double lo, double hi, int64_t steps) {
  const int64_t M = bundle.arch.salient_dim;
  if (dim < 0 || dim >= M)
    throw std::out_of_range("traversal dimension " + std::to_string(dim) + " outside [0, " + std::to_string(M) + ")");
  const auto z = z_in.reshape({1, -1});
  if (z.size(1) != bundle.arch.common_dim) throw ContractViolation("traversal z must have length L");
  const auto values = traversal_values(lo, hi, steps);
  auto s = torch::zeros({steps, M}, z.options());
  for (int64_t i = 0; i < steps; ++i) s[i][dim] = values[static_cast<size_t>(i)];
  Grid g;
  g.images = generate(bundle, z.expand({steps, z.size(1)}).contiguous(), s);
  g.canvas = tile_grid(g.images, 1, steps);
  return g;
}

Grid generation_grid(ModelBundle& bundle, const PriorConfig& prior, int64_t rows, int64_t cols, uint64_t seed) {
  if (rows < 1 || cols < 1) throw ConfigError("grid rows and cols must be >= 1");
  Rng rng = make_rng(seed);
  std::vector<torch::Tensor> zs, ss;
  for (int64_t r = 0; r < rows; ++r) {
    const auto z = sample_common(1, prior, rng);
    zs.push_back(z.expand({cols, z.size(1)}));
    ss.push_back(torch::zeros({1, prior.salient_dim}));
    if (cols > 1) ss.push_back(sample_salient(cols - 1, Domain::target, prior, rng));
  }
  const auto dtype = bundle_dtype(bundle);
  Grid g;
  g.images = generate(bundle, torch::cat(zs).to(dtype), torch::cat(ss).to(dtype));
  g.canvas = tile_grid(g.images, rows, cols);
  return g;
}

std::string to_string(GridKind g) {
  switch (g) {
    case GridKind::recon:
      return "recon";
    case GridKind::swap:
      return "swap";
    case GridKind::traverse:
      return "traverse";
    case GridKind::generate:
      return "generate";
  }
  return "recon";
}

GridKind grid_from_string(const std::string& s) {
  for (auto g : {GridKind::recon, GridKind::swap, GridKind::traverse, GridKind::generate})
    if (to_string(g) == s) return g;
  throw ConfigError("unknown grid kind '" + s + "' (expected recon, swap, traverse or generate)");
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

namespace {

json accuracy_json(const Accuracy& a) {
  return {{"mean", a.mean}, {"std", a.std}, {"folds", a.folds}, {"per_fold", a.per_fold}};
}

}  // namespace

json EvaluationReport::to_json() const {
  json j;
  j["dataset"] = dataset;
  j["samples"] = samples;
  j["acc_s"] = accuracy_json(acc_s);
  j["acc_z"] = accuracy_json(acc_z);
  j["fvae"] = fvae ? json(*fvae) : json(nullptr);
  j["warnings"] = warnings;
  json paths = json::array();
  for (const auto& p : grid_paths) paths.push_back(p.string());
  j["grids"] = paths;
  j["latent_table"] = latent_table.string();
  return j;
}

EvaluationReport evaluate(ModelBundle& bundle, const PriorConfig& prior, const CaDataset& ds, const EvalOptions& opts,
                          const fs::path& out_dir) {
  fs::create_directories(out_dir);
  EvaluationReport report;
  report.dataset = ds.name;
  report.samples = ds.size();

  const LatentTable table = encode_dataset(bundle, ds, opts.batch_size);
  report.latent_table = out_dir / "latents.tsv";
  table.write_tsv(report.latent_table);
  report.acc_s = separation_score(table, Feature::s_hat, opts.folds, opts.seed, opts.logistic);
  report.acc_z = separation_score(table, Feature::z_hat, opts.folds, opts.seed, opts.logistic);
  if (ds.has_factors()) {
    const auto f = fvae_score(bundle, ds, opts.fvae);
    report.fvae = f.score;
    report.warnings.insert(report.warnings.end(), f.warnings.begin(), f.warnings.end());
  }

  const auto bg = ds.indices(Domain::background);
  const auto tg = ds.indices(Domain::target);
  const auto dtype = bundle_dtype(bundle);
  auto emit = [&](const std::string& name, const torch::Tensor& canvas) {
    const auto path = out_dir / (name + ".png");
    write_png(path, canvas);
    report.grid_paths.push_back(path);
  };
  for (const auto kind : opts.grids) {
    if (kind == GridKind::recon || kind == GridKind::swap) {
      const int64_t n = std::min<int64_t>({opts.swap_pairs, static_cast<int64_t>(bg.size()), static_cast<int64_t>(tg.size())});
      if (n == 0) {
        report.warnings.push_back(to_string(kind) + " grid skipped: needs samples from both domains");
        continue;
      }
      const std::vector<int64_t> bx(bg.begin(), bg.begin() + n), ty(tg.begin(), tg.begin() + n);
      const auto x = ds.images(bx).to(dtype), y = ds.images(ty).to(dtype);
      const auto r = swap(bundle, x, y);
      const auto rows = kind == GridKind::recon ? torch::cat({x, r.x_rec, y, r.y_rec})
                                                : torch::cat({x, y, r.x_swapped, r.y_swapped});
      emit(to_string(kind), tile_grid(rows.to(torch::kFloat32), 4, n));
    } else if (kind == GridKind::traverse) {
      torch::Tensor z;
      if (!tg.empty()) z = encode(bundle, ds.images(std::vector<int64_t>{tg[0]}).to(dtype)).z;
      else z = torch::zeros({1, bundle.arch.common_dim}, dtype);
      const std::vector<int64_t> dims = opts.traverse_dims.empty() ? std::vector<int64_t>{0} : opts.traverse_dims;
      for (auto d : dims) {
        const auto g = traversal_grid(bundle, z, d, opts.traverse_lo, opts.traverse_hi, opts.traverse_steps);
        emit("traverse_dim" + std::to_string(d), g.canvas);
      }
    } else {
      emit("generate", generation_grid(bundle, prior, opts.grid_rows, opts.grid_cols, opts.seed).canvas);
    }
  }

  std::ofstream os(out_dir / "report.json");
  os << report.to_json().dump(2) << '\n';
  if (!os) throw std::runtime_error("cannot write " + (out_dir / "report.json").string());
  return report;
}

}  // namespace dinfogan
