#include "dinfogan/data.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dinfogan/errors.hpp"
#include "dinfogan/image_io.hpp"

namespace dinfogan {

namespace fs = std::filesystem;
using nlohmann::json;
using torch::indexing::Slice;

// ---------------------------------------------------------------------------
// CaDataset
// ---------------------------------------------------------------------------

CaSample CaDataset::sample(int64_t i) const {
  if (i < 0 || i >= size()) throw ContractViolation("sample index out of range");
  CaSample s;
  s.id = ids[i];
  s.image = to_unit_range(pixels[i]);
  s.domain = domains[i];
  if (attributes[i] >= 0) s.attribute = attributes[i];
  if (has_factors()) {
    auto row = factors[i].contiguous();
    const double* p = row.data_ptr<double>();
    s.factors = std::vector<double>(p, p + row.numel());
  }
  return s;
}

torch::Tensor CaDataset::images(std::span<const int64_t> idx) const {
  auto index = torch::tensor(std::vector<int64_t>(idx.begin(), idx.end()), torch::kLong);
  return to_unit_range(pixels.index_select(0, index));
}

std::vector<int64_t> CaDataset::indices(Domain d) const {
  std::vector<int64_t> out;
  for (int64_t i = 0; i < size(); ++i)
    if (domains[i] == d) out.push_back(i);
  return out;
}

int64_t CaDataset::count(Domain d) const { return std::count(domains.begin(), domains.end(), d); }

void CaDataset::validate() const {
  const auto n = static_cast<size_t>(size());
  if (!pixels.defined() || pixels.dim() != 4 || pixels.scalar_type() != torch::kUInt8)
    throw ContractViolation(name + ": pixels must be uint8 [N, C, H, W]");
  if (static_cast<size_t>(pixels.size(0)) != n || domains.size() != n || attributes.size() != n)
    throw ContractViolation(name + ": declared counts do not match the stored columns");
  if (has_factors() && static_cast<size_t>(factors.size(0)) != n)
    throw ContractViolation(name + ": factor rows do not match the sample count");
  for (size_t i = 0; i < n; ++i)
    if (domains[i] == Domain::background && attributes[i] >= 0)
      throw ContractViolation(name + ": background sample " + ids[i] + " carries a target attribute");
}

namespace {

json index_json(const CaDataset& ds) {
  json j;
  j["name"] = ds.name;
  j["split"] = to_string(ds.split);
  j["shape"] = {ds.size(), ds.pixels.size(1), ds.pixels.size(2), ds.pixels.size(3)};
  j["provenance"] = {{"seed", ds.provenance.seed}, {"source_checksums", ds.provenance.source_checksums}};
  j["factor_names"] = ds.factor_names;
  json samples = json::array();
  const int64_t item = ds.pixels.size(1) * ds.pixels.size(2) * ds.pixels.size(3);
  for (int64_t i = 0; i < ds.size(); ++i) {
    json s = {{"id", ds.ids[i]},
              {"domain", to_string(ds.domains[i])},
              {"attribute", ds.attributes[i] >= 0 ? json(ds.attributes[i]) : json(nullptr)},
              {"offset", i * item}};
    if (ds.has_factors()) {
      auto row = ds.factors[i].contiguous();
      const double* p = row.data_ptr<double>();
      s["factors"] = std::vector<double>(p, p + row.numel());
    }
    samples.push_back(std::move(s));
  }
  j["samples"] = std::move(samples);
  return j;
}

}  // namespace

std::string CaDataset::checksum() const {
  auto idx = index_json(*this);
  idx.erase("provenance");
  const auto text = idx.dump();
  auto px = pixels.contiguous();
  std::vector<uint8_t> bytes(text.begin(), text.end());
  const auto* p = px.data_ptr<uint8_t>();
  bytes.insert(bytes.end(), p, p + px.numel());
  return sha256_hex(bytes);
}

CaDataset subset(const CaDataset& ds, std::span<const int64_t> indices) {
  CaDataset out;
  out.name = ds.name;
  out.split = ds.split;
  out.provenance = ds.provenance;
  out.factor_names = ds.factor_names;
  auto index = torch::tensor(std::vector<int64_t>(indices.begin(), indices.end()), torch::kLong);
  out.pixels = ds.pixels.index_select(0, index).contiguous();
  if (ds.has_factors()) out.factors = ds.factors.index_select(0, index).contiguous();
  for (auto i : indices) {
    out.ids.push_back(ds.ids[i]);
    out.domains.push_back(ds.domains[i]);
    out.attributes.push_back(ds.attributes[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

namespace {

std::mt19937_64 stream(uint64_t seed, uint64_t salt) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(salt),
                    static_cast<uint32_t>(salt >> 32)};
  return std::mt19937_64(seq);
}

int64_t uniform_int(std::mt19937_64& rng, int64_t lo, int64_t hi) {
  return std::uniform_int_distribution<int64_t>(lo, hi)(rng);
}

std::vector<int64_t> permutation(int64_t n, std::mt19937_64& rng) {
  std::vector<int64_t> p(static_cast<size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

std::string pad(int64_t v, int width = 6) {
  std::string s = std::to_string(v);
  return std::string(static_cast<size_t>(std::max<int>(0, width - static_cast<int>(s.size()))), '0') + s;
}

// Pastes a white digit with alpha = intensity / 255 onto a float [C, H, W] canvas.
void overlay_digit(torch::Tensor& canvas, const torch::Tensor& digit32, int64_t top, int64_t left) {
  auto alpha = digit32.to(torch::kFloat32) / 255.0;  // [1, 32, 32]
  auto region = canvas.index({Slice(), Slice(top, top + digit32.size(1)), Slice(left, left + digit32.size(2))});
  region.mul_(1.0 - alpha).add_(alpha * 255.0);
}

std::map<std::string, std::string> verify(const std::vector<fs::path>& files, const DataSources& src) {
  return verify_sources(files, src.checksums);
}

void append_sample(CaDataset& ds, std::string id, Domain d, int64_t attribute) {
  ds.ids.push_back(std::move(id));
  ds.domains.push_back(d);
  ds.attributes.push_back(attribute);
}

std::vector<std::vector<int64_t>> by_label(const std::vector<int64_t>& labels, int64_t classes) {
  std::vector<std::vector<int64_t>> out(static_cast<size_t>(classes));
  for (size_t i = 0; i < labels.size(); ++i) out[static_cast<size_t>(labels[i])].push_back(static_cast<int64_t>(i));
  return out;
}

}  // namespace

CaDataset build_cifar_mnist(const DataSources& src, uint64_t seed, Split split) {
  auto cifar_files = cifar10_files(src.cifar_dir, split);
  auto digit_files = mnist_files(src.mnist_dir, split);
  std::vector<fs::path> all = cifar_files;
  all.insert(all.end(), digit_files.begin(), digit_files.end());
  CaDataset ds;
  ds.name = "cifar_mnist";
  ds.split = split;
  ds.provenance.seed = seed;
  ds.provenance.source_checksums = verify(all, src);

  const LabeledImages cifar = read_cifar10(src.cifar_dir, split);
  const LabeledImages mnist = read_mnist(digit_files[0], digit_files[1]);
  auto rng = stream(seed, split == Split::train ? 0x11 : 0x12);
  const std::string tag = to_string(split);

  std::vector<int64_t> order;          // CIFAR index per output sample
  std::vector<int64_t> digit_for;      // MNIST index per output sample, -1 for background
  if (split == Split::train) {
    constexpr int64_t kPerDomain = 25000;
    if (cifar.images.size(0) < 2 * kPerDomain)
      throw IngestionError("CIFAR-10 train split has " + std::to_string(cifar.images.size(0)) +
                           " images, needs 50000");
    auto perm = permutation(cifar.images.size(0), rng);
    for (int64_t i = 0; i < 2 * kPerDomain; ++i) {
      order.push_back(perm[i]);
      digit_for.push_back(i < kPerDomain ? -1 : uniform_int(rng, 0, mnist.images.size(0) - 1));
    }
  } else {
    constexpr int64_t kPerDigit = 1000;
    if (cifar.images.size(0) < 10 * kPerDigit)
      throw IngestionError("CIFAR-10 test split has " + std::to_string(cifar.images.size(0)) + " images, needs 10000");
    auto classes = by_label(mnist.labels, 10);
    std::vector<int64_t> digit_class;
    for (int64_t c = 0; c < 10; ++c) digit_class.insert(digit_class.end(), kPerDigit, c);
    std::shuffle(digit_class.begin(), digit_class.end(), rng);
    std::vector<std::vector<int64_t>> pools(10);
    std::vector<size_t> cursor(10, 0);
    for (int64_t c = 0; c < 10; ++c) {
      if (classes[c].empty()) throw IngestionError("MNIST test split has no digit " + std::to_string(c));
      pools[c] = classes[c];
      std::shuffle(pools[c].begin(), pools[c].end(), rng);
    }
    auto perm = permutation(cifar.images.size(0), rng);
    for (int64_t i = 0; i < 10 * kPerDigit; ++i) {
      const auto c = static_cast<size_t>(digit_class[i]);
      order.push_back(perm[i]);
      // Classes with fewer than 1000 test digits reuse instances cyclically.
      digit_for.push_back(pools[c][cursor[c]++ % pools[c].size()]);
    }
  }

  const int64_t n = static_cast<int64_t>(order.size());
  ds.pixels = torch::empty({n, 3, 64, 64}, torch::kUInt8);
  for (int64_t i = 0; i < n; ++i) {
    const bool target = digit_for[i] >= 0;
    const int64_t label = target ? mnist.labels[digit_for[i]] : -1;
    auto canvas = resize(cifar.images[order[i]], 64, 64).to(torch::kFloat32);
    std::string id = "cifar-" + tag + "-" + pad(order[i]);
    if (target) {
      auto digit = resize(mnist.images[digit_for[i]], 32, 32);
      const int64_t top = uniform_int(rng, 0, 32), left = uniform_int(rng, 0, 32);
      overlay_digit(canvas, digit, top, left);
      id += "+mnist-" + tag + "-" + pad(digit_for[i]);
    }
    ds.pixels[i].copy_(canvas.round().clamp(0, 255).to(torch::kUInt8));
    append_sample(ds, std::move(id), target ? Domain::target : Domain::background, label);
  }
  ds.validate();
  return ds;
}

CaDataset build_dsprites_mnist(const DataSources& src, uint64_t seed, Split split, const DspritesMnistOptions& opts) {
  const int64_t per_domain = split == Split::train ? opts.train_per_domain : opts.test_per_domain;
  if (opts.train_per_domain < 0 || opts.test_per_domain < 0) throw ConfigError("dsprites counts must be >= 0");
  auto digit_files = mnist_files(src.mnist_dir, split);
  if (!fs::exists(src.dsprites_npz)) throw IngestionError("missing source archive " + src.dsprites_npz.string());
  std::vector<fs::path> all = digit_files;
  all.push_back(src.dsprites_npz);

  CaDataset ds;
  ds.name = "dsprites_mnist";
  ds.split = split;
  ds.provenance.seed = seed;
  ds.provenance.source_checksums = verify(all, src);
  ds.factor_names = {"shape", "scale", "pos_x", "pos_y", "orientation"};

  const LabeledImages mnist = read_mnist(digit_files[0], digit_files[1]);
  auto classes = by_label(mnist.labels, 10);
  for (int d = 1; d <= 4; ++d)
    if (classes[d].empty()) throw IngestionError("MNIST split lacks digit " + std::to_string(d));

  // Sprites: one seeded permutation shared by both splits keeps their sprite
  // sets disjoint (train takes the head, test the following block).
  const torch::Tensor latents = read_dsprites_latent_classes(src.dsprites_npz);
  const int64_t n_sprites = latents.size(0);
  if (opts.train_per_domain + opts.test_per_domain > n_sprites)
    throw IngestionError("dSprites archive has " + std::to_string(n_sprites) + " sprites, needs " +
                         std::to_string(opts.train_per_domain + opts.test_per_domain));
  auto sprite_rng = stream(seed, 0x21);
  auto sprite_perm = permutation(n_sprites, sprite_rng);
  const int64_t first = split == Split::train ? 0 : opts.train_per_domain;
  std::vector<int64_t> chosen(sprite_perm.begin() + first, sprite_perm.begin() + first + per_domain);
  std::vector<int64_t> sorted = chosen;
  std::sort(sorted.begin(), sorted.end());
  const torch::Tensor sprites = read_dsprites_images(src.dsprites_npz, sorted);

  auto rng = stream(seed, split == Split::train ? 0x22 : 0x23);
  const std::string tag = to_string(split);
  const int64_t n = 2 * per_domain;
  ds.pixels = torch::empty({n, 1, 64, 64}, torch::kUInt8);
  ds.factors = torch::zeros({n, 5}, torch::kFloat64);
  // native column order: color, shape, scale, orientation, pos_x, pos_y
  const int64_t factor_cols[5] = {1, 2, 4, 5, 3};

  for (int64_t i = 0; i < n; ++i) {
    const bool target = i >= per_domain;
    auto canvas = torch::zeros({1, 64, 64}, torch::kUInt8);
    std::string id = "dsm-" + tag + "-" + pad(i);
    for (int d = 1; d <= 4; ++d) {
      const auto& pool = classes[d];
      const int64_t pick = pool[static_cast<size_t>(uniform_int(rng, 0, static_cast<int64_t>(pool.size()) - 1))];
      const int64_t top = d <= 2 ? 0 : 32, left = (d % 2 == 1) ? 0 : 32;
      canvas.index_put_({Slice(), Slice(top, top + 32), Slice(left, left + 32)}, resize(mnist.images[pick], 32, 32));
      id += (d == 1 ? "+mnist-" : ",") + pad(pick);
    }
    int64_t attribute = -1;
    if (target) {
      const int64_t sprite = chosen[i - per_domain];
      const auto pos = std::lower_bound(sorted.begin(), sorted.end(), sprite) - sorted.begin();
      canvas = torch::maximum(canvas, sprites[pos]);
      for (int f = 0; f < 5; ++f) ds.factors[i][f] = latents[sprite][factor_cols[f]].item<int64_t>();
      attribute = latents[sprite][1].item<int64_t>();
      id += "+sprite-" + pad(sprite, 6);
    }
    ds.pixels[i].copy_(canvas);
    append_sample(ds, std::move(id), target ? Domain::target : Domain::background, attribute);
  }
  ds.validate();
  return ds;
}

CaDataset load_celeba_accessories(const fs::path& root, Split split, const CelebaCounts& counts,
                                  const std::map<std::string, std::string>& checksums) {
  const fs::path attr_file = root / "list_attr_celeba.txt";
  if (!fs::exists(attr_file)) throw IngestionError("missing CelebA attribute file " + attr_file.string());
  CaDataset ds;
  ds.name = "celeba";
  ds.split = split;
  ds.provenance.source_checksums = verify_sources({attr_file}, checksums);

  const CelebaAttributes attrs = read_celeba_attributes(attr_file);
  const int glasses_col = attrs.column("Eyeglasses");
  const int hat_col = attrs.column("Wearing_Hat");

  std::vector<size_t> order(attrs.files.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return attrs.files[a] < attrs.files[b]; });

  std::vector<size_t> background, glasses, hat;
  for (auto i : order) {
    const bool g = attrs.rows[i][glasses_col] > 0, h = attrs.rows[i][hat_col] > 0;
    if (!g && !h) background.push_back(i);
    else if (g && !h) glasses.push_back(i);
    else if (h && !g) hat.push_back(i);
  }

  auto take = [&](const std::vector<size_t>& pool, int64_t skip, int64_t n, const char* what) {
    if (static_cast<int64_t>(pool.size()) < skip + n)
      throw IngestionError("CelebA " + to_string(split) + " split needs " + std::to_string(n) + " " + what +
                           " images after the first " + std::to_string(skip) + ", but only " +
                           std::to_string(pool.size()) + " exist (shortfall " +
                           std::to_string(skip + n - static_cast<int64_t>(pool.size())) + ")");
    return std::vector<size_t>(pool.begin() + skip, pool.begin() + skip + n);
  };

  struct Pick {
    size_t row;
    Domain domain;
    int64_t attribute;
  };
  std::vector<Pick> picks;
  if (split == Split::train) {
    for (auto r : take(background, 0, counts.train_background, "background"))
      picks.push_back({r, Domain::background, -1});
    for (auto r : take(glasses, 0, counts.train_per_accessory, "glasses-only")) picks.push_back({r, Domain::target, 0});
    for (auto r : take(hat, 0, counts.train_per_accessory, "hat-only")) picks.push_back({r, Domain::target, 1});
  } else {
    for (auto r : take(glasses, counts.train_per_accessory, counts.test_per_accessory, "glasses-only"))
      picks.push_back({r, Domain::target, 0});
    for (auto r : take(hat, counts.train_per_accessory, counts.test_per_accessory, "hat-only"))
      picks.push_back({r, Domain::target, 1});
  }

  const fs::path image_dir = root / "img_align_celeba";
  ds.pixels = torch::empty({static_cast<int64_t>(picks.size()), 3, 64, 64}, torch::kUInt8);
  for (size_t i = 0; i < picks.size(); ++i) {
    const std::string& file = attrs.files[picks[i].row];
    fs::path path = image_dir / file;
    if (!fs::exists(path)) path = (image_dir / file).replace_extension(".png");
    if (!fs::exists(path)) throw IngestionError("missing CelebA image " + (image_dir / file).string());
    auto img = read_image(path);
    if (img.size(0) == 1) img = img.expand({3, img.size(1), img.size(2)}).contiguous();
    ds.pixels[static_cast<int64_t>(i)].copy_(resize(center_crop(img, 140), 64, 64));
    append_sample(ds, fs::path(file).stem().string(), picks[i].domain, picks[i].attribute);
  }
  ds.validate();
  return ds;
}

CaSplits build_micro_ca(uint64_t seed, int64_t n_train, int64_t n_test) {
  if (n_train < 0 || n_test < 0) throw ConfigError("micro dataset sizes must be >= 0");
  auto make = [&](Split split, int64_t per_domain) {
    auto rng = stream(seed, split == Split::train ? 0x31 : 0x32);
    CaDataset ds;
    ds.name = "micro";
    ds.split = split;
    ds.provenance.seed = seed;
    const int64_t n = 2 * per_domain;
    // 4x4 control grid of dark intensities, bilinearly upsampled.
    std::vector<float> control(static_cast<size_t>(n * 16));
    std::uniform_real_distribution<float> level(0.0f, 60.0f);
    for (auto& v : control) v = level(rng);
    if (n == 0) {
      ds.pixels = torch::empty({0, 1, 32, 32}, torch::kUInt8);
      return ds;
    }
    auto grid = torch::from_blob(control.data(), {n, 1, 4, 4}, torch::kFloat32).clone();
    auto canvas = torch::nn::functional::interpolate(
        grid, torch::nn::functional::InterpolateFuncOptions()
                  .size(std::vector<int64_t>{32, 32})
                  .mode(torch::kBilinear)
                  .align_corners(true));
    ds.pixels = canvas.round().clamp(0, 255).to(torch::kUInt8).contiguous();
    const std::string tag = to_string(split);
    for (int64_t i = 0; i < n; ++i) {
      const bool target = i >= per_domain;
      int64_t quadrant = -1;
      if (target) {
        quadrant = uniform_int(rng, 0, 3);
        const int64_t top = (quadrant / 2) * 16 + uniform_int(rng, 0, 8);
        const int64_t left = (quadrant % 2) * 16 + uniform_int(rng, 0, 8);
        ds.pixels[i].index_put_({Slice(), Slice(top, top + 8), Slice(left, left + 8)}, 255);
      }
      append_sample(ds, "micro-" + tag + "-" + (target ? "tg-" : "bg-") + pad(i), target ? Domain::target : Domain::background,
                    quadrant);
    }
    ds.validate();
    return ds;
  };
  return CaSplits{make(Split::train, n_train), make(Split::test, n_test)};
}

// ---------------------------------------------------------------------------
// Named datasets + cache
// ---------------------------------------------------------------------------

const std::vector<std::string>& dataset_names() {
  static const std::vector<std::string> names = {"micro", "cifar_mnist", "dsprites_mnist", "celeba"};
  return names;
}

std::pair<int64_t, int64_t> native_shape(const std::string& name) {
  if (name == "micro") return {1, 32};
  if (name == "cifar_mnist") return {3, 64};
  if (name == "dsprites_mnist") return {1, 64};
  if (name == "celeba") return {3, 64};
  throw ConfigError("unknown dataset '" + name + "'");
}

CaDataset resized(const CaDataset& ds, int64_t side) {
  if (side == ds.image_size()) return ds;
  CaDataset out = ds;
  out.pixels = torch::empty({ds.size(), ds.channels(), side, side}, torch::kUInt8);
  for (int64_t i = 0; i < ds.size(); ++i) out.pixels[i].copy_(resize(ds.pixels[i], side, side));
  return out;
}

namespace {

CaDataset build_native(const DatasetSpec& spec, Split split) {
  if (spec.name == "micro") {
    auto s = build_micro_ca(spec.seed, spec.micro_train, spec.micro_test);
    return split == Split::train ? std::move(s.train) : std::move(s.test);
  }
  if (spec.name == "cifar_mnist") return build_cifar_mnist(spec.sources, spec.seed, split);
  if (spec.name == "dsprites_mnist") return build_dsprites_mnist(spec.sources, spec.seed, split, spec.dsprites);
  if (spec.name == "celeba")
    return load_celeba_accessories(spec.sources.celeba_root, split, spec.celeba, spec.sources.checksums);
  throw ConfigError("unknown dataset '" + spec.name + "'");
}

}  // namespace

CaDataset build_dataset(const DatasetSpec& spec, Split split) {
  auto ds = build_native(spec, split);
  if (spec.image_size > 0 && spec.image_size != ds.image_size()) return resized(ds, spec.image_size);
  return ds;
}

void save_dataset(const fs::path& dir, const CaDataset& ds) {
  ds.validate();
  fs::create_directories(dir);
  auto px = ds.pixels.contiguous();
  {
    std::ofstream os(dir / "pixels.bin", std::ios::binary);
    os.write(reinterpret_cast<const char*>(px.data_ptr<uint8_t>()), static_cast<std::streamsize>(px.numel()));
    if (!os) throw std::runtime_error("cannot write " + (dir / "pixels.bin").string());
  }
  auto j = index_json(ds);
  j["checksum"] = ds.checksum();
  std::ofstream os(dir / "index.json");
  os << j.dump() << '\n';
  if (!os) throw std::runtime_error("cannot write " + (dir / "index.json").string());
}

CaDataset load_dataset(const fs::path& dir) {
  std::ifstream is(dir / "index.json");
  if (!is) throw IngestionError("no dataset cache at " + dir.string());
  json j = json::parse(is);
  CaDataset ds;
  ds.name = j.at("name").get<std::string>();
  ds.split = split_from_string(j.at("split").get<std::string>());
  ds.provenance.seed = j.at("provenance").at("seed").get<uint64_t>();
  ds.provenance.source_checksums = j.at("provenance").at("source_checksums").get<std::map<std::string, std::string>>();
  ds.factor_names = j.at("factor_names").get<std::vector<std::string>>();
  auto shape = j.at("shape").get<std::vector<int64_t>>();
  ds.pixels = torch::empty(shape, torch::kUInt8);
  {
    std::ifstream px(dir / "pixels.bin", std::ios::binary);
    px.read(reinterpret_cast<char*>(ds.pixels.data_ptr<uint8_t>()), static_cast<std::streamsize>(ds.pixels.numel()));
    if (px.gcount() != ds.pixels.numel()) throw IngestionError("truncated pixel blob in " + dir.string());
  }
  const auto& samples = j.at("samples");
  const bool with_factors = !ds.factor_names.empty();
  if (with_factors) ds.factors = torch::zeros({shape[0], static_cast<int64_t>(ds.factor_names.size())}, torch::kFloat64);
  for (size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const auto& attr = s.at("attribute");
    append_sample(ds, s.at("id").get<std::string>(), domain_from_string(s.at("domain").get<std::string>()),
                  attr.is_null() ? -1 : attr.get<int64_t>());
    if (with_factors && s.contains("factors")) {
      auto f = s.at("factors").get<std::vector<double>>();
      ds.factors[static_cast<int64_t>(i)].copy_(torch::tensor(f, torch::kFloat64));
    }
  }
  ds.validate();
  if (j.contains("checksum") && j.at("checksum").get<std::string>() != ds.checksum())
    throw IngestionError("dataset cache " + dir.string() + " fails its checksum; rebuild it");
  return ds;
}

fs::path dataset_cache_dir(const fs::path& root, const DatasetSpec& spec, Split split) {
  std::string leaf = spec.name + "-seed" + std::to_string(spec.seed);
  if (spec.image_size > 0 && spec.image_size != native_shape(spec.name).second)
    leaf += "-" + std::to_string(spec.image_size) + "px";
  return root / leaf / to_string(split);
}

CaDataset load_or_build(const DatasetSpec& spec, Split split, const fs::path& cache_root, bool rebuild) {
  const auto dir = dataset_cache_dir(cache_root, spec, split);
  // Builder parameters that change the content; a cache built with others is stale.
  std::ostringstream key;
  key << spec.name << ' ' << spec.seed << ' ' << spec.image_size << ' ' << spec.micro_train << ' ' << spec.micro_test
      << ' ' << spec.dsprites.train_per_domain << ' ' << spec.dsprites.test_per_domain << ' '
      << spec.celeba.train_background << ' ' << spec.celeba.train_per_accessory << ' '
      << spec.celeba.test_per_accessory;
  const fs::path key_file = dir / "build_key.txt";
  if (!rebuild && fs::exists(dir / "index.json") && fs::exists(key_file)) {
    std::ifstream is(key_file);
    std::string stored;
    std::getline(is, stored);
    if (stored == key.str()) return load_dataset(dir);
  }
  auto ds = build_dataset(spec, split);
  save_dataset(dir, ds);
  std::ofstream os(key_file);
  os << key.str() << '\n';
  return ds;
}

}  // namespace dinfogan
