#include <algorithm>
#include <array>
#include <fstream>
#include <set>

#include <doctest.h>

#include "dinfogan/data.hpp"
#include "dinfogan/errors.hpp"
#include "support/fixtures.hpp"

using namespace dinfogan;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = DINFOGAN_FIXTURE_DIR;

DataSources full_sources() {
  DataSources s;
  s.mnist_dir = kFixtures / "mnist";
  s.cifar_dir = kFixtures / "cifar";
  s.dsprites_npz = kFixtures / "dsprites.npz";
  s.celeba_root = kFixtures / "celeba";
  return s;
}

std::array<int64_t, 4> quadrant_histogram(const CaDataset& ds) {
  std::array<int64_t, 4> h{};
  for (auto i : ds.indices(Domain::target)) ++h[static_cast<size_t>(ds.attributes[i])];
  return h;
}

// Quadrant of the bright square recovered from the pixels alone.
int64_t bright_quadrant(const torch::Tensor& img) {
  auto mask = (img[0] > kMicroBrightThreshold).nonzero();
  if (mask.size(0) == 0) return -1;
  const auto r = mask.select(1, 0).to(torch::kFloat64).mean().item<double>();
  const auto c = mask.select(1, 1).to(torch::kFloat64).mean().item<double>();
  return (r >= 16 ? 2 : 0) + (c >= 16 ? 1 : 0);
}

}  // namespace

TEST_CASE("micro dataset layout") {
  auto splits = build_micro_ca(3, 10000, 50);
  const auto& ds = splits.train;
  CHECK(ds.size() == 20000);
  CHECK(ds.count(Domain::background) == 10000);
  CHECK(ds.count(Domain::target) == 10000);
  CHECK(ds.pixels.sizes() == torch::IntArrayRef({20000, 1, 32, 32}));
  const auto h = quadrant_histogram(ds);
  for (auto v : h) CHECK(std::abs(static_cast<double>(v) / 10000.0 - 0.25) <= 0.02);
  auto bg = ds.images(ds.indices(Domain::background));
  CHECK(((bg + 1) * 127.5 > kMicroBrightThreshold).sum().item<int64_t>() == 0);
  for (int64_t i : {10000, 12345, 19999}) {
    CAPTURE(i);
    CHECK(bright_quadrant(ds.pixels[i]) == ds.attributes[i]);
    CHECK((ds.pixels[i][0] == 255).sum().item<int64_t>() == 64);
  }
  CHECK(splits.test.size() == 100);
  auto s = ds.sample(10001);
  CHECK(s.domain == Domain::target);
  CHECK(s.attribute.has_value());
  CHECK(s.image.min().item<double>() >= -1.0);
  CHECK(s.image.max().item<double>() == 1.0);
  CHECK_FALSE(ds.sample(0).attribute.has_value());
  CHECK_THROWS_AS(ds.sample(20000), ContractViolation);
  CHECK_THROWS_AS(build_micro_ca(1, -1, 2), ConfigError);
}

TEST_CASE("micro dataset is seed deterministic with disjoint split ids") {
  auto a = build_micro_ca(5, 300, 100), b = build_micro_ca(5, 300, 100), c = build_micro_ca(6, 300, 100);
  CHECK(a.train.checksum() == b.train.checksum());
  CHECK(torch::equal(a.test.pixels, b.test.pixels));
  CHECK(a.train.checksum() != c.train.checksum());
  std::set<std::string> ids(a.train.ids.begin(), a.train.ids.end());
  CHECK(ids.size() == a.train.ids.size());
  for (const auto& id : a.test.ids) CHECK(ids.count(id) == 0);
}

TEST_CASE("dataset validation and subsets") {
  auto ds = build_micro_ca(1, 10, 0).train;
  const std::vector<int64_t> idx = {0, 15, 3};
  auto sub = subset(ds, idx);
  CHECK(sub.size() == 3);
  CHECK(sub.ids[1] == ds.ids[15]);
  CHECK(torch::equal(sub.pixels[1], ds.pixels[15]));
  CHECK(sub.count(Domain::target) == 1);
  auto broken = ds;
  broken.attributes[0] = 2;
  CHECK_THROWS_WITH_AS(broken.validate(), doctest::Contains("carries a target attribute"), ContractViolation);
  broken = ds;
  broken.ids.pop_back();
  CHECK_THROWS_AS(broken.validate(), ContractViolation);
  // The checksum covers both the index and the pixels.
  auto edited = ds;
  edited.pixels = ds.pixels.clone();
  edited.pixels[2][0][0][0] = 1 + edited.pixels[2][0][0][0].item<int>();
  CHECK(edited.checksum() != ds.checksum());
  edited = ds;
  edited.ids[0] = "renamed";
  CHECK(edited.checksum() != ds.checksum());
}

TEST_CASE("cifar-mnist builder on full-size sources") {
  const auto src = full_sources();
  auto test = build_cifar_mnist(src, 7, Split::test);
  CHECK(test.size() == 10000);
  CHECK(test.count(Domain::target) == 10000);
  std::array<int64_t, 10> per_digit{};
  for (auto a : test.attributes) ++per_digit[static_cast<size_t>(a)];
  for (auto v : per_digit) CHECK(v == 1000);
  CHECK(test.pixels.sizes() == torch::IntArrayRef({10000, 3, 64, 64}));
  CHECK(test.ids[0].rfind("cifar-test-", 0) == 0);
  CHECK(test.ids[0].find("+mnist-test-") != std::string::npos);
  CHECK(test.provenance.source_checksums.size() == 3);
  auto again = build_cifar_mnist(src, 7, Split::test);
  CHECK(again.checksum() == test.checksum());

  auto bad = src;
  bad.checksums["test_batch.bin"] = std::string(64, 'f');
  CHECK_THROWS_WITH_AS(build_cifar_mnist(bad, 7, Split::test), doctest::Contains("test_batch.bin"), IngestionError);
  const auto small = fixtures::temp_dir("cifar-small");
  fixtures::write_cifar10(small, 50, 10, 1);
  auto tiny = src;
  tiny.cifar_dir = small;
  CHECK_THROWS_WITH_AS(build_cifar_mnist(tiny, 7, Split::train), doctest::Contains("needs 50000"), IngestionError);
  fs::remove_all(small);
}

TEST_CASE("dsprites-mnist builder") {
  const auto dir = fixtures::temp_dir("dsm");
  fixtures::write_mnist(dir / "mnist", 200, 100, false, 2);
  fixtures::write_dsprites(dir / "d.npz", 90, true, 4);
  DataSources src;
  src.mnist_dir = dir / "mnist";
  src.dsprites_npz = dir / "d.npz";
  DspritesMnistOptions opts{60, 25};
  auto train = build_dsprites_mnist(src, 1, Split::train, opts);
  auto test = build_dsprites_mnist(src, 1, Split::test, opts);
  CHECK(train.size() == 120);
  CHECK(test.size() == 50);
  CHECK(train.count(Domain::target) == 60);
  CHECK(train.has_factors());
  CHECK(train.factors.sizes() == torch::IntArrayRef({120, 5}));
  CHECK(train.factor_names.front() == "shape");
  CHECK(train.pixels.sizes() == torch::IntArrayRef({120, 1, 64, 64}));
  auto sprite_of = [](const std::string& id) { return id.substr(id.find("+sprite-")); };
  std::set<std::string> train_sprites;
  for (auto i : train.indices(Domain::target)) train_sprites.insert(sprite_of(train.ids[i]));
  CHECK(train_sprites.size() == 60);
  for (auto i : test.indices(Domain::target)) CHECK(train_sprites.count(sprite_of(test.ids[i])) == 0);
  for (auto i : train.indices(Domain::target)) CHECK(train.attributes[i] == train.factors[i][0].item<int64_t>());
  // Targets keep the background digits and add sprite pixels on top.
  const auto t = train.indices(Domain::target).front();
  CHECK((train.pixels[t] == 255).sum().item<int64_t>() > 0);
  CHECK(build_dsprites_mnist(src, 1, Split::train, opts).checksum() == train.checksum());
  CHECK_THROWS_WITH_AS(build_dsprites_mnist(src, 1, Split::train, {80, 20}), doctest::Contains("needs 100"),
                       IngestionError);
  src.dsprites_npz = dir / "none.npz";
  CHECK_THROWS_AS(build_dsprites_mnist(src, 1, Split::train, opts), IngestionError);
  fs::remove_all(dir);
}

TEST_CASE("celeba accessory partitions") {
  const auto dir = fixtures::temp_dir("celeba");
  fixtures::write_celeba(dir, {30, 20, 20, 5, 48, 56}, 3);
  const CelebaCounts counts{25, 12, 8};
  auto train = load_celeba_accessories(dir, Split::train, counts);
  auto test = load_celeba_accessories(dir, Split::test, counts);
  CHECK(train.size() == 49);
  CHECK(train.count(Domain::background) == 25);
  CHECK(test.size() == 16);
  CHECK(test.count(Domain::background) == 0);
  CHECK(train.pixels.sizes() == torch::IntArrayRef({49, 3, 64, 64}));
  std::set<std::string> seen(train.ids.begin(), train.ids.end());
  for (const auto& id : test.ids) CHECK(seen.count(id) == 0);
  // Ascending ids within each partition.
  for (int64_t attr : {0, 1}) {
    std::vector<std::string> ids;
    for (int64_t i = 0; i < train.size(); ++i)
      if (train.attributes[i] == attr) ids.push_back(train.ids[i]);
    CHECK(std::is_sorted(ids.begin(), ids.end()));
  }
  try {
    load_celeba_accessories(dir, Split::test, {25, 12, 9});
    FAIL("expected a shortfall");
  } catch (const IngestionError& e) {
    CHECK(std::string(e.what()).find("shortfall 1") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("resizing and named builders") {
  CHECK(native_shape("micro") == std::pair<int64_t, int64_t>{1, 32});
  CHECK(native_shape("celeba") == std::pair<int64_t, int64_t>{3, 64});
  CHECK_THROWS_AS(native_shape("imagenet"), ConfigError);
  DatasetSpec spec;
  spec.micro_train = 20;
  spec.micro_test = 5;
  spec.image_size = 64;
  auto ds = build_dataset(spec, Split::test);
  CHECK(ds.pixels.sizes() == torch::IntArrayRef({10, 1, 64, 64}));
  auto half = resized(ds, 32);
  CHECK(half.image_size() == 32);
  CHECK(half.ids == ds.ids);
}

TEST_CASE("dataset cache round trip") {
  const auto root = fixtures::temp_dir("cache");
  DatasetSpec spec;
  spec.micro_train = 40;
  spec.micro_test = 10;
  spec.seed = 9;
  CHECK(dataset_cache_dir(root, spec, Split::train) == root / "micro-seed9" / "train");
  auto built = load_or_build(spec, Split::train, root);
  CHECK(fs::exists(root / "micro-seed9" / "train" / "index.json"));
  auto cached = load_dataset(dataset_cache_dir(root, spec, Split::train));
  CHECK(cached.checksum() == built.checksum());
  CHECK(cached.ids == built.ids);
  CHECK(cached.attributes == built.attributes);
  CHECK(cached.provenance.seed == 9);
  CHECK(load_or_build(spec, Split::train, root).checksum() == built.checksum());

  // A changed spec is rebuilt rather than served stale.
  spec.micro_train = 41;
  CHECK(load_or_build(spec, Split::train, root).size() == 82);

  // Corruption is detected by the stored checksum.
  const auto blob = dataset_cache_dir(root, spec, Split::train) / "pixels.bin";
  {
    std::fstream f(blob, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(5);
    f.put(static_cast<char>(200));
  }
  CHECK_THROWS_WITH_AS(load_dataset(blob.parent_path()), doctest::Contains("checksum"), IngestionError);
  CHECK(load_or_build(spec, Split::train, root, true).size() == 82);
  spec.image_size = 64;
  CHECK(dataset_cache_dir(root, spec, Split::test) == root / "micro-seed9-64px" / "test");
  fs::remove_all(root);
}
