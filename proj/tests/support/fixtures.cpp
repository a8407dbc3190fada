#include "fixtures.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

#include <zlib.h>

#include "dinfogan/image_io.hpp"

namespace fs = std::filesystem;

namespace fixtures {

namespace {

void put_be32(std::vector<uint8_t>& out, uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<uint8_t>(v >> s));
}

void put_le(std::vector<uint8_t>& out, uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void write_file(const fs::path& path, const std::vector<uint8_t>& bytes, bool gzip) {
  if (gzip) {
    gzFile f = gzopen(path.string().c_str(), "wb");
    if (f == nullptr) throw std::runtime_error("cannot open " + path.string());
    gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
    gzclose(f);
    return;
  }
  std::ofstream os(path, std::ios::binary);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("cannot write " + path.string());
}

void draw_digit(uint8_t* img, int64_t label, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> jitter(-2, 2);
  const int dx = jitter(rng), dy = jitter(rng);
  std::memset(img, 0, 28 * 28);
  // A few strokes whose layout depends on the label.
  for (int k = 0; k <= label; ++k) {
    const int row = 4 + (k * 5 + static_cast<int>(label)) % 20 + dy;
    const int col0 = 6 + (k * 3) % 8 + dx;
    for (int c = col0; c < col0 + 12; ++c)
      for (int r = row; r < row + 2; ++r)
        if (r >= 0 && r < 28 && c >= 0 && c < 28) img[r * 28 + c] = static_cast<uint8_t>(200 + 5 * k % 55);
  }
}

void write_mnist_split(const fs::path& dir, const std::string& prefix, int64_t n, bool gzip, std::mt19937_64& rng,
                       int64_t short_five) {
  std::vector<int64_t> labels;
  for (int64_t i = 0; labels.size() < static_cast<size_t>(n); ++i) {
    const int64_t l = i % 10;
    if (l == 5 && short_five > 0) {
      --short_five;
      continue;
    }
    labels.push_back(l);
  }
  std::shuffle(labels.begin(), labels.end(), rng);
  std::vector<uint8_t> img, lab;
  put_be32(img, 2051);
  put_be32(img, static_cast<uint32_t>(n));
  put_be32(img, 28);
  put_be32(img, 28);
  put_be32(lab, 2049);
  put_be32(lab, static_cast<uint32_t>(n));
  std::vector<uint8_t> buf(28 * 28);
  for (auto l : labels) {
    draw_digit(buf.data(), l, rng);
    img.insert(img.end(), buf.begin(), buf.end());
    lab.push_back(static_cast<uint8_t>(l));
  }
  const std::string ext = gzip ? ".gz" : "";
  write_file(dir / (prefix + "-images-idx3-ubyte" + ext), img, gzip);
  write_file(dir / (prefix + "-labels-idx1-ubyte" + ext), lab, gzip);
}

uint32_t crc(const std::vector<uint8_t>& data) {
  return static_cast<uint32_t>(crc32(0L, data.data(), static_cast<uInt>(data.size())));
}

std::vector<uint8_t> raw_deflate(const std::vector<uint8_t>& in) {
  z_stream zs{};
  if (deflateInit2(&zs, 6, Z_DEFLATED, -15, 8, Z_DEFAULT_STRATEGY) != Z_OK) throw std::runtime_error("deflateInit2");
  std::vector<uint8_t> out(deflateBound(&zs, static_cast<uLong>(in.size())));
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  if (deflate(&zs, Z_FINISH) != Z_STREAM_END) throw std::runtime_error("deflate");
  out.resize(zs.total_out);
  deflateEnd(&zs);
  return out;
}

}  // namespace

void write_mnist(const fs::path& dir, int64_t n_train, int64_t n_test, bool gzip, uint64_t seed, int64_t short_five) {
  fs::create_directories(dir);
  std::mt19937_64 rng(seed);
  write_mnist_split(dir, "train", n_train, gzip, rng, 0);
  write_mnist_split(dir, "t10k", n_test, gzip, rng, short_five);
}

void write_cifar10(const fs::path& dir, int64_t n_train, int64_t n_test, uint64_t seed) {
  fs::create_directories(dir);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> px(0, 255);
  auto batch = [&](const fs::path& path, int64_t n) {
    std::vector<uint8_t> bytes;
    bytes.reserve(static_cast<size_t>(n * 3073));
    for (int64_t i = 0; i < n; ++i) {
      bytes.push_back(static_cast<uint8_t>(i % 10));
      // Coarse 4x4 colour blocks so resizing has structure to preserve.
      uint8_t blocks[3][4][4];
      for (auto& c : blocks)
        for (auto& r : c)
          for (auto& v : r) v = static_cast<uint8_t>(px(rng));
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 32; ++y)
          for (int x = 0; x < 32; ++x) bytes.push_back(blocks[c][y / 8][x / 8]);
    }
    write_file(path, bytes, false);
  };
  for (int k = 1; k <= 5; ++k) batch(dir / ("data_batch_" + std::to_string(k) + ".bin"), n_train / 5);
  batch(dir / "test_batch.bin", n_test);
}

std::vector<uint8_t> npy_bytes(const NpyMember& m) {
  std::string shape = "(";
  for (size_t i = 0; i < m.shape.size(); ++i) {
    if (i > 0) shape += ", ";
    shape += std::to_string(m.shape[i]);
  }
  shape += m.shape.size() == 1 ? ",)" : ")";
  std::string header = "{'descr': '" + m.descr + "', 'fortran_order': False, 'shape': " + shape + ", }";
  const size_t total = 10 + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header.push_back('\n');
  std::vector<uint8_t> out = {0x93, 'N', 'U', 'M', 'P', 'Y', 1, 0};
  put_le(out, header.size(), 2);
  out.insert(out.end(), header.begin(), header.end());
  out.insert(out.end(), m.payload.begin(), m.payload.end());
  return out;
}

void write_npz(const fs::path& path, const std::vector<NpyMember>& members, bool deflate_members) {
  std::vector<uint8_t> out, central;
  uint16_t count = 0;
  for (const auto& m : members) {
    const auto raw = npy_bytes(m);
    const auto data = deflate_members ? raw_deflate(raw) : raw;
    const uint16_t method = deflate_members ? 8 : 0;
    const uint32_t offset = static_cast<uint32_t>(out.size());
    const uint32_t c = crc(raw);
    put_le(out, 0x04034b50, 4);
    put_le(out, 20, 2);
    put_le(out, 0, 2);
    put_le(out, method, 2);
    put_le(out, 0, 4);  // time/date
    put_le(out, c, 4);
    put_le(out, data.size(), 4);
    put_le(out, raw.size(), 4);
    put_le(out, m.name.size(), 2);
    put_le(out, 0, 2);
    out.insert(out.end(), m.name.begin(), m.name.end());
    out.insert(out.end(), data.begin(), data.end());

    put_le(central, 0x02014b50, 4);
    put_le(central, 20, 2);
    put_le(central, 20, 2);
    put_le(central, 0, 2);
    put_le(central, method, 2);
    put_le(central, 0, 4);
    put_le(central, c, 4);
    put_le(central, data.size(), 4);
    put_le(central, raw.size(), 4);
    put_le(central, m.name.size(), 2);
    put_le(central, 0, 2);  // extra
    put_le(central, 0, 2);  // comment
    put_le(central, 0, 2);  // disk
    put_le(central, 0, 2);  // internal attrs
    put_le(central, 0, 4);  // external attrs
    put_le(central, offset, 4);
    central.insert(central.end(), m.name.begin(), m.name.end());
    ++count;
  }
  const uint32_t cd_offset = static_cast<uint32_t>(out.size());
  out.insert(out.end(), central.begin(), central.end());
  put_le(out, 0x06054b50, 4);
  put_le(out, 0, 2);
  put_le(out, 0, 2);
  put_le(out, count, 2);
  put_le(out, count, 2);
  put_le(out, central.size(), 4);
  put_le(out, cd_offset, 4);
  put_le(out, 0, 2);
  write_file(path, out, false);
}

void write_dsprites(const fs::path& path, int64_t n, bool deflate_members, uint64_t seed) {
  // Full product has 3*6*40*32*32 = 737,280 combinations; take a seeded
  // sample of n of them in product order.
  constexpr int64_t kShapes = 3, kScales = 6, kOrient = 40, kPos = 32;
  const int64_t total = kShapes * kScales * kOrient * kPos * kPos;
  std::mt19937_64 rng(seed);
  std::vector<int64_t> picks;
  std::uniform_int_distribution<int64_t> draw(0, total - 1);
  while (static_cast<int64_t>(picks.size()) < n) picks.push_back(draw(rng));
  std::sort(picks.begin(), picks.end());

  std::vector<uint8_t> latents, images;
  for (auto code : picks) {
    int64_t rem = code;
    const int64_t pos_y = rem % kPos;
    rem /= kPos;
    const int64_t pos_x = rem % kPos;
    rem /= kPos;
    const int64_t orient = rem % kOrient;
    rem /= kOrient;
    const int64_t scale = rem % kScales;
    const int64_t shape = rem / kScales;
    for (int64_t v : {int64_t{0}, shape, scale, orient, pos_x, pos_y}) put_le(latents, static_cast<uint64_t>(v), 8);
    std::vector<uint8_t> img(64 * 64, 0);
    const int64_t half = 3 + scale;
    const int64_t cx = 8 + pos_x * 48 / 31, cy = 8 + pos_y * 48 / 31;
    for (int64_t y = cy - half; y <= cy + half; ++y)
      for (int64_t x = cx - half; x <= cx + half; ++x) {
        if (x < 0 || y < 0 || x >= 64 || y >= 64) continue;
        const int64_t dx = std::abs(x - cx), dy = std::abs(y - cy);
        const bool inside = shape == 0 ? true : shape == 1 ? dx + dy <= half : dx * dx + dy * dy <= half * half;
        if (inside) img[y * 64 + x] = 1;
      }
    images.insert(images.end(), img.begin(), img.end());
  }
  write_npz(path,
            {NpyMember{"imgs.npy", "|u1", {n, 64, 64}, images},
             NpyMember{"latents_classes.npy", "<i8", {n, 6}, latents}},
            deflate_members);
}

void write_celeba(const fs::path& root, const CelebaLayout& layout, uint64_t seed) {
  const fs::path img_dir = root / "img_align_celeba";
  fs::create_directories(img_dir);
  std::vector<std::pair<bool, bool>> pattern;  // (glasses, hat)
  pattern.insert(pattern.end(), layout.plain, {false, false});
  pattern.insert(pattern.end(), layout.glasses, {true, false});
  pattern.insert(pattern.end(), layout.hat, {false, true});
  pattern.insert(pattern.end(), layout.both, {true, true});
  std::mt19937_64 rng(seed);
  std::shuffle(pattern.begin(), pattern.end(), rng);

  std::ofstream attr(root / "list_attr_celeba.txt");
  attr << pattern.size() << '\n';
  attr << "5_o_Clock_Shadow Eyeglasses Smiling Wearing_Hat Young \n";
  std::uniform_int_distribution<int> coin(0, 1), px(0, 255);
  for (size_t i = 0; i < pattern.size(); ++i) {
    char name[16];
    std::snprintf(name, sizeof name, "%06zu.jpg", i + 1);
    auto sign = [](bool b) { return b ? " 1" : "-1"; };
    attr << name << ' ' << sign(coin(rng)) << ' ' << sign(pattern[i].first) << ' ' << sign(coin(rng)) << ' '
         << sign(pattern[i].second) << ' ' << sign(coin(rng)) << '\n';
    auto img = torch::full({3, layout.height, layout.width}, px(rng), torch::kUInt8);
    if (pattern[i].first) img.index_put_({torch::indexing::Slice(), torch::indexing::Slice(20, 26)}, 10);
    if (pattern[i].second) img.index_put_({torch::indexing::Slice(), torch::indexing::Slice(0, 12)}, 240);
    dinfogan::write_jpeg(img_dir / name, img, 90);
  }
}

fs::path temp_dir(const std::string& tag) {
  static std::mt19937_64 rng(std::random_device{}());
  const fs::path dir = fs::temp_directory_path() / ("dinfogan-" + tag + "-" + std::to_string(rng() % 1000000000));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace fixtures
