#include "dinfogan/sources.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>
#include <zlib.h>

#include "dinfogan/errors.hpp"

namespace dinfogan {

namespace fs = std::filesystem;

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw ConfigError("unknown split '" + s + "'");
}

// ---------------------------------------------------------------------------
// MNIST
// ---------------------------------------------------------------------------

namespace {

class GzReader {
 public:
  explicit GzReader(const fs::path& path) : path_(path), f_(gzopen(path.c_str(), "rb")) {
    if (!f_) throw IngestionError("cannot open " + path.string());
  }
  ~GzReader() {
    if (f_) gzclose(f_);
  }
  GzReader(const GzReader&) = delete;
  GzReader& operator=(const GzReader&) = delete;

  void read(void* dst, size_t n) {
    auto* p = static_cast<char*>(dst);
    while (n > 0) {
      const unsigned chunk = static_cast<unsigned>(std::min<size_t>(n, 1u << 30));
      const int got = gzread(f_, p, chunk);
      if (got <= 0) throw IngestionError("truncated or corrupt file " + path_.string());
      p += got;
      n -= static_cast<size_t>(got);
    }
  }

  uint32_t be32() {
    unsigned char b[4];
    read(b, 4);
    return (uint32_t{b[0]} << 24) | (uint32_t{b[1]} << 16) | (uint32_t{b[2]} << 8) | uint32_t{b[3]};
  }

 private:
  fs::path path_;
  gzFile f_;
};

fs::path find_with_optional_gz(const fs::path& dir, const std::string& name) {
  if (fs::exists(dir / name)) return dir / name;
  if (fs::exists(dir / (name + ".gz"))) return dir / (name + ".gz");
  throw IngestionError("missing source archive " + (dir / name).string() + "[.gz]");
}

}  // namespace

LabeledImages read_mnist(const fs::path& images_file, const fs::path& labels_file) {
  GzReader imgs(images_file);
  if (imgs.be32() != 2051) throw IngestionError("bad MNIST image magic in " + images_file.string());
  const int64_t n = imgs.be32(), rows = imgs.be32(), cols = imgs.be32();
  LabeledImages out;
  out.images = torch::empty({n, 1, rows, cols}, torch::kUInt8);
  imgs.read(out.images.data_ptr<uint8_t>(), static_cast<size_t>(n * rows * cols));

  GzReader labels(labels_file);
  if (labels.be32() != 2049) throw IngestionError("bad MNIST label magic in " + labels_file.string());
  if (static_cast<int64_t>(labels.be32()) != n)
    throw IngestionError("MNIST image/label counts differ in " + labels_file.string());
  std::vector<uint8_t> raw(static_cast<size_t>(n));
  labels.read(raw.data(), raw.size());
  out.labels.assign(raw.begin(), raw.end());
  return out;
}

std::vector<fs::path> mnist_files(const fs::path& dir, Split split) {
  const std::string prefix = split == Split::train ? "train" : "t10k";
  return {find_with_optional_gz(dir, prefix + "-images-idx3-ubyte"),
          find_with_optional_gz(dir, prefix + "-labels-idx1-ubyte")};
}

LabeledImages read_mnist_split(const fs::path& dir, Split split) {
  auto files = mnist_files(dir, split);
  return read_mnist(files[0], files[1]);
}

// ---------------------------------------------------------------------------
// CIFAR-10
// ---------------------------------------------------------------------------

std::vector<fs::path> cifar10_files(const fs::path& dir, Split split) {
  std::vector<fs::path> files;
  if (split == Split::train) {
    for (int i = 1; i <= 5; ++i) files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
  } else {
    files.push_back(dir / "test_batch.bin");
  }
  for (const auto& f : files)
    if (!fs::exists(f)) throw IngestionError("missing source archive " + f.string());
  return files;
}

LabeledImages read_cifar10(const fs::path& dir, Split split) {
  constexpr int64_t kRecord = 1 + 3 * 32 * 32;
  std::vector<torch::Tensor> parts;
  LabeledImages out;
  for (const auto& file : cifar10_files(dir, split)) {
    std::ifstream is(file, std::ios::binary);
    const auto size = static_cast<int64_t>(fs::file_size(file));
    if (size % kRecord != 0) throw IngestionError("CIFAR batch has a partial record: " + file.string());
    const int64_t n = size / kRecord;
    std::vector<uint8_t> raw(static_cast<size_t>(size));
    is.read(reinterpret_cast<char*>(raw.data()), size);
    if (!is) throw IngestionError("cannot read " + file.string());
    auto images = torch::empty({n, 3, 32, 32}, torch::kUInt8);
    auto* dst = images.data_ptr<uint8_t>();
    for (int64_t i = 0; i < n; ++i) {
      const uint8_t* rec = raw.data() + i * kRecord;
      if (rec[0] > 9) throw IngestionError("CIFAR label out of range in " + file.string());
      out.labels.push_back(rec[0]);
      std::memcpy(dst + i * (kRecord - 1), rec + 1, kRecord - 1);
    }
    parts.push_back(images);
  }
  out.images = torch::cat(parts, 0);
  return out;
}

// ---------------------------------------------------------------------------
// npy / npz
// ---------------------------------------------------------------------------

int64_t NpyHeader::count() const {
  int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

size_t NpyHeader::item_size() const {
  if (descr.size() < 3) throw IngestionError("bad npy dtype '" + descr + "'");
  return static_cast<size_t>(std::stoi(descr.substr(2)));
}

NpyHeader parse_npy_header(std::string_view dict) {
  auto value_after = [&](std::string_view key) -> std::string_view {
    auto pos = dict.find(key);
    if (pos == std::string_view::npos) throw IngestionError("npy header lacks " + std::string(key));
    pos = dict.find(':', pos + key.size());
    if (pos == std::string_view::npos) throw IngestionError("malformed npy header");
    auto rest = dict.substr(pos + 1);
    while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
    return rest;
  };
  NpyHeader h;
  auto d = value_after("'descr'");
  if (d.empty() || (d.front() != '\'' && d.front() != '"')) throw IngestionError("malformed npy descr");
  const char quote = d.front();
  auto end = d.find(quote, 1);
  h.descr = std::string(d.substr(1, end - 1));
  h.fortran_order = value_after("'fortran_order'").starts_with("True");
  auto s = value_after("'shape'");
  if (s.empty() || s.front() != '(') throw IngestionError("malformed npy shape");
  auto close = s.find(')');
  std::string inner(s.substr(1, close - 1));
  std::stringstream ss(inner);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    auto first = tok.find_first_not_of(' ');
    if (first == std::string::npos) continue;
    h.shape.push_back(std::stoll(tok.substr(first)));
  }
  return h;
}

namespace {

uint16_t le16(const uint8_t* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }
uint32_t le32(const uint8_t* p) {
  return uint32_t{p[0]} | (uint32_t{p[1]} << 8) | (uint32_t{p[2]} << 16) | (uint32_t{p[3]} << 24);
}
uint64_t le64(const uint8_t* p) { return uint64_t{le32(p)} | (uint64_t{le32(p + 4)} << 32); }

std::vector<uint8_t> read_at(std::ifstream& is, uint64_t offset, size_t n) {
  std::vector<uint8_t> buf(n);
  is.clear();
  is.seekg(static_cast<std::streamoff>(offset));
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(is.gcount()) != n) throw IngestionError("truncated zip archive");
  return buf;
}

// Reassembles the byte stream of one .npy member into header + payload.
class NpyStreamParser {
 public:
  NpyStreamParser(const std::function<void(const NpyHeader&)>& on_header,
                  const std::function<void(int64_t, const uint8_t*, size_t)>& on_data)
      : on_header_(on_header), on_data_(on_data) {}

  void feed(const uint8_t* p, size_t n) {
    while (!header_done_ && n > 0) {
      const size_t take = std::min(n, header_need() - prefix_.size());
      prefix_.insert(prefix_.end(), p, p + take);
      p += take;
      n -= take;
      if (prefix_.size() == header_need()) finish_header();
    }
    if (header_done_ && n > 0) {
      on_data_(offset_, p, n);
      offset_ += static_cast<int64_t>(n);
    }
  }

  bool header_done() const { return header_done_; }

 private:
  // Bytes needed for the preamble, then for the full header once its length is known.
  size_t header_need() const {
    if (prefix_.size() < 10) return 10;
    if (std::memcmp(prefix_.data(), "\x93NUMPY", 6) != 0) throw IngestionError("member is not an .npy array");
    const uint8_t major = prefix_[6];
    if (major == 1) return 10 + le16(prefix_.data() + 8);
    if (prefix_.size() < 12) return 12;
    return 12 + le32(prefix_.data() + 8);
  }

  void finish_header() {
    const size_t start = prefix_[6] == 1 ? 10 : 12;
    std::string_view dict(reinterpret_cast<const char*>(prefix_.data()) + start, prefix_.size() - start);
    NpyHeader h = parse_npy_header(dict);
    if (h.fortran_order) throw IngestionError("fortran-ordered npy arrays are not supported");
    header_done_ = true;
    on_header_(h);
  }

  const std::function<void(const NpyHeader&)>& on_header_;
  const std::function<void(int64_t, const uint8_t*, size_t)>& on_data_;
  std::vector<uint8_t> prefix_;
  bool header_done_ = false;
  int64_t offset_ = 0;
};

}  // namespace

NpzFile::NpzFile(fs::path path) : path_(std::move(path)) {
  std::ifstream is(path_, std::ios::binary);
  if (!is) throw IngestionError("missing source archive " + path_.string());
  const uint64_t size = fs::file_size(path_);
  const uint64_t tail_len = std::min<uint64_t>(size, 65536 + 22);
  auto tail = read_at(is, size - tail_len, static_cast<size_t>(tail_len));
  int64_t eocd = -1;
  for (int64_t i = static_cast<int64_t>(tail.size()) - 22; i >= 0; --i) {
    if (le32(tail.data() + i) == 0x06054b50) {
      eocd = i;
      break;
    }
  }
  if (eocd < 0) throw IngestionError("not a zip archive: " + path_.string());
  uint64_t count = le16(tail.data() + eocd + 10);
  uint64_t cd_size = le32(tail.data() + eocd + 12);
  uint64_t cd_offset = le32(tail.data() + eocd + 16);
  if (eocd >= 20 && le32(tail.data() + eocd - 20) == 0x07064b50) {
    const uint64_t z64_off = le64(tail.data() + eocd - 20 + 8);
    auto z64 = read_at(is, z64_off, 56);
    if (le32(z64.data()) != 0x06064b50) throw IngestionError("corrupt zip64 record in " + path_.string());
    count = le64(z64.data() + 32);
    cd_size = le64(z64.data() + 40);
    cd_offset = le64(z64.data() + 48);
  }
  auto cd = read_at(is, cd_offset, static_cast<size_t>(cd_size));
  size_t pos = 0;
  for (uint64_t i = 0; i < count; ++i) {
    if (pos + 46 > cd.size() || le32(cd.data() + pos) != 0x02014b50)
      throw IngestionError("corrupt zip central directory in " + path_.string());
    const uint8_t* h = cd.data() + pos;
    Entry e;
    e.method = le16(h + 10);
    e.compressed_size = le32(h + 20);
    e.uncompressed_size = le32(h + 24);
    const uint16_t name_len = le16(h + 28), extra_len = le16(h + 30), comment_len = le16(h + 32);
    e.local_header_offset = le32(h + 42);
    std::string name(reinterpret_cast<const char*>(h + 46), name_len);
    const uint8_t* extra = h + 46 + name_len;
    for (size_t x = 0; x + 4 <= extra_len;) {
      const uint16_t id = le16(extra + x), len = le16(extra + x + 2);
      if (id == 0x0001) {
        const uint8_t* f = extra + x + 4;
        if (e.uncompressed_size == 0xFFFFFFFFu) e.uncompressed_size = le64(f), f += 8;
        if (e.compressed_size == 0xFFFFFFFFu) e.compressed_size = le64(f), f += 8;
        if (e.local_header_offset == 0xFFFFFFFFu) e.local_header_offset = le64(f);
      }
      x += 4u + len;
    }
    if (e.method != 0 && e.method != 8)
      throw IngestionError("unsupported zip compression method " + std::to_string(e.method) + " in " + path_.string());
    entries_[name] = e;
    pos += 46u + name_len + extra_len + comment_len;
  }
}

std::vector<std::string> NpzFile::members() const {
  std::vector<std::string> out;
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

bool NpzFile::contains(const std::string& member) const { return entries_.count(member) > 0; }

void NpzFile::stream(const std::string& member, const std::function<void(const NpyHeader&)>& on_header,
                     const std::function<void(int64_t, const uint8_t*, size_t)>& on_data) const {
  auto it = entries_.find(member);
  if (it == entries_.end()) throw IngestionError("archive " + path_.string() + " has no member " + member);
  const Entry& e = it->second;
  std::ifstream is(path_, std::ios::binary);
  auto local = read_at(is, e.local_header_offset, 30);
  if (le32(local.data()) != 0x04034b50) throw IngestionError("corrupt zip local header in " + path_.string());
  const uint64_t data_start = e.local_header_offset + 30 + le16(local.data() + 26) + le16(local.data() + 28);
  is.seekg(static_cast<std::streamoff>(data_start));

  NpyStreamParser parser(on_header, on_data);
  constexpr size_t kChunk = 1 << 20;
  std::vector<uint8_t> in(kChunk), out(kChunk);
  uint64_t remaining = e.compressed_size;

  if (e.method == 0) {
    while (remaining > 0) {
      const size_t n = static_cast<size_t>(std::min<uint64_t>(remaining, kChunk));
      is.read(reinterpret_cast<char*>(in.data()), static_cast<std::streamsize>(n));
      if (static_cast<size_t>(is.gcount()) != n) throw IngestionError("truncated member " + member);
      parser.feed(in.data(), n);
      remaining -= n;
    }
  } else {
    z_stream zs{};
    if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) throw IngestionError("zlib init failed");
    int ret = Z_OK;
    while (ret != Z_STREAM_END) {
      if (zs.avail_in == 0) {
        if (remaining == 0) {
          inflateEnd(&zs);
          throw IngestionError("truncated deflate stream in member " + member);
        }
        const size_t n = static_cast<size_t>(std::min<uint64_t>(remaining, kChunk));
        is.read(reinterpret_cast<char*>(in.data()), static_cast<std::streamsize>(n));
        if (static_cast<size_t>(is.gcount()) != n) {
          inflateEnd(&zs);
          throw IngestionError("truncated member " + member);
        }
        remaining -= n;
        zs.next_in = in.data();
        zs.avail_in = static_cast<uInt>(n);
      }
      zs.next_out = out.data();
      zs.avail_out = static_cast<uInt>(out.size());
      ret = inflate(&zs, Z_NO_FLUSH);
      if (ret != Z_OK && ret != Z_STREAM_END) {
        inflateEnd(&zs);
        throw IngestionError("corrupt deflate data in member " + member + " of " + path_.string());
      }
      parser.feed(out.data(), out.size() - zs.avail_out);
    }
    inflateEnd(&zs);
  }
  if (!parser.header_done()) throw IngestionError("member " + member + " is not a complete .npy array");
}

torch::Tensor NpzFile::read(const std::string& member) const {
  torch::Tensor out;
  uint8_t* base = nullptr;
  int64_t total = 0;
  stream(
      member,
      [&](const NpyHeader& h) {
        torch::Dtype dtype;
        if (h.descr == "|u1" || h.descr == "<u1") dtype = torch::kUInt8;
        else if (h.descr == "<i8") dtype = torch::kInt64;
        else if (h.descr == "<i4") dtype = torch::kInt32;
        else if (h.descr == "<f8") dtype = torch::kFloat64;
        else if (h.descr == "<f4") dtype = torch::kFloat32;
        else throw IngestionError("unsupported npy dtype '" + h.descr + "' in member " + member);
        out = torch::empty(h.shape, dtype);
        total = h.count() * static_cast<int64_t>(h.item_size());
        base = static_cast<uint8_t*>(out.data_ptr());
      },
      [&](int64_t offset, const uint8_t* data, size_t size) {
        if (offset + static_cast<int64_t>(size) > total) throw IngestionError("npy payload longer than its shape");
        std::memcpy(base + offset, data, size);
      });
  return out;
}

torch::Tensor read_dsprites_latent_classes(const fs::path& npz) {
  NpzFile f(npz);
  auto classes = f.read("latents_classes.npy");
  if (classes.dim() != 2 || classes.size(1) != 6) throw IngestionError("dSprites latents_classes must be [N, 6]");
  return classes.to(torch::kInt64);
}

torch::Tensor read_dsprites_images(const fs::path& npz, std::span<const int64_t> indices) {
  for (size_t i = 1; i < indices.size(); ++i)
    if (indices[i] <= indices[i - 1]) throw ContractViolation("dSprites indices must be strictly increasing");
  NpzFile f(npz);
  const int64_t k = static_cast<int64_t>(indices.size());
  torch::Tensor out;
  int64_t item = 0;
  size_t next = 0;
  uint8_t* dst = nullptr;
  f.stream(
      "imgs.npy",
      [&](const NpyHeader& h) {
        if (h.item_size() != 1 || h.shape.size() != 3) throw IngestionError("dSprites imgs must be uint8 [N, H, W]");
        if (k > 0 && indices.back() >= h.shape[0]) throw ContractViolation("dSprites index out of range");
        out = torch::empty({k, 1, h.shape[1], h.shape[2]}, torch::kUInt8);
        item = h.shape[1] * h.shape[2];
        dst = out.data_ptr<uint8_t>();
      },
      [&](int64_t offset, const uint8_t* data, size_t size) {
        const int64_t end = offset + static_cast<int64_t>(size);
        while (next < indices.size()) {
          const int64_t lo = indices[next] * item, hi = lo + item;
          if (lo >= end) break;
          const int64_t a = std::max(lo, offset), b = std::min(hi, end);
          if (b > a) std::memcpy(dst + next * item + (a - lo), data + (a - offset), static_cast<size_t>(b - a));
          if (hi <= end) {
            ++next;
          } else {
            break;
          }
        }
      });
  // Binary sprites are stored as {0, 1}.
  return out.mul_(255);
}

// ---------------------------------------------------------------------------
// CelebA
// ---------------------------------------------------------------------------

int CelebaAttributes::column(const std::string& name) const {
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  throw IngestionError("CelebA attribute file has no column " + name);
}

CelebaAttributes read_celeba_attributes(const fs::path& attr_file) {
  std::ifstream is(attr_file);
  if (!is) throw IngestionError("missing CelebA attribute file " + attr_file.string());
  CelebaAttributes out;
  std::string line;
  int64_t declared = 0;
  if (!std::getline(is, line)) throw IngestionError("empty CelebA attribute file");
  declared = std::stoll(line);
  if (!std::getline(is, line)) throw IngestionError("CelebA attribute file lacks the header row");
  {
    std::stringstream ss(line);
    std::string name;
    while (ss >> name) out.names.push_back(name);
  }
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::stringstream ss(line);
    std::string file;
    ss >> file;
    std::vector<int8_t> row;
    int v = 0;
    while (ss >> v) row.push_back(static_cast<int8_t>(v > 0 ? 1 : -1));
    if (row.size() != out.names.size()) throw IngestionError("CelebA attribute row has wrong width: " + file);
    out.files.push_back(file);
    out.rows.push_back(std::move(row));
  }
  if (static_cast<int64_t>(out.files.size()) != declared)
    throw IngestionError("CelebA attribute file declares " + std::to_string(declared) + " rows but has " +
                         std::to_string(out.files.size()));
  return out;
}

// ---------------------------------------------------------------------------
// Checksums
// ---------------------------------------------------------------------------

namespace {

std::string hex(const unsigned char* d, unsigned n) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (unsigned i = 0; i < n; ++i) {
    s.push_back(digits[d[i] >> 4]);
    s.push_back(digits[d[i] & 15]);
  }
  return s;
}

struct Sha256 {
  Sha256() : ctx(EVP_MD_CTX_new()) { EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr); }
  ~Sha256() { EVP_MD_CTX_free(ctx); }
  void update(const void* p, size_t n) { EVP_DigestUpdate(ctx, p, n); }
  std::string finish() {
    unsigned char d[EVP_MAX_MD_SIZE];
    unsigned n = 0;
    EVP_DigestFinal_ex(ctx, d, &n);
    return hex(d, n);
  }
  EVP_MD_CTX* ctx;
};

}  // namespace

std::string sha256_hex(std::span<const uint8_t> bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.finish();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IngestionError("cannot open " + path.string());
  Sha256 h;
  std::vector<char> buf(1 << 20);
  while (is) {
    is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h.update(buf.data(), static_cast<size_t>(is.gcount()));
  }
  return h.finish();
}

std::map<std::string, std::string> verify_sources(const std::vector<fs::path>& files,
                                                  const std::map<std::string, std::string>& expected) {
  std::map<std::string, std::string> actual;
  bool ok = true;
  std::ostringstream report;
  report << "source checksum verification failed:\n";
  for (const auto& f : files) {
    const auto name = f.filename().string();
    const auto digest = sha256_file(f);
    actual[name] = digest;
    auto it = expected.find(name);
    const bool match = it == expected.end() || it->second == digest;
    ok = ok && match;
    report << "  " << (match ? "ok      " : "MISMATCH") << ' ' << f.string() << " actual=" << digest;
    if (it != expected.end()) report << " expected=" << it->second;
    report << '\n';
  }
  if (!ok) throw IngestionError(report.str());
  return actual;
}

}  // namespace dinfogan
