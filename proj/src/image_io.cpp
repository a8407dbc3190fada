#include "dinfogan/image_io.hpp"

#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "dinfogan/errors.hpp"

namespace dinfogan {

namespace fs = std::filesystem;

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IngestionError("cannot open " + path.string());
  return f;
}

void require_u8_image(const torch::Tensor& image) {
  if (image.dim() != 3 || image.scalar_type() != torch::kUInt8 || (image.size(0) != 1 && image.size(0) != 3))
    throw ContractViolation("expected a uint8 [C, H, W] image with C in {1, 3}");
}

// [C, H, W] -> contiguous interleaved HWC bytes
std::vector<uint8_t> interleave(const torch::Tensor& image) {
  auto hwc = image.permute({1, 2, 0}).contiguous();
  const auto* p = hwc.data_ptr<uint8_t>();
  return std::vector<uint8_t>(p, p + hwc.numel());
}

torch::Tensor deinterleave(std::vector<uint8_t>& buf, int64_t h, int64_t w, int64_t c) {
  // clone: contiguous() returns the borrowed view itself when c == 1.
  return torch::from_blob(buf.data(), {h, w, c}, torch::kUInt8).permute({2, 0, 1}).clone(at::MemoryFormat::Contiguous);
}

}  // namespace

torch::Tensor read_png(const fs::path& path) {
  auto f = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IngestionError("corrupt PNG " + path.string());
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_packing(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  const int64_t w = png_get_image_width(png, info);
  const int64_t h = png_get_image_height(png, info);
  const int64_t c = png_get_channels(png, info);
  std::vector<uint8_t> buf(static_cast<size_t>(w * h * c));
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int64_t y = 0; y < h; ++y) rows[y] = buf.data() + y * w * c;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  return deinterleave(buf, h, w, c);
}

void write_png(const fs::path& path, const torch::Tensor& image) {
  require_u8_image(image);
  const int64_t c = image.size(0), h = image.size(1), w = image.size(2);
  auto buf = interleave(image);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  auto f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("failed writing PNG " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int64_t y = 0; y < h; ++y) png_write_row(png, buf.data() + y * w * c);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

namespace {

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  std::longjmp(err->jump, 1);
}

}  // namespace

torch::Tensor read_jpeg(const fs::path& path) {
  auto f = open_file(path, "rb");
  jpeg_decompress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  std::vector<uint8_t> buf;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw IngestionError("corrupt JPEG " + path.string());
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f.get());
  jpeg_read_header(&cinfo, TRUE);
  if (cinfo.num_components != 1) cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  const int64_t w = cinfo.output_width, h = cinfo.output_height, c = cinfo.output_components;
  buf.resize(static_cast<size_t>(w * h * c));
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = buf.data() + static_cast<size_t>(cinfo.output_scanline) * w * c;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return deinterleave(buf, h, w, c);
}

void write_jpeg(const fs::path& path, const torch::Tensor& image, int quality) {
  require_u8_image(image);
  const int64_t c = image.size(0), h = image.size(1), w = image.size(2);
  auto buf = interleave(image);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  auto f = open_file(path, "wb");
  jpeg_compress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    throw std::runtime_error("failed writing JPEG " + path.string());
  }
  jpeg_create_compress(&cinfo);
  jpeg_stdio_dest(&cinfo, f.get());
  cinfo.image_width = static_cast<JDIMENSION>(w);
  cinfo.image_height = static_cast<JDIMENSION>(h);
  cinfo.input_components = static_cast<int>(c);
  cinfo.in_color_space = c == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = buf.data() + static_cast<size_t>(cinfo.next_scanline) * w * c;
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
}

torch::Tensor read_image(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IngestionError("cannot open " + path.string());
  unsigned char sig[4] = {0, 0, 0, 0};
  is.read(reinterpret_cast<char*>(sig), 4);
  if (sig[0] == 0x89 && sig[1] == 'P' && sig[2] == 'N' && sig[3] == 'G') return read_png(path);
  if (sig[0] == 0xFF && sig[1] == 0xD8) return read_jpeg(path);
  throw IngestionError("unrecognized image format: " + path.string());
}

torch::Tensor to_unit_range(const torch::Tensor& image_u8) {
  return image_u8.to(torch::kFloat32) / 127.5 - 1.0;
}

torch::Tensor to_uint8(const torch::Tensor& image_unit) {
  return ((image_unit.detach().to(torch::kFloat32) + 1.0) * 127.5).round().clamp(0, 255).to(torch::kUInt8);
}

torch::Tensor resize(const torch::Tensor& image, int64_t height, int64_t width) {
  require_u8_image(image);
  if (image.size(1) == height && image.size(2) == width) return image.clone();
  const bool shrink = height < image.size(1) || width < image.size(2);
  auto x = image.to(torch::kFloat32).unsqueeze(0);
  auto y = torch::nn::functional::interpolate(x, torch::nn::functional::InterpolateFuncOptions()
                                                      .size(std::vector<int64_t>{height, width})
                                                      .mode(torch::kBilinear)
                                                      .align_corners(false)
                                                      .antialias(shrink));
  return y.squeeze(0).round().clamp(0, 255).to(torch::kUInt8);
}

torch::Tensor center_crop(const torch::Tensor& image, int64_t size) {
  const int64_t h = image.size(1), w = image.size(2);
  const int64_t side = std::min({size, h, w});
  const int64_t top = (h - side) / 2, left = (w - side) / 2;
  using torch::indexing::Slice;
  return image.index({Slice(), Slice(top, top + side), Slice(left, left + side)}).contiguous();
}

torch::Tensor tile_grid(const torch::Tensor& images, int64_t rows, int64_t cols) {
  if (images.dim() != 4) throw ContractViolation("tile_grid expects [N, C, H, W]");
  if (rows < 1 || cols < 1) throw ContractViolation("tile_grid needs rows, cols >= 1");
  const int64_t n = images.size(0), c = images.size(1), h = images.size(2), w = images.size(3);
  if (n > rows * cols) throw ContractViolation("tile_grid: more images than tiles");
  auto u8 = to_uint8(images);
  auto canvas = torch::zeros({c, rows * h, cols * w}, torch::kUInt8);
  using torch::indexing::Slice;
  for (int64_t i = 0; i < n; ++i) {
    const int64_t r = i / cols, col = i % cols;
    canvas.index_put_({Slice(), Slice(r * h, (r + 1) * h), Slice(col * w, (col + 1) * w)}, u8[i]);
  }
  return canvas;
}

}  // namespace dinfogan
