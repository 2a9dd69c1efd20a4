#include "vistext/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>

#include "vistext/common.hpp"

namespace vistext {

ImageTensor ImageTensor::filled(int height, int width, double value) {
  ImageTensor t;
  t.height = height;
  t.width = width;
  t.data.assign(static_cast<std::size_t>(height) * width * 3, value);
  return t;
}

double ImageTensor::channel_mean(int c) const {
  double s = 0.0;
  for (std::size_t i = c; i < data.size(); i += channels) s += data[i];
  return s / (static_cast<double>(height) * width);
}

bool ImageTensor::in_unit_range() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
}

namespace {

unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void write_to_string(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), len);
}

void flush_noop(png_structp) {}

struct ReadCursor {
  std::string_view bytes;
  std::size_t pos = 0;
};

void read_from_view(png_structp png, png_bytep data, png_size_t len) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->pos + len > cur->bytes.size()) png_error(png, "truncated png");
  std::memcpy(data, cur->bytes.data() + cur->pos, len);
  cur->pos += len;
}

void error_fn(png_structp png, png_const_charp msg) {
  auto* buf = static_cast<std::string*>(png_get_error_ptr(png));
  if (buf) *buf = msg;
  png_longjmp(png, 1);
}

void warn_fn(png_structp, png_const_charp) {}

}  // namespace

std::string encode_png(const ImageTensor& img, std::string_view title) {
  if (img.channels != 3) throw std::invalid_argument("encode_png expects 3 channels");
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, error_fn, warn_fn);
  png_infop info = png_create_info_struct(png);
  std::string out;
  std::vector<unsigned char> row(static_cast<std::size_t>(img.width) * 3);
  std::string title_copy(title);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png encode failed: " + err);
  }
  png_set_write_fn(png, &out, write_to_string, flush_noop);
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_text text{};
  if (!title_copy.empty()) {
    text.compression = PNG_TEXT_COMPRESSION_NONE;
    text.key = const_cast<char*>("Title");
    text.text = title_copy.data();
    png_set_text(png, info, &text, 1);
  }
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) row[static_cast<std::size_t>(x) * 3 + c] = to_byte(img.at(y, x, c));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

ImageTensor decode_png(std::string_view bytes) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw ImageDecodeError(std::string("png decode failed: ") + image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw ImageDecodeError(std::string("png decode failed: ") + image.message);
  }
  ImageTensor t;
  t.height = static_cast<int>(image.height);
  t.width = static_cast<int>(image.width);
  t.data.resize(buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i) t.data[i] = buf[i] / 255.0;
  return t;
}

std::string png_title(std::string_view bytes) {
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, error_fn, warn_fn);
  png_infop info = png_create_info_struct(png);
  ReadCursor cur{bytes, 0};
  std::string title;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageDecodeError("png read failed: " + err);
  }
  png_set_read_fn(png, &cur, read_from_view);
  png_read_info(png, info);
  png_textp texts = nullptr;
  int n = 0;
  png_get_text(png, info, &texts, &n);
  for (int i = 0; i < n; ++i)
    if (std::strcmp(texts[i].key, "Title") == 0) title = texts[i].text;
  png_destroy_read_struct(&png, &info, nullptr);
  return title;
}

void write_png(const std::filesystem::path& path, const ImageTensor& img, std::string_view title) {
  write_file_atomic(path, encode_png(img, title));
}

ImageTensor read_png(const std::filesystem::path& path) { return decode_png(read_file(path)); }

ImageTensor quantize8(const ImageTensor& img) {
  ImageTensor out = img;
  for (double& v : out.data) v = to_byte(v) / 255.0;
  return out;
}

ImageTensor resize_bilinear(const ImageTensor& img, int height, int width) {
  if (img.height == height && img.width == width) return img;
  ImageTensor out = ImageTensor::filled(height, width, 0.0);
  out.channels = img.channels;
  out.data.assign(static_cast<std::size_t>(height) * width * img.channels, 0.0);
  double sy = static_cast<double>(img.height) / height;
  double sx = static_cast<double>(img.width) / width;
  for (int y = 0; y < height; ++y) {
    double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
    int y0 = static_cast<int>(fy);
    int y1 = std::min(y0 + 1, img.height - 1);
    double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
      int x0 = static_cast<int>(fx);
      int x1 = std::min(x0 + 1, img.width - 1);
      double wx = fx - x0;
      for (int c = 0; c < img.channels; ++c) {
        double top = img.at(y0, x0, c) * (1 - wx) + img.at(y0, x1, c) * wx;
        double bot = img.at(y1, x0, c) * (1 - wx) + img.at(y1, x1, c) * wx;
        out.at(y, x, c) = top * (1 - wy) + bot * wy;
      }
    }
  }
  return out;
}

ImageTensor to_canonical(const ImageTensor& img, int size) {
  int side = std::min(img.height, img.width);
  if (side <= 0) throw std::invalid_argument("empty image");
  ImageTensor crop = ImageTensor::filled(side, side, 0.0);
  int oy = (img.height - side) / 2, ox = (img.width - side) / 2;
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      for (int c = 0; c < 3; ++c) crop.at(y, x, c) = img.at(y + oy, x + ox, c);
  return resize_bilinear(crop, size, size);
}

}  // namespace vistext
