#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vistext {

inline constexpr int kCanonicalSize = 64;

// H x W x 3, row-major, values in [0, 1].
struct ImageTensor {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<double> data;

  static ImageTensor filled(int height, int width, double value);

  double& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  double at(int y, int x, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  double channel_mean(int c) const;
  bool in_unit_range() const;
  bool operator==(const ImageTensor&) const = default;
};

class ImageDecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// 8-bit RGB PNG. `title` goes into a tEXt "Title" chunk when nonempty.
std::string encode_png(const ImageTensor& img, std::string_view title = {});
ImageTensor decode_png(std::string_view bytes);
void write_png(const std::filesystem::path& path, const ImageTensor& img, std::string_view title = {});
ImageTensor read_png(const std::filesystem::path& path);
// Reads the tEXt "Title" chunk, empty when absent.
std::string png_title(std::string_view bytes);

// Rounds every value to the nearest of 256 levels, matching a PNG round trip.
ImageTensor quantize8(const ImageTensor& img);
// Center-crops to a square and resamples bilinearly to size x size.
ImageTensor to_canonical(const ImageTensor& img, int size = kCanonicalSize);
ImageTensor resize_bilinear(const ImageTensor& img, int height, int width);

}  // namespace vistext
