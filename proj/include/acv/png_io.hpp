#ifndef ACV_PNG_IO_HPP_
#define ACV_PNG_IO_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace acv {

// Packed 8-bit RGB raster, row-major, no padding.
struct ImageU8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // 3 * width * height bytes
};

// Decodes any libpng-readable file to 8-bit RGB (palette expanded, 16-bit
// narrowed, alpha dropped, gray promoted).
ImageU8 read_png_rgb8(const std::string& path);

void write_png_rgb8(const std::string& path, const ImageU8& img);

}  // namespace acv

#endif  // ACV_PNG_IO_HPP_
