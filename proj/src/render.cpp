#include "pancsynth/render.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <string>

namespace pancsynth {
namespace {

struct SliceLayout {
  std::size_t width, height;
  Index3 voxel(std::size_t col, std::size_t row, std::int64_t index, Axis axis) const {
    const auto c = static_cast<std::int64_t>(col), r = static_cast<std::int64_t>(row);
    switch (axis) {
      case Axis::x: return {index, c, r};
      case Axis::y: return {c, index, r};
      case Axis::z: break;
    }
    return {c, r, index};
  }
};

SliceLayout layout_for(const Geometry& g, Axis axis, std::int64_t index) {
  const int a = axis == Axis::x ? 0 : axis == Axis::y ? 1 : 2;
  if (index < 0 || index >= static_cast<std::int64_t>(g.dims[a]))
    throw InvariantError("slice index " + std::to_string(index) + " out of range");
  switch (axis) {
    case Axis::x: return {g.dims[1], g.dims[2]};
    case Axis::y: return {g.dims[0], g.dims[2]};
    case Axis::z: break;
  }
  return {g.dims[0], g.dims[1]};
}

void png_append(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

}  // namespace

std::uint8_t window_hu(double hu, const WindowSpec& w) {
  const double lo = w.level - w.width / 2.0;
  const double scaled = std::round(255.0 * (hu - lo) / w.width);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

Image2D render_slice(const Volume& v, Axis axis, std::int64_t index, const WindowSpec& w) {
  if (!(w.width > 0.0)) throw InvariantError("window width must be > 0");
  const auto lay = layout_for(v.geometry(), axis, index);
  Image2D img{lay.width, lay.height, 1, std::vector<std::uint8_t>(lay.width * lay.height), {}};
  for (std::size_t r = 0; r < lay.height; ++r)
    for (std::size_t c = 0; c < lay.width; ++c)
      img.pixels[r * lay.width + c] = window_hu(v.at(lay.voxel(c, r, index, axis)), w);
  img.png = encode_png(img);
  return img;
}

Image2D render_slice_overlay(const Volume& v, const Mask& overlay, Axis axis,
                             std::int64_t index, const WindowSpec& w) {
  if (!(w.width > 0.0)) throw InvariantError("window width must be > 0");
  require_same_lattice(v.geometry(), overlay.geometry(), "overlay mask vs volume");
  const auto lay = layout_for(v.geometry(), axis, index);
  Image2D img{lay.width, lay.height, 3, std::vector<std::uint8_t>(lay.width * lay.height * 3), {}};
  for (std::size_t r = 0; r < lay.height; ++r) {
    for (std::size_t c = 0; c < lay.width; ++c) {
      const auto p = lay.voxel(c, r, index, axis);
      const std::uint8_t g = window_hu(v.at(p), w);
      auto* px = &img.pixels[(r * lay.width + c) * 3];
      if (overlay.at(p) > 0) {
        px[0] = static_cast<std::uint8_t>(std::lround(0.6 * g + 0.4 * 255));
        px[1] = static_cast<std::uint8_t>(std::lround(0.6 * g));
        px[2] = px[1];
      } else {
        px[0] = px[1] = px[2] = g;
      }
    }
  }
  img.png = encode_png(img);
  return img;
}

std::vector<std::uint8_t> encode_png(const Image2D& image) {
  if (image.channels != 1 && image.channels != 3)
    throw InvariantError("PNG encoder supports 1 or 3 channels");
  if (image.pixels.size() != image.width * image.height * image.channels)
    throw InvariantError("pixel buffer does not match image size");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  std::vector<std::uint8_t> out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encoding failed");
  }
  png_set_write_fn(png, &out, png_append, nullptr);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8,
               image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = image.width * static_cast<std::size_t>(image.channels);
  for (std::size_t r = 0; r < image.height; ++r)
    png_write_row(png, const_cast<png_bytep>(image.pixels.data() + r * stride));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

}  // namespace pancsynth
