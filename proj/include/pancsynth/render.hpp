#pragma once

#include <cstdint>
#include <vector>

#include "pancsynth/grid.hpp"

namespace pancsynth {

/// HU display window. The default is the usual abdominal soft-tissue window.
struct WindowSpec {
  double level = 40.0;
  double width = 400.0;
};

enum class Axis { x, y, z };

/// 8-bit raster, row-major, `channels` interleaved samples per pixel (1 or 3).
struct Image2D {
  std::size_t width = 0;
  std::size_t height = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;
  std::vector<std::uint8_t> png;
};

/// Maps one HU value to a display intensity:
/// clamp(round(255 * (hu - (level - width/2)) / width), 0, 255).
std::uint8_t window_hu(double hu, const WindowSpec& w);

/// Grayscale slice through `v` perpendicular to `axis`. In-plane layout:
///   z -> columns x, rows y;  y -> columns x, rows z;  x -> columns y, rows z.
/// Throws InvariantError when index is out of range or the window width is <= 0.
Image2D render_slice(const Volume& v, Axis axis, std::int64_t index, const WindowSpec& w);

/// Same slice as render_slice, as RGB with positive-label voxels of `overlay`
/// tinted red.
Image2D render_slice_overlay(const Volume& v, const Mask& overlay, Axis axis,
                             std::int64_t index, const WindowSpec& w);

/// PNG-encodes pixels (8-bit gray or RGB).
std::vector<std::uint8_t> encode_png(const Image2D& image);

}  // namespace pancsynth
