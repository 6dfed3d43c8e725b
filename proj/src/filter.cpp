#include "pancsynth/filter.hpp"

#include <cmath>

namespace pancsynth {

std::vector<double> gaussian_kernel(double sigma_voxels) {
  if (!(sigma_voxels > 0.0)) return {1.0};
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma_voxels));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    const double x = static_cast<double>(i) / sigma_voxels;
    k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * x * x);
    sum += k[static_cast<std::size_t>(i + radius)];
  }
  for (auto& w : k) w /= sum;
  return k;
}

void gaussian_blur_3d(std::span<double> data, const std::array<std::size_t, 3>& dims,
                      const std::array<double, 3>& spacing, double sigma_mm, EdgeMode edge) {
  if (!(sigma_mm > 0.0)) return;
  const std::array<std::size_t, 3> stride{1, dims[0], dims[0] * dims[1]};
  std::vector<double> line;
  for (int axis = 0; axis < 3; ++axis) {
    const auto kernel = gaussian_kernel(sigma_mm / spacing[axis]);
    const auto radius = static_cast<std::ptrdiff_t>(kernel.size() / 2);
    const std::size_t n = dims[axis];
    const auto len = static_cast<std::ptrdiff_t>(n);
    line.resize(n);
    const int u = (axis + 1) % 3, v = (axis + 2) % 3;
    for (std::size_t j = 0; j < dims[v]; ++j) {
      for (std::size_t i = 0; i < dims[u]; ++i) {
        const std::size_t base = i * stride[u] + j * stride[v];
        for (std::size_t t = 0; t < n; ++t) line[t] = data[base + t * stride[axis]];
        for (std::ptrdiff_t t = 0; t < len; ++t) {
          double acc = 0.0;
          for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
            std::ptrdiff_t s = t + k;
            if (s < 0 || s >= len) {
              if (edge == EdgeMode::zero) continue;
              s = s < 0 ? 0 : len - 1;
            }
            acc += kernel[static_cast<std::size_t>(k + radius)] * line[static_cast<std::size_t>(s)];
          }
          data[base + static_cast<std::size_t>(t) * stride[axis]] = acc;
        }
      }
    }
  }
}

}  // namespace pancsynth
