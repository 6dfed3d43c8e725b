#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace pancsynth {

enum class EdgeMode {
  zero,     // samples outside the grid read as 0
  nearest,  // samples outside the grid read the closest edge voxel
};

/// Normalized 1D Gaussian taps for sigma in voxels, truncated at
/// radius = ceil(3 * sigma). sigma <= 0 yields the identity kernel {1}.
std::vector<double> gaussian_kernel(double sigma_voxels);

/// In-place separable Gaussian smoothing of an x-fastest 3D buffer.
/// sigma is in mm and converted per axis with `spacing`.
void gaussian_blur_3d(std::span<double> data, const std::array<std::size_t, 3>& dims,
                      const std::array<double, 3>& spacing, double sigma_mm, EdgeMode edge);

}  // namespace pancsynth
