#pragma once

#include <filesystem>

#include "pancsynth/grid.hpp"

namespace pancsynth {

// Minimal NIfTI-1 single-file (.nii / .nii.gz) support: 3D, int16 or float32
// payloads, scl_slope/scl_inter applied on read. Orientation matrices are
// ignored apart from the translation, which becomes Geometry::origin; inputs
// are assumed to be canonically oriented.

/// Reads HU values (slope/intercept applied). Throws IoError on unreadable
/// or unsupported files and InvariantError on non-finite values.
Volume read_volume(const std::filesystem::path& path);

/// Reads integer labels. Scaled values must be non-negative integers that fit
/// in int16.
Mask read_mask(const std::filesystem::path& path);

/// Writes float32 data; a ".gz" suffix selects gzip compression.
void write_volume(const Volume& volume, const std::filesystem::path& path);

/// Writes int16 data.
void write_mask(const Mask& mask, const std::filesystem::path& path);

}  // namespace pancsynth
