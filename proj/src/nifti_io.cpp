#include "pancsynth/nifti_io.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>

namespace pancsynth {
namespace {

constexpr std::size_t kHeaderSize = 348;
constexpr std::size_t kVoxOffset = 352;
constexpr std::int16_t kInt16 = 4;
constexpr std::int16_t kFloat32 = 16;

// Byte offsets of the fields we touch in nifti_1_header.
constexpr std::size_t kOffDim = 40;
constexpr std::size_t kOffDatatype = 70;
constexpr std::size_t kOffBitpix = 72;
constexpr std::size_t kOffPixdim = 76;
constexpr std::size_t kOffVoxOffset = 108;
constexpr std::size_t kOffSclSlope = 112;
constexpr std::size_t kOffSclInter = 116;
constexpr std::size_t kOffXyztUnits = 123;
constexpr std::size_t kOffQformCode = 252;
constexpr std::size_t kOffSformCode = 254;
constexpr std::size_t kOffQoffset = 268;
constexpr std::size_t kOffSrowX = 280;
constexpr std::size_t kOffMagic = 344;

struct GzCloser {
  void operator()(gzFile f) const { gzclose(f); }
};
using GzHandle = std::unique_ptr<gzFile_s, GzCloser>;

bool has_gz_suffix(const std::filesystem::path& path) {
  return path.extension() == ".gz";
}

// gzread is transparent for uncompressed input.
std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  GzHandle f(gzopen(path.c_str(), "rb"));
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes;
  std::uint8_t chunk[1 << 16];
  for (;;) {
    const int n = gzread(f.get(), chunk, sizeof chunk);
    if (n < 0) throw IoError("read error in " + path.string());
    if (n == 0) break;
    bytes.insert(bytes.end(), chunk, chunk + n);
  }
  return bytes;
}

template <typename T>
T load(const std::vector<std::uint8_t>& buf, std::size_t off, bool swap) {
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  if (swap) {
    auto* b = reinterpret_cast<std::uint8_t*>(&v);
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
  }
  return v;
}

template <typename T>
void store(std::vector<std::uint8_t>& buf, std::size_t off, T v) {
  std::memcpy(buf.data() + off, &v, sizeof(T));
}

struct RawImage {
  Geometry geometry;
  std::vector<double> values;  // after scaling
};

RawImage parse(const std::vector<std::uint8_t>& buf, const std::filesystem::path& path) {
  const std::string where = " (" + path.string() + ")";
  if (buf.size() < kHeaderSize) throw IoError("truncated NIfTI header" + where);

  bool swap = false;
  auto sizeof_hdr = load<std::int32_t>(buf, 0, false);
  if (sizeof_hdr != 348) {
    swap = true;
    sizeof_hdr = load<std::int32_t>(buf, 0, true);
    if (sizeof_hdr != 348) throw IoError("not a NIfTI-1 file" + where);
  }
  if (std::memcmp(buf.data() + kOffMagic, "n+1\0", 4) != 0)
    throw IoError("only single-file NIfTI-1 (magic n+1) is supported" + where);

  std::array<std::int16_t, 8> dim{};
  for (int i = 0; i < 8; ++i) dim[i] = load<std::int16_t>(buf, kOffDim + 2 * i, swap);
  if (dim[0] < 3 || dim[0] > 7) throw IoError("unsupported dimensionality" + where);
  for (int i = 4; i <= dim[0]; ++i)
    if (dim[i] != 1) throw IoError("only 3D volumes are supported" + where);

  Geometry g;
  for (int a = 0; a < 3; ++a) {
    if (dim[a + 1] < 1) throw IoError("non-positive dimension" + where);
    g.dims[a] = static_cast<std::size_t>(dim[a + 1]);
    g.spacing[a] = std::fabs(load<float>(buf, kOffPixdim + 4 * (a + 1), swap));
  }
  const auto sform = load<std::int16_t>(buf, kOffSformCode, swap);
  const auto qform = load<std::int16_t>(buf, kOffQformCode, swap);
  for (int a = 0; a < 3; ++a) {
    if (sform > 0)
      g.origin[a] = load<float>(buf, kOffSrowX + 16 * a + 12, swap);
    else if (qform > 0)
      g.origin[a] = load<float>(buf, kOffQoffset + 4 * a, swap);
  }
  try {
    g.validate();
  } catch (const InvariantError& e) {
    throw IoError(std::string(e.what()) + where);
  }

  const auto datatype = load<std::int16_t>(buf, kOffDatatype, swap);
  std::size_t bytes_per_voxel = 0;
  if (datatype == kInt16)
    bytes_per_voxel = 2;
  else if (datatype == kFloat32)
    bytes_per_voxel = 4;
  else
    throw IoError("unsupported NIfTI datatype " + std::to_string(datatype) + where);

  const auto vox_offset = static_cast<std::size_t>(load<float>(buf, kOffVoxOffset, swap));
  const std::size_t n = g.voxel_count();
  if (vox_offset < kHeaderSize || buf.size() < vox_offset + n * bytes_per_voxel)
    throw IoError("truncated NIfTI payload" + where);

  double slope = load<float>(buf, kOffSclSlope, swap);
  double inter = load<float>(buf, kOffSclInter, swap);
  const bool scaled = slope != 0.0 && std::isfinite(slope);
  if (!scaled) {
    slope = 1.0;
    inter = 0.0;
  }
  if (!std::isfinite(inter)) inter = 0.0;

  RawImage img{g, std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t off = vox_offset + i * bytes_per_voxel;
    const double raw = datatype == kInt16 ? load<std::int16_t>(buf, off, swap)
                                          : static_cast<double>(load<float>(buf, off, swap));
    img.values[i] = scaled ? slope * raw + inter : raw;
    if (!std::isfinite(img.values[i]))
      throw InvariantError("non-finite voxel value after scaling" + where);
  }
  return img;
}

std::vector<std::uint8_t> make_header(const Geometry& g, std::int16_t datatype,
                                      std::int16_t bitpix) {
  if (g.dims[0] > 32767 || g.dims[1] > 32767 || g.dims[2] > 32767)
    throw IoError("dimension exceeds NIfTI-1 limit");
  std::vector<std::uint8_t> h(kVoxOffset, 0);
  store<std::int32_t>(h, 0, 348);
  store<std::int16_t>(h, kOffDim, 3);
  for (int a = 0; a < 3; ++a) {
    store<std::int16_t>(h, kOffDim + 2 * (a + 1), static_cast<std::int16_t>(g.dims[a]));
    store<float>(h, kOffPixdim + 4 * (a + 1), static_cast<float>(g.spacing[a]));
  }
  for (int i = 4; i < 8; ++i) store<std::int16_t>(h, kOffDim + 2 * i, 1);
  store<float>(h, kOffPixdim, 1.0f);  // qfac
  store<std::int16_t>(h, kOffDatatype, datatype);
  store<std::int16_t>(h, kOffBitpix, bitpix);
  store<float>(h, kOffVoxOffset, static_cast<float>(kVoxOffset));
  store<float>(h, kOffSclSlope, 1.0f);
  store<float>(h, kOffSclInter, 0.0f);
  h[kOffXyztUnits] = 2;  // NIFTI_UNITS_MM
  store<std::int16_t>(h, kOffQformCode, 1);
  store<std::int16_t>(h, kOffSformCode, 1);
  for (int a = 0; a < 3; ++a) {
    store<float>(h, kOffQoffset + 4 * a, static_cast<float>(g.origin[a]));
    store<float>(h, kOffSrowX + 16 * a + 4 * a, static_cast<float>(g.spacing[a]));
    store<float>(h, kOffSrowX + 16 * a + 12, static_cast<float>(g.origin[a]));
  }
  std::memcpy(h.data() + kOffMagic, "n+1\0", 4);
  return h;
}

void emit(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  if (has_gz_suffix(path)) {
    GzHandle f(gzopen(path.c_str(), "wb6"));
    if (!f) throw IoError("cannot write " + path.string());
    std::size_t done = 0;
    while (done < bytes.size()) {
      const auto chunk = static_cast<unsigned>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
      if (gzwrite(f.get(), bytes.data() + done, chunk) != static_cast<int>(chunk))
        throw IoError("write error in " + path.string());
      done += chunk;
    }
    if (gzclose(f.release()) != Z_OK) throw IoError("write error in " + path.string());
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write error in " + path.string());
}

static_assert(std::endian::native == std::endian::little,
              "NIfTI writer assumes a little-endian host");

}  // namespace

Volume read_volume(const std::filesystem::path& path) {
  auto raw = parse(slurp(path), path);
  std::vector<float> values(raw.values.size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<float>(raw.values[i]);
  return Volume(raw.geometry, std::move(values));
}

Mask read_mask(const std::filesystem::path& path) {
  auto raw = parse(slurp(path), path);
  std::vector<std::int16_t> labels(raw.values.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double v = raw.values[i];
    if (v < 0.0 || v > 32767.0 || v != std::floor(v))
      throw InvariantError("mask labels must be non-negative integers (" + path.string() + ")");
    labels[i] = static_cast<std::int16_t>(v);
  }
  return Mask(raw.geometry, std::move(labels));
}

void write_volume(const Volume& volume, const std::filesystem::path& path) {
  auto bytes = make_header(volume.geometry(), kFloat32, 32);
  const auto v = volume.values();
  const auto* p = reinterpret_cast<const std::uint8_t*>(v.data());
  bytes.insert(bytes.end(), p, p + v.size_bytes());
  emit(bytes, path);
}

void write_mask(const Mask& mask, const std::filesystem::path& path) {
  auto bytes = make_header(mask.geometry(), kInt16, 16);
  const auto v = mask.values();
  const auto* p = reinterpret_cast<const std::uint8_t*>(v.data());
  bytes.insert(bytes.end(), p, p + v.size_bytes());
  emit(bytes, path);
}

}  // namespace pancsynth
