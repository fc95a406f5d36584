#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "touchloc/geometry.hpp"

namespace touchloc {

// Orthographic render setup. The virtual camera sits at the origin looking
// along +z; the sensor surface is the rectangle
// [-extent_x/2, extent_x/2] x [-extent_y/2, extent_y/2] at depth d.
struct RenderConfig {
  int image_size = 160;        // output mask resolution (square)
  int supersample_size = 640;  // depth-buffer resolution, box-downsampled
  double sensor_extent_x_mm = 30.0;
  double sensor_extent_y_mm = 30.0;
  double d_mm = 10.0;        // camera-to-sensor-plane distance
  double delta_d_mm = 1.3;   // maximum sensor deformation

  void validate() const;
  double pixel_pitch_x() const { return sensor_extent_x_mm / image_size; }
  double pixel_pitch_y() const { return sensor_extent_y_mm / image_size; }
};

// Binary contact image, row-major, bit (y * width + x).
class ContactMask {
 public:
  ContactMask() = default;
  ContactMask(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  bool get(int x, int y) const {
    size_t i = static_cast<size_t>(y) * width_ + x;
    return (words_[i >> 6] >> (i & 63)) & 1;
  }
  void set(int x, int y, bool v) {
    size_t i = static_cast<size_t>(y) * width_ + x;
    uint64_t m = 1ull << (i & 63);
    if (v)
      words_[i >> 6] |= m;
    else
      words_[i >> 6] &= ~m;
  }

  size_t count() const;  // number of 1-bits
  bool empty() const { return count() == 0; }
  bool operator==(const ContactMask& o) const = default;

  const std::vector<uint64_t>& words() const { return words_; }

  // 8-byte header (u32 LE width, u32 LE height) + bits packed LSB-first into
  // bytes, row-major, no per-row padding.
  std::vector<uint8_t> to_blob() const;
  static ContactMask from_blob(const uint8_t* data, size_t size);
  static ContactMask from_blob(const std::vector<uint8_t>& blob) {
    return from_blob(blob.data(), blob.size());
  }

  void save_png(const std::filesystem::path& path) const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<uint64_t> words_;
};

size_t mask_and_count(const ContactMask& a, const ContactMask& b);
size_t mask_xor_count(const ContactMask& a, const ContactMask& b);
size_t mask_or_count(const ContactMask& a, const ContactMask& b);

// |a and b| / |a or b|; 1.0 when both masks are empty.
double mask_iou(const ContactMask& a, const ContactMask& b);

struct GridCoords {
  int direction = 0;
  int x_index = 0;
  int y_index = 0;
  int theta_index = 0;
  auto operator<=>(const GridCoords&) const = default;
};

// Object pose relative to a sensor that results in contact without
// penetration (footprint gap in [0, 1e-6] mm once settled).
struct ContactPose {
  RigidTransform transform;
  std::optional<GridCoords> grid_coords;
};

// Min/max object depth over the sensor rectangle, computed exactly from the
// clipped triangles (not from a raster).
struct FootprintExtrema {
  double min_depth = 0;
  double max_depth = 0;
  bool any = false;
};
FootprintExtrema footprint_extrema(const TriangleMesh& mesh,
                                   const RigidTransform& pose,
                                   const RenderConfig& config);

// Translates the pose along z so the minimum object depth over the sensor
// footprint equals d. Poses starting below the plane are lifted first (the
// translation is signed). Throws NoContactPossible if nothing projects into
// the sensor rectangle.
ContactPose settle_to_contact(const TriangleMesh& mesh,
                              const RigidTransform& pose,
                              const RenderConfig& config);

// Orthographic depth render at supersample resolution, thresholded to
// [d, d + delta_d], then box-downsampled with a majority vote (ties round to
// contact). Throws NotSettled if the footprint minimum is not d within 1e-3.
ContactMask render_contact(const TriangleMesh& mesh, const ContactPose& pose,
                           const RenderConfig& config,
                           std::optional<double> delta_d_override = {});

// Supersample depth buffer (row-major, +inf where no front-facing surface);
// exposed for the render pipeline and analysis tools.
std::vector<float> render_depth(const TriangleMesh& mesh,
                                const RigidTransform& pose,
                                const RenderConfig& config);

}  // namespace touchloc
