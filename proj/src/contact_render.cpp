#include "touchloc/contact_render.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

#include "touchloc/errors.hpp"
#include "touchloc/png_io.hpp"

namespace touchloc {

void RenderConfig::validate() const {
  if (image_size <= 0 || supersample_size <= 0) {
    throw ConfigError("render sizes must be positive");
  }
  if (supersample_size % image_size != 0) {
    throw ConfigError("image_size must divide supersample_size");
  }
  if (sensor_extent_x_mm <= 0 || sensor_extent_y_mm <= 0) {
    throw ConfigError("sensor extent must be positive");
  }
  if (d_mm <= 0) throw ConfigError("d must be positive");
  if (delta_d_mm <= 0 || delta_d_mm >= d_mm) {
    throw ConfigError("delta_d must satisfy 0 < delta_d < d");
  }
}

ContactMask::ContactMask(int width, int height)
    : width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw ConfigError("mask size must be positive");
  words_.assign((static_cast<size_t>(width) * height + 63) / 64, 0ull);
}

size_t ContactMask::count() const {
  size_t c = 0;
  for (uint64_t w : words_) c += std::popcount(w);
  return c;
}

std::vector<uint8_t> ContactMask::to_blob() const {
  std::vector<uint8_t> out(8 + (static_cast<size_t>(width_) * height_ + 7) / 8, 0);
  uint32_t w = static_cast<uint32_t>(width_), h = static_cast<uint32_t>(height_);
  std::memcpy(out.data(), &w, 4);
  std::memcpy(out.data() + 4, &h, 4);
  size_t nbits = static_cast<size_t>(width_) * height_;
  for (size_t i = 0; i < nbits; ++i) {
    if ((words_[i >> 6] >> (i & 63)) & 1) out[8 + (i >> 3)] |= 1u << (i & 7);
  }
  return out;
}

ContactMask ContactMask::from_blob(const uint8_t* data, size_t size) {
  if (size < 8) throw ParseError("mask blob truncated header");
  uint32_t w, h;
  std::memcpy(&w, data, 4);
  std::memcpy(&h, data + 4, 4);
  size_t nbits = static_cast<size_t>(w) * h;
  if (size != 8 + (nbits + 7) / 8) throw ParseError("mask blob size mismatch");
  ContactMask m(static_cast<int>(w), static_cast<int>(h));
  for (size_t i = 0; i < nbits; ++i) {
    if ((data[8 + (i >> 3)] >> (i & 7)) & 1) {
      m.words_[i >> 6] |= 1ull << (i & 63);
    }
  }
  return m;
}

void ContactMask::save_png(const std::filesystem::path& path) const {
  std::vector<uint8_t> gray(static_cast<size_t>(width_) * height_);
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x)
      gray[static_cast<size_t>(y) * width_ + x] = get(x, y) ? 255 : 0;
  write_gray_png(path, gray.data(), width_, height_);
}

namespace {

void check_dims(const ContactMask& a, const ContactMask& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw DimensionMismatch("mask dimensions differ");
  }
}

}  // namespace

size_t mask_and_count(const ContactMask& a, const ContactMask& b) {
  check_dims(a, b);
  size_t c = 0;
  for (size_t i = 0; i < a.words().size(); ++i) {
    c += std::popcount(a.words()[i] & b.words()[i]);
  }
  return c;
}

size_t mask_xor_count(const ContactMask& a, const ContactMask& b) {
  check_dims(a, b);
  size_t c = 0;
  for (size_t i = 0; i < a.words().size(); ++i) {
    c += std::popcount(a.words()[i] ^ b.words()[i]);
  }
  return c;
}

size_t mask_or_count(const ContactMask& a, const ContactMask& b) {
  check_dims(a, b);
  size_t c = 0;
  for (size_t i = 0; i < a.words().size(); ++i) {
    c += std::popcount(a.words()[i] | b.words()[i]);
  }
  return c;
}

double mask_iou(const ContactMask& a, const ContactMask& b) {
  size_t u = mask_or_count(a, b);
  if (u == 0) return 1.0;
  return static_cast<double>(mask_and_count(a, b)) / static_cast<double>(u);
}

namespace {

struct Seg2 {
  double ax, ay, bx, by;
};

// z of the triangle plane at (x, y); valid when the projected triangle is not
// degenerate. Returns false otherwise.
bool plane_depth_at(const Vec3& v0, const Vec3& v1, const Vec3& v2, double x,
                    double y, double* z) {
  double d00x = v1.x() - v0.x(), d00y = v1.y() - v0.y();
  double d10x = v2.x() - v0.x(), d10y = v2.y() - v0.y();
  double det = d00x * d10y - d00y * d10x;
  if (std::abs(det) < 1e-14) return false;
  double px = x - v0.x(), py = y - v0.y();
  double b1 = (px * d10y - py * d10x) / det;
  double b2 = (d00x * py - d00y * px) / det;
  *z = v0.z() + b1 * (v1.z() - v0.z()) + b2 * (v2.z() - v0.z());
  return true;
}

bool point_in_tri_2d(double px, double py, const Vec3& a, const Vec3& b,
                     const Vec3& c) {
  auto edge = [&](const Vec3& p, const Vec3& q) {
    return (q.x() - p.x()) * (py - p.y()) - (q.y() - p.y()) * (px - p.x());
  };
  double e0 = edge(a, b), e1 = edge(b, c), e2 = edge(c, a);
  bool neg = e0 < 0 || e1 < 0 || e2 < 0;
  bool pos = e0 > 0 || e1 > 0 || e2 > 0;
  return !(neg && pos);
}

}  // namespace

FootprintExtrema footprint_extrema(const TriangleMesh& mesh,
                                   const RigidTransform& pose,
                                   const RenderConfig& config) {
  config.validate();
  const double hx = config.sensor_extent_x_mm / 2;
  const double hy = config.sensor_extent_y_mm / 2;
  std::vector<Vec3> tv(mesh.vertices.size());
  for (size_t i = 0; i < mesh.vertices.size(); ++i) {
    tv[i] = pose.apply(mesh.vertices[i]);
  }
  FootprintExtrema out;
  out.min_depth = std::numeric_limits<double>::infinity();
  out.max_depth = -std::numeric_limits<double>::infinity();
  auto consider = [&](double z) {
    out.any = true;
    out.min_depth = std::min(out.min_depth, z);
    out.max_depth = std::max(out.max_depth, z);
  };
  const Seg2 rect_edges[4] = {{-hx, -hy, hx, -hy},
                              {hx, -hy, hx, hy},
                              {hx, hy, -hx, hy},
                              {-hx, hy, -hx, -hy}};
  const double corners[4][2] = {{-hx, -hy}, {hx, -hy}, {hx, hy}, {-hx, hy}};
  for (const auto& f : mesh.faces) {
    const Vec3 &a = tv[f[0]], &b = tv[f[1]], &c = tv[f[2]];
    // Quick reject on the projected bounding box.
    if (std::max({a.x(), b.x(), c.x()}) < -hx ||
        std::min({a.x(), b.x(), c.x()}) > hx ||
        std::max({a.y(), b.y(), c.y()}) < -hy ||
        std::min({a.y(), b.y(), c.y()}) > hy) {
      continue;
    }
    // The extremum of z over (triangle ∩ rectangle) is at a vertex of the
    // intersection polygon: triangle vertices inside the rectangle,
    // edge/edge crossings, or rectangle corners inside the triangle.
    const Vec3* v[3] = {&a, &b, &c};
    for (int k = 0; k < 3; ++k) {
      if (v[k]->x() >= -hx && v[k]->x() <= hx && v[k]->y() >= -hy &&
          v[k]->y() <= hy) {
        consider(v[k]->z());
      }
    }
    for (int k = 0; k < 3; ++k) {
      const Vec3 &p = *v[k], &q = *v[(k + 1) % 3];
      double dx = q.x() - p.x(), dy = q.y() - p.y();
      for (const auto& e : rect_edges) {
        double ex = e.bx - e.ax, ey = e.by - e.ay;
        double den = dx * ey - dy * ex;
        if (std::abs(den) < 1e-14) continue;
        double t = ((e.ax - p.x()) * ey - (e.ay - p.y()) * ex) / den;
        double s = ((e.ax - p.x()) * dy - (e.ay - p.y()) * dx) / den;
        if (t >= 0 && t <= 1 && s >= 0 && s <= 1) {
          consider(p.z() + t * (q.z() - p.z()));
        }
      }
    }
    for (const auto& corner : corners) {
      if (point_in_tri_2d(corner[0], corner[1], a, b, c)) {
        double z;
        if (plane_depth_at(a, b, c, corner[0], corner[1], &z)) consider(z);
      }
    }
  }
  return out;
}

ContactPose settle_to_contact(const TriangleMesh& mesh,
                              const RigidTransform& pose,
                              const RenderConfig& config) {
  FootprintExtrema ex = footprint_extrema(mesh, pose, config);
  if (!ex.any) {
    throw NoContactPossible(
        "object does not project into the sensor rectangle");
  }
  ContactPose out;
  out.transform = pose;
  out.transform.translation.z() -= (ex.min_depth - config.d_mm);
  return out;
}

std::vector<float> render_depth(const TriangleMesh& mesh,
                                const RigidTransform& pose,
                                const RenderConfig& config) {
  config.validate();
  const int s = config.supersample_size;
  const double pitch_x = config.sensor_extent_x_mm / s;
  const double pitch_y = config.sensor_extent_y_mm / s;
  const double x0 = -config.sensor_extent_x_mm / 2 + pitch_x / 2;
  const double y0 = -config.sensor_extent_y_mm / 2 + pitch_y / 2;
  std::vector<float> depth(static_cast<size_t>(s) * s,
                           std::numeric_limits<float>::infinity());
  std::vector<Vec3> tv(mesh.vertices.size());
  for (size_t i = 0; i < mesh.vertices.size(); ++i) {
    tv[i] = pose.apply(mesh.vertices[i]);
  }
  for (const auto& f : mesh.faces) {
    const Vec3 &a = tv[f[0]], &b = tv[f[1]], &c = tv[f[2]];
    // Front-facing only: outward normal pointing toward the camera (-z).
    Vec3 n = (b - a).cross(c - a);
    if (n.z() >= 0) continue;
    // Pixel-space vertex coordinates (pixel center i is at coordinate i).
    double ax = (a.x() - x0) / pitch_x, ay = (a.y() - y0) / pitch_y;
    double bx = (b.x() - x0) / pitch_x, by = (b.y() - y0) / pitch_y;
    double cx = (c.x() - x0) / pitch_x, cy = (c.y() - y0) / pitch_y;
    int min_px = std::max(0, (int)std::ceil(std::min({ax, bx, cx})));
    int max_px = std::min(s - 1, (int)std::floor(std::max({ax, bx, cx})));
    int min_py = std::max(0, (int)std::ceil(std::min({ay, by, cy})));
    int max_py = std::min(s - 1, (int)std::floor(std::max({ay, by, cy})));
    if (min_px > max_px || min_py > max_py) continue;
    double area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
    if (std::abs(area) < 1e-14) continue;
    double inv_area = 1.0 / area;
    // Affine depth over pixel coords: z = z_a + gx*(px-ax) + gy*(py-ay).
    double w0 = (b.z() - a.z()) * inv_area, w1 = (c.z() - a.z()) * inv_area;
    double gx = w0 * (cy - ay) - w1 * (by - ay);
    double gy = w1 * (bx - ax) - w0 * (cx - ax);
    // Edge functions, incremental in x. Sign convention matches `area`.
    auto edge0 = [&](double px, double py) {
      return (cx - bx) * (py - by) - (cy - by) * (px - bx);
    };
    auto edge1 = [&](double px, double py) {
      return (ax - cx) * (py - cy) - (ay - cy) * (px - cx);
    };
    auto edge2 = [&](double px, double py) {
      return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
    };
    double sgn = area > 0 ? 1.0 : -1.0;
    for (int py = min_py; py <= max_py; ++py) {
      double e0 = sgn * edge0(min_px, py);
      double e1 = sgn * edge1(min_px, py);
      double e2 = sgn * edge2(min_px, py);
      double de0 = sgn * -(cy - by);
      double de1 = sgn * -(ay - cy);
      double de2 = sgn * -(by - ay);
      double z = a.z() + gx * (min_px - ax) + gy * (py - ay);
      float* row = depth.data() + static_cast<size_t>(py) * s;
      for (int px = min_px; px <= max_px; ++px) {
        if (e0 >= 0 && e1 >= 0 && e2 >= 0) {
          float fz = static_cast<float>(z);
          if (fz < row[px]) row[px] = fz;
        }
        e0 += de0;
        e1 += de1;
        e2 += de2;
        z += gx;
      }
    }
  }
  return depth;
}

ContactMask render_contact(const TriangleMesh& mesh, const ContactPose& pose,
                           const RenderConfig& config,
                           std::optional<double> delta_d_override) {
  config.validate();
  double dd = delta_d_override.value_or(config.delta_d_mm);
  if (dd <= 0 || dd >= config.d_mm) {
    throw ConfigError("delta_d override out of range");
  }
  FootprintExtrema ex = footprint_extrema(mesh, pose.transform, config);
  if (!ex.any || std::abs(ex.min_depth - config.d_mm) > 1e-3) {
    throw NotSettled("footprint minimum depth is " +
                     std::to_string(ex.any ? ex.min_depth : -1.0) +
                     " mm, expected " + std::to_string(config.d_mm));
  }
  std::vector<float> depth = render_depth(mesh, pose.transform, config);
  const int s = config.supersample_size;
  const int k = s / config.image_size;
  const float lo = static_cast<float>(config.d_mm - 1e-9);
  const float hi = static_cast<float>(config.d_mm + dd);
  ContactMask mask(config.image_size, config.image_size);
  for (int oy = 0; oy < config.image_size; ++oy) {
    for (int ox = 0; ox < config.image_size; ++ox) {
      int ones = 0;
      for (int sy = 0; sy < k; ++sy) {
        const float* row = depth.data() + (static_cast<size_t>(oy) * k + sy) * s +
                           static_cast<size_t>(ox) * k;
        for (int sx = 0; sx < k; ++sx) {
          float z = row[sx];
          ones += (z >= lo && z <= hi) ? 1 : 0;
        }
      }
      if (2 * ones >= k * k) mask.set(ox, oy, true);
    }
  }
  return mask;
}

}  // namespace touchloc
