#include "touchloc/primitives.hpp"

#include <cmath>

#include "touchloc/errors.hpp"

namespace touchloc {

namespace {

int add_vertex(TriangleMesh& m, const Vec3& v) {
  m.vertices.push_back(v);
  return static_cast<int>(m.vertices.size()) - 1;
}

double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return a.x() * b.y() - a.y() * b.x();
}

bool point_in_triangle(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                       const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
  double d1 = cross2(b - a, p - a);
  double d2 = cross2(c - b, p - b);
  double d3 = cross2(a - c, p - c);
  bool has_neg = (d1 < 0) || (d2 < 0) || (d3 < 0);
  bool has_pos = (d1 > 0) || (d2 > 0) || (d3 > 0);
  return !(has_neg && has_pos);
}

// Ear clipping for a simple CCW polygon.
std::vector<std::array<int, 3>> triangulate(
    const std::vector<Eigen::Vector2d>& poly) {
  size_t n = poly.size();
  if (n < 3) throw ConfigError("polygon needs >= 3 vertices");
  std::vector<int> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = static_cast<int>(i);
  std::vector<std::array<int, 3>> tris;
  int guard = 0;
  while (idx.size() > 3) {
    bool clipped = false;
    for (size_t i = 0; i < idx.size(); ++i) {
      int ia = idx[(i + idx.size() - 1) % idx.size()];
      int ib = idx[i];
      int ic = idx[(i + 1) % idx.size()];
      const auto &a = poly[ia], &b = poly[ib], &c = poly[ic];
      if (cross2(b - a, c - a) <= 1e-12) continue;  // reflex or degenerate
      bool ear = true;
      for (int j : idx) {
        if (j == ia || j == ib || j == ic) continue;
        if (point_in_triangle(poly[j], a, b, c)) {
          ear = false;
          break;
        }
      }
      if (ear) {
        tris.push_back({ia, ib, ic});
        idx.erase(idx.begin() + static_cast<long>(i));
        clipped = true;
        break;
      }
    }
    if (!clipped) {
      if (++guard > 2) throw ConfigError("polygon is not simple/CCW");
      // One retry pass tolerates collinear chains.
    }
  }
  tris.push_back({idx[0], idx[1], idx[2]});
  return tris;
}

}  // namespace

TriangleMesh make_box(double sx, double sy, double sz) {
  TriangleMesh m;
  double x = sx / 2, y = sy / 2, z = sz / 2;
  for (int ix = 0; ix < 2; ++ix)
    for (int iy = 0; iy < 2; ++iy)
      for (int iz = 0; iz < 2; ++iz)
        add_vertex(m, Vec3(ix ? x : -x, iy ? y : -y, iz ? z : -z));
  // Vertex order: bit2=x, bit1=y, bit0=z.
  auto quad = [&](int a, int b, int c, int d) {
    m.faces.push_back({a, b, c});
    m.faces.push_back({a, c, d});
  };
  quad(0, 1, 3, 2);  // -x
  quad(4, 6, 7, 5);  // +x
  quad(0, 4, 5, 1);  // -y
  quad(2, 3, 7, 6);  // +y
  quad(0, 2, 6, 4);  // -z
  quad(1, 5, 7, 3);  // +z
  return m;
}

TriangleMesh make_uv_sphere(double radius, int segments, int rings) {
  TriangleMesh m;
  int south = add_vertex(m, Vec3(0, 0, -radius));
  std::vector<std::vector<int>> ring_idx(rings - 1);
  for (int r = 1; r < rings; ++r) {
    double phi = M_PI * r / rings - M_PI / 2;  // -pi/2..pi/2
    for (int s = 0; s < segments; ++s) {
      double th = 2 * M_PI * s / segments;
      ring_idx[r - 1].push_back(add_vertex(
          m, Vec3(radius * std::cos(phi) * std::cos(th),
                  radius * std::cos(phi) * std::sin(th), radius * std::sin(phi))));
    }
  }
  int north = add_vertex(m, Vec3(0, 0, radius));
  for (int s = 0; s < segments; ++s) {
    int s2 = (s + 1) % segments;
    m.faces.push_back({south, ring_idx[0][s2], ring_idx[0][s]});
    m.faces.push_back({north, ring_idx[rings - 2][s], ring_idx[rings - 2][s2]});
  }
  for (int r = 0; r + 1 < rings - 1; ++r) {
    for (int s = 0; s < segments; ++s) {
      int s2 = (s + 1) % segments;
      int a = ring_idx[r][s], b = ring_idx[r][s2];
      int c = ring_idx[r + 1][s2], d = ring_idx[r + 1][s];
      m.faces.push_back({a, b, c});
      m.faces.push_back({a, c, d});
    }
  }
  return m;
}

TriangleMesh make_cylinder(double radius, double height, int segments) {
  TriangleMesh m;
  double h = height / 2;
  int cb = add_vertex(m, Vec3(0, 0, -h));
  int ct = add_vertex(m, Vec3(0, 0, h));
  std::vector<int> bot, top;
  for (int s = 0; s < segments; ++s) {
    double th = 2 * M_PI * s / segments;
    bot.push_back(add_vertex(m, Vec3(radius * std::cos(th), radius * std::sin(th), -h)));
    top.push_back(add_vertex(m, Vec3(radius * std::cos(th), radius * std::sin(th), h)));
  }
  for (int s = 0; s < segments; ++s) {
    int s2 = (s + 1) % segments;
    m.faces.push_back({cb, bot[s2], bot[s]});
    m.faces.push_back({ct, top[s], top[s2]});
    m.faces.push_back({bot[s], bot[s2], top[s2]});
    m.faces.push_back({bot[s], top[s2], top[s]});
  }
  return m;
}

TriangleMesh make_extruded_polygon(const std::vector<Eigen::Vector2d>& polygon,
                                   double thickness) {
  auto tris = triangulate(polygon);
  TriangleMesh m;
  int n = static_cast<int>(polygon.size());
  double h = thickness / 2;
  for (const auto& p : polygon) add_vertex(m, Vec3(p.x(), p.y(), -h));
  for (const auto& p : polygon) add_vertex(m, Vec3(p.x(), p.y(), h));
  for (const auto& t : tris) {
    m.faces.push_back({t[0], t[2], t[1]});           // bottom, outward -z
    m.faces.push_back({t[0] + n, t[1] + n, t[2] + n});  // top, outward +z
  }
  for (int i = 0; i < n; ++i) {
    int j = (i + 1) % n;
    m.faces.push_back({i, j, j + n});
    m.faces.push_back({i, j + n, i + n});
  }
  return m;
}

TriangleMesh make_hanger_plate(double length, double width, double thickness) {
  // Asymmetric staircase outline (CCW), scaled from a 44x16 template.
  double sx = length / 44.0, sy = width / 16.0;
  std::vector<Eigen::Vector2d> poly = {
      {-22, -8}, {22, -8},   {22, 0},    {14, 0},   {14, 4},
      {6, 4},    {6, 8},     {-4, 8},    {-4, 2},   {-13, 2},
      {-13, 6},  {-18, 6},   {-18, -2},  {-22, -2},
  };
  for (auto& p : poly) {
    p.x() *= sx;
    p.y() *= sy;
  }
  return make_extruded_polygon(poly, thickness);
}

TriangleMesh make_wedge(double length, double width, double thin_height,
                        double thick_height) {
  TriangleMesh m;
  double x = length / 2, y = width / 2;
  // Bottom at z=0 (flat), top slopes from thin at -x to thick at +x; the
  // mesh is centered afterwards so symmetry checks about the origin apply.
  int v000 = add_vertex(m, Vec3(-x, -y, 0));
  int v100 = add_vertex(m, Vec3(x, -y, 0));
  int v110 = add_vertex(m, Vec3(x, y, 0));
  int v010 = add_vertex(m, Vec3(-x, y, 0));
  int v001 = add_vertex(m, Vec3(-x, -y, thin_height));
  int v101 = add_vertex(m, Vec3(x, -y, thick_height));
  int v111 = add_vertex(m, Vec3(x, y, thick_height));
  int v011 = add_vertex(m, Vec3(-x, y, thin_height));
  auto quad = [&](int a, int b, int c, int d) {
    m.faces.push_back({a, b, c});
    m.faces.push_back({a, c, d});
  };
  quad(v000, v010, v110, v100);  // bottom (outward -z)
  quad(v001, v101, v111, v011);  // top
  quad(v000, v100, v101, v001);  // -y side
  quad(v010, v011, v111, v110);  // +y side
  quad(v000, v001, v011, v010);  // -x side
  quad(v100, v110, v111, v101);  // +x side
  Vec3 centroid(0, 0, (thin_height + thick_height) / 4.0);
  for (auto& v : m.vertices) v -= centroid;
  return m;
}

TriangleMesh make_rod(double length, double width, double thickness) {
  return make_box(length, width, thickness);
}

}  // namespace touchloc
