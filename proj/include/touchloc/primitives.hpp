#pragma once

#include <vector>

#include "touchloc/geometry.hpp"

namespace touchloc {

// Procedural meshes, all centered at the origin unless noted.
// Dimensions in mm.

TriangleMesh make_box(double sx, double sy, double sz);

// UV sphere with vertices at both poles (so the lowest/highest points of the
// surface are exact mesh vertices).
TriangleMesh make_uv_sphere(double radius, int segments = 48, int rings = 24);

// Cylinder with axis along z.
TriangleMesh make_cylinder(double radius, double height, int segments = 48);

// Extrudes a simple CCW polygon (no holes) in the xy plane to thickness along
// z, producing a closed mesh. The polygon is triangulated by ear clipping.
TriangleMesh make_extruded_polygon(const std::vector<Eigen::Vector2d>& polygon,
                                   double thickness);

// Flat bracket with an asymmetric staircase silhouette; every sensor-sized
// window over it sees a distinct pattern of edges and steps. Used by the
// bundled examples and the retrieval experiments.
TriangleMesh make_hanger_plate(double length = 44.0, double width = 16.0,
                               double thickness = 4.0);

// Rectangular footprint with a flat bottom and a top face sloping along +x:
// the bottom contact mask is 180-degree ambiguous while the top contact and
// the second finger resolve the flip.
TriangleMesh make_wedge(double length = 22.0, double width = 14.0,
                        double thin_height = 3.0, double thick_height = 9.0);

// Long thin rod along x (for elongated-object distribution maps).
TriangleMesh make_rod(double length = 80.0, double width = 7.0,
                      double thickness = 5.0);

}  // namespace touchloc
