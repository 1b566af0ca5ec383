#pragma once

#include "pinchkit/kinematics.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pinchkit {

/// Plane {x : n.(x - p) = 0} with unit normal n.
struct Plane {
  Vec3 p = Vec3::Zero();
  Vec3 n = Vec3::UnitZ();

  /// Normalizes `normal`; throws DegenerateError on a zero vector.
  static Plane fromRaw(const Vec3& point, const Vec3& normal);
  Plane flipped() const { return {p, -n}; }
};

/// Signed distance n.(x - p).
inline double planeSdf(const Plane& plane, const Vec3& x) { return plane.n.dot(x - plane.p); }
inline Vec3 projectOntoPlane(const Plane& plane, const Vec3& x) {
  return x - planeSdf(plane, x) * plane.n;
}

enum class ShapeKind { kSphere, kBox, kCylinder, kCloud };

/// Sphere: {r}. Box: {hx, hy, hz}. Cylinder (local z axis): {r, hh}.
struct PrimitiveParams {
  double radius = 0.0;
  Vec3 half_extents = Vec3::Zero();
  double half_height = 0.0;
};

class ObjectShape {
public:
  ShapeKind kind = ShapeKind::kCloud;
  PrimitiveParams params;
  RigidTransform pose;
  std::vector<Vec3> cloud;
  std::vector<Vec3> normals;  // empty or one per cloud point
  std::string id;

  Vec3 center() const;
  /// Circumscribed radius about center() (analytic for primitives).
  double boundingRadius() const;
  /// Smallest width over which a two-finger pinch could close (m).
  double minWidth() const;
  bool hasSignedSdf() const { return kind != ShapeKind::kCloud || !normals.empty(); }
};

/// Uniform-by-area surface samples of a primitive. Deterministic in `seed`.
ObjectShape makePrimitive(ShapeKind kind, const PrimitiveParams& params, const RigidTransform& pose,
                          int count, std::uint64_t seed);

/// Parses `sphere:r=0.005`, `box:hx=..,hy=..,hz=..` or `cyl:r=..,hh=..`.
/// The input string becomes the shape id; the cloud seed is derived from it.
ObjectShape parsePrimitiveSpec(const std::string& spec, int count = 256);
bool isPrimitiveSpec(const std::string& spec);

/// Cloud-only shape (normals optional).
ObjectShape makeCloudShape(std::vector<Vec3> points, std::vector<Vec3> normals, std::string id);

struct SdfSample {
  double value = 0.0;
  Vec3 gradient = Vec3::UnitZ();
};

/// Signed distance (negative inside) and its gradient. Cloud-only shapes use
/// the nearest stored point, signed by that point's normal when available.
SdfSample sdfQuery(const ObjectShape& shape, const Vec3& x);

/// Centroid-subtracted cloud scaled by 1 / bounding radius, plus that radius.
struct NormalizedCloud {
  Eigen::Matrix<double, Eigen::Dynamic, 3> points;
  double scale = 1.0;
};
NormalizedCloud normalizeCloud(const std::vector<Vec3>& cloud);

/// ASCII PLY with `x y z [nx ny nz]` vertex properties.
void writePly(const std::string& path, const std::vector<Vec3>& points,
              const std::vector<Vec3>& normals = {}, const std::string& comment = "");
ObjectShape readPly(const std::string& path);

/// FNV-1a over the bytes of a string.
std::uint64_t hashString(const std::string& s);

}  // namespace pinchkit
