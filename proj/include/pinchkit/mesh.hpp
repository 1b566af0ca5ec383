#pragma once

#include "pinchkit/kinematics.hpp"

#include <array>
#include <string>
#include <vector>

namespace pinchkit {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;  // counter-clockwise seen from outside

  /// Magnitude of the deterministic jitter used while building (0 if none).
  double perturbation = 0.0;
};

/// Convex hull of a point set. Throws DegenerateError when the input spans
/// fewer than three dimensions. Only hull vertices are kept in the output.
TriangleMesh convexHull(const std::vector<Vec3>& points);

/// Signed volume by the divergence theorem (positive for outward winding).
double meshVolume(const TriangleMesh& mesh);

/// Every undirected edge shared by exactly two faces with opposite direction.
bool isWatertight(const TriangleMesh& mesh);

/// V - E + F.
int eulerCharacteristic(const TriangleMesh& mesh);

/// True if x lies inside or within `tol` of a convex, outward-wound mesh.
bool convexContains(const TriangleMesh& mesh, const Vec3& x, double tol = 1e-9);

Vec3 faceNormal(const TriangleMesh& mesh, std::size_t face);

void writeStl(const std::string& path, const TriangleMesh& mesh, const std::string& name = "cover");
void writeObj(const std::string& path, const TriangleMesh& mesh, const std::string& comment = "");
/// Reads ASCII STL, merging bit-identical vertices.
TriangleMesh readStl(const std::string& path);
TriangleMesh readObj(const std::string& path);

}  // namespace pinchkit
