#include "pinchkit/mesh.hpp"

#include "pinchkit/error.hpp"
#include "pinchkit/random.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <unordered_set>

namespace pinchkit {

namespace {

double orient(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& p) {
  return (b - a).cross(c - a).dot(p - a);
}

using GridPoint = std::array<std::int64_t, 3>;

/// Exact sign of the orientation determinant for grid points below 2^42 in magnitude.
int orientSign(const GridPoint& a, const GridPoint& b, const GridPoint& c, const GridPoint& p) {
  __extension__ typedef __int128 I;
  const I bx = b[0] - a[0], by = b[1] - a[1], bz = b[2] - a[2];
  const I cx = c[0] - a[0], cy = c[1] - a[1], cz = c[2] - a[2];
  const I px = p[0] - a[0], py = p[1] - a[1], pz = p[2] - a[2];
  const I det = (by * cz - bz * cy) * px + (bz * cx - bx * cz) * py + (bx * cy - by * cx) * pz;
  return det > 0 ? 1 : (det < 0 ? -1 : 0);
}

std::uint64_t edgeKey(int u, int v) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(u)) << 32) |
         static_cast<std::uint32_t>(v);
}

struct HullFace {
  int a;
  int b;
  int c;
  bool alive;
};

}  // namespace

TriangleMesh convexHull(const std::vector<Vec3>& points) {
  const int n = static_cast<int>(points.size());
  if (n < 4) {
    throw DegenerateError("convex hull needs at least 4 points");
  }
  Vec3 lo = points.front();
  Vec3 hi = points.front();
  for (const Vec3& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double diag = (hi - lo).norm();
  if (!(diag > 0.0)) {
    throw DegenerateError("convex hull input is a single point");
  }

  // Initial simplex from the unperturbed input; it doubles as the degeneracy test.
  const auto ui = [](int i) { return static_cast<std::size_t>(i); };
  int i0 = 0;
  for (int i = 1; i < n; ++i) {
    if (points[ui(i)].x() < points[ui(i0)].x()) i0 = i;
  }
  int i1 = i0;
  double best = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = (points[ui(i)] - points[ui(i0)]).squaredNorm();
    if (d > best) {
      best = d;
      i1 = i;
    }
  }
  const Vec3 dir = (points[ui(i1)] - points[ui(i0)]).normalized();
  int i2 = i0;
  best = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = (points[ui(i)] - points[ui(i0)]).cross(dir).norm();
    if (d > best) {
      best = d;
      i2 = i;
    }
  }
  if (best <= 1e-12 * diag) {
    throw DegenerateError("convex hull input is collinear");
  }
  int i3 = i0;
  best = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = std::abs(orient(points[ui(i0)], points[ui(i1)], points[ui(i2)], points[ui(i)]));
    if (v > best) {
      best = v;
      i3 = i;
    }
  }
  if (best <= 1e-12 * diag * diag * diag) {
    throw DegenerateError("convex hull input is coplanar");
  }

  // Points go onto an integer grid of 2^40 cells per half extent so that
  // orientation signs are exact; a tiny deterministic jitter breaks exact ties
  // (cube faces, projected flats).
  const double eps = 1e-12 * std::max(1.0, diag);
  const Vec3 center = 0.5 * (lo + hi);
  const double unit = 0.5 * (hi - lo).maxCoeff() / std::ldexp(1.0, 40);
  const std::int64_t jitter = std::clamp<std::int64_t>(std::llround(eps / unit), 1, std::int64_t{1} << 30);
  std::vector<GridPoint> pts(points.size());
  Rng rng(0x5eedULL);
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (int k = 0; k < 3; ++k) {
      const std::int64_t j = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(2 * jitter + 1))) - jitter;
      pts[i][static_cast<std::size_t>(k)] = std::llround((points[i][k] - center[k]) / unit) + j;
    }
  }

  std::vector<HullFace> faces;
  auto addFace = [&](int a, int b, int c) { faces.push_back({a, b, c, true}); };
  const int initial = orientSign(pts[ui(i0)], pts[ui(i1)], pts[ui(i2)], pts[ui(i3)]);
  if (initial == 0) throw DegenerateError("convex hull input is coplanar");
  if (initial > 0) {
    std::swap(i1, i2);
  }
  addFace(i0, i1, i2);
  addFace(i0, i3, i1);
  addFace(i1, i3, i2);
  addFace(i2, i3, i0);

  std::vector<int> visible;
  std::unordered_set<std::uint64_t> visible_edges;
  for (int p = 0; p < n; ++p) {
    if (p == i0 || p == i1 || p == i2 || p == i3) continue;
    visible.clear();
    for (int f = 0; f < static_cast<int>(faces.size()); ++f) {
      const HullFace& hf = faces[ui(f)];
      if (hf.alive && orientSign(pts[ui(hf.a)], pts[ui(hf.b)], pts[ui(hf.c)], pts[ui(p)]) > 0) {
        visible.push_back(f);
      }
    }
    if (visible.empty()) continue;
    visible_edges.clear();
    for (int f : visible) {
      const HullFace& hf = faces[ui(f)];
      visible_edges.insert(edgeKey(hf.a, hf.b));
      visible_edges.insert(edgeKey(hf.b, hf.c));
      visible_edges.insert(edgeKey(hf.c, hf.a));
    }
    std::vector<std::pair<int, int>> horizon;
    for (int f : visible) {
      HullFace& hf = faces[ui(f)];
      const std::array<std::pair<int, int>, 3> edges = {
          std::pair{hf.a, hf.b}, std::pair{hf.b, hf.c}, std::pair{hf.c, hf.a}};
      for (const auto& [u, v] : edges) {
        if (visible_edges.count(edgeKey(v, u)) == 0) horizon.emplace_back(u, v);
      }
      hf.alive = false;
    }
    for (const auto& [u, v] : horizon) addFace(u, v, p);
    if (faces.size() > 8 * static_cast<std::size_t>(n) + 64) {
      std::erase_if(faces, [](const HullFace& hf) { return !hf.alive; });
    }
  }

  TriangleMesh mesh;
  mesh.perturbation = static_cast<double>(jitter) * unit;
  std::map<int, int> remap;
  for (const HullFace& hf : faces) {
    if (!hf.alive) continue;
    std::array<int, 3> tri{};
    const std::array<int, 3> src = {hf.a, hf.b, hf.c};
    for (int k = 0; k < 3; ++k) {
      auto [it, inserted] = remap.emplace(src[static_cast<std::size_t>(k)],
                                          static_cast<int>(remap.size()));
      tri[static_cast<std::size_t>(k)] = it->second;
    }
    mesh.faces.push_back(tri);
  }
  mesh.vertices.resize(remap.size());
  for (const auto& [orig, idx] : remap) mesh.vertices[ui(idx)] = points[ui(orig)];
  return mesh;
}

double meshVolume(const TriangleMesh& mesh) {
  double v = 0.0;
  for (const auto& f : mesh.faces) {
    const Vec3& a = mesh.vertices[static_cast<std::size_t>(f[0])];
    const Vec3& b = mesh.vertices[static_cast<std::size_t>(f[1])];
    const Vec3& c = mesh.vertices[static_cast<std::size_t>(f[2])];
    v += a.dot(b.cross(c));
  }
  return v / 6.0;
}

bool isWatertight(const TriangleMesh& mesh) {
  std::map<std::pair<int, int>, int> directed;
  for (const auto& f : mesh.faces) {
    for (int k = 0; k < 3; ++k) {
      const int u = f[static_cast<std::size_t>(k)];
      const int v = f[static_cast<std::size_t>((k + 1) % 3)];
      if (u == v) return false;
      if (++directed[{u, v}] > 1) return false;
    }
  }
  for (const auto& [edge, count] : directed) {
    if (directed.count({edge.second, edge.first}) == 0) return false;
  }
  return !mesh.faces.empty();
}

int eulerCharacteristic(const TriangleMesh& mesh) {
  std::map<std::pair<int, int>, int> edges;
  std::unordered_set<int> used;
  for (const auto& f : mesh.faces) {
    for (int k = 0; k < 3; ++k) {
      const int u = f[static_cast<std::size_t>(k)];
      const int v = f[static_cast<std::size_t>((k + 1) % 3)];
      edges[{std::min(u, v), std::max(u, v)}]++;
      used.insert(u);
    }
  }
  return static_cast<int>(used.size()) - static_cast<int>(edges.size()) +
         static_cast<int>(mesh.faces.size());
}

Vec3 faceNormal(const TriangleMesh& mesh, std::size_t face) {
  const auto& f = mesh.faces[face];
  const Vec3& a = mesh.vertices[static_cast<std::size_t>(f[0])];
  const Vec3& b = mesh.vertices[static_cast<std::size_t>(f[1])];
  const Vec3& c = mesh.vertices[static_cast<std::size_t>(f[2])];
  const Vec3 n = (b - a).cross(c - a);
  const double len = n.norm();
  return len > 0.0 ? Vec3(n / len) : Vec3::Zero();
}

bool convexContains(const TriangleMesh& mesh, const Vec3& x, double tol) {
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Vec3 n = faceNormal(mesh, f);
    if (n.isZero()) continue;
    const Vec3& a = mesh.vertices[static_cast<std::size_t>(mesh.faces[f][0])];
    if (n.dot(x - a) > tol) return false;
  }
  return true;
}

void writeStl(const std::string& path, const TriangleMesh& mesh, const std::string& name) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << std::setprecision(17);
  out << "solid " << name << "\n";
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Vec3 n = faceNormal(mesh, f);
    out << "  facet normal " << n.x() << ' ' << n.y() << ' ' << n.z() << "\n    outer loop\n";
    for (int k : mesh.faces[f]) {
      const Vec3& v = mesh.vertices[static_cast<std::size_t>(k)];
      out << "      vertex " << v.x() << ' ' << v.y() << ' ' << v.z() << "\n";
    }
    out << "    endloop\n  endfacet\n";
  }
  out << "endsolid " << name << "\n";
}

void writeObj(const std::string& path, const TriangleMesh& mesh, const std::string& comment) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << std::setprecision(17);
  if (!comment.empty()) out << "# " << comment << "\n";
  for (const Vec3& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << "\n";
  for (const auto& f : mesh.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << "\n";
}

TriangleMesh readStl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  TriangleMesh mesh;
  std::map<std::array<double, 3>, int> lookup;
  std::string line;
  std::array<int, 3> tri{};
  int corner = 0;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word != "vertex") continue;
    std::array<double, 3> xyz{};
    if (!(ls >> xyz[0] >> xyz[1] >> xyz[2])) throw ParseError(path + ": bad vertex line");
    auto [it, inserted] = lookup.emplace(xyz, static_cast<int>(mesh.vertices.size()));
    if (inserted) mesh.vertices.emplace_back(xyz[0], xyz[1], xyz[2]);
    tri[static_cast<std::size_t>(corner++)] = it->second;
    if (corner == 3) {
      mesh.faces.push_back(tri);
      corner = 0;
    }
  }
  if (corner != 0) throw ParseError(path + ": truncated facet");
  return mesh;
}

TriangleMesh readObj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  TriangleMesh mesh;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "v") {
      Vec3 v;
      ls >> v.x() >> v.y() >> v.z();
      mesh.vertices.push_back(v);
    } else if (word == "f") {
      std::array<int, 3> f{};
      for (int& k : f) {
        std::string tok;
        ls >> tok;
        k = std::stoi(tok.substr(0, tok.find('/'))) - 1;
      }
      mesh.faces.push_back(f);
    }
  }
  return mesh;
}

}  // namespace pinchkit
