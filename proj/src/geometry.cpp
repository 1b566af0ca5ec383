#include "pinchkit/geometry.hpp"

#include "pinchkit/error.hpp"
#include "pinchkit/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

namespace pinchkit {

Plane Plane::fromRaw(const Vec3& point, const Vec3& normal) {
  const double len = normal.norm();
  if (!(len > 0.0) || !std::isfinite(len)) {
    throw DegenerateError("plane normal has zero length");
  }
  return {point, normal / len};
}

std::uint64_t hashString(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Vec3 ObjectShape::center() const {
  if (kind != ShapeKind::kCloud) {
    return pose.translation;
  }
  Vec3 c = Vec3::Zero();
  for (const Vec3& x : cloud) c += x;
  return cloud.empty() ? c : Vec3(c / static_cast<double>(cloud.size()));
}

double ObjectShape::boundingRadius() const {
  switch (kind) {
    case ShapeKind::kSphere:
      return params.radius;
    case ShapeKind::kBox:
      return params.half_extents.norm();
    case ShapeKind::kCylinder:
      return std::hypot(params.radius, params.half_height);
    case ShapeKind::kCloud:
      break;
  }
  const Vec3 c = center();
  double r = 0.0;
  for (const Vec3& x : cloud) r = std::max(r, (x - c).norm());
  return r;
}

double ObjectShape::minWidth() const {
  switch (kind) {
    case ShapeKind::kSphere:
      return 2.0 * params.radius;
    case ShapeKind::kBox:
      return 2.0 * params.half_extents.minCoeff();
    case ShapeKind::kCylinder:
      return 2.0 * std::min(params.radius, params.half_height);
    case ShapeKind::kCloud:
      break;
  }
  // Extent along the weakest principal axis.
  const Vec3 c = center();
  Mat3 cov = Mat3::Zero();
  for (const Vec3& x : cloud) cov += (x - c) * (x - c).transpose();
  const Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  const Vec3 axis = es.eigenvectors().col(0);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const Vec3& x : cloud) {
    lo = std::min(lo, axis.dot(x - c));
    hi = std::max(hi, axis.dot(x - c));
  }
  return cloud.empty() ? 0.0 : hi - lo;
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void requirePositive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw Error(std::string("non-positive dimension: ") + what);
  }
}

struct LocalSample {
  Vec3 point;
  Vec3 normal;
};

LocalSample sampleSphere(double r, Rng& rng) {
  const double z = 2.0 * rng.uniform() - 1.0;
  const double phi = kTwoPi * rng.uniform();
  const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
  const Vec3 u(s * std::cos(phi), s * std::sin(phi), z);
  const Vec3 dir = u / u.norm();
  return {r * dir, dir};
}

LocalSample sampleBox(const Vec3& h, Rng& rng) {
  const std::array<double, 3> areas = {h.y() * h.z(), h.x() * h.z(), h.x() * h.y()};
  const double total = areas[0] + areas[1] + areas[2];
  double pick = rng.uniform() * total;
  int axis = 0;
  while (axis < 2 && pick >= areas[static_cast<std::size_t>(axis)]) {
    pick -= areas[static_cast<std::size_t>(axis)];
    ++axis;
  }
  const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
  Vec3 p;
  for (int k = 0; k < 3; ++k) {
    p[k] = (2.0 * rng.uniform() - 1.0) * h[k];
  }
  p[axis] = sign * h[axis];
  Vec3 n = Vec3::Zero();
  n[axis] = sign;
  return {p, n};
}

LocalSample sampleCylinder(double r, double hh, Rng& rng) {
  const double lateral = kTwoPi * r * 2.0 * hh;
  const double caps = 2.0 * std::numbers::pi * r * r;
  const double u = rng.uniform() * (lateral + caps);
  const double phi = kTwoPi * rng.uniform();
  if (u < lateral) {
    const double z = (2.0 * rng.uniform() - 1.0) * hh;
    const Vec3 dir(std::cos(phi), std::sin(phi), 0.0);
    return {Vec3(r * dir.x(), r * dir.y(), z), dir};
  }
  const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
  const double rho = r * std::sqrt(rng.uniform());
  return {Vec3(rho * std::cos(phi), rho * std::sin(phi), sign * hh), Vec3(0.0, 0.0, sign)};
}

std::string formatNumber(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

}  // namespace

ObjectShape makePrimitive(ShapeKind kind, const PrimitiveParams& params, const RigidTransform& pose,
                          int count, std::uint64_t seed) {
  if (count < 32) {
    throw Error("point count must be at least 32");
  }
  ObjectShape shape;
  shape.kind = kind;
  shape.params = params;
  shape.pose = pose;
  switch (kind) {
    case ShapeKind::kSphere:
      requirePositive(params.radius, "sphere radius");
      shape.id = "sphere:r=" + formatNumber(params.radius);
      break;
    case ShapeKind::kBox:
      requirePositive(params.half_extents.x(), "box hx");
      requirePositive(params.half_extents.y(), "box hy");
      requirePositive(params.half_extents.z(), "box hz");
      shape.id = "box:hx=" + formatNumber(params.half_extents.x()) +
                 ",hy=" + formatNumber(params.half_extents.y()) +
                 ",hz=" + formatNumber(params.half_extents.z());
      break;
    case ShapeKind::kCylinder:
      requirePositive(params.radius, "cylinder radius");
      requirePositive(params.half_height, "cylinder half-height");
      shape.id = "cyl:r=" + formatNumber(params.radius) + ",hh=" + formatNumber(params.half_height);
      break;
    case ShapeKind::kCloud:
      throw Error("makePrimitive: cloud-only shapes are built with makeCloudShape");
  }
  Rng rng(seed);
  shape.cloud.reserve(static_cast<std::size_t>(count));
  shape.normals.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    LocalSample s;
    if (kind == ShapeKind::kSphere) {
      s = sampleSphere(params.radius, rng);
    } else if (kind == ShapeKind::kBox) {
      s = sampleBox(params.half_extents, rng);
    } else {
      s = sampleCylinder(params.radius, params.half_height, rng);
    }
    shape.cloud.push_back(pose.apply(s.point));
    shape.normals.push_back(pose.rotation * s.normal);
  }
  return shape;
}

bool isPrimitiveSpec(const std::string& spec) {
  return spec.rfind("sphere:", 0) == 0 || spec.rfind("box:", 0) == 0 || spec.rfind("cyl:", 0) == 0;
}

ObjectShape parsePrimitiveSpec(const std::string& spec, int count) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) {
    throw Error("bad primitive spec '" + spec + "'");
  }
  const std::string kind = spec.substr(0, colon);
  std::map<std::string, double> values;
  std::stringstream ss(spec.substr(colon + 1));
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      throw Error("bad primitive spec '" + spec + "': expected key=value");
    }
    try {
      std::size_t used = 0;
      const std::string text = item.substr(eq + 1);
      values[item.substr(0, eq)] = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
    } catch (const std::exception&) {
      throw Error("bad primitive spec '" + spec + "': '" + item + "' is not a number");
    }
  }
  auto take = [&](const char* key) {
    const auto it = values.find(key);
    if (it == values.end()) {
      throw Error("bad primitive spec '" + spec + "': missing '" + key + "'");
    }
    const double v = it->second;
    values.erase(it);
    return v;
  };
  PrimitiveParams params;
  ShapeKind shape_kind;
  if (kind == "sphere") {
    shape_kind = ShapeKind::kSphere;
    params.radius = take("r");
  } else if (kind == "box") {
    shape_kind = ShapeKind::kBox;
    params.half_extents = Vec3(take("hx"), take("hy"), take("hz"));
  } else if (kind == "cyl") {
    shape_kind = ShapeKind::kCylinder;
    params.radius = take("r");
    params.half_height = take("hh");
  } else {
    throw Error("unknown primitive kind '" + kind + "'");
  }
  if (!values.empty()) {
    throw Error("bad primitive spec '" + spec + "': unknown key '" + values.begin()->first + "'");
  }
  ObjectShape shape = makePrimitive(shape_kind, params, RigidTransform::identity(), count,
                                    hashString(spec));
  shape.id = spec;
  return shape;
}

ObjectShape makeCloudShape(std::vector<Vec3> points, std::vector<Vec3> normals, std::string id) {
  if (points.size() < 32) {
    throw Error("cloud '" + id + "' has fewer than 32 points");
  }
  if (!normals.empty() && normals.size() != points.size()) {
    throw DimensionError("cloud '" + id + "': normal count differs from point count");
  }
  ObjectShape shape;
  shape.kind = ShapeKind::kCloud;
  shape.cloud = std::move(points);
  shape.normals = std::move(normals);
  for (Vec3& n : shape.normals) {
    const double len = n.norm();
    if (len > 0.0) n /= len;
  }
  shape.id = std::move(id);
  return shape;
}

SdfSample sdfQuery(const ObjectShape& shape, const Vec3& x) {
  if (shape.kind == ShapeKind::kCloud) {
    SdfSample out;
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_i = 0;
    for (std::size_t i = 0; i < shape.cloud.size(); ++i) {
      const double d = (x - shape.cloud[i]).squaredNorm();
      if (d < best) {
        best = d;
        best_i = i;
      }
    }
    const Vec3 delta = x - shape.cloud[best_i];
    const double dist = delta.norm();
    double sign = 1.0;
    if (!shape.normals.empty() && shape.normals[best_i].dot(delta) < 0.0) {
      sign = -1.0;
    }
    out.value = sign * dist;
    if (dist > 0.0) {
      out.gradient = sign * delta / dist;
    } else if (!shape.normals.empty()) {
      out.gradient = shape.normals[best_i];
    }
    return out;
  }

  const Vec3 local = shape.pose.applyInverse(x);
  SdfSample out;
  Vec3 grad_local = Vec3::UnitZ();
  switch (shape.kind) {
    case ShapeKind::kSphere: {
      const double len = local.norm();
      out.value = len - shape.params.radius;
      if (len > 0.0) grad_local = local / len;
      break;
    }
    case ShapeKind::kBox: {
      const Vec3& h = shape.params.half_extents;
      const Vec3 q = local.cwiseAbs() - h;
      const Vec3 outside = q.cwiseMax(0.0);
      const double out_len = outside.norm();
      if (out_len > 0.0) {
        out.value = out_len;
        grad_local = outside / out_len;
      } else {
        Eigen::Index axis = 0;
        out.value = q.maxCoeff(&axis);
        grad_local = Vec3::Zero();
        grad_local[axis] = 1.0;
      }
      for (int k = 0; k < 3; ++k) {
        if (local[k] < 0.0) grad_local[k] = -grad_local[k];
      }
      break;
    }
    case ShapeKind::kCylinder: {
      const double rho = std::hypot(local.x(), local.y());
      const Eigen::Vector2d q(rho - shape.params.radius, std::abs(local.z()) - shape.params.half_height);
      const Eigen::Vector2d outside = q.cwiseMax(0.0);
      const double out_len = outside.norm();
      Eigen::Vector2d g2;
      if (out_len > 0.0) {
        out.value = out_len;
        g2 = outside / out_len;
      } else if (q.x() >= q.y()) {
        out.value = q.x();
        g2 = Eigen::Vector2d(1.0, 0.0);
      } else {
        out.value = q.y();
        g2 = Eigen::Vector2d(0.0, 1.0);
      }
      const Eigen::Vector2d radial = rho > 0.0 ? Eigen::Vector2d(local.x() / rho, local.y() / rho)
                                               : Eigen::Vector2d(1.0, 0.0);
      grad_local = Vec3(g2.x() * radial.x(), g2.x() * radial.y(),
                        g2.y() * (local.z() < 0.0 ? -1.0 : 1.0));
      break;
    }
    case ShapeKind::kCloud:
      break;
  }
  out.gradient = shape.pose.rotation * grad_local;
  return out;
}

NormalizedCloud normalizeCloud(const std::vector<Vec3>& cloud) {
  NormalizedCloud out;
  if (cloud.empty()) {
    throw Error("normalizeCloud: empty cloud");
  }
  Vec3 c = Vec3::Zero();
  for (const Vec3& x : cloud) c += x;
  c /= static_cast<double>(cloud.size());
  double r = 0.0;
  for (const Vec3& x : cloud) r = std::max(r, (x - c).norm());
  out.scale = r;
  const double inv = r > 0.0 ? 1.0 / r : 1.0;
  out.points.resize(static_cast<Eigen::Index>(cloud.size()), 3);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    out.points.row(static_cast<Eigen::Index>(i)) = ((cloud[i] - c) * inv).transpose();
  }
  return out;
}

void writePly(const std::string& path, const std::vector<Vec3>& points,
              const std::vector<Vec3>& normals, const std::string& comment) {
  std::ofstream out(path);
  if (!out) {
    throw Error("cannot write '" + path + "'");
  }
  const bool with_normals = !normals.empty();
  out << "ply\nformat ascii 1.0\n";
  if (!comment.empty()) out << "comment " << comment << "\n";
  out << "element vertex " << points.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  if (with_normals) out << "property double nx\nproperty double ny\nproperty double nz\n";
  out << "end_header\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < points.size(); ++i) {
    out << points[i].x() << ' ' << points[i].y() << ' ' << points[i].z();
    if (with_normals) out << ' ' << normals[i].x() << ' ' << normals[i].y() << ' ' << normals[i].z();
    out << '\n';
  }
}

ObjectShape readPly(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error("cannot open '" + path + "'");
  }
  std::string line;
  std::getline(in, line);
  if (line != "ply") {
    throw ParseError(path + ": not a PLY file");
  }
  std::size_t count = 0;
  std::vector<std::string> props;
  bool in_vertex = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "ascii") throw ParseError(path + ": only ASCII PLY is supported");
    } else if (word == "element") {
      std::string name;
      ls >> name;
      in_vertex = name == "vertex";
      if (in_vertex) ls >> count;
    } else if (word == "property" && in_vertex) {
      std::string type;
      std::string name;
      ls >> type >> name;
      props.push_back(name);
    } else if (word == "end_header") {
      break;
    }
  }
  auto find = [&](const std::string& name) -> int {
    const auto it = std::find(props.begin(), props.end(), name);
    return it == props.end() ? -1 : static_cast<int>(it - props.begin());
  };
  const int ix = find("x");
  const int iy = find("y");
  const int iz = find("z");
  const int inx = find("nx");
  const int iny = find("ny");
  const int inz = find("nz");
  if (ix < 0 || iy < 0 || iz < 0) {
    throw ParseError(path + ": vertex element lacks x/y/z");
  }
  const bool with_normals = inx >= 0 && iny >= 0 && inz >= 0;
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  std::vector<double> row(props.size());
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw ParseError(path + ": truncated vertex list");
    std::istringstream ls(line);
    for (double& v : row) {
      if (!(ls >> v)) throw ParseError(path + ": bad vertex line " + std::to_string(i + 1));
    }
    const auto at = [&](int k) { return row[static_cast<std::size_t>(k)]; };
    points.emplace_back(at(ix), at(iy), at(iz));
    if (with_normals) normals.emplace_back(at(inx), at(iny), at(inz));
  }
  return makeCloudShape(std::move(points), std::move(normals), path);
}

}  // namespace pinchkit
