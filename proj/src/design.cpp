#include "pinchkit/design.hpp"

#include "pinchkit/error.hpp"
#include "pinchkit/random.hpp"
#include "pinchkit/synthesis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

namespace pinchkit {

namespace {

double sideOf(std::size_t slot) { return slot == 0 ? -1.0 : 1.0; }

struct ChainColumn {
  Vec3 axis;
  Vec3 col;
  bool revolute;
  std::size_t joint;
};

std::vector<ChainColumn> tipColumns(const HandModel& model, const LinkPoses& poses,
                                    std::size_t finger) {
  const Finger& f = model.fingers()[finger];
  const Vec3 x = poses[f.tip_link].translation;
  std::vector<ChainColumn> cols;
  for (std::size_t ji : f.joints) {
    const JointFrame jf = jointWorldFrame(model, poses, ji);
    const bool rev = model.joints()[ji].type == JointType::kRevolute;
    cols.push_back({jf.axis, rev ? Vec3(jf.axis.cross(x - jf.anchor)) : jf.axis, rev, ji});
  }
  return cols;
}

Vec3 tangentProject(const Vec3& n, const Vec3& g, double raw_norm) {
  return (g - n.dot(g) * n) / raw_norm;
}

struct PadFrame {
  Vec3 x;
  Vec3 c;
};

PadFrame padCenter(const HandModel& model, const LinkPoses& poses, std::size_t finger) {
  const RigidTransform& tip = poses[model.fingers()[finger].tip_link];
  const SurfaceSample& s = model.tipSamples(finger).front();
  return {tip.apply(s.point), tip.rotation * s.normal};
}

double oppositionScore(const HandModel& model, const Eigen::VectorXd& q,
                       const std::vector<std::size_t>& pinch) {
  const LinkPoses poses = forwardKinematics(model, q);
  const PadFrame t = padCenter(model, poses, pinch[0]);
  const PadFrame i = padCenter(model, poses, pinch[1]);
  const Vec3 d = i.x - t.x;
  if (d.norm() < 1e-9) return -t.c.dot(i.c);
  const Vec3 u = d.normalized();
  return -t.c.dot(i.c) + t.c.dot(u) - i.c.dot(u);
}

struct BatchEvaluation {
  DesignTerms terms;
  double geo = 0.0;
  double phys = 0.0;  // weighted
  std::vector<double> member_total;
  Vec3 d_p = Vec3::Zero();
  Vec3 d_n = Vec3::Zero();
  std::vector<Eigen::VectorXd> d_q;
};

struct EncodedObject {
  EncodedCloud enc;
  double scale;
};

}  // namespace

std::vector<double> sidedSurfaceDistances(const HandModel& model, const Plane& plane,
                                          const Eigen::VectorXd& q) {
  const std::vector<std::size_t> pinch = pinchFingers(model);
  const LinkPoses poses = forwardKinematics(model, q);
  std::vector<double> out;
  for (std::size_t slot = 0; slot < 2; ++slot) {
    for (const Contact& v : fingerSurfacePoints(model, poses, {pinch[slot]})) {
      out.push_back(sideOf(slot) * planeSdf(plane, v.x));
    }
  }
  return out;
}

double repulsionHinge(const std::vector<double>& phi) {
  double sum = 0.0;
  for (double v : phi) sum += std::max(0.0, -v);
  return sum;
}

double repulsionIndicator(const std::vector<double>& phi) {
  double sum = 0.0;
  for (double v : phi) {
    if (v < 0.0) sum += std::abs(v);
  }
  return sum;
}

double directionalManipulability(const Eigen::Matrix<double, 3, Eigen::Dynamic>& jacobian,
                                 const Vec3& n) {
  return (jacobian.transpose() * n).norm();
}

DesignEvaluation designEnergy(const HandModel& model, const Vec3& p, const Vec3& n_raw,
                              const Eigen::VectorXd& q, const DesignWeights& weights,
                              int contacts_per_finger, bool with_gradient) {
  const double raw_norm = n_raw.norm();
  if (!(raw_norm > 0.0)) throw DegenerateError("plane normal has zero length");
  if (q.size() != static_cast<Eigen::Index>(model.dof())) {
    throw DimensionError("q has " + std::to_string(q.size()) + " entries, hand has " +
                         std::to_string(model.dof()));
  }
  const Vec3 n = n_raw / raw_norm;
  const std::vector<std::size_t> pinch = pinchFingers(model);
  const LinkPoses poses = forwardKinematics(model, q);

  DesignEvaluation out;
  Vec3 g_n = Vec3::Zero();
  out.d_q = Eigen::VectorXd::Zero(q.size());

  // Attraction of candidate contacts.
  const ContactSet set = sampleFingertipContacts(model, q, pinch, contacts_per_finger);
  for (const Contact& c : set.contacts) {
    const double phi = n.dot(c.x - p);
    out.terms.att += std::abs(phi);
    if (!with_gradient || phi == 0.0) continue;
    const double s = weights.att * (phi > 0.0 ? 1.0 : -1.0);
    out.d_p -= s * n;
    g_n += s * (c.x - p);
    out.d_q += s * (pointJacobian(model, poses, c.finger, c.x).transpose() * n);
  }

  // Repulsion of surface samples on the wrong side.
  for (std::size_t slot = 0; slot < 2; ++slot) {
    const double side = sideOf(slot);
    for (const Contact& v : fingerSurfacePoints(model, poses, {pinch[slot]})) {
      const double phi = side * n.dot(v.x - p);
      out.terms.rep += std::max(0.0, -phi);
      if (!with_gradient || !(phi < 0.0)) continue;
      const double s = weights.rep * side;
      out.d_p += s * n;
      g_n -= s * (v.x - p);
      out.d_q -= s * (pointJacobian(model, poses, pinch[slot], v.x).transpose() * n);
    }
  }

  // Directional manipulability along n.
  for (std::size_t f : pinch) {
    const std::vector<ChainColumn> cols = tipColumns(model, poses, f);
    Eigen::VectorXd u(static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i) u[static_cast<Eigen::Index>(i)] = cols[i].col.dot(n);
    const double m = u.norm();
    out.terms.mani -= m;
    if (!with_gradient || m == 0.0) continue;
    const double s = weights.mani / m;
    for (std::size_t i = 0; i < cols.size(); ++i) g_n -= s * u[static_cast<Eigen::Index>(i)] * cols[i].col;
    for (std::size_t k = 0; k < cols.size(); ++k) {
      double dm = 0.0;
      for (std::size_t i = 0; i < cols.size(); ++i) {
        Vec3 dcol = Vec3::Zero();
        if (k <= i) {
          if (cols[k].revolute) dcol = cols[k].axis.cross(cols[i].col);
        } else if (cols[i].revolute) {
          dcol = cols[i].axis.cross(cols[k].col);
        }
        dm += u[static_cast<Eigen::Index>(i)] * n.dot(dcol);
      }
      out.d_q[static_cast<Eigen::Index>(cols[k].joint)] -= s * dm;
    }
  }

  out.terms.total = weights.att * out.terms.att + weights.rep * out.terms.rep +
                    weights.mani * out.terms.mani;
  if (with_gradient) out.d_n = tangentProject(n, g_n, raw_norm);
  return out;
}

DesignTerms designEnergy(const HandModel& model, const Plane& plane, const Eigen::VectorXd& q,
                         const DesignWeights& weights, int contacts_per_finger) {
  return designEnergy(model, plane.p, plane.n, q, weights, contacts_per_finger, false).terms;
}

std::vector<Eigen::VectorXd> sampleOpposingBatch(const HandModel& model, int count,
                                                 std::uint64_t seed) {
  const std::vector<std::size_t> pinch = pinchFingers(model);
  const Eigen::VectorXd lo = model.lowerLimits();
  const Eigen::VectorXd hi = model.upperLimits();
  Rng rng(seed);
  std::vector<Eigen::VectorXd> batch;
  for (int b = 0; b < count; ++b) {
    Eigen::VectorXd best;
    double best_score = -1e300;
    for (int attempt = 0; attempt < 200 && best_score < 2.4; ++attempt) {
      Eigen::VectorXd q(lo.size());
      for (Eigen::Index k = 0; k < q.size(); ++k) q[k] = rng.uniform(lo[k], hi[k]);
      const double score = oppositionScore(model, q, pinch);
      if (score > best_score) {
        best_score = score;
        best = q;
      }
    }
    batch.push_back(best);
  }
  return batch;
}

DesignResult optimizePlane(const HandModel& model, const std::vector<ObjectShape>& objects,
                           const PointNetMlp* surrogate, const DesignOptions& opts) {
  if (opts.iterations < 0) throw Error("iterations must be >= 0");
  std::vector<Eigen::VectorXd> batch = opts.initial_q;
  if (batch.empty()) {
    if (opts.batch_size < 1) throw Error("design batch is empty");
    batch = sampleOpposingBatch(model, opts.batch_size, opts.seed);
  }
  for (Eigen::VectorXd& q : batch) {
    if (q.size() != static_cast<Eigen::Index>(model.dof())) {
      throw DimensionError("batch configuration does not match the hand's " +
                           std::to_string(model.dof()) + " joints");
    }
    q = model.clamp(q);
  }
  const bool use_phys = surrogate != nullptr;
  std::vector<EncodedObject> encoded;
  if (use_phys) {
    if (objects.empty()) throw Error("the surrogate term needs at least one object");
    if (surrogate->arch().kind != NetKind::kSurrogate ||
        surrogate->arch().d != static_cast<int>(model.dof())) {
      throw DimensionError("surrogate joint input size does not match the hand");
    }
    for (const ObjectShape& o : objects) {
      const NormalizedCloud nc = normalizeCloud(o.cloud);
      encoded.push_back({surrogate->encode(nc.points), nc.scale});
    }
  }

  Plane plane;
  if (opts.initial_plane) {
    plane = Plane::fromRaw(opts.initial_plane->p, opts.initial_plane->n);
  } else {
    const std::vector<std::size_t> pinch = pinchFingers(model);
    Vec3 p = Vec3::Zero();
    Vec3 n = Vec3::Zero();
    for (const Eigen::VectorXd& q : batch) {
      const LinkPoses poses = forwardKinematics(model, q);
      const PadFrame t = padCenter(model, poses, pinch[0]);
      const PadFrame i = padCenter(model, poses, pinch[1]);
      p += 0.5 * (t.x + i.x);
      n += (i.x - t.x).norm() > 1e-9 ? Vec3((i.x - t.x).normalized()) : Vec3(t.c - i.c);
    }
    plane = Plane::fromRaw(p / static_cast<double>(batch.size()), n);
  }

  const DesignWeights& w = opts.weights;
  auto evaluate = [&](const Plane& pl, const std::vector<Eigen::VectorXd>& qs, bool grad) {
    BatchEvaluation ev;
    for (const Eigen::VectorXd& q : qs) {
      const DesignEvaluation de = designEnergy(model, pl.p, pl.n, q, w, opts.contacts_per_finger, grad);
      ev.terms.att += de.terms.att;
      ev.terms.rep += de.terms.rep;
      ev.terms.mani += de.terms.mani;
      ev.geo += de.terms.total;
      double member = de.terms.total;
      ev.d_p += de.d_p;
      ev.d_n += de.d_n;
      ev.d_q.push_back(de.d_q);
      if (use_phys) {
        const double inv = 1.0 / static_cast<double>(encoded.size());
        double phys = 0.0;
        Vec3 gp = Vec3::Zero();
        Vec3 gn = Vec3::Zero();
        Eigen::VectorXd gq = Eigen::VectorXd::Zero(q.size());
        for (const EncodedObject& o : encoded) {
          const PhysEnergy pe = ePhys(*surrogate, pl, q, o.enc, o.scale);
          phys += pe.value * inv;
          gp += pe.d_p * inv;
          gn += pe.d_n * inv;
          gq += pe.d_q * inv;
        }
        ev.terms.phys += phys;
        ev.phys += w.phys * phys;
        member += w.phys * phys;
        if (grad) {
          ev.d_p += w.phys * gp;
          ev.d_n += w.phys * tangentProject(pl.n, gn, 1.0);
          ev.d_q.back() += w.phys * gq;
        }
      }
      ev.member_total.push_back(member);
    }
    ev.terms.total = ev.geo + ev.phys;
    return ev;
  };

  const std::size_t dof = model.dof();
  const auto nz = static_cast<Eigen::Index>(6 + dof * batch.size());
  auto pack = [&](const Plane& pl, const std::vector<Eigen::VectorXd>& qs) {
    Eigen::VectorXd z(nz);
    z.head<3>() = pl.p / opts.plane_scale;
    z.segment<3>(3) = pl.n / opts.normal_scale;
    for (std::size_t b = 0; b < qs.size(); ++b) {
      z.segment(static_cast<Eigen::Index>(6 + b * dof), static_cast<Eigen::Index>(dof)) =
          qs[b] / opts.joint_scale;
    }
    return z;
  };
  auto scaledGradient = [&](const BatchEvaluation& ev) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(nz);
    if (!opts.fix_plane) {
      g.head<3>() = ev.d_p * opts.plane_scale;
      g.segment<3>(3) = ev.d_n * opts.normal_scale;
    }
    if (!opts.fix_q) {
      for (std::size_t b = 0; b < ev.d_q.size(); ++b) {
        g.segment(static_cast<Eigen::Index>(6 + b * dof), static_cast<Eigen::Index>(dof)) =
            ev.d_q[b] * opts.joint_scale;
      }
    }
    return g;
  };

  DesignResult result;
  BatchEvaluation cur = evaluate(plane, batch, true);
  result.history.push_back(cur.terms);
  Eigen::VectorXd z = pack(plane, batch);
  Eigen::VectorXd g = scaledGradient(cur);
  Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(nz, nz);
  for (int it = 0; it < opts.iterations; ++it) {
    if (!g.allFinite() || !(g.squaredNorm() > 0.0)) break;
    Eigen::VectorXd dir = -(h_inv * g);
    if (!(g.dot(dir) < 0.0)) {
      h_inv.setIdentity();
      dir = -g;
    }
    bool accepted = false;
    for (double t = std::min(1.0, opts.initial_step / dir.norm()); t * dir.norm() > 1e-15; t *= 0.5) {
      Eigen::VectorXd trial = z + t * dir;
      Plane trial_plane = plane;
      const Vec3 n_raw = trial.segment<3>(3) * opts.normal_scale;
      if (!(n_raw.norm() > 1e-12)) continue;
      trial_plane.p = trial.head<3>() * opts.plane_scale;
      trial_plane.n = n_raw.normalized();
      std::vector<Eigen::VectorXd> trial_q(batch.size());
      for (std::size_t b = 0; b < batch.size(); ++b) {
        trial_q[b] = model.clamp(
            trial.segment(static_cast<Eigen::Index>(6 + b * dof), static_cast<Eigen::Index>(dof)) *
            opts.joint_scale);
      }
      trial = pack(trial_plane, trial_q);
      const double directional = g.dot(trial - z);
      if (!(directional < 0.0)) continue;
      const BatchEvaluation next = evaluate(trial_plane, trial_q, false);
      const double decrease = (next.geo - cur.geo) + (next.phys - cur.phys);
      if (decrease <= 1e-4 * directional && next.terms.total <= cur.terms.total) {
        cur = evaluate(trial_plane, trial_q, true);
        const Eigen::VectorXd g_new = scaledGradient(cur);
        const Eigen::VectorXd s = trial - z;
        const Eigen::VectorXd y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
          const double rho = 1.0 / sy;
          const Eigen::VectorXd hy = h_inv * y;
          h_inv += ((sy + y.dot(hy)) * rho * rho) * (s * s.transpose()) -
                   rho * (hy * s.transpose() + s * hy.transpose());
        }
        plane = trial_plane;
        batch = std::move(trial_q);
        z = std::move(trial);
        g = g_new;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (h_inv.isIdentity()) break;
      h_inv.setIdentity();
      continue;
    }
    result.history.push_back(cur.terms);
  }

  result.plane = plane;
  result.q_batch = batch;
  result.anchor = static_cast<std::size_t>(
      std::min_element(cur.member_total.begin(), cur.member_total.end()) - cur.member_total.begin());
  return result;
}

Plane localizePlane(const Plane& world, const RigidTransform& tip_pose) {
  return {tip_pose.applyInverse(world.p), tip_pose.rotation.transpose() * world.n};
}

CoverPlanes coverPlanesFromDesign(const HandModel& model, const Plane& plane,
                                  const Eigen::VectorXd& q) {
  const std::vector<std::size_t> pinch = pinchFingers(model);
  const LinkPoses poses = forwardKinematics(model, q);
  CoverPlanes covers;
  covers.per_finger.resize(model.fingers().size());
  covers.per_finger[pinch[0]] = localizePlane(plane.flipped(), poses[model.fingers()[pinch[0]].tip_link]);
  covers.per_finger[pinch[1]] = localizePlane(plane, poses[model.fingers()[pinch[1]].tip_link]);
  return covers;
}

CoverMesh generateCover(const Plane& local_plane, const std::vector<Vec3>& samples,
                        double inflation) {
  if (samples.size() < 4) throw DegenerateError("a cover needs at least 4 fingertip samples");
  if (!(inflation >= 0.0)) throw Error("inflation must be >= 0");
  const Plane plane = Plane::fromRaw(local_plane.p, local_plane.n);
  const double g = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> dirs;
  for (double a : {-1.0, 1.0}) {
    for (double b : {-g, g}) {
      dirs.push_back(Vec3(0.0, a, b).normalized());
      dirs.push_back(Vec3(a, b, 0.0).normalized());
      dirs.push_back(Vec3(b, 0.0, a).normalized());
    }
  }
  std::vector<Vec3> points;
  std::set<std::array<double, 3>> seen;
  auto push = [&](const Vec3& x) {
    if (seen.insert({x.x(), x.y(), x.z()}).second) points.push_back(x);
  };
  auto add = [&](const Vec3& x) {
    const Vec3 on = projectOntoPlane(plane, x);
    push(planeSdf(plane, x) > 1e-6 ? x : on);
    push(on);
  };
  for (const Vec3& s : samples) {
    if (inflation == 0.0) {
      add(s);
    } else {
      for (const Vec3& d : dirs) add(s + inflation * d);
    }
  }
  CoverMesh cover;
  cover.mesh = convexHull(points);
  cover.plane = plane;
  cover.inflation = inflation;
  return cover;
}

double coverFlatFaceArea(const CoverMesh& cover, double tol) {
  double area = 0.0;
  const auto& v = cover.mesh.vertices;
  for (const auto& f : cover.mesh.faces) {
    bool on = true;
    for (int k : f) on = on && std::abs(planeSdf(cover.plane, v[static_cast<std::size_t>(k)])) <= tol;
    if (!on) continue;
    const Vec3& a = v[static_cast<std::size_t>(f[0])];
    area += 0.5 * (v[static_cast<std::size_t>(f[1])] - a).cross(v[static_cast<std::size_t>(f[2])] - a).norm();
  }
  return area;
}

double coverFlatFaceDeviation(const CoverMesh& cover, double band) {
  double worst = 0.0;
  for (const Vec3& x : cover.mesh.vertices) {
    const double d = std::abs(planeSdf(cover.plane, x));
    if (d <= band) worst = std::max(worst, d);
  }
  return worst;
}

}  // namespace pinchkit
