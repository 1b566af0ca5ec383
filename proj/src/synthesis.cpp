#include "pinchkit/synthesis.hpp"

#include "pinchkit/error.hpp"
#include "pinchkit/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <tuple>

namespace pinchkit {

namespace {

constexpr double kTranslationScale = 0.05;

struct Metrics {
  double total = 0.0;
  double e_precise = 0.0;
  double max_penetration = 0.0;
  double max_gap = 0.0;
};

const CoverPlanes* coversOf(const SynthesisOptions& opts) {
  return opts.covers ? &*opts.covers : nullptr;
}

double maxGapOf(const ObjectShape& shape, const std::vector<Contact>& contacts,
                const std::vector<std::size_t>& fingers) {
  double worst = 0.0;
  for (std::size_t f : fingers) {
    double best = std::numeric_limits<double>::infinity();
    for (const Contact& c : contacts) {
      if (c.finger == f) best = std::min(best, std::abs(sdfQuery(shape, c.x).value));
    }
    worst = std::max(worst, best);
  }
  return worst;
}

Metrics evaluate(const HandModel& model, const ObjectShape& shape, GraspMode mode,
                 const RigidTransform& wrist, const Eigen::VectorXd& q, const SynthesisOptions& opts) {
  Metrics m;
  const std::vector<std::size_t> fingers =
      mode == GraspMode::kPrecise ? pinchFingers(model) : allFingers(model);
  const CoverPlanes* covers = mode == GraspMode::kPrecise ? coversOf(opts) : nullptr;
  const ContactSet set =
      sampleFingertipContacts(model, q, fingers, opts.contacts_per_finger, covers, wrist);
  const LinkPoses poses = forwardKinematics(model, q, wrist);
  const std::vector<Contact> surface = fingerSurfacePoints(model, poses, fingers, covers);
  double pen = 0.0;
  for (const Contact& v : surface) {
    const double s = sdfQuery(shape, v.x).value;
    if (s < 0.0) {
      pen += s * s;
      m.max_penetration = std::max(m.max_penetration, -s);
    }
  }
  if (mode == GraspMode::kPrecise) {
    // Thumb and index must not pass through each other.
    for (const Contact& a : surface) {
      if (a.finger != fingers[0]) continue;
      for (const Contact& b : surface) {
        if (b.finger != fingers[1]) continue;
        const double d = opts.self_clearance - (a.x - b.x).norm();
        if (d > 0.0) pen += d * d;
      }
    }
  }
  m.e_precise = ePrecise(set);
  m.max_gap = maxGapOf(shape, set.contacts, fingers);
  if (mode == GraspMode::kPrecise) {
    double gap = 0.0;
    for (const Contact& c : set.contacts) gap += std::abs(sdfQuery(shape, c.x).value);
    m.total = m.e_precise + opts.w_gap * gap + opts.w_pen * pen;
  } else {
    m.total = ePower(model, q, shape, opts.power, opts.contacts_per_finger, wrist).total;
  }
  return m;
}

Vec3 unitFromSeed(Rng& rng) {
  const double z = rng.uniform(-1.0, 1.0);
  const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {s * std::cos(phi), s * std::sin(phi), z};
}

RigidTransform randomRotation(Rng& rng) {
  const Vec3 x_axis = unitFromSeed(rng);
  const Vec3 helper = std::abs(x_axis.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  Vec3 y_axis = x_axis.cross(helper).normalized();
  y_axis = Eigen::AngleAxisd(rng.uniform(0.0, 2.0 * std::numbers::pi), x_axis) * y_axis;
  RigidTransform out;
  out.rotation.col(0) = x_axis;
  out.rotation.col(1) = y_axis;
  out.rotation.col(2) = x_axis.cross(y_axis);
  return out;
}

WarmStart initialPose(const HandModel& model, const ObjectShape& shape, GraspMode mode,
                      std::uint64_t seed, const SynthesisOptions& opts) {
  Rng rng(seed);
  const Eigen::VectorXd lo = model.lowerLimits();
  const Eigen::VectorXd hi = model.upperLimits();
  WarmStart start;
  if (mode == GraspMode::kPrecise) {
    // Open pinch centered on the object along a random axis.
    const RigidTransform rot = randomRotation(rng);
    Eigen::VectorXd q = 0.5 * (lo + hi);
    for (std::size_t f : pinchFingers(model)) {
      for (std::size_t j : model.fingers()[f].joints) {
        const auto i = static_cast<Eigen::Index>(j);
        q[i] += 0.5 * (hi[i] - lo[i]) * rng.uniform(-opts.joint_jitter, opts.joint_jitter);
      }
    }
    q = model.clamp(q);
    const double target = std::min(2.0 * shape.boundingRadius() + 2.0 * opts.contact_gap,
                                   0.95 * maxPinchAperture(model));
    try {
      start.q = apertureToConfig(model, q, target, opts.contacts_per_finger).q;
    } catch (const DegenerateError&) {
      start.q = q;
    }
    const CoverPlanes* covers = coversOf(opts);
    const ContactSet pads =
        sampleFingertipContacts(model, start.q, pinchFingers(model), opts.contacts_per_finger, covers);
    start.wrist.rotation = rot.rotation;
    start.wrist.translation = shape.center() - rot.rotation * contactCentroid(pads.contacts);
    return start;
  }
  const Vec3 u = unitFromSeed(rng);
  const double radius = shape.boundingRadius() + model.maxFingerLength();
  const Vec3 x_axis = -u;
  const Vec3 helper = std::abs(x_axis.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  Vec3 y_axis = x_axis.cross(helper).normalized();
  const double roll = rng.uniform(0.0, 2.0 * std::numbers::pi);
  y_axis = Eigen::AngleAxisd(roll, x_axis) * y_axis;
  start.wrist.rotation.col(0) = x_axis;
  start.wrist.rotation.col(1) = y_axis;
  start.wrist.rotation.col(2) = x_axis.cross(y_axis);
  start.wrist.translation = shape.center() + radius * u;
  // Power grasps start from an open hand so the pads face the object.
  start.q = lo + 0.25 * (hi - lo);
  for (std::size_t j = 0; j < model.dof(); ++j) {
    const auto i = static_cast<Eigen::Index>(j);
    start.q[i] += 0.5 * (hi[i] - lo[i]) * rng.uniform(-opts.joint_jitter, opts.joint_jitter);
  }
  start.q = model.clamp(start.q);
  return start;
}

std::vector<std::size_t> freeJoints(const HandModel& model, GraspMode mode) {
  std::vector<std::size_t> out;
  if (mode == GraspMode::kPower) {
    for (std::size_t j = 0; j < model.dof(); ++j) out.push_back(j);
    return out;
  }
  for (std::size_t f : pinchFingers(model)) {
    for (std::size_t j : model.fingers()[f].joints) out.push_back(j);
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool preciseConverged(const Metrics& m, const SynthesisOptions& opts) {
  return m.e_precise < opts.tau && m.max_penetration < opts.max_penetration;
}

bool powerConverged(const Metrics& m, const SynthesisOptions& opts) {
  return m.max_gap < opts.contact_gap && m.max_penetration < opts.max_penetration;
}

GraspCandidate optimize(const HandModel& model, const ObjectShape& shape, GraspMode mode,
                        std::uint64_t seed, const SynthesisOptions& opts) {
  GraspCandidate cand;
  cand.object_id = shape.id;
  cand.mode = mode;
  cand.seed = seed;

  const WarmStart start =
      opts.warm_start ? *opts.warm_start : initialPose(model, shape, mode, seed, opts);
  if (static_cast<std::size_t>(start.q.size()) != model.dof()) {
    throw DimensionError("warm start q has the wrong length");
  }
  const std::vector<std::size_t> joints = freeJoints(model, mode);
  const auto nz = static_cast<Eigen::Index>(6 + joints.size());
  const Eigen::VectorXd lo = model.lowerLimits();
  const Eigen::VectorXd hi = model.upperLimits();

  Eigen::VectorXd q_base = model.clamp(start.q);
  Eigen::VectorXd z(nz);
  const WristParams w0 = paramsFromWrist(start.wrist);
  z.head<3>() = w0.head<3>() / kTranslationScale;
  z.segment<3>(3) = w0.tail<3>();
  for (std::size_t k = 0; k < joints.size(); ++k) {
    z[static_cast<Eigen::Index>(6 + k)] = q_base[static_cast<Eigen::Index>(joints[k])];
  }

  auto unpack = [&](const Eigen::VectorXd& v, RigidTransform& wrist, Eigen::VectorXd& q) {
    WristParams p;
    p.head<3>() = v.head<3>() * kTranslationScale;
    p.tail<3>() = v.segment<3>(3);
    wrist = wristFromParams(p);
    q = q_base;
    for (std::size_t k = 0; k < joints.size(); ++k) {
      q[static_cast<Eigen::Index>(joints[k])] = v[static_cast<Eigen::Index>(6 + k)];
    }
  };
  auto project = [&](Eigen::VectorXd v) {
    for (std::size_t k = 0; k < joints.size(); ++k) {
      const auto j = static_cast<Eigen::Index>(joints[k]);
      auto& x = v[static_cast<Eigen::Index>(6 + k)];
      x = std::clamp(x, lo[j], hi[j]);
    }
    return v;
  };
  auto objective = [&](const Eigen::VectorXd& v) {
    RigidTransform wrist;
    Eigen::VectorXd q;
    unpack(v, wrist, q);
    return evaluate(model, shape, mode, wrist, q, opts);
  };

  z = project(z);
  Metrics cur = objective(z);
  cand.history.push_back(cur.total);

  const bool aperture_blocked =
      mode == GraspMode::kPrecise && shape.minWidth() > maxPinchAperture(model);
  // Quasi-Newton descent directions with Armijo backtracking on the projected step.
  auto gradient = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd g(nz);
    for (Eigen::Index i = 0; i < nz; ++i) {
      Eigen::VectorXd vp = v;
      Eigen::VectorXd vm = v;
      vp[i] += opts.fd_step;
      vm[i] -= opts.fd_step;
      g[i] = (objective(vp).total - objective(vm).total) / (2.0 * opts.fd_step);
    }
    return g;
  };
  Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(nz, nz);
  Eigen::VectorXd g = gradient(z);
  double step = opts.step;
  int it = 0;
  for (; it < opts.iterations && !aperture_blocked; ++it) {
    if (mode == GraspMode::kPrecise && cur.e_precise < 0.1 * opts.tau &&
        cur.max_penetration < opts.max_penetration && cur.max_gap < 2e-4) {
      break;
    }
    if (!g.allFinite() || g.norm() < 1e-12) break;
    Eigen::VectorXd dir = -(h_inv * g);
    if (g.dot(dir) >= 0.0) {
      h_inv.setIdentity();
      dir = -g;
    }
    bool accepted = false;
    double t = std::min(1.0, step / std::max(dir.norm(), 1e-300) * 1e2);
    while (t * dir.norm() > 1e-14) {
      const Eigen::VectorXd trial = project(z + t * dir);
      if (trial == z) break;
      const Metrics m = objective(trial);
      if (m.total <= cur.total + 1e-4 * g.dot(trial - z)) {
        const Eigen::VectorXd g_new = gradient(trial);
        const Eigen::VectorXd s = trial - z;
        const Eigen::VectorXd y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
          const double rho = 1.0 / sy;
          const Eigen::MatrixXd v = Eigen::MatrixXd::Identity(nz, nz) - rho * s * y.transpose();
          h_inv = v * h_inv * v.transpose() + rho * s * s.transpose();
        }
        z = trial;
        g = g_new;
        cur = m;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      if (h_inv.isIdentity()) break;
      h_inv.setIdentity();
      continue;
    }
    cand.history.push_back(cur.total);
  }

  unpack(z, cand.wrist, cand.q);
  cand.iterations = it;
  cand.energy = cur.total;
  cand.e_precise = cur.e_precise;
  cand.max_penetration = cur.max_penetration;
  cand.max_gap = cur.max_gap;
  if (aperture_blocked) {
    cand.converged = false;
    cand.reason = "aperture";
  } else if (mode == GraspMode::kPrecise) {
    cand.converged = preciseConverged(cur, opts);
    if (!cand.converged) cand.reason = cur.e_precise >= opts.tau ? "energy" : "penetration";
  } else {
    cand.converged = powerConverged(cur, opts);
    if (!cand.converged) cand.reason = cur.max_gap >= opts.contact_gap ? "gap" : "penetration";
  }
  return cand;
}

Eigen::MatrixXd fingerJacobian(const HandModel& model, const LinkPoses& poses, std::size_t finger) {
  const Finger& f = model.fingers()[finger];
  const Eigen::Matrix<double, 3, Eigen::Dynamic> full =
      pointJacobian(model, poses, finger, poses[f.tip_link].translation);
  Eigen::MatrixXd jac(3, static_cast<Eigen::Index>(f.joints.size()));
  for (std::size_t c = 0; c < f.joints.size(); ++c) {
    jac.col(static_cast<Eigen::Index>(c)) = full.col(static_cast<Eigen::Index>(f.joints[c]));
  }
  return jac;
}

void addFingerDelta(const HandModel& model, std::size_t finger, const Eigen::VectorXd& dq_f,
                    Eigen::VectorXd& dq) {
  const Finger& f = model.fingers()[finger];
  for (std::size_t c = 0; c < f.joints.size(); ++c) {
    dq[static_cast<Eigen::Index>(f.joints[c])] += dq_f[static_cast<Eigen::Index>(c)];
  }
}

}  // namespace

std::string toString(GraspMode mode) { return mode == GraspMode::kPower ? "power" : "precise"; }

GraspMode graspModeFromString(const std::string& s) {
  if (s == "power") return GraspMode::kPower;
  if (s == "precise") return GraspMode::kPrecise;
  throw Error("unknown grasp mode '" + s + "' (expected power or precise)");
}

std::optional<std::size_t> bestCandidate(const std::vector<GraspCandidate>& candidates) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const GraspCandidate& c = candidates[i];
    if (!c.converged) continue;
    if (!best) {
      best = i;
      continue;
    }
    const GraspCandidate& b = candidates[*best];
    if (std::tie(c.e_precise, c.max_penetration, c.seed) < std::tie(b.e_precise, b.max_penetration, b.seed)) best = i;
  }
  return best;
}

std::vector<std::size_t> pinchFingers(const HandModel& model) {
  if (!model.hasFinger("thumb") || !model.hasFinger("index")) {
    throw Error("hand needs fingers named 'thumb' and 'index'");
  }
  return {model.fingerIndex("thumb"), model.fingerIndex("index")};
}

std::vector<std::size_t> allFingers(const HandModel& model) {
  std::vector<std::size_t> out(model.fingers().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
  return out;
}

double maxPinchAperture(const HandModel& model, int grid) {
  const std::vector<std::size_t> pinch = pinchFingers(model);
  std::vector<std::size_t> joints;
  for (std::size_t f : pinch) {
    for (std::size_t j : model.fingers()[f].joints) joints.push_back(j);
  }
  const Eigen::VectorXd lo = model.lowerLimits();
  const Eigen::VectorXd hi = model.upperLimits();
  Eigen::VectorXd q = 0.5 * (lo + hi);
  const int steps = std::max(grid, 2);
  std::size_t total = 1;
  for (std::size_t k = 0; k < joints.size(); ++k) total *= static_cast<std::size_t>(steps);
  double best = 0.0;
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t rest = code;
    for (std::size_t j : joints) {
      const auto idx = static_cast<Eigen::Index>(j);
      const double t = static_cast<double>(rest % static_cast<std::size_t>(steps)) / (steps - 1);
      rest /= static_cast<std::size_t>(steps);
      q[idx] = lo[idx] + t * (hi[idx] - lo[idx]);
    }
    const LinkPoses poses = forwardKinematics(model, q);
    const Vec3 a = poses[model.fingers()[pinch[0]].tip_link].translation;
    const Vec3 b = poses[model.fingers()[pinch[1]].tip_link].translation;
    best = std::max(best, (a - b).norm());
  }
  return best;
}

double preciseObjective(const HandModel& model, const ObjectShape& shape, const RigidTransform& wrist,
                        const Eigen::VectorXd& q, const SynthesisOptions& opts) {
  return evaluate(model, shape, GraspMode::kPrecise, wrist, q, opts).total;
}

GraspCandidate synthesizePreciseGrasp(const HandModel& model, const ObjectShape& shape,
                                      std::uint64_t seed, const SynthesisOptions& opts) {
  return optimize(model, shape, GraspMode::kPrecise, seed, opts);
}

GraspCandidate synthesizePowerGrasp(const HandModel& model, const ObjectShape& shape,
                                    std::uint64_t seed, const SynthesisOptions& opts) {
  if (!shape.hasSignedSdf()) {
    throw Error("power synthesis needs a signed distance; '" + shape.id + "' has no normals");
  }
  return optimize(model, shape, GraspMode::kPower, seed, opts);
}

GraspCandidate synthesizeGrasp(const HandModel& model, const ObjectShape& shape, GraspMode mode,
                               std::uint64_t seed, const SynthesisOptions& opts) {
  return mode == GraspMode::kPrecise ? synthesizePreciseGrasp(model, shape, seed, opts)
                                     : synthesizePowerGrasp(model, shape, seed, opts);
}

Eigen::MatrixXd pseudoInverse(const Eigen::MatrixXd& a, double cutoff) {
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::VectorXd inv = svd.singularValues();
  for (Eigen::Index i = 0; i < inv.size(); ++i) inv[i] = inv[i] < cutoff ? 0.0 : 1.0 / inv[i];
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

Eigen::VectorXd pinchDelta(const HandModel& model, const Eigen::VectorXd& q, std::size_t first,
                           std::size_t second, double alpha, const PinchOptions& opts) {
  const LinkPoses poses = forwardKinematics(model, q, opts.wrist);
  Vec3 d;
  if (opts.direction) {
    d = opts.direction->normalized();
  } else {
    const ContactSet a =
        sampleFingertipContacts(model, q, {first}, opts.contacts_per_finger, opts.covers, opts.wrist);
    const ContactSet b =
        sampleFingertipContacts(model, q, {second}, opts.contacts_per_finger, opts.covers, opts.wrist);
    const Vec3 diff = contactCentroid(b.contacts) - contactCentroid(a.contacts);
    if (diff.norm() < 1e-12) {
      throw DegenerateError("thumb and index contact centroids coincide; supply a direction");
    }
    d = diff / diff.norm();
  }
  Eigen::VectorXd dq = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.dof()));
  addFingerDelta(model, first, -alpha * (pseudoInverse(fingerJacobian(model, poses, first)) * d), dq);
  addFingerDelta(model, second, alpha * (pseudoInverse(fingerJacobian(model, poses, second)) * d), dq);
  return dq;
}

GraspTrajectory parallelPinchMotion(const HandModel& model, const Eigen::VectorXd& q, double alpha,
                                    double overshoot_alpha, const PinchOptions& opts) {
  if (alpha < 0.0 || overshoot_alpha < 0.0) throw Error("pinch distances must be non-negative");
  const std::vector<std::size_t> pinch = pinchFingers(model);
  GraspTrajectory traj;
  traj.alpha = alpha;
  traj.overshoot_alpha = overshoot_alpha;
  Eigen::VectorXd pre = q;
  Eigen::VectorXd over = q;
  if (alpha > 0.0) pre = model.clamp(q + pinchDelta(model, q, pinch[0], pinch[1], alpha, opts));
  if (overshoot_alpha > 0.0) {
    over = model.clamp(q - pinchDelta(model, q, pinch[0], pinch[1], overshoot_alpha, opts));
  }
  traj.waypoints = {{opts.wrist, pre}, {opts.wrist, q}, {opts.wrist, over}};
  return traj;
}

Eigen::VectorXd sdfPushMotion(const HandModel& model, const Eigen::VectorXd& q,
                              const ObjectShape& shape, double delta, const RigidTransform& wrist) {
  if (!shape.hasSignedSdf()) {
    throw Error("sdf push needs a signed distance; '" + shape.id + "' has no normals");
  }
  if (delta == 0.0) return q;
  const LinkPoses poses = forwardKinematics(model, q, wrist);
  Eigen::VectorXd dq = Eigen::VectorXd::Zero(q.size());
  for (std::size_t f = 0; f < model.fingers().size(); ++f) {
    const SdfSample s = sdfQuery(shape, poses[model.fingers()[f].tip_link].translation);
    const Vec3 dx = -delta * s.gradient;
    addFingerDelta(model, f, pseudoInverse(fingerJacobian(model, poses, f)) * dx, dq);
  }
  return model.clamp(q + dq);
}

GraspTrajectory sdfPushTrajectory(const HandModel& model, const RigidTransform& wrist,
                                  const Eigen::VectorXd& q, const ObjectShape& shape, double alpha,
                                  double overshoot_alpha) {
  GraspTrajectory traj;
  traj.alpha = alpha;
  traj.overshoot_alpha = overshoot_alpha;
  traj.waypoints = {{wrist, sdfPushMotion(model, q, shape, -alpha, wrist)},
                    {wrist, q},
                    {wrist, sdfPushMotion(model, q, shape, overshoot_alpha, wrist)}};
  return traj;
}

double pinchAperture(const HandModel& model, const Eigen::VectorXd& q, int contacts_per_finger) {
  const std::vector<std::size_t> pinch = pinchFingers(model);
  const ContactSet a = sampleFingertipContacts(model, q, {pinch[0]}, contacts_per_finger);
  const ContactSet b = sampleFingertipContacts(model, q, {pinch[1]}, contacts_per_finger);
  return (contactCentroid(b.contacts) - contactCentroid(a.contacts)).norm();
}

ApertureResult apertureToConfig(const HandModel& model, const Eigen::VectorXd& q_ref, double aperture,
                                int contacts_per_finger) {
  if (aperture < 0.0) throw Error("aperture must be non-negative");
  const std::vector<std::size_t> pinch = pinchFingers(model);
  ApertureResult out;
  out.q = model.clamp(q_ref);
  out.achieved = pinchAperture(model, out.q, contacts_per_finger);
  PinchOptions opts;
  opts.contacts_per_finger = contacts_per_finger;
  constexpr double kTolerance = 1e-5;
  constexpr double kMaxStep = 2.5e-3;
  for (int it = 0; it < 200 && std::abs(aperture - out.achieved) > kTolerance; ++it) {
    const double alpha = std::clamp(0.5 * (aperture - out.achieved), -kMaxStep, kMaxStep);
    const Eigen::VectorXd next =
        model.clamp(out.q + pinchDelta(model, out.q, pinch[0], pinch[1], alpha, opts));
    const double reached = pinchAperture(model, next, contacts_per_finger);
    if (std::abs(aperture - reached) >= std::abs(aperture - out.achieved)) {
      out.clamped = true;
      break;
    }
    out.q = next;
    out.achieved = reached;
  }
  if (std::abs(aperture - out.achieved) > 5e-4) out.clamped = true;
  return out;
}

}  // namespace pinchkit
