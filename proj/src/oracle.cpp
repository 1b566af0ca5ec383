#include "pinchkit/oracle.hpp"

#include "pinchkit/error.hpp"
#include "pinchkit/parallel.hpp"
#include "pinchkit/random.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace pinchkit {

namespace {

std::vector<Vec3> fingerContactPoints(const HandModel& model, const LinkPoses& poses, std::size_t f,
                                      const CoverPlanes* covers) {
  const RigidTransform& tip = poses[model.fingers()[f].tip_link];
  std::vector<Vec3> out;
  for (const SurfaceSample& s : model.tipSamples(f)) {
    const Vec3 local = covers != nullptr && covers->active(f)
                           ? projectOntoPlane(*covers->per_finger[f], s.point)
                           : s.point;
    out.push_back(tip.apply(local));
  }
  return out;
}

bool withinCone(const Vec3& normal, const Vec3& dir, double cos_half) {
  return normal.normalized().dot(dir) >= cos_half;
}

bool hasAntipodalPair(const std::vector<Contact>& contacts, double mu) {
  const double cos_half = std::cos(std::atan(mu));
  for (std::size_t a = 0; a < contacts.size(); ++a) {
    for (std::size_t b = a + 1; b < contacts.size(); ++b) {
      if (contacts[a].finger == contacts[b].finger) continue;
      const Vec3 d = contacts[b].x - contacts[a].x;
      if (d.norm() < 1e-12) continue;
      const Vec3 u = d.normalized();
      if (withinCone(contacts[a].c, u, cos_half) && withinCone(contacts[b].c, -u, cos_half)) {
        return true;
      }
    }
  }
  return false;
}

}  // namespace

std::vector<Contact> objectContacts(const HandModel& model, const RigidTransform& wrist,
                                    const Eigen::VectorXd& q, const ObjectShape& shape,
                                    double eps_contact, const CoverPlanes* covers) {
  const LinkPoses poses = forwardKinematics(model, q, wrist);
  const Vec3 center = shape.center();
  std::vector<Contact> out;
  for (std::size_t f = 0; f < model.fingers().size(); ++f) {
    const std::vector<Vec3> points = fingerContactPoints(model, poses, f, covers);
    for (std::size_t s = 0; s < points.size(); ++s) {
      const SdfSample d = sdfQuery(shape, points[s]);
      if (std::abs(d.value) > eps_contact) continue;
      const Vec3 surface = points[s] - d.value * d.gradient;
      out.push_back({surface - center, -d.gradient, f, s});
    }
  }
  return out;
}

Outcome evaluateGrasp(const HandModel& model, const GraspCandidate& candidate,
                      const ObjectShape& shape, const OracleOptions& opts, const CoverPlanes* covers) {
  Outcome out;
  if (candidate.q.size() != static_cast<Eigen::Index>(model.dof())) {
    throw DimensionError("candidate q does not match the hand");
  }
  if (candidate.reason == "aperture") out.reasons.push_back("aperture");

  const LinkPoses poses = forwardKinematics(model, candidate.q, candidate.wrist);
  const std::vector<std::size_t> all = allFingers(model);

  // Closest approach and penetration over every finger point.
  double min_sdf = 1e300;
  double min_gap = 1e300;
  for (const Contact& v : fingerSurfacePoints(model, poses, all, covers)) {
    const double d = sdfQuery(shape, v.x).value;
    min_sdf = std::min(min_sdf, d);
    min_gap = std::min(min_gap, std::abs(d));
  }
  out.metrics.max_penetration = std::max(0.0, -min_sdf);
  out.metrics.min_contact_gap = min_gap;
  const bool precise = candidate.mode == GraspMode::kPrecise;
  const std::vector<std::size_t> pinch = pinchFingers(model);
  out.metrics.e_precise =
      ePrecise(sampleFingertipContacts(model, candidate.q, pinch, 4, covers, candidate.wrist));

  const std::vector<Contact> contacts =
      objectContacts(model, candidate.wrist, candidate.q, shape, opts.eps_contact, covers);
  std::set<std::size_t> touching;
  for (const Contact& c : contacts) touching.insert(c.finger);
  bool contact_ok = true;
  if (precise) {
    for (std::size_t f : pinch) contact_ok = contact_ok && touching.count(f) > 0;
  } else {
    const std::size_t needed =
        std::min<std::size_t>(static_cast<std::size_t>(std::max(1, opts.min_power_fingers)), all.size());
    contact_ok = touching.size() >= needed;
  }
  if (!contact_ok) out.reasons.push_back("no_contact");
  if (out.metrics.max_penetration > opts.eps_pen) out.reasons.push_back("penetration");

  if (!contacts.empty()) {
    if (!hasAntipodalPair(contacts, opts.mu)) out.reasons.push_back("cone_violation");
    const double weight = opts.mass * opts.gravity;
    WrenchOptions wopts;
    wopts.m_edges = opts.m_edges;
    Wrench gravity = Wrench::Zero();
    gravity[2] = -weight;
    wopts.tol = opts.wrench_tol * gravity.norm();
    if (!wrenchResistance(contacts, opts.mu, gravity, wopts).feasible) {
      out.reasons.push_back("wrench_residual");
    }
    bool disturbed_ok = true;
    const Vec3 lateral[4] = {Vec3::UnitX(), -Vec3::UnitX(), Vec3::UnitY(), -Vec3::UnitY()};
    for (const Vec3& dir : lateral) {
      Wrench w = gravity;
      w.head<3>() += opts.disturbance_ratio * weight * dir;
      wopts.tol = opts.wrench_tol * w.norm();
      const WrenchResult r = wrenchResistance(contacts, opts.mu, w, wopts);
      out.metrics.disturbance_residual = std::max(out.metrics.disturbance_residual, r.residual / w.norm());
      disturbed_ok = disturbed_ok && r.feasible;
    }
    if (!disturbed_ok) out.reasons.push_back("disturbance_fail");
  }
  out.success = out.reasons.empty();
  return out;
}

std::vector<LabelRecord> generateLabels(const HandModel& model, const std::vector<DesignedPlane>& planes,
                                        const std::vector<ObjectShape>& objects,
                                        const LabelOptions& opts) {
  if (planes.empty()) throw Error("label generation needs at least one plane");
  if (objects.empty()) throw Error("label generation needs at least one object");
  if (opts.seeds_per_pair < 0) throw Error("seeds per pair must be >= 0");
  std::vector<CoverPlanes> covers;
  for (const DesignedPlane& dp : planes) {
    if (dp.anchor_q.size() != static_cast<Eigen::Index>(model.dof())) {
      throw DimensionError("plane anchor configuration does not match the hand");
    }
    covers.push_back(coverPlanesFromDesign(model, dp.plane, dp.anchor_q));
  }
  const std::size_t seeds = static_cast<std::size_t>(opts.seeds_per_pair);
  const std::size_t total = planes.size() * objects.size() * seeds;
  std::vector<LabelRecord> records(total);
  parallelFor(total, opts.jobs, [&](std::size_t t) {
    LabelRecord& r = records[t];
    r.plane_index = t / (objects.size() * seeds);
    r.object_index = (t / seeds) % objects.size();
    r.seed = taskSeed(opts.global_seed, t);
    r.plane = planes[r.plane_index].plane;
    r.object_id = objects[r.object_index].id;
    SynthesisOptions sopts = opts.synthesis;
    sopts.covers = covers[r.plane_index];
    r.candidate = synthesizePreciseGrasp(model, objects[r.object_index], r.seed, sopts);
    r.outcome = evaluateGrasp(model, r.candidate, objects[r.object_index], opts.oracle,
                              &covers[r.plane_index]);
    r.label = r.candidate.converged && r.outcome.success ? 1 : 0;
  });
  return records;
}

}  // namespace pinchkit
