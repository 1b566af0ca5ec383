#pragma once

#include "pinchkit/design.hpp"
#include "pinchkit/geometry.hpp"
#include "pinchkit/grasp_energy.hpp"
#include "pinchkit/kinematics.hpp"
#include "pinchkit/synthesis.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pinchkit {

struct OracleOptions {
  double eps_contact = 1e-3;
  double eps_pen = 5e-4;
  double mu = 0.5;
  double mass = 0.05;
  double gravity = 9.81;
  double disturbance_ratio = 0.5;  // lateral push as a fraction of the weight
  int m_edges = 8;
  double wrench_tol = 1e-6;  // relative to the external wrench norm
  int min_power_fingers = 3;
};

struct OutcomeMetrics {
  double max_penetration = 0.0;
  double e_precise = 0.0;
  double min_contact_gap = 0.0;
  double disturbance_residual = 0.0;
};

struct Outcome {
  bool success = false;
  std::vector<std::string> reasons;  // no_contact, penetration, cone_violation,
                                     // wrench_residual, disturbance_fail, aperture
  OutcomeMetrics metrics;
};

/// Object-frame contacts (positions relative to the object center, normals
/// pointing into the object) of every finger point within eps_contact.
std::vector<Contact> objectContacts(const HandModel& model, const RigidTransform& wrist,
                                    const Eigen::VectorXd& q, const ObjectShape& shape,
                                    double eps_contact, const CoverPlanes* covers = nullptr);

/// Quasi-static grasp check: contact, penetration, antipodal cone test, then
/// wrench feasibility under gravity and four lateral disturbances.
Outcome evaluateGrasp(const HandModel& model, const GraspCandidate& candidate,
                      const ObjectShape& shape, const OracleOptions& opts = {},
                      const CoverPlanes* covers = nullptr);

/// A shared plane and the configuration its covers are fabricated at.
struct DesignedPlane {
  Plane plane;
  Eigen::VectorXd anchor_q;
};

struct LabelOptions {
  int seeds_per_pair = 3;
  std::uint64_t global_seed = 0;
  int jobs = 1;
  SynthesisOptions synthesis;
  OracleOptions oracle;
};

struct LabelRecord {
  std::size_t plane_index = 0;
  std::size_t object_index = 0;
  std::string object_id;
  std::uint64_t seed = 0;
  Plane plane;
  GraspCandidate candidate;
  Outcome outcome;
  int label = 0;  // converged and oracle success
};

/// Precise synthesis with plane-mounted covers for every (plane, object, seed),
/// evaluated by the oracle. Records come out plane-major, then object, then seed.
std::vector<LabelRecord> generateLabels(const HandModel& model, const std::vector<DesignedPlane>& planes,
                                        const std::vector<ObjectShape>& objects,
                                        const LabelOptions& opts = {});

}  // namespace pinchkit
