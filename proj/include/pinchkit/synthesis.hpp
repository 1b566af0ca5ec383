#pragma once

#include "pinchkit/geometry.hpp"
#include "pinchkit/grasp_energy.hpp"
#include "pinchkit/kinematics.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pinchkit {

enum class GraspMode { kPower, kPrecise };

std::string toString(GraspMode mode);
GraspMode graspModeFromString(const std::string& s);

using WristParams = Eigen::Matrix<double, 6, 1>;

struct WarmStart {
  RigidTransform wrist;
  Eigen::VectorXd q;
};

struct SynthesisOptions {
  int iterations = 500;
  double step = 1e-2;           // initial line-search step on scaled variables
  int contacts_per_finger = 4;
  double w_gap = 0.1;           // precise: weight on sum |sdf(x_i)|
  double w_pen = 1e6;           // weight on sum max(0, -sdf(v))^2
  double self_clearance = 2e-3; // precise: thumb and index points closer than this are penalized
  PowerWeights power{1.0, 100.0, 1e7};
  double tau = 1e-3;            // E_precise convergence threshold
  double max_penetration = 5e-4;
  double contact_gap = 1e-3;    // power: every finger needs a contact this close
  double fd_step = 1e-6;
  double joint_jitter = 0.1;    // fraction of each joint's half-range
  std::optional<CoverPlanes> covers;
  std::optional<WarmStart> warm_start;
};

struct GraspCandidate {
  std::string object_id;
  GraspMode mode = GraspMode::kPrecise;
  RigidTransform wrist;
  Eigen::VectorXd q;
  double energy = 0.0;
  bool converged = false;
  std::uint64_t seed = 0;
  std::string reason;  // empty, "aperture", "energy", "penetration" or "gap"
  double e_precise = 0.0;
  double max_penetration = 0.0;
  double max_gap = 0.0;  // largest per-finger minimum |sdf| over contacts
  int iterations = 0;
  std::vector<double> history;  // accepted objective values, starting with the initial one
};

/// Index of the preferred converged candidate: lowest E_precise, then lowest
/// penetration, then lowest seed. Empty when none converged.
std::optional<std::size_t> bestCandidate(const std::vector<GraspCandidate>& candidates);

/// Thumb and index finger indices; throws if the hand lacks either.
std::vector<std::size_t> pinchFingers(const HandModel& model);
std::vector<std::size_t> allFingers(const HandModel& model);

/// Largest thumb-index tip distance over a joint-limit grid (m).
double maxPinchAperture(const HandModel& model, int grid = 5);

/// Precise synthesis objective at (wrist, q), as minimized by synthesizePreciseGrasp.
double preciseObjective(const HandModel& model, const ObjectShape& shape, const RigidTransform& wrist,
                        const Eigen::VectorXd& q, const SynthesisOptions& opts);

GraspCandidate synthesizePreciseGrasp(const HandModel& model, const ObjectShape& shape,
                                      std::uint64_t seed, const SynthesisOptions& opts = {});
GraspCandidate synthesizePowerGrasp(const HandModel& model, const ObjectShape& shape,
                                    std::uint64_t seed, const SynthesisOptions& opts = {});
GraspCandidate synthesizeGrasp(const HandModel& model, const ObjectShape& shape, GraspMode mode,
                               std::uint64_t seed, const SynthesisOptions& opts = {});

/// Moore-Penrose pseudoinverse by SVD, dropping singular values below `cutoff`.
Eigen::MatrixXd pseudoInverse(const Eigen::MatrixXd& a, double cutoff = 1e-8);

struct Waypoint {
  RigidTransform wrist;
  Eigen::VectorXd q;
};

struct GraspTrajectory {
  std::vector<Waypoint> waypoints;  // pre-grasp, grasp, overshoot
  double alpha = 0.0;
  double overshoot_alpha = 0.0;
};

struct PinchOptions {
  std::optional<Vec3> direction;  // overrides the centroid direction
  int contacts_per_finger = 4;
  const CoverPlanes* covers = nullptr;
  RigidTransform wrist;
};

/// Joint displacement moving `first` by -alpha d and `second` by +alpha d, with
/// d the unit direction from the first finger's contact centroid to the second's.
Eigen::VectorXd pinchDelta(const HandModel& model, const Eigen::VectorXd& q, std::size_t first,
                           std::size_t second, double alpha, const PinchOptions& opts = {});

/// Pre-grasp q + dq(alpha) and overshoot q - dq(overshoot_alpha) around the grasp q.
GraspTrajectory parallelPinchMotion(const HandModel& model, const Eigen::VectorXd& q, double alpha,
                                    double overshoot_alpha, const PinchOptions& opts = {});

/// One pseudoinverse step per finger moving each tip by -delta * grad sdf.
Eigen::VectorXd sdfPushMotion(const HandModel& model, const Eigen::VectorXd& q,
                              const ObjectShape& shape, double delta,
                              const RigidTransform& wrist = RigidTransform::identity());

/// Power-grasp trajectory: retreat by alpha, grasp, push in by overshoot_alpha.
GraspTrajectory sdfPushTrajectory(const HandModel& model, const RigidTransform& wrist,
                                  const Eigen::VectorXd& q, const ObjectShape& shape, double alpha,
                                  double overshoot_alpha);

struct ApertureResult {
  Eigen::VectorXd q;
  double achieved = 0.0;
  bool clamped = false;
};

/// Thumb-index contact centroid distance (m).
double pinchAperture(const HandModel& model, const Eigen::VectorXd& q, int contacts_per_finger = 4);

/// Walks along the pinch direction until the centroid distance equals `aperture`.
ApertureResult apertureToConfig(const HandModel& model, const Eigen::VectorXd& q_ref, double aperture,
                                int contacts_per_finger = 4);

}  // namespace pinchkit
