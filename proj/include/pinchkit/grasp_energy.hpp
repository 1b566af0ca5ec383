#pragma once

#include "pinchkit/geometry.hpp"
#include "pinchkit/kinematics.hpp"

#include <optional>
#include <string>
#include <vector>

namespace pinchkit {

using Wrench = Eigen::Matrix<double, 6, 1>;

struct Contact {
  Vec3 x = Vec3::Zero();  // world position (m)
  Vec3 c = Vec3::UnitZ();  // unit force direction onto the object
  std::size_t finger = 0;
  std::size_t sample = 0;
};

struct ContactSet {
  std::vector<Contact> contacts;
  int n_per_finger = 0;
};

/// Flat fingertip covers, one optional plane per finger, expressed in the
/// fingertip frame with the normal pointing into the fingertip. A covered
/// finger touches through the projections of its samples onto the plane,
/// pushing along -n.
struct CoverPlanes {
  std::vector<std::optional<Plane>> per_finger;

  bool active(std::size_t finger) const {
    return finger < per_finger.size() && per_finger[finger].has_value();
  }
};

/// n contacts per listed finger at configuration q (hand root placed at `root`).
/// Samples repeat cyclically when n exceeds the stored count.
ContactSet sampleFingertipContacts(const HandModel& model, const Eigen::VectorXd& q,
                                   const std::vector<std::size_t>& fingers, int n,
                                   const CoverPlanes* covers = nullptr,
                                   const RigidTransform& root = RigidTransform::identity());

/// Every stored sample of the listed fingers, plus cover-face points where
/// a cover is active. Used for penetration checks.
std::vector<Contact> fingerSurfacePoints(const HandModel& model, const LinkPoses& poses,
                                         const std::vector<std::size_t>& fingers,
                                         const CoverPlanes* covers = nullptr);

Mat3 skew(const Vec3& x);

/// G = [I ... I; [x_1]x ... [x_m]x] with positions taken relative to `reference`.
Eigen::MatrixXd graspMap(const std::vector<Contact>& contacts, const Vec3& reference);
Eigen::VectorXd stackedNormals(const std::vector<Contact>& contacts);
Vec3 contactCentroid(const std::vector<Contact>& contacts);

/// Net unit-force wrench G c about the contact centroid.
Wrench netWrench(const std::vector<Contact>& contacts);

/// ||G c||_2 with the torque reference at the contact centroid.
double ePrecise(const ContactSet& contacts);
double ePrecise(const std::vector<Contact>& contacts);

struct EnergyWithGradient {
  double value = 0.0;
  Eigen::VectorXd grad_q;  // length dof
};

/// E_precise over thumb+index contacts at q, with d/dq by the chain rule.
EnergyWithGradient ePreciseGradient(const HandModel& model, const Eigen::VectorXd& q,
                                    const std::vector<std::size_t>& fingers, int n,
                                    const CoverPlanes* covers = nullptr,
                                    const RigidTransform& root = RigidTransform::identity());

struct PowerWeights {
  double wrench = 1.0;
  double distance = 10.0;
  double penetration = 100.0;
};

struct PowerEnergy {
  double wrench = 0.0;       // ||G c|| over all-finger contacts
  double distance = 0.0;     // sum |sdf(x_i)|
  double penetration = 0.0;  // sum max(0, -sdf(v))^2
  double total = 0.0;
  Eigen::VectorXd grad_q;
};

/// Composite force-closure energy over every finger. Throws if the shape
/// has no interior sign (cloud without normals).
PowerEnergy ePower(const HandModel& model, const Eigen::VectorXd& q, const ObjectShape& shape,
                   const PowerWeights& weights = {}, int n = 4,
                   const RigidTransform& root = RigidTransform::identity(),
                   bool with_gradient = false);

enum class WrenchSolver { kActiveSet, kProjectedGradient };

struct WrenchOptions {
  int m_edges = 8;
  double tol = 1e-4;
  WrenchSolver solver = WrenchSolver::kActiveSet;
  int max_iterations = 500;  // projected gradient only
};

struct WrenchResult {
  bool feasible = false;
  double residual = 0.0;
  Eigen::VectorXd lambda;
};

/// Unit-force wrench of each friction-cone edge (columns), torques about the origin.
Eigen::MatrixXd frictionConeWrenches(const std::vector<Contact>& contacts, double mu, int m_edges);

/// min_{lambda >= 0} || W lambda + w_ext ||; feasible iff residual <= tol.
WrenchResult wrenchResistance(const std::vector<Contact>& contacts, double mu, const Wrench& w_ext,
                              const WrenchOptions& options = {});

/// Non-negative least squares min ||A x - b||, x >= 0 (Lawson-Hanson).
Eigen::VectorXd solveNnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b);
/// Same problem by projected gradient with step 1/L.
Eigen::VectorXd solveNnlsProjectedGradient(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                           int max_iterations);

}  // namespace pinchkit
