#pragma once

#include "pinchkit/geometry.hpp"
#include "pinchkit/grasp_energy.hpp"
#include "pinchkit/kinematics.hpp"
#include "pinchkit/mesh.hpp"
#include "pinchkit/surrogate.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace pinchkit {

struct DesignWeights {
  double att = 1.0;
  double rep = 1.0;
  double mani = 0.05;
  double phys = 0.0;
};

struct DesignTerms {
  double att = 0.0;
  double rep = 0.0;
  double mani = 0.0;
  double phys = 0.0;
  double total = 0.0;
};

/// Energy terms at one configuration plus gradients w.r.t. p, the raw
/// (unnormalized) normal and q. E_phys is not included here.
struct DesignEvaluation {
  DesignTerms terms;
  Vec3 d_p = Vec3::Zero();
  Vec3 d_n = Vec3::Zero();  // w.r.t. the raw normal
  Eigen::VectorXd d_q;
};

/// Signed distances of thumb and index surface samples, oriented so that a
/// negative value means the sample crossed to the wrong side of the plane.
/// The normal points from the thumb toward the index finger.
std::vector<double> sidedSurfaceDistances(const HandModel& model, const Plane& plane,
                                          const Eigen::VectorXd& q);

/// Sum of max(0, -phi).
double repulsionHinge(const std::vector<double>& phi);
/// Sum of |phi| over phi < 0.
double repulsionIndicator(const std::vector<double>& phi);

/// ||J^T n||_2 for a positional Jacobian.
double directionalManipulability(const Eigen::Matrix<double, 3, Eigen::Dynamic>& jacobian,
                                 const Vec3& n);

DesignEvaluation designEnergy(const HandModel& model, const Vec3& p, const Vec3& n_raw,
                              const Eigen::VectorXd& q, const DesignWeights& weights,
                              int contacts_per_finger = 4, bool with_gradient = false);
DesignTerms designEnergy(const HandModel& model, const Plane& plane, const Eigen::VectorXd& q,
                         const DesignWeights& weights, int contacts_per_finger = 4);

struct DesignOptions {
  int iterations = 300;
  int batch_size = 16;
  int contacts_per_finger = 4;
  DesignWeights weights;
  /// Variable scales: each group moves in units of its scale.
  double plane_scale = 0.05;
  double normal_scale = 1.0;
  double joint_scale = 1.0;
  double initial_step = 0.1;
  std::uint64_t seed = 0;
  std::optional<Plane> initial_plane;
  std::vector<Eigen::VectorXd> initial_q;  // overrides sampling when non-empty
  bool fix_q = false;
  bool fix_plane = false;
};

struct DesignResult {
  Plane plane;
  std::vector<Eigen::VectorXd> q_batch;
  std::vector<DesignTerms> history;  // initial state then one entry per accepted step
  std::size_t anchor = 0;            // lowest-energy batch member
};

/// Random in-limit configurations whose thumb and index pads face each other.
std::vector<Eigen::VectorXd> sampleOpposingBatch(const HandModel& model, int count,
                                                 std::uint64_t seed);

/// Jointly minimizes the design energy over a shared plane and a q batch.
/// With a surrogate, adds w_phys * E_phys averaged over `objects`.
DesignResult optimizePlane(const HandModel& model, const std::vector<ObjectShape>& objects,
                           const PointNetMlp* surrogate, const DesignOptions& opts = {});

/// p_local = R^T (p - t), n_local = R^T n.
Plane localizePlane(const Plane& world, const RigidTransform& tip_pose);

/// Thumb and index cover planes in their tip frames, normals into each fingertip.
CoverPlanes coverPlanesFromDesign(const HandModel& model, const Plane& plane,
                                  const Eigen::VectorXd& q);

struct CoverMesh {
  TriangleMesh mesh;
  Plane plane;  // local plane, normal into the fingertip
  double inflation = 0.0;
};

/// Convex hull of the samples inflated by `inflation` (12 directions) together
/// with their projections onto the plane. Points behind the plane or within
/// 1e-6 of it are replaced by their projections.
CoverMesh generateCover(const Plane& local_plane, const std::vector<Vec3>& samples,
                        double inflation = 1e-3);

/// Total area of faces lying on the plane (every vertex within `tol`).
double coverFlatFaceArea(const CoverMesh& cover, double tol = 1e-9);
/// Largest |phi| among vertices within `band` of the plane.
double coverFlatFaceDeviation(const CoverMesh& cover, double band = 1e-6);

}  // namespace pinchkit
