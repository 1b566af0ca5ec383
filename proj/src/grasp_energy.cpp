#include "pinchkit/grasp_energy.hpp"

#include "pinchkit/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace pinchkit {

namespace {

Vec3 sampleLocalPoint(const SurfaceSample& s, const CoverPlanes* covers, std::size_t finger) {
  return covers != nullptr && covers->active(finger)
             ? projectOntoPlane(*covers->per_finger[finger], s.point)
             : s.point;
}

Vec3 sampleLocalNormal(const SurfaceSample& s, const CoverPlanes* covers, std::size_t finger) {
  return covers != nullptr && covers->active(finger) ? Vec3(-covers->per_finger[finger]->n)
                                                     : s.normal;
}

// World axis/anchor/type for each joint of a finger.
struct ChainJoint {
  std::size_t index;
  Vec3 axis;
  Vec3 anchor;
  bool revolute;
};

std::vector<ChainJoint> chainFrames(const HandModel& model, const LinkPoses& poses,
                                    std::size_t finger) {
  std::vector<ChainJoint> out;
  for (std::size_t ji : model.fingers()[finger].joints) {
    const JointFrame f = jointWorldFrame(model, poses, ji);
    out.push_back({ji, f.axis, f.anchor, model.joints()[ji].type == JointType::kRevolute});
  }
  return out;
}

}  // namespace

ContactSet sampleFingertipContacts(const HandModel& model, const Eigen::VectorXd& q,
                                   const std::vector<std::size_t>& fingers, int n,
                                   const CoverPlanes* covers, const RigidTransform& root) {
  if (n < 1) {
    throw Error("contacts per finger must be >= 1");
  }
  if (fingers.empty()) {
    throw Error("no fingers selected for contact sampling");
  }
  const LinkPoses poses = forwardKinematics(model, q, root);
  ContactSet set;
  set.n_per_finger = n;
  for (std::size_t f : fingers) {
    const auto& samples = model.tipSamples(f);
    if (samples.empty()) {
      throw Error("finger '" + model.fingers()[f].name + "' has no fingertip samples");
    }
    const RigidTransform& tip = poses[model.fingers()[f].tip_link];
    for (int k = 0; k < n; ++k) {
      const std::size_t si = static_cast<std::size_t>(k) % samples.size();
      const SurfaceSample& s = samples[si];
      set.contacts.push_back({tip.apply(sampleLocalPoint(s, covers, f)),
                              tip.rotation * sampleLocalNormal(s, covers, f), f, si});
    }
  }
  return set;
}

std::vector<Contact> fingerSurfacePoints(const HandModel& model, const LinkPoses& poses,
                                         const std::vector<std::size_t>& fingers,
                                         const CoverPlanes* covers) {
  std::vector<Contact> out;
  for (std::size_t f : fingers) {
    const RigidTransform& tip = poses[model.fingers()[f].tip_link];
    const auto& samples = model.tipSamples(f);
    for (std::size_t si = 0; si < samples.size(); ++si) {
      out.push_back({tip.apply(samples[si].point), tip.rotation * samples[si].normal, f, si});
      if (covers != nullptr && covers->active(f)) {
        out.push_back({tip.apply(sampleLocalPoint(samples[si], covers, f)),
                       tip.rotation * sampleLocalNormal(samples[si], covers, f), f, si});
      }
    }
  }
  return out;
}

Mat3 skew(const Vec3& x) {
  Mat3 m;
  m << 0.0, -x.z(), x.y(), x.z(), 0.0, -x.x(), -x.y(), x.x(), 0.0;
  return m;
}

Eigen::MatrixXd graspMap(const std::vector<Contact>& contacts, const Vec3& reference) {
  const auto m = static_cast<Eigen::Index>(contacts.size());
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(6, 3 * m);
  for (Eigen::Index i = 0; i < m; ++i) {
    g.block<3, 3>(0, 3 * i) = Mat3::Identity();
    g.block<3, 3>(3, 3 * i) = skew(contacts[static_cast<std::size_t>(i)].x - reference);
  }
  return g;
}

Eigen::VectorXd stackedNormals(const std::vector<Contact>& contacts) {
  Eigen::VectorXd c(3 * static_cast<Eigen::Index>(contacts.size()));
  for (std::size_t i = 0; i < contacts.size(); ++i) {
    c.segment<3>(3 * static_cast<Eigen::Index>(i)) = contacts[i].c;
  }
  return c;
}

Vec3 contactCentroid(const std::vector<Contact>& contacts) {
  Vec3 c = Vec3::Zero();
  for (const Contact& k : contacts) c += k.x;
  return contacts.empty() ? c : Vec3(c / static_cast<double>(contacts.size()));
}

Wrench netWrench(const std::vector<Contact>& contacts) {
  const Vec3 ref = contactCentroid(contacts);
  Wrench w = Wrench::Zero();
  for (const Contact& k : contacts) {
    w.head<3>() += k.c;
    w.tail<3>() += (k.x - ref).cross(k.c);
  }
  return w;
}

double ePrecise(const std::vector<Contact>& contacts) { return netWrench(contacts).norm(); }
double ePrecise(const ContactSet& contacts) { return ePrecise(contacts.contacts); }

EnergyWithGradient ePreciseGradient(const HandModel& model, const Eigen::VectorXd& q,
                                    const std::vector<std::size_t>& fingers, int n,
                                    const CoverPlanes* covers, const RigidTransform& root) {
  const ContactSet set = sampleFingertipContacts(model, q, fingers, n, covers, root);
  const auto& cs = set.contacts;
  const Wrench w = netWrench(cs);
  EnergyWithGradient out;
  out.value = w.norm();
  out.grad_q = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.dof()));
  if (out.value == 0.0) {
    return out;
  }
  const Vec3 force = w.head<3>();
  const Vec3 torque = w.tail<3>();
  const Vec3 centroid = contactCentroid(cs);
  const double inv_m = 1.0 / static_cast<double>(cs.size());
  const LinkPoses poses = forwardKinematics(model, q, root);

  // tau = sum x_i x c_i - centroid x F, so
  // d tau = sum (dx_i x c_i + x_i x dc_i) - (d centroid x F + centroid x dF).
  for (std::size_t f : fingers) {
    for (const ChainJoint& j : chainFrames(model, poses, f)) {
      Vec3 d_force = Vec3::Zero();
      Vec3 d_torque = Vec3::Zero();
      Vec3 d_centroid = Vec3::Zero();
      for (const Contact& k : cs) {
        if (k.finger != f) continue;
        const Vec3 dx = j.revolute ? Vec3(j.axis.cross(k.x - j.anchor)) : j.axis;
        const Vec3 dc = j.revolute ? Vec3(j.axis.cross(k.c)) : Vec3::Zero();
        d_force += dc;
        d_torque += dx.cross(k.c) + k.x.cross(dc);
        d_centroid += dx * inv_m;
      }
      d_torque -= d_centroid.cross(force) + centroid.cross(d_force);
      out.grad_q[static_cast<Eigen::Index>(j.index)] +=
          (force.dot(d_force) + torque.dot(d_torque)) / out.value;
    }
  }
  return out;
}

PowerEnergy ePower(const HandModel& model, const Eigen::VectorXd& q, const ObjectShape& shape,
                   const PowerWeights& weights, int n, const RigidTransform& root,
                   bool with_gradient) {
  if (!shape.hasSignedSdf()) {
    throw Error("power energy needs a signed distance; cloud '" + shape.id + "' has no normals");
  }
  std::vector<std::size_t> all(model.fingers().size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

  PowerEnergy out;
  out.grad_q = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.dof()));
  const ContactSet set = sampleFingertipContacts(model, q, all, n, nullptr, root);
  const LinkPoses poses = forwardKinematics(model, q, root);

  if (with_gradient) {
    const EnergyWithGradient wg = ePreciseGradient(model, q, all, n, nullptr, root);
    out.wrench = wg.value;
    out.grad_q += weights.wrench * wg.grad_q;
  } else {
    out.wrench = ePrecise(set);
  }

  std::vector<std::vector<ChainJoint>> chains;
  if (with_gradient) {
    for (std::size_t f : all) chains.push_back(chainFrames(model, poses, f));
  }
  auto accumulatePoint = [&](std::size_t finger, const Vec3& x, const Vec3& dvalue_dx, double scale) {
    for (const ChainJoint& j : chains[finger]) {
      const Vec3 dx = j.revolute ? Vec3(j.axis.cross(x - j.anchor)) : j.axis;
      out.grad_q[static_cast<Eigen::Index>(j.index)] += scale * dvalue_dx.dot(dx);
    }
  };

  for (const Contact& k : set.contacts) {
    const SdfSample s = sdfQuery(shape, k.x);
    out.distance += std::abs(s.value);
    if (with_gradient && s.value != 0.0) {
      accumulatePoint(k.finger, k.x, s.gradient, weights.distance * (s.value > 0.0 ? 1.0 : -1.0));
    }
  }
  for (const Contact& v : fingerSurfacePoints(model, poses, all)) {
    const SdfSample s = sdfQuery(shape, v.x);
    if (s.value < 0.0) {
      out.penetration += s.value * s.value;
      if (with_gradient) accumulatePoint(v.finger, v.x, s.gradient, weights.penetration * 2.0 * s.value);
    }
  }
  out.total = weights.wrench * out.wrench + weights.distance * out.distance +
              weights.penetration * out.penetration;
  return out;
}

Eigen::MatrixXd frictionConeWrenches(const std::vector<Contact>& contacts, double mu, int m_edges) {
  const auto cols = static_cast<Eigen::Index>(contacts.size()) * m_edges;
  Eigen::MatrixXd w(6, cols);
  Eigen::Index col = 0;
  for (const Contact& k : contacts) {
    const Vec3 n = k.c.normalized();
    const Vec3 helper = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    const Vec3 t1 = n.cross(helper).normalized();
    const Vec3 t2 = n.cross(t1);
    for (int e = 0; e < m_edges; ++e) {
      const double theta = 2.0 * std::numbers::pi * e / m_edges;
      const Vec3 f = n + mu * (std::cos(theta) * t1 + std::sin(theta) * t2);
      w.block<3, 1>(0, col) = f;
      w.block<3, 1>(3, col) = k.x.cross(f);
      ++col;
    }
  }
  return w;
}

Eigen::VectorXd solveNnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  const Eigen::Index n = a.cols();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  if (n == 0) return x;
  std::vector<bool> passive(static_cast<std::size_t>(n), false);
  const double tol = 1e-12 * std::max(1.0, a.cwiseAbs().maxCoeff()) * std::max(1.0, b.norm());
  const int max_outer = static_cast<int>(3 * n) + 10;

  auto solvePassive = [&]() {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
    }
    Eigen::MatrixXd ap(a.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) ap.col(static_cast<Eigen::Index>(k)) = a.col(idx[k]);
    const Eigen::VectorXd zp = ap.completeOrthogonalDecomposition().solve(b);
    Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
    for (std::size_t k = 0; k < idx.size(); ++k) z[idx[k]] = zp[static_cast<Eigen::Index>(k)];
    return z;
  };

  for (int outer = 0; outer < max_outer; ++outer) {
    const Eigen::VectorXd grad = a.transpose() * (b - a * x);
    Eigen::Index best = -1;
    double best_val = tol;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!passive[static_cast<std::size_t>(j)] && grad[j] > best_val) {
        best_val = grad[j];
        best = j;
      }
    }
    if (best < 0) break;
    passive[static_cast<std::size_t>(best)] = true;

    for (int inner = 0; inner < max_outer; ++inner) {
      const Eigen::VectorXd z = solvePassive();
      bool all_positive = true;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[static_cast<std::size_t>(j)] && z[j] <= 0.0) all_positive = false;
      }
      if (all_positive) {
        x = z;
        break;
      }
      double alpha = 1.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[static_cast<std::size_t>(j)] && z[j] <= 0.0) {
          alpha = std::min(alpha, x[j] / (x[j] - z[j]));
        }
      }
      x += alpha * (z - x);
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[static_cast<std::size_t>(j)] && x[j] <= 1e-15) {
          passive[static_cast<std::size_t>(j)] = false;
          x[j] = 0.0;
        }
      }
    }
  }
  return x;
}

Eigen::VectorXd solveNnlsProjectedGradient(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                           int max_iterations) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(a.cols());
  if (a.cols() == 0) return x;
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const double sigma = svd.singularValues()[0];
  const double lipschitz = sigma * sigma;
  if (!(lipschitz > 0.0)) return x;
  const Eigen::MatrixXd ata = a.transpose() * a;
  const Eigen::VectorXd atb = a.transpose() * b;
  for (int it = 0; it < max_iterations; ++it) {
    x = (x - (ata * x - atb) / lipschitz).cwiseMax(0.0);
  }
  return x;
}

WrenchResult wrenchResistance(const std::vector<Contact>& contacts, double mu, const Wrench& w_ext,
                              const WrenchOptions& options) {
  if (!(mu > 0.0)) throw Error("friction coefficient must be positive");
  if (options.m_edges < 4) throw Error("friction cone needs at least 4 edges");
  WrenchResult out;
  if (w_ext.isZero(0.0)) {
    out.feasible = true;
    out.lambda = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(contacts.size()) * options.m_edges);
    return out;
  }
  const Eigen::MatrixXd w = frictionConeWrenches(contacts, mu, options.m_edges);
  const Eigen::VectorXd target = -w_ext;
  out.lambda = options.solver == WrenchSolver::kActiveSet
                   ? solveNnls(w, target)
                   : solveNnlsProjectedGradient(w, target, options.max_iterations);
  out.residual = (w * out.lambda - target).norm();
  out.feasible = out.residual <= options.tol;
  return out;
}

}  // namespace pinchkit
