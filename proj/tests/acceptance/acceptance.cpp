#include "pinchkit/cli.hpp"
#include "pinchkit/design.hpp"
#include "pinchkit/geometry.hpp"
#include "pinchkit/grasp_energy.hpp"
#include "pinchkit/kinematics.hpp"
#include "pinchkit/mesh.hpp"
#include "pinchkit/oracle.hpp"
#include "pinchkit/pipeline.hpp"
#include "pinchkit/random.hpp"
#include "pinchkit/surrogate.hpp"
#include "pinchkit/synthesis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

using namespace pinchkit;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fixture(const std::string& name) { return std::string(PINCHKIT_FIXTURE_DIR) + "/" + name + ".json"; }

HandModel hand(const std::string& name) { return loadHand(fixture(name)); }

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

bool relClose(double a, double b, double rel, double abs_floor) {
  return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b)) + abs_floor;
}

Eigen::VectorXd randomQ(const HandModel& m, Rng& rng) {
  const Eigen::VectorXd lo = m.lowerLimits();
  const Eigen::VectorXd hi = m.upperLimits();
  Eigen::VectorXd q(m.dof());
  for (Eigen::Index i = 0; i < q.size(); ++i) q[i] = rng.uniform(lo[i], hi[i]);
  return q;
}

Vec3 randomUnit(Rng& rng) {
  Vec3 v;
  do {
    v = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  } while (v.norm() < 0.1 || v.norm() > 1.0);
  return v.normalized();
}

double angleDeg(const Vec3& a, const Vec3& b) {
  return std::acos(std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

/// Central difference of f along coordinate i; nullopt when the one-sided
/// differences disagree (a kink inside the stencil).
template <class F>
std::optional<double> centralDiff(F f, double f0, double h, double kink_tol) {
  const double fp = f(h);
  const double fm = f(-h);
  const double fwd = (fp - f0) / h;
  const double bwd = (f0 - fm) / h;
  if (std::abs(fwd - bwd) > kink_tol * std::max(std::abs(fwd), std::abs(bwd)) + 1e-7) return std::nullopt;
  return (fp - fm) / (2 * h);
}

struct GradTally {
  int cases = 0;
  int failed = 0;
  std::string name;
  std::string summary() const {
    return name + " " + std::to_string(cases - failed) + "/" + std::to_string(cases);
  }
};

// ---------------------------------------------------------------------------

GradTally gradEPrecise() {
  GradTally t{0, 0, "E_precise"};
  const double h = 1e-6;
  for (const char* name : {"hand_planar2f", "hand_4f"}) {
    const HandModel m = hand(name);
    const std::vector<std::size_t> pinch = pinchFingers(m);
    Rng rng(hashString(name) ^ 0xacce55ULL);
    int cases = 0;
    while (cases < 60) {
      const Eigen::VectorXd q = randomQ(m, rng);
      WristParams wp;
      for (int i = 0; i < 6; ++i) wp[i] = rng.uniform(-1, 1);
      const RigidTransform root = wristFromParams(wp);
      const EnergyWithGradient eg = ePreciseGradient(m, q, pinch, 4, nullptr, root);
      if (eg.value <= 1e-6) continue;
      auto e = [&](const Eigen::VectorXd& x) { return ePrecise(sampleFingertipContacts(m, x, pinch, 4, nullptr, root)); };
      bool ok = std::abs(eg.value - e(q)) <= 1e-12 * eg.value;
      for (Eigen::Index i = 0; i < q.size(); ++i) {
        Eigen::VectorXd qp = q;
        Eigen::VectorXd qm = q;
        qp[i] += h;
        qm[i] -= h;
        ok = ok && relClose(eg.grad_q[i], (e(qp) - e(qm)) / (2 * h), 1e-4, 1e-9);
      }
      ++cases;
      ++t.cases;
      t.failed += ok ? 0 : 1;
    }
  }
  return t;
}

GradTally gradEPower() {
  GradTally t{0, 0, "e_power"};
  const HandModel m = hand("hand_4f");
  const ObjectShape ball = parsePrimitiveSpec("sphere:r=0.03");
  const PowerWeights w;
  const double h = 1e-6;
  Rng rng(31);
  while (t.cases < 120) {
    const Eigen::VectorXd q = randomQ(m, rng);
    const RigidTransform root = RigidTransform::fromTranslation(
        Vec3(rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03), rng.uniform(-0.06, 0.0)));
    const PowerEnergy g = ePower(m, q, ball, w, 4, root, true);
    bool ok = true;
    bool smooth = true;
    for (Eigen::Index i = 0; i < q.size() && smooth; ++i) {
      auto f = [&](double s) {
        Eigen::VectorXd x = q;
        x[i] += s;
        return ePower(m, x, ball, w, 4, root).total;
      };
      const auto fd = centralDiff(f, g.total, h, 1e-2);
      if (!fd) {
        smooth = false;
        break;
      }
      ok = ok && relClose(g.grad_q[i], *fd, 1e-4, 1e-8);
    }
    if (!smooth) continue;
    ++t.cases;
    t.failed += ok ? 0 : 1;
  }
  return t;
}

/// One design-energy term at a time; cases whose surface points or contacts
/// sit within 1e-6 of the plane are skipped.
GradTally gradDesignTerm(const std::string& name, const DesignWeights& w) {
  GradTally t{0, 0, name};
  const double h = 1e-6;
  for (const char* hand_name : {"hand_planar2f", "hand_4f"}) {
    const HandModel m = hand(hand_name);
    Rng rng(hashString(hand_name) ^ hashString(name));
    const std::vector<Eigen::VectorXd> qs = sampleOpposingBatch(m, 200, hashString(name));
    int cases = 0;
    for (const Eigen::VectorXd& q : qs) {
      if (cases >= 60) break;
      const ContactSet cs = sampleFingertipContacts(m, q, pinchFingers(m), 4);
      const Vec3 mid = contactCentroid(cs.contacts);
      const Vec3 p = mid + Vec3(rng.uniform(-0.005, 0.005), rng.uniform(-0.005, 0.005), rng.uniform(-0.005, 0.005));
      const Vec3 n = rng.uniform(0.5, 2.0) * randomUnit(rng);
      const Plane plane = Plane::fromRaw(p, n);
      bool near_kink = false;
      for (double phi : sidedSurfaceDistances(m, plane, q)) near_kink = near_kink || std::abs(phi) < 1e-6;
      for (const Contact& c : cs.contacts) near_kink = near_kink || std::abs(planeSdf(plane, c.x)) < 1e-6;
      if (near_kink) continue;
      const DesignEvaluation ev = designEnergy(m, p, n, q, w, 4, true);
      auto total = [&](const Vec3& pp, const Vec3& nn, const Eigen::VectorXd& qq) {
        return designEnergy(m, pp, nn, qq, w, 4, false).terms.total;
      };
      bool ok = true;
      for (int a = 0; a < 3; ++a) {
        Vec3 e = Vec3::Zero();
        e[a] = h;
        ok = ok && relClose(ev.d_p[a], (total(p + e, n, q) - total(p - e, n, q)) / (2 * h), 1e-4, 1e-8);
        ok = ok && relClose(ev.d_n[a], (total(p, n + e, q) - total(p, n - e, q)) / (2 * h), 1e-4, 1e-8);
      }
      for (Eigen::Index i = 0; i < q.size(); ++i) {
        Eigen::VectorXd qp = q;
        Eigen::VectorXd qm = q;
        qp[i] += h;
        qm[i] -= h;
        ok = ok && relClose(ev.d_q[i], (total(p, n, qp) - total(p, n, qm)) / (2 * h), 1e-4, 1e-8);
      }
      ++cases;
      ++t.cases;
      t.failed += ok ? 0 : 1;
    }
  }
  return t;
}

NetArch smallArch(int d) {
  NetArch arch;
  arch.d = d;
  arch.encoder = {8, 16};
  arch.head = {16, 8};
  return arch;
}

NormalizedCloud sphereCloud(double r, std::uint64_t seed, int count = 64) {
  return normalizeCloud(makePrimitive(ShapeKind::kSphere, {r, {}, 0.0}, RigidTransform::identity(), count, seed).cloud);
}

Eigen::Matrix<double, Eigen::Dynamic, 3> randomPoints(Rng& rng, int n) {
  Eigen::Matrix<double, Eigen::Dynamic, 3> pts(n, 3);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) pts(i, k) = rng.uniform(-1.0, 1.0);
  }
  return pts;
}

TrainingSet separableSet(int d, int count, std::uint64_t seed) {
  TrainingSet set;
  set.clouds = {sphereCloud(0.005, 1), sphereCloud(0.02, 2)};
  Rng rng(seed);
  for (int i = 0; i < count; ++i) {
    TrainingExample ex;
    ex.plane = Eigen::VectorXd(6);
    for (int k = 0; k < 6; ++k) ex.plane[k] = rng.uniform(-1.0, 1.0);
    ex.q = Eigen::VectorXd(d);
    for (int k = 0; k < d; ++k) ex.q[k] = rng.uniform(-1.0, 1.0);
    ex.cloud = static_cast<std::size_t>(i % 2);
    ex.label = ex.q[0] > 0.0 ? 1.0 : 0.0;
    set.examples.push_back(ex);
  }
  return set;
}

/// Each case: a fresh random net and batch, 20 random parameters checked.
GradTally gradBceWeights() {
  GradTally t{0, 0, "BCE weights"};
  const double h = 1e-5;
  Rng pick(5);
  for (std::uint64_t c = 0; c < 100; ++c) {
    const int d = 2 + static_cast<int>(c % 3);
    const TrainingSet data = separableSet(d, 6, c);
    const PointNetMlp net = PointNetMlp::random(smallArch(d), 100 + c);
    std::vector<std::size_t> idx(data.examples.size());
    std::iota(idx.begin(), idx.end(), 0);
    Eigen::VectorXd grad;
    const double loss = lossAndGradient(net, data, idx, &grad);
    const Eigen::VectorXd theta = net.flatParameters();
    PointNetMlp probe = net;
    bool ok = true;
    int checked = 0;
    for (int k = 0; k < 200 && checked < 20; ++k) {
      const Eigen::Index i = static_cast<Eigen::Index>(pick.below(static_cast<std::uint64_t>(theta.size())));
      auto f = [&](double s) {
        Eigen::VectorXd x = theta;
        x[i] += s;
        probe.setFlatParameters(x);
        return lossAndGradient(probe, data, idx, nullptr);
      };
      const auto fd = centralDiff(f, loss, h, 1e-2);
      if (!fd) continue;
      ok = ok && (std::abs(*fd) < 1e-8 ? std::abs(grad[i]) < 1e-6 : relClose(grad[i], *fd, 1e-3, 0.0));
      ++checked;
    }
    ok = ok && checked == 20;
    ++t.cases;
    t.failed += ok ? 0 : 1;
  }
  return t;
}

GradTally gradNetInputs() {
  GradTally t{0, 0, "net inputs"};
  const double h = 1e-6;
  Rng rng(77);
  for (std::uint64_t c = 0; c < 100; ++c) {
    const int d = 2 + static_cast<int>(c % 3);
    const PointNetMlp net = PointNetMlp::random(smallArch(d), 500 + c);
    const EncodedCloud enc = net.encode(randomPoints(rng, 24));
    NetInput in;
    in.plane = Eigen::VectorXd(6);
    for (int i = 0; i < 6; ++i) in.plane[i] = rng.uniform(-1.0, 1.0);
    in.q = Eigen::VectorXd(d);
    for (int i = 0; i < d; ++i) in.q[i] = rng.uniform(-1.0, 1.0);
    in.scale = rng.uniform(0.2, 2.0);
    const InputGradient g = net.inputGradient(enc, in);
    bool ok = g.value == net.forward(enc, in);
    auto check = [&](double analytic, const std::function<void(NetInput&, double)>& bump) {
      auto f = [&](double s) {
        NetInput x = in;
        bump(x, s);
        return net.forward(enc, x);
      };
      const auto fd = centralDiff(f, g.value, h, 1e-2);
      if (fd) ok = ok && relClose(analytic, *fd, 1e-3, 1e-9);
    };
    for (int k = 0; k < 6; ++k) check(g.plane[k], [k](NetInput& x, double s) { x.plane[k] += s; });
    for (int k = 0; k < d; ++k) check(g.q[k], [k](NetInput& x, double s) { x.q[k] += s; });
    check(g.scale, [](NetInput& x, double s) { x.scale += s; });
    ++t.cases;
    t.failed += ok ? 0 : 1;
  }
  return t;
}

Verdict criterionGradients() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<GradTally> tallies;
  tallies.push_back(gradEPrecise());
  tallies.push_back(gradEPower());
  tallies.push_back(gradDesignTerm("E_att", {1.0, 0.0, 0.0, 0.0}));
  tallies.push_back(gradDesignTerm("E_rep", {0.0, 1.0, 0.0, 0.0}));
  tallies.push_back(gradDesignTerm("E_mani", {0.0, 0.0, 1.0, 0.0}));
  tallies.push_back(gradBceWeights());
  tallies.push_back(gradNetInputs());
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool pass = secs < 120.0;
  std::string detail;
  for (const GradTally& t : tallies) {
    pass = pass && t.cases >= 100 && t.failed == 0;
    detail += t.summary() + ", ";
  }
  return {pass, detail + fmt("%.1f s", secs)};
}

// ---------------------------------------------------------------------------

Verdict criterionAntipodal() {
  double worst = 0.0;
  const std::vector<Contact> pair = {{Vec3(-0.01, 0, 0), Vec3(1, 0, 0), 0, 0}, {Vec3(0.01, 0, 0), Vec3(-1, 0, 0), 1, 0}};
  worst = std::max(worst, ePrecise(pair));
  Rng rng(2);
  for (int k = 0; k < 100; ++k) {
    const Vec3 c = Vec3(rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05));
    const Vec3 u = randomUnit(rng);
    const double r = rng.uniform(0.002, 0.03);
    const std::vector<Contact> p = {{c - r * u, u, 0, 0}, {c + r * u, -u, 1, 0}};
    worst = std::max(worst, ePrecise(p));
  }
  const HandModel m = hand("hand_prismatic2f");
  Eigen::VectorXd q(2);
  q << 0.01, -0.01;
  worst = std::max(worst, ePrecise(sampleFingertipContacts(m, q, pinchFingers(m), 1)));
  return {worst <= 1e-10, "max E_precise " + fmt("%.3g", worst) + " over 102 antipodal pairs"};
}

Verdict criterionParallelMotion() {
  const HandModel m = hand("hand_planar2f");
  const std::size_t thumb = m.fingerIndex("thumb");
  const std::size_t index = m.fingerIndex("index");
  auto tip = [&](const Eigen::VectorXd& q, std::size_t f) {
    return forwardKinematics(m, q)[m.fingers()[f].tip_link].translation;
  };
  Rng rng(3003);
  const double alpha = 1e-3;
  int good = 0;
  const int trials = 200;
  for (int k = 0; k < trials; ++k) {
    const Eigen::VectorXd q = randomQ(m, rng);
    const Vec3 d = (contactCentroid(sampleFingertipContacts(m, q, {index}, 4).contacts) -
                    contactCentroid(sampleFingertipContacts(m, q, {thumb}, 4).contacts))
                       .normalized();
    const Eigen::VectorXd q2 = q + pinchDelta(m, q, thumb, index, alpha);
    const Vec3 mt = tip(q2, thumb) - tip(q, thumb);
    const Vec3 mi = tip(q2, index) - tip(q, index);
    good += (angleDeg(mt, -d) <= 5.0 && angleDeg(mi, d) <= 5.0 && std::abs(mt.norm() - alpha) <= 0.1 * alpha &&
             std::abs(mi.norm() - alpha) <= 0.1 * alpha)
                ? 1
                : 0;
  }
  return {good >= 190, std::to_string(good) + "/" + std::to_string(trials) + " within 5 deg and 10%"};
}

Verdict criterionConvergence() {
  const HandModel m = hand("hand_planar2f");
  const auto t0 = std::chrono::steady_clock::now();
  bool pass = true;
  std::string detail;
  for (const double r : {0.004, 0.006, 0.008, 0.010}) {
    const ObjectShape s = parsePrimitiveSpec("sphere:r=" + fmt("%g", r));
    const SynthesisOptions opts;
    int ok = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const GraspCandidate c = synthesizePreciseGrasp(m, s, seed, opts);
      ok += (c.e_precise < 1e-3 && c.max_penetration < 5e-4) ? 1 : 0;
    }
    pass = pass && ok >= 60;
    detail += fmt("r=%gmm ", r * 1e3) + std::to_string(ok) + "/100, ";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {pass && secs < 60.0, detail + fmt("%.1f s", secs)};
}

Verdict criterionAblation() {
  const HandModel m = hand("hand_planar2f");
  const DesignOptions dopts;
  const DesignResult geo = optimizePlane(m, {}, nullptr, dopts);
  const DesignedPlane base{geo.plane, geo.q_batch[geo.anchor]};

  std::vector<DesignedPlane> planes{base};
  const auto extra = perturbPlanes(base, 7, 30.0 * std::numbers::pi / 180.0, 2e-3, 77);
  planes.insert(planes.end(), extra.begin(), extra.end());
  std::vector<ObjectShape> train_objs;
  for (const char* s : {"sphere:r=0.004", "sphere:r=0.006", "sphere:r=0.008", "sphere:r=0.01", "cyl:r=0.005,hh=0.01"}) {
    train_objs.push_back(loadObject(s));
  }
  LabelOptions lopts;
  lopts.seeds_per_pair = 4;
  lopts.global_seed = 1;
  const std::vector<LabelRecord> records = generateLabels(m, planes, train_objs, lopts);
  NetArch arch;
  arch.kind = NetKind::kSurrogate;
  arch.d = static_cast<int>(m.dof());
  PointNetMlp net = PointNetMlp::random(arch, 5);
  TrainOptions topts;
  topts.seed = 3;
  train(net, surrogateTrainingSet(records, train_objs), topts);
  DesignOptions popts = dopts;
  popts.weights.phys = 1e-3;
  const DesignResult phys = optimizePlane(m, train_objs, &net, popts);

  std::vector<ObjectShape> held;
  for (const char* s : {"sphere:r=0.0045", "sphere:r=0.0055", "sphere:r=0.0065", "sphere:r=0.0075", "cyl:r=0.006,hh=0.012"}) {
    held.push_back(loadObject(s));
  }
  TrialOptions trials;
  trials.seeds = 40;
  trials.global_seed = 2024;
  const CoverPlanes geo_covers = coverPlanesFromDesign(m, geo.plane, base.anchor_q);
  const CoverPlanes phys_covers = coverPlanesFromDesign(m, phys.plane, phys.q_batch[phys.anchor]);
  const auto none = runPreciseTrials(m, held, nullptr, trials);
  const auto without = runPreciseTrials(m, held, &geo_covers, trials);
  const auto with = runPreciseTrials(m, held, &phys_covers, trials);
  const double r0 = successRate(none);
  const double r1 = successRate(without);
  const double r2 = successRate(with);
  const bool pass = none.size() >= 200 && r2 >= r1 - 0.02 && r1 >= r0;
  return {pass, fmt("no plane %.1f%%", 100 * r0) + fmt(", without E_phys %.1f%%", 100 * r1) +
                    fmt(", with E_phys %.1f%%", 100 * r2) + " over " + std::to_string(none.size()) + " trials each"};
}

Verdict criterionHingeIdentity() {
  const std::vector<HandModel> hands = {hand("hand_planar2f"), hand("hand_4f"), hand("hand_prismatic2f")};
  Rng rng(66);
  int mismatches = 0;
  int negatives = 0;
  for (int k = 0; k < 1000; ++k) {
    std::vector<double> phi;
    if (k % 2 == 0) {
      const HandModel& m = hands[static_cast<std::size_t>(k / 2) % hands.size()];
      const Eigen::VectorXd q = randomQ(m, rng);
      const Vec3 p(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1));
      phi = sidedSurfaceDistances(m, Plane::fromRaw(p, randomUnit(rng)), q);
    } else {
      const int n = 1 + static_cast<int>(rng.below(40));
      for (int i = 0; i < n; ++i) phi.push_back(rng.uniform(-0.02, 0.02));
    }
    for (double v : phi) negatives += v < 0.0 ? 1 : 0;
    mismatches += repulsionHinge(phi) - repulsionIndicator(phi) == 0.0 ? 0 : 1;
  }
  return {mismatches == 0 && negatives > 0,
          std::to_string(mismatches) + " nonzero differences over 1000 plane/point sets"};
}

Verdict criterionSurrogate() {
  NetArch arch;
  arch.d = 4;
  const PointNetMlp net = PointNetMlp::random(arch, 19);
  Rng rng(8);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    Eigen::Matrix<double, Eigen::Dynamic, 3> pts = randomPoints(rng, 128);
    NetInput in;
    in.plane = Eigen::VectorXd(6);
    for (int i = 0; i < 6; ++i) in.plane[i] = rng.uniform(-1.0, 1.0);
    in.q = Eigen::VectorXd(4);
    for (int i = 0; i < 4; ++i) in.q[i] = rng.uniform(-1.0, 1.0);
    in.scale = 1.0;
    const double a = net.forward(net.encode(pts), in);
    std::vector<int> perm(128);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = 127; i > 0; --i) std::swap(perm[static_cast<std::size_t>(i)], perm[rng.below(static_cast<std::uint64_t>(i + 1))]);
    Eigen::Matrix<double, Eigen::Dynamic, 3> shuffled(128, 3);
    for (int i = 0; i < 128; ++i) shuffled.row(i) = pts.row(perm[static_cast<std::size_t>(i)]);
    worst = std::max(worst, std::abs(net.forward(net.encode(shuffled), in) - a));
  }

  const TrainingSet data = separableSet(4, 200, 13);
  PointNetMlp learner = PointNetMlp::random(arch, 11);
  TrainOptions opts;
  opts.epochs = 200;
  opts.seed = 4;
  const TrainResult res = train(learner, data, opts);

  const PointNetMlp zero(arch);
  NetInput in;
  in.plane = Eigen::VectorXd::Constant(6, 0.3);
  in.q = Eigen::VectorXd::Constant(4, -0.7);
  in.scale = 1.5;
  const double z = zero.forward(zero.encode(randomPoints(rng, 50)), in);
  const bool pass = worst <= 1e-12 && res.accuracy >= 0.95 && z == 0.5;
  return {pass, "permutation delta " + fmt("%.3g", worst) + fmt(", separable accuracy %.1f%%", 100 * res.accuracy) +
                    " in 200 epochs, zero net " + fmt("%.17g", z)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int runQuiet(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = runCli(args, out, err);
  if (code != 0) std::fprintf(stderr, "%s\n", err.str().c_str());
  return code;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("pinchkit_accept_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Verdict criterionSwitcher() {
  const fs::path dir = scratch("switch");
  if (runQuiet({"switch", "--hand", fixture("hand_planar2f"), "--seed", "1", "--out", dir.string()}) != 0) {
    return {false, "switch command failed"};
  }
  int total = 0;
  int correct = 0;
  std::istringstream in(slurp(dir / "switch.csv"));
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("test,", 0) != 0) continue;
    ++total;
    correct += line.back() == '1' ? 1 : 0;
  }
  const double acc = total ? static_cast<double>(correct) / total : 0.0;
  return {total > 0 && acc >= 0.9,
          std::to_string(correct) + "/" + std::to_string(total) + " held-out primitives" + fmt(" (%.1f%%)", 100 * acc)};
}

Verdict criterionCovers() {
  const std::vector<std::string> names = {"hand_planar2f", "hand_4f", "hand_prismatic2f"};
  int good = 0;
  std::string first_bad;
  for (std::uint64_t k = 0; k < 50; ++k) {
    const HandModel m = hand(names[k % names.size()]);
    DesignOptions opts;
    opts.seed = 1000 + k;
    opts.iterations = 150;
    opts.batch_size = 8;
    const DesignResult res = optimizePlane(m, {}, nullptr, opts);
    const CoverPlanes covers = coverPlanesFromDesign(m, res.plane, res.q_batch[res.anchor]);
    Rng rng(k);
    const double inflation = rng.uniform(0.0, 2e-3);
    bool ok = true;
    for (std::size_t f : pinchFingers(m)) {
      std::vector<Vec3> pts;
      for (const SurfaceSample& s : m.tipSamples(f)) pts.push_back(s.point);
      const CoverMesh cover = generateCover(*covers.per_finger[f], pts, inflation);
      std::map<std::pair<int, int>, int> edges;
      std::map<int, int> used;
      for (const auto& face : cover.mesh.faces) {
        for (int e = 0; e < 3; ++e) {
          const int u = face[static_cast<std::size_t>(e)];
          const int v = face[static_cast<std::size_t>((e + 1) % 3)];
          edges[{std::min(u, v), std::max(u, v)}]++;
          used[u] = 1;
        }
      }
      bool manifold = true;
      for (const auto& [edge, count] : edges) manifold = manifold && count == 2;
      const long euler = static_cast<long>(used.size()) - static_cast<long>(edges.size()) +
                         static_cast<long>(cover.mesh.faces.size());
      double dev = 0.0;
      double flat_area = 0.0;
      for (const auto& face : cover.mesh.faces) {
        const Vec3& a = cover.mesh.vertices[static_cast<std::size_t>(face[0])];
        const Vec3& b = cover.mesh.vertices[static_cast<std::size_t>(face[1])];
        const Vec3& c = cover.mesh.vertices[static_cast<std::size_t>(face[2])];
        const double da = planeSdf(cover.plane, a);
        const double db = planeSdf(cover.plane, b);
        const double dc = planeSdf(cover.plane, c);
        if (std::max({std::abs(da), std::abs(db), std::abs(dc)}) > 1e-6) continue;
        dev = std::max({dev, std::abs(da), std::abs(db), std::abs(dc)});
        flat_area += 0.5 * (b - a).cross(c - a).norm();
      }
      const bool this_ok = manifold && euler == 2 && isWatertight(cover.mesh) && dev <= 1e-9 && flat_area > 0.0;
      if (!this_ok && first_bad.empty()) first_bad = names[k % names.size()] + " seed " + std::to_string(opts.seed);
      ok = ok && this_ok;
    }
    good += ok ? 1 : 0;
  }
  return {good == 50, std::to_string(good) + "/50 fixtures watertight, 2-manifold, Euler 2, flat within 1e-9" +
                          (first_bad.empty() ? "" : "; first failure " + first_bad)};
}

/// Every stage reads the upstream artifacts of run A, so reruns see identical configs.
Verdict criterionDeterminism() {
  const fs::path dir = scratch("determinism");
  const std::string h = fixture("hand_planar2f");
  const fs::path a = dir / "a";
  struct Stage {
    std::string name;
    std::vector<std::string> args;
  };
  const std::vector<Stage> stages = {
      {"synth", {"synth", "--hand", h, "--object", "sphere:r=0.005", "--object", "box:hx=0.004,hy=0.004,hz=0.004",
                 "--seeds", "4", "--seed", "7", "--iterations", "200"}},
      {"design", {"design", "--hand", h, "--iterations", "80", "--seed", "7"}},
      {"cover", {"cover", "--hand", h, "--plane", (a / "design" / "plane.json").string()}},
      {"label", {"label", "--hand", h, "--object", "sphere:r=0.005", "--object", "sphere:r=0.007", "--planes",
                 (a / "design" / "plane.json").string(), "--random-planes", "3", "--seeds", "2", "--seed", "7"}},
      {"train", {"train", "--dataset", (a / "label" / "dataset.jsonl").string(), "--epochs", "30", "--seed", "7"}},
      {"design_phys", {"design", "--hand", h, "--iterations", "80", "--object", "sphere:r=0.005", "--with-surrogate",
                       (a / "train" / "weights.json").string(), "--seed", "7"}},
      {"eval", {"eval", "--hand", h, "--object", "sphere:r=0.005", "--object", "sphere:r=0.007", "--plane",
                (a / "design_phys" / "plane.json").string(), "--seeds", "3", "--seed", "7"}},
      {"switch", {"switch", "--hand", h, "--seeds", "3", "--seed", "7"}},
      {"motion", {"motion", "--hand", h, "--grasps", (a / "synth" / "grasps.jsonl").string()}},
  };
  int files = 0;
  std::string bad;
  for (const Stage& st : stages) {
    std::vector<fs::path> outs;
    for (const auto& [run, jobs] : std::vector<std::pair<std::string, std::string>>{{"a", "1"}, {"b", "1"}, {"c", "3"}}) {
      std::vector<std::string> args = st.args;
      const fs::path out = dir / run / st.name;
      args.insert(args.end(), {"--jobs", jobs, "--out", out.string()});
      if (runQuiet(args) != 0) return {false, st.name + " failed"};
      outs.push_back(out);
    }
    for (const auto& e : fs::directory_iterator(outs[0])) {
      const std::string ref = slurp(e.path());
      ++files;
      for (std::size_t r = 1; r < outs.size(); ++r) {
        if (slurp(outs[r] / e.path().filename()) != ref && bad.empty()) {
          bad = st.name + "/" + e.path().filename().string();
        }
      }
    }
  }
  return {bad.empty(), std::to_string(files) + " artifacts over " + std::to_string(stages.size()) +
                           " stages identical across reruns and --jobs 3" + (bad.empty() ? "" : "; differs: " + bad)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"gradient suite", criterionGradients},
      {"antipodal wrench zero", criterionAntipodal},
      {"parallel-motion contract", criterionParallelMotion},
      {"precise synthesis convergence", criterionConvergence},
      {"ablation ordering", criterionAblation},
      {"repulsion hinge identity", criterionHingeIdentity},
      {"surrogate properties", criterionSurrogate},
      {"grasp-type switcher", criterionSwitcher},
      {"cover geometry", criterionCovers},
      {"determinism", criterionDeterminism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += v.pass ? 0 : 1;
    std::printf("%s %2zu %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), v.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
