#include "pinchkit/pipeline.hpp"

#include "pinchkit/error.hpp"
#include "pinchkit/parallel.hpp"
#include "pinchkit/random.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>

namespace pinchkit {

ObjectShape loadObject(const std::string& ref) {
  if (isPrimitiveSpec(ref)) return parsePrimitiveSpec(ref);
  if (!std::filesystem::exists(ref)) throw ParseError("object file not found: '" + ref + "'");
  ObjectShape shape = readPly(ref);
  shape.id = ref;
  return shape;
}

std::vector<DesignedPlane> perturbPlanes(const DesignedPlane& base, int count, double max_tilt,
                                         double max_offset, std::uint64_t seed) {
  std::vector<DesignedPlane> out;
  const Vec3 n = base.plane.n.normalized();
  const Vec3 helper = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 t1 = n.cross(helper).normalized();
  const Vec3 t2 = n.cross(t1);
  for (int i = 0; i < count; ++i) {
    Rng rng(taskSeed(seed, static_cast<std::uint64_t>(i)));
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double tilt = rng.uniform(0.0, max_tilt);
    const Vec3 axis = std::cos(phi) * t1 + std::sin(phi) * t2;
    const Vec3 n_new = Eigen::AngleAxisd(tilt, axis) * n;
    const double offset = rng.uniform(-max_offset, max_offset);
    out.push_back({Plane::fromRaw(base.plane.p + offset * n, n_new), base.anchor_q});
  }
  return out;
}

TrainingSet surrogateTrainingSet(const std::vector<LabelRecord>& records,
                                 const std::vector<ObjectShape>& objects) {
  TrainingSet set;
  for (const ObjectShape& o : objects) set.clouds.push_back(normalizeCloud(o.cloud));
  for (const LabelRecord& r : records) {
    if (r.object_index >= objects.size()) throw Error("record refers to an unknown object");
    set.examples.push_back({planeFeatures(r.plane), r.candidate.q, r.object_index,
                            static_cast<double>(r.label)});
  }
  return set;
}

std::vector<TrialResult> runPreciseTrials(const HandModel& model, const std::vector<ObjectShape>& objects,
                                          const CoverPlanes* covers, const TrialOptions& opts) {
  if (opts.seeds < 0) throw Error("seeds must be >= 0");
  const auto seeds = static_cast<std::size_t>(opts.seeds);
  std::vector<TrialResult> trials(objects.size() * seeds);
  SynthesisOptions sopts = opts.synthesis;
  if (covers != nullptr) sopts.covers = *covers;
  parallelFor(trials.size(), opts.jobs, [&](std::size_t t) {
    TrialResult& r = trials[t];
    r.object_index = t / seeds;
    r.seed = taskSeed(opts.global_seed, t);
    r.candidate = synthesizePreciseGrasp(model, objects[r.object_index], r.seed, sopts);
    r.outcome = evaluateGrasp(model, r.candidate, objects[r.object_index], opts.oracle, covers);
    r.success = r.candidate.converged && r.outcome.success;
  });
  return trials;
}

double successRate(const std::vector<TrialResult>& trials) {
  if (trials.empty()) return 0.0;
  std::size_t ok = 0;
  for (const TrialResult& t : trials) ok += t.success ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(trials.size());
}

std::vector<int> graspTypeLabels(const HandModel& model, const std::vector<ObjectShape>& objects,
                                 const TrialOptions& opts) {
  const std::vector<TrialResult> trials = runPreciseTrials(model, objects, nullptr, opts);
  std::vector<int> labels(objects.size(), 0);
  for (const TrialResult& t : trials) {
    if (t.success) labels[t.object_index] = 1;
  }
  return labels;
}

TrainingSet switcherTrainingSet(const std::vector<ObjectShape>& objects, const std::vector<int>& labels) {
  if (objects.size() != labels.size()) throw DimensionError("one label per object is required");
  TrainingSet set;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    set.clouds.push_back(normalizeCloud(objects[i].cloud));
    set.examples.push_back({Eigen::VectorXd(), Eigen::VectorXd(), i, static_cast<double>(labels[i])});
  }
  return set;
}

std::vector<std::string> defaultSwitchObjects() {
  return {"sphere:r=0.003",  "sphere:r=0.004",  "sphere:r=0.005",  "sphere:r=0.006",
          "sphere:r=0.007",  "sphere:r=0.008",  "sphere:r=0.009",  "sphere:r=0.01",
          "box:hx=0.03,hy=0.03,hz=0.03",    "box:hx=0.035,hy=0.035,hz=0.035",
          "box:hx=0.04,hy=0.04,hz=0.04",    "box:hx=0.05,hy=0.05,hz=0.05",
          "box:hx=0.06,hy=0.06,hz=0.06",    "box:hx=0.03,hy=0.04,hz=0.035",
          "box:hx=0.045,hy=0.035,hz=0.05",  "box:hx=0.055,hy=0.04,hz=0.03"};
}

std::vector<std::string> defaultSwitchTestObjects() {
  return {"sphere:r=0.0035", "sphere:r=0.0055", "sphere:r=0.0075", "sphere:r=0.0095",
          "sphere:r=0.0045", "box:hx=0.032,hy=0.032,hz=0.032", "box:hx=0.042,hy=0.038,hz=0.04",
          "box:hx=0.052,hy=0.052,hz=0.052", "box:hx=0.038,hy=0.03,hz=0.045",
          "box:hx=0.058,hy=0.05,hz=0.034"};
}

}  // namespace pinchkit
