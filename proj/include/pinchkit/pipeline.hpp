#pragma once

#include "pinchkit/design.hpp"
#include "pinchkit/oracle.hpp"
#include "pinchkit/surrogate.hpp"
#include "pinchkit/synthesis.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pinchkit {

/// Primitive spec (`sphere:r=...`) or an ASCII PLY path.
ObjectShape loadObject(const std::string& ref);

/// Random planes around `base`: the normal tilts by up to `max_tilt` (rad)
/// and the point shifts along the normal by up to `max_offset` (m).
std::vector<DesignedPlane> perturbPlanes(const DesignedPlane& base, int count, double max_tilt,
                                         double max_offset, std::uint64_t seed);

/// Surrogate training set from labeled records; clouds are indexed like `objects`.
TrainingSet surrogateTrainingSet(const std::vector<LabelRecord>& records,
                                 const std::vector<ObjectShape>& objects);

struct TrialResult {
  std::size_t object_index = 0;
  std::uint64_t seed = 0;
  GraspCandidate candidate;
  Outcome outcome;
  bool success = false;  // converged and oracle success
};

struct TrialOptions {
  int seeds = 5;
  std::uint64_t global_seed = 0;
  int jobs = 1;
  SynthesisOptions synthesis;
  OracleOptions oracle;
};

/// Precise synthesis plus oracle over objects x seeds, with optional covers.
std::vector<TrialResult> runPreciseTrials(const HandModel& model, const std::vector<ObjectShape>& objects,
                                          const CoverPlanes* covers, const TrialOptions& opts);
double successRate(const std::vector<TrialResult>& trials);

/// Precise (1) when any seed's precise synthesis converges and passes the oracle, else power (0).
std::vector<int> graspTypeLabels(const HandModel& model, const std::vector<ObjectShape>& objects,
                                 const TrialOptions& opts);

/// One example per object with the label as target; no plane or joint inputs.
TrainingSet switcherTrainingSet(const std::vector<ObjectShape>& objects, const std::vector<int>& labels);

/// Spheres and boxes spanning the pinch and power regimes.
std::vector<std::string> defaultSwitchObjects();
std::vector<std::string> defaultSwitchTestObjects();

}  // namespace pinchkit
