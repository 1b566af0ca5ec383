#include "pinchkit/cli.hpp"

#include "pinchkit/design.hpp"
#include "pinchkit/error.hpp"
#include "pinchkit/mesh.hpp"
#include "pinchkit/oracle.hpp"
#include "pinchkit/parallel.hpp"
#include "pinchkit/pipeline.hpp"
#include "pinchkit/random.hpp"
#include "pinchkit/surrogate.hpp"
#include "pinchkit/synthesis.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>

namespace pinchkit {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

class ConfigError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

json defaultConfig() {
  return json::parse(R"({
    "seed": 0, "out": "pinchkit_out", "jobs": 1, "hand": "", "objects": [],
    "mode": "precise", "seeds": 10,
    "synthesis": {"iterations": 500, "contacts_per_finger": 4, "tau": 1e-3, "w_gap": 0.1,
                  "w_pen": 1e6, "max_penetration": 5e-4},
    "design": {"iterations": 300, "batch_size": 16, "w_att": 1.0, "w_rep": 1.0, "w_mani": 0.05,
               "w_phys": 1e-3, "inflation": 1e-3, "surrogate": ""},
    "oracle": {"eps_contact": 1e-3, "eps_pen": 5e-4, "mu": 0.5, "mass": 0.05, "gravity": 9.81,
               "disturbance_ratio": 0.5},
    "label": {"planes": [], "random_planes": 0, "max_tilt_deg": 30.0, "max_offset": 2e-3,
              "seeds_per_pair": 3},
    "train": {"dataset": "", "epochs": 200, "batch_size": 32, "learning_rate": 1e-2,
              "momentum": 0.9},
    "eval": {"plane": ""},
    "switch": {"test_objects": [], "epochs": 200, "seeds": 20},
    "cover": {"plane": ""},
    "motion": {"grasps": "", "alpha": 0.02, "overshoot_alpha": 5e-3, "index": -1}
  })");
}

bool sameKind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return !a.is_number_integer() || b.is_number_integer();
  return a.type() == b.type();
}

void mergeConfig(json& base, const json& file, const std::string& prefix) {
  if (!file.is_object()) throw ConfigError("config '" + prefix + "' must be a JSON object");
  for (auto it = file.begin(); it != file.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    json& slot = base[it.key()];
    if (slot.is_object()) {
      mergeConfig(slot, it.value(), key);
    } else if (!sameKind(slot, it.value())) {
      throw ConfigError("config key '" + key + "' has the wrong type (expected " +
                        std::string(slot.type_name()) + ")");
    } else {
      slot = it.value();
    }
  }
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json vecJson(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }
json vec3Json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

Eigen::VectorXd jsonVec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Vec3 jsonVec3(const json& j) {
  const Eigen::VectorXd v = jsonVec(j);
  if (v.size() != 3) throw ParseError("expected a 3-vector");
  return v;
}

json wristJson(const RigidTransform& t) { return vecJson(paramsFromWrist(t)); }

RigidTransform jsonWrist(const json& j) {
  const Eigen::VectorXd v = jsonVec(j);
  if (v.size() != 6) throw ParseError("wrist needs 6 values [tx, ty, tz, ax, ay, az]");
  return wristFromParams(v);
}

/// Pre-grasp, grasp and overshoot waypoints; throws DegenerateError when the
/// pinch direction is undefined.
json trajectoryJson(const HandModel& model, const GraspCandidate& c, const ObjectShape* shape, double alpha,
                    double overshoot) {
  GraspTrajectory traj;
  if (c.mode == GraspMode::kPrecise) {
    PinchOptions popts;
    popts.wrist = c.wrist;
    traj = parallelPinchMotion(model, c.q, alpha, overshoot, popts);
  } else {
    traj = sdfPushTrajectory(model, c.wrist, c.q, *shape, alpha, overshoot);
  }
  const char* names[3] = {"pre_grasp", "grasp", "overshoot"};
  json wps = json::array();
  for (std::size_t w = 0; w < traj.waypoints.size(); ++w) {
    wps.push_back({{"name", names[std::min<std::size_t>(w, 2)]},
                   {"wrist", wristJson(traj.waypoints[w].wrist)},
                   {"q", vecJson(traj.waypoints[w].q)}});
  }
  return wps;
}

json planeJson(const Plane& p) { return {{"p", vec3Json(p.p)}, {"n", vec3Json(p.n)}}; }

/// Shared state for one command invocation.
struct Context {
  std::string command;
  json cfg;
  std::uint64_t seed = 0;
  int jobs = 1;
  fs::path out_dir;
  json meta;
  std::ostream* out = nullptr;

  std::string metaLine() const {
    return "# tool_version=" + meta["tool_version"].get<std::string>() +
           " config_hash=" + meta["config_hash"].get<std::string>() +
           " global_seed=" + std::to_string(seed);
  }

  fs::path path(const std::string& name) const { return out_dir / name; }

  void ensureDir() const {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) {
      throw IoError("cannot create output directory '" + out_dir.string() + "'");
    }
  }

  void write(const std::string& name, const std::string& content) const {
    ensureDir();
    const fs::path p = path(name);
    std::ofstream f(p, std::ios::binary);
    f << content;
    f.close();
    if (!f) throw IoError("cannot write '" + p.string() + "'");
  }
};

Context makeContext(const std::string& command, const json& cfg, std::ostream& out) {
  Context ctx;
  ctx.command = command;
  ctx.cfg = cfg;
  ctx.seed = cfg["seed"].get<std::uint64_t>();
  ctx.jobs = cfg["jobs"].get<int>();
  if (ctx.jobs < 1) throw ConfigError("--jobs must be >= 1");
  ctx.out_dir = cfg["out"].get<std::string>();
  json hashed = cfg;
  hashed.erase("out");
  hashed.erase("jobs");
  hashed["command"] = command;
  ctx.meta = {{"tool_version", PINCHKIT_VERSION},
              {"config_hash", hex64(hashString(hashed.dump()))},
              {"global_seed", ctx.seed}};
  ctx.out = &out;
  return ctx;
}

HandModel requireHand(const Context& ctx) {
  const std::string path = ctx.cfg["hand"].get<std::string>();
  if (path.empty()) throw ConfigError("no hand description given (--hand)");
  if (!fs::exists(path)) throw ConfigError("hand file not found: '" + path + "'");
  return loadHand(path);
}

std::vector<ObjectShape> loadObjects(const std::vector<std::string>& refs) {
  std::vector<ObjectShape> out;
  for (const std::string& r : refs) {
    try {
      out.push_back(loadObject(r));
    } catch (const ParseError& e) {
      throw ConfigError(e.what());
    } catch (const Error& e) {
      throw ConfigError(std::string("cannot load object: ") + e.what());
    }
  }
  return out;
}

std::vector<ObjectShape> requireObjects(const Context& ctx) {
  const auto refs = ctx.cfg["objects"].get<std::vector<std::string>>();
  if (refs.empty()) throw ConfigError("no objects given (--object)");
  return loadObjects(refs);
}

/// Checks that an upstream artifact exists and names the producing stage otherwise.
std::string requireArtifact(const std::string& path, const std::string& stage, const std::string& flag) {
  if (path.empty()) throw ConfigError("missing upstream artifact from stage '" + stage + "' (" + flag + ")");
  if (!fs::exists(path)) {
    throw ConfigError("missing upstream artifact from stage '" + stage + "': '" + path + "'");
  }
  return path;
}

json readJsonFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::vector<json> readJsonLines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::vector<json> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

SynthesisOptions synthesisOptions(const Context& ctx) {
  const json& s = ctx.cfg["synthesis"];
  SynthesisOptions o;
  o.iterations = s["iterations"].get<int>();
  o.contacts_per_finger = s["contacts_per_finger"].get<int>();
  o.tau = s["tau"].get<double>();
  o.w_gap = s["w_gap"].get<double>();
  o.w_pen = s["w_pen"].get<double>();
  o.max_penetration = s["max_penetration"].get<double>();
  if (o.iterations < 0 || o.contacts_per_finger < 1) throw ConfigError("invalid synthesis options");
  return o;
}

OracleOptions oracleOptions(const Context& ctx) {
  const json& s = ctx.cfg["oracle"];
  OracleOptions o;
  o.eps_contact = s["eps_contact"].get<double>();
  o.eps_pen = s["eps_pen"].get<double>();
  o.mu = s["mu"].get<double>();
  o.mass = s["mass"].get<double>();
  o.gravity = s["gravity"].get<double>();
  o.disturbance_ratio = s["disturbance_ratio"].get<double>();
  if (!(o.mu > 0.0)) throw ConfigError("oracle.mu must be positive");
  return o;
}

int nonNegative(const Context& ctx, const json& v, const std::string& name) {
  const int n = v.get<int>();
  if (n < 0) throw ConfigError(name + " must be >= 0");
  (void)ctx;
  return n;
}

json outcomeJson(const Outcome& o) {
  return {{"success", o.success},
          {"reasons", o.reasons},
          {"max_penetration", o.metrics.max_penetration},
          {"e_precise", o.metrics.e_precise},
          {"min_contact_gap", o.metrics.min_contact_gap},
          {"disturbance_residual", o.metrics.disturbance_residual}};
}

std::string joinReasons(const std::vector<std::string>& r) {
  std::string s;
  for (const std::string& x : r) s += (s.empty() ? "" : ";") + x;
  return s;
}

std::string quoteCsv(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

void printTable(std::ostream& out, const std::vector<std::string>& header,
                const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      out << (c ? "  " : "") << std::left << std::setw(static_cast<int>(width[c])) << r[c];
    }
    out << "\n";
  };
  line(header);
  std::vector<std::string> rule;
  for (std::size_t w : width) rule.push_back(std::string(w, '-'));
  line(rule);
  for (const auto& r : rows) line(r);
}

std::string percent(double v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * v);
  return buf;
}

// ---------------------------------------------------------------------------

int cmdSynth(const Context& ctx) {
  const HandModel model = requireHand(ctx);
  const std::vector<ObjectShape> objects = requireObjects(ctx);
  GraspMode mode;
  try {
    mode = graspModeFromString(ctx.cfg["mode"].get<std::string>());
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (mode == GraspMode::kPower) {
    for (const ObjectShape& o : objects) {
      if (!o.hasSignedSdf()) throw ConfigError("power mode needs normals; '" + o.id + "' has none");
    }
  } else {
    pinchFingers(model);
  }
  const auto seeds = static_cast<std::size_t>(nonNegative(ctx, ctx.cfg["seeds"], "--seeds"));
  const SynthesisOptions sopts = synthesisOptions(ctx);
  const OracleOptions oopts = oracleOptions(ctx);
  const double alpha = ctx.cfg["motion"]["alpha"].get<double>();
  const double overshoot = ctx.cfg["motion"]["overshoot_alpha"].get<double>();
  ctx.ensureDir();

  const std::size_t total = objects.size() * seeds;
  std::vector<GraspCandidate> cands(total);
  std::vector<Outcome> outcomes(total);
  parallelFor(total, ctx.jobs, [&](std::size_t t) {
    const ObjectShape& obj = objects[t / seeds];
    cands[t] = synthesizeGrasp(model, obj, mode, taskSeed(ctx.seed, t), sopts);
    outcomes[t] = evaluateGrasp(model, cands[t], obj, oopts);
  });

  std::string lines;
  std::vector<std::vector<std::string>> rows;
  for (std::size_t o = 0; o < objects.size(); ++o) {
    std::size_t converged = 0;
    std::size_t success = 0;
    const std::vector<GraspCandidate> group(cands.begin() + static_cast<std::ptrdiff_t>(o * seeds),
                                            cands.begin() + static_cast<std::ptrdiff_t>((o + 1) * seeds));
    const std::optional<std::size_t> best = bestCandidate(group);
    for (std::size_t s = 0; s < seeds; ++s) {
      const std::size_t t = o * seeds + s;
      const GraspCandidate& c = cands[t];
      json waypoints;
      try {
        waypoints = trajectoryJson(model, c, &objects[o], alpha, overshoot);
      } catch (const DegenerateError&) {
        waypoints = json::array();
      }
      json rec = {{"meta", ctx.meta},
                  {"object_id", objects[o].id},
                  {"mode", toString(mode)},
                  {"seed_index", s},
                  {"seed", c.seed},
                  {"converged", c.converged},
                  {"best", best == s},
                  {"reason", c.reason},
                  {"energy", c.energy},
                  {"e_precise", c.e_precise},
                  {"max_penetration", c.max_penetration},
                  {"max_gap", c.max_gap},
                  {"iterations", c.iterations},
                  {"wrist", wristJson(c.wrist)},
                  {"q", vecJson(c.q)},
                  {"oracle", outcomeJson(outcomes[t])},
                  {"waypoints", waypoints}};
      lines += rec.dump() + "\n";
      converged += c.converged ? 1 : 0;
      success += c.converged && outcomes[t].success ? 1 : 0;
    }
    rows.push_back({objects[o].id, toString(mode), std::to_string(success), std::to_string(converged),
                    std::to_string(seeds), best ? std::to_string(*best) : "-"});
  }
  ctx.write("grasps.jsonl", lines);
  printTable(*ctx.out, {"object", "mode", "success", "converged", "seeds", "best"}, rows);
  *ctx.out << "wrote " << ctx.path("grasps.jsonl").string() << "\n";
  return 0;
}

CoverMesh coverFor(const HandModel& model, std::size_t finger, const Plane& local, double inflation) {
  std::vector<Vec3> pts;
  for (const SurfaceSample& s : model.tipSamples(finger)) pts.push_back(s.point);
  return generateCover(local, pts, inflation);
}

void writeCovers(const Context& ctx, const HandModel& model, const CoverPlanes& covers, double inflation,
                 std::vector<std::vector<std::string>>* rows) {
  ctx.ensureDir();
  const std::string tag = "tool_version=" + ctx.meta["tool_version"].get<std::string>() +
                          " config_hash=" + ctx.meta["config_hash"].get<std::string>() +
                          " global_seed=" + std::to_string(ctx.seed);
  for (std::size_t f : pinchFingers(model)) {
    const std::string name = model.fingers()[f].name;
    const CoverMesh cover = coverFor(model, f, *covers.per_finger[f], inflation);
    try {
      writeStl(ctx.path("cover_" + name + ".stl").string(), cover.mesh, "cover_" + name + " " + tag);
      writeObj(ctx.path("cover_" + name + ".obj").string(), cover.mesh, "cover_" + name + " " + tag);
    } catch (const Error& e) {
      throw IoError(e.what());
    }
    if (rows != nullptr) {
      rows->push_back({name, std::to_string(cover.mesh.vertices.size()), std::to_string(cover.mesh.faces.size()),
                       isWatertight(cover.mesh) ? "yes" : "no", std::to_string(eulerCharacteristic(cover.mesh)),
                       num(coverFlatFaceArea(cover) * 1e6)});
    }
  }
}

DesignedPlane readPlaneFile(const std::string& path, const HandModel& model) {
  const json j = readJsonFile(path);
  try {
    DesignedPlane dp{Plane::fromRaw(jsonVec3(j.at("p")), jsonVec3(j.at("n"))), jsonVec(j.at("anchor_q"))};
    if (dp.anchor_q.size() != static_cast<Eigen::Index>(model.dof())) {
      throw ConfigError(path + ": anchor_q does not match the hand");
    }
    return dp;
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

int cmdDesign(const Context& ctx) {
  const HandModel model = requireHand(ctx);
  pinchFingers(model);
  const json& d = ctx.cfg["design"];
  DesignOptions opts;
  opts.iterations = nonNegative(ctx, d["iterations"], "design.iterations");
  opts.batch_size = d["batch_size"].get<int>();
  if (opts.batch_size < 1) throw ConfigError("design.batch_size must be >= 1");
  opts.weights = {d["w_att"].get<double>(), d["w_rep"].get<double>(), d["w_mani"].get<double>(),
                  d["w_phys"].get<double>()};
  opts.seed = ctx.seed;
  const double inflation = d["inflation"].get<double>();
  if (!(inflation >= 0.0)) throw ConfigError("design.inflation must be >= 0");

  std::optional<PointNetMlp> surrogate;
  std::vector<ObjectShape> objects;
  const std::string weights_path = d["surrogate"].get<std::string>();
  if (!weights_path.empty()) {
    requireArtifact(weights_path, "train", "--with-surrogate");
    try {
      surrogate = loadNet(weights_path);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
    objects = requireObjects(ctx);
    if (surrogate->arch().d != static_cast<int>(model.dof())) {
      throw ConfigError("surrogate joint inputs (" + std::to_string(surrogate->arch().d) +
                        ") do not match the hand (" + std::to_string(model.dof()) + ")");
    }
  }
  ctx.ensureDir();
  const DesignResult res = optimizePlane(model, objects, surrogate ? &*surrogate : nullptr, opts);
  const Eigen::VectorXd& anchor = res.q_batch[res.anchor];
  const CoverPlanes covers = coverPlanesFromDesign(model, res.plane, anchor);
  const std::vector<std::size_t> pinch = pinchFingers(model);
  const DesignTerms& last = res.history.back();

  json plane = {{"meta", ctx.meta},
                {"p", vec3Json(res.plane.p)},
                {"n", vec3Json(res.plane.n)},
                {"anchor_q", vecJson(anchor)},
                {"covers",
                 {{"thumb", planeJson(*covers.per_finger[pinch[0]])},
                  {"index", planeJson(*covers.per_finger[pinch[1]])}}},
                {"inflation", inflation},
                {"iterations", res.history.size() - 1},
                {"final",
                 {{"E_att", last.att}, {"E_rep", last.rep}, {"E_mani", last.mani}, {"E_phys", last.phys},
                  {"total", last.total}}}};
  ctx.write("plane.json", plane.dump(2) + "\n");

  std::string csv = ctx.metaLine() + "\niter,E_att,E_rep,E_mani,E_phys,total\n";
  for (std::size_t i = 0; i < res.history.size(); ++i) {
    const DesignTerms& h = res.history[i];
    csv += std::to_string(i) + "," + num(h.att) + "," + num(h.rep) + "," + num(h.mani) + "," + num(h.phys) +
           "," + num(h.total) + "\n";
  }
  ctx.write("history.csv", csv);
  std::vector<std::vector<std::string>> rows;
  writeCovers(ctx, model, covers, inflation, &rows);

  *ctx.out << "plane p = [" << num(res.plane.p.x()) << ", " << num(res.plane.p.y()) << ", "
           << num(res.plane.p.z()) << "]  n = [" << num(res.plane.n.x()) << ", " << num(res.plane.n.y())
           << ", " << num(res.plane.n.z()) << "]\n";
  printTable(*ctx.out, {"iter", "E_att", "E_rep", "E_mani", "E_phys", "total"},
             {{std::to_string(res.history.size() - 1), num(last.att), num(last.rep), num(last.mani),
               num(last.phys), num(last.total)}});
  printTable(*ctx.out, {"cover", "vertices", "faces", "watertight", "euler", "flat_area_mm2"}, rows);
  return 0;
}

int cmdCover(const Context& ctx) {
  const HandModel model = requireHand(ctx);
  const std::string path = requireArtifact(ctx.cfg["cover"]["plane"].get<std::string>(), "design", "--plane");
  const DesignedPlane dp = readPlaneFile(path, model);
  const double inflation = ctx.cfg["design"]["inflation"].get<double>();
  if (!(inflation >= 0.0)) throw ConfigError("inflation must be >= 0");
  const CoverPlanes covers = coverPlanesFromDesign(model, dp.plane, dp.anchor_q);
  std::vector<std::vector<std::string>> rows;
  writeCovers(ctx, model, covers, inflation, &rows);
  printTable(*ctx.out, {"cover", "vertices", "faces", "watertight", "euler", "flat_area_mm2"}, rows);
  return 0;
}

int cmdLabel(const Context& ctx) {
  const HandModel model = requireHand(ctx);
  const json& l = ctx.cfg["label"];
  const auto paths = l["planes"].get<std::vector<std::string>>();
  if (paths.empty()) throw ConfigError("missing upstream artifact from stage 'design' (--planes)");
  std::vector<DesignedPlane> planes;
  for (const std::string& p : paths) planes.push_back(readPlaneFile(requireArtifact(p, "design", "--planes"), model));
  const int random_planes = nonNegative(ctx, l["random_planes"], "label.random_planes");
  if (random_planes > 0) {
    const auto extra = perturbPlanes(planes.front(), random_planes,
                                     l["max_tilt_deg"].get<double>() * std::numbers::pi / 180.0,
                                     l["max_offset"].get<double>(), mixSeed(ctx.seed ^ 0x9ab1e5ULL));
    planes.insert(planes.end(), extra.begin(), extra.end());
  }
  const std::vector<ObjectShape> objects = requireObjects(ctx);
  LabelOptions opts;
  opts.seeds_per_pair = nonNegative(ctx, l["seeds_per_pair"], "--seeds");
  opts.global_seed = ctx.seed;
  opts.jobs = ctx.jobs;
  opts.synthesis = synthesisOptions(ctx);
  opts.oracle = oracleOptions(ctx);
  ctx.ensureDir();
  const std::vector<LabelRecord> records = generateLabels(model, planes, objects, opts);

  std::string lines;
  std::string csv = ctx.metaLine() +
                    "\nplane_index,object,seed,label,converged,success,max_penetration,e_precise,"
                    "min_contact_gap,disturbance_residual,reasons\n";
  std::vector<std::size_t> positives(planes.size(), 0);
  std::vector<std::size_t> counts(planes.size(), 0);
  for (const LabelRecord& r : records) {
    Eigen::VectorXd plane6(6);
    plane6 << r.plane.p, r.plane.n;
    json rec = {{"meta", ctx.meta},
                {"plane_index", r.plane_index},
                {"plane", vecJson(plane6)},
                {"q", vecJson(r.candidate.q)},
                {"object_id", r.object_id},
                {"seed", r.seed},
                {"label", r.label},
                {"converged", r.candidate.converged},
                {"oracle", outcomeJson(r.outcome)}};
    lines += rec.dump() + "\n";
    csv += std::to_string(r.plane_index) + "," + quoteCsv(r.object_id) + "," + std::to_string(r.seed) + "," +
           std::to_string(r.label) + "," + (r.candidate.converged ? "1" : "0") + "," +
           (r.outcome.success ? "1" : "0") + "," + num(r.outcome.metrics.max_penetration) + "," +
           num(r.outcome.metrics.e_precise) + "," + num(r.outcome.metrics.min_contact_gap) + "," +
           num(r.outcome.metrics.disturbance_residual) + "," + joinReasons(r.outcome.reasons) + "\n";
    positives[r.plane_index] += static_cast<std::size_t>(r.label);
    counts[r.plane_index] += 1;
  }
  ctx.write("dataset.jsonl", lines);
  ctx.write("labels.csv", csv);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t p = 0; p < planes.size(); ++p) {
    rows.push_back({std::to_string(p), std::to_string(positives[p]), std::to_string(counts[p]),
                    counts[p] ? percent(static_cast<double>(positives[p]) / static_cast<double>(counts[p])) : "-"});
  }
  printTable(*ctx.out, {"plane", "positive", "records", "rate"}, rows);
  return 0;
}

int cmdTrain(const Context& ctx) {
  const json& t = ctx.cfg["train"];
  const std::string path = requireArtifact(t["dataset"].get<std::string>(), "label", "--dataset");
  const std::vector<json> lines = readJsonLines(path);
  if (lines.empty()) throw ConfigError("dataset '" + path + "' is empty");

  TrainingSet data;
  std::map<std::string, std::size_t> cloud_of;
  std::vector<std::string> ids;
  int d = -1;
  try {
    for (const json& rec : lines) {
      const std::string id = rec.at("object_id").get<std::string>();
      auto [it, inserted] = cloud_of.emplace(id, ids.size());
      if (inserted) ids.push_back(id);
      const Eigen::VectorXd plane6 = jsonVec(rec.at("plane"));
      if (plane6.size() != 6) throw ConfigError(path + ": plane entries need 6 values");
      const Eigen::VectorXd q = jsonVec(rec.at("q"));
      if (d < 0) d = static_cast<int>(q.size());
      if (q.size() != d) throw ConfigError(path + ": inconsistent joint vector lengths");
      const Plane plane = Plane::fromRaw(plane6.head<3>(), plane6.tail<3>());
      data.examples.push_back({planeFeatures(plane), q, it->second, rec.at("label").get<double>()});
    }
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  for (const ObjectShape& o : loadObjects(ids)) data.clouds.push_back(normalizeCloud(o.cloud));

  TrainOptions opts;
  opts.epochs = nonNegative(ctx, t["epochs"], "--epochs");
  opts.batch_size = t["batch_size"].get<int>();
  opts.learning_rate = t["learning_rate"].get<double>();
  opts.momentum = t["momentum"].get<double>();
  opts.seed = ctx.seed;
  if (opts.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  NetArch arch;
  arch.kind = NetKind::kSurrogate;
  arch.d = d;
  PointNetMlp net = PointNetMlp::random(arch, mixSeed(ctx.seed ^ 0x5eedULL));
  ctx.ensureDir();
  TrainResult res;
  try {
    res = train(net, data, opts);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  ctx.write("weights.json", netToJson(net, ctx.meta.dump()));
  std::string csv = ctx.metaLine() + "\nepoch,loss\n";
  for (std::size_t e = 0; e < res.loss_curve.size(); ++e) {
    csv += std::to_string(e + 1) + "," + num(res.loss_curve[e]) + "\n";
  }
  ctx.write("loss.csv", csv);
  printTable(*ctx.out, {"examples", "objects", "epochs", "final_loss", "accuracy"},
             {{std::to_string(data.examples.size()), std::to_string(ids.size()), std::to_string(opts.epochs),
               res.loss_curve.empty() ? "-" : num(res.loss_curve.back()), percent(res.accuracy)}});
  return 0;
}

int cmdEval(const Context& ctx) {
  const HandModel model = requireHand(ctx);
  const std::string path = requireArtifact(ctx.cfg["eval"]["plane"].get<std::string>(), "design", "--plane");
  const DesignedPlane dp = readPlaneFile(path, model);
  const std::vector<ObjectShape> objects = requireObjects(ctx);
  TrialOptions opts;
  opts.seeds = nonNegative(ctx, ctx.cfg["seeds"], "--seeds");
  opts.global_seed = ctx.seed;
  opts.jobs = ctx.jobs;
  opts.synthesis = synthesisOptions(ctx);
  opts.oracle = oracleOptions(ctx);
  ctx.ensureDir();
  const CoverPlanes covers = coverPlanesFromDesign(model, dp.plane, dp.anchor_q);
  const std::vector<TrialResult> bare = runPreciseTrials(model, objects, nullptr, opts);
  const std::vector<TrialResult> designed = runPreciseTrials(model, objects, &covers, opts);

  std::string csv = ctx.metaLine() + "\ncondition,object,seed,converged,success,reasons\n";
  auto dump = [&](const char* name, const std::vector<TrialResult>& trials) {
    for (const TrialResult& t : trials) {
      csv += std::string(name) + "," + quoteCsv(objects[t.object_index].id) + "," + std::to_string(t.seed) + "," +
             (t.candidate.converged ? "1" : "0") + "," + (t.success ? "1" : "0") + "," +
             joinReasons(t.outcome.reasons) + "\n";
    }
  };
  dump("without_design", bare);
  dump("with_design", designed);
  ctx.write("eval.csv", csv);
  auto count = [](const std::vector<TrialResult>& v) {
    std::size_t n = 0;
    for (const TrialResult& t : v) n += t.success ? 1 : 0;
    return n;
  };
  std::string summary = ctx.metaLine() + "\ncondition,trials,successes,rate\n";
  summary += "without_design," + std::to_string(bare.size()) + "," + std::to_string(count(bare)) + "," +
             num(successRate(bare)) + "\n";
  summary += "with_design," + std::to_string(designed.size()) + "," + std::to_string(count(designed)) + "," +
             num(successRate(designed)) + "\n";
  ctx.write("eval_summary.csv", summary);
  printTable(*ctx.out, {"condition", "trials", "successes", "rate"},
             {{"without design", std::to_string(bare.size()), std::to_string(count(bare)), percent(successRate(bare))},
              {"with design", std::to_string(designed.size()), std::to_string(count(designed)),
               percent(successRate(designed))}});
  return 0;
}

int cmdSwitch(const Context& ctx) {
  const HandModel model = requireHand(ctx);
  pinchFingers(model);
  auto train_refs = ctx.cfg["objects"].get<std::vector<std::string>>();
  auto test_refs = ctx.cfg["switch"]["test_objects"].get<std::vector<std::string>>();
  if (train_refs.empty()) train_refs = defaultSwitchObjects();
  if (test_refs.empty()) test_refs = defaultSwitchTestObjects();
  const std::vector<ObjectShape> train_objs = loadObjects(train_refs);
  const std::vector<ObjectShape> test_objs = loadObjects(test_refs);
  TrialOptions topts;
  topts.seeds = nonNegative(ctx, ctx.cfg["switch"]["seeds"], "--seeds");
  topts.global_seed = ctx.seed;
  topts.jobs = ctx.jobs;
  topts.synthesis = synthesisOptions(ctx);
  topts.oracle = oracleOptions(ctx);
  ctx.ensureDir();
  const std::vector<int> train_labels = graspTypeLabels(model, train_objs, topts);
  topts.global_seed = mixSeed(ctx.seed ^ 0x7e57ULL);
  const std::vector<int> test_labels = graspTypeLabels(model, test_objs, topts);

  NetArch arch;
  arch.kind = NetKind::kSwitcher;
  PointNetMlp net = PointNetMlp::random(arch, mixSeed(ctx.seed ^ 0x5717cULL));
  TrainOptions opts;
  opts.epochs = nonNegative(ctx, ctx.cfg["switch"]["epochs"], "switch.epochs");
  opts.batch_size = ctx.cfg["train"]["batch_size"].get<int>();
  opts.learning_rate = ctx.cfg["train"]["learning_rate"].get<double>();
  opts.momentum = ctx.cfg["train"]["momentum"].get<double>();
  opts.seed = ctx.seed;
  try {
    train(net, switcherTrainingSet(train_objs, train_labels), opts);
  } catch (const Error& e) {
    throw ConfigError(std::string("switcher training: ") + e.what());
  }
  ctx.write("switcher.json", netToJson(net, ctx.meta.dump()));

  std::string csv = ctx.metaLine() + "\nsplit,object,label,predicted,score,confidence,correct\n";
  std::vector<std::vector<std::string>> rows;
  double acc[2] = {0.0, 0.0};
  auto run = [&](const char* split, const std::vector<ObjectShape>& objs, const std::vector<int>& labels, int k) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < objs.size(); ++i) {
      const GraspTypeDecision dec = classifyGraspType(net, normalizeCloud(objs[i].cloud));
      const bool ok = dec.precise == (labels[i] == 1);
      correct += ok ? 1 : 0;
      const std::string label = labels[i] ? "precise" : "power";
      const std::string pred = dec.precise ? "precise" : "power";
      csv += std::string(split) + "," + quoteCsv(objs[i].id) + "," + label + "," + pred + "," + num(dec.score) + "," +
             num(dec.confidence) + "," + (ok ? "1" : "0") + "\n";
      if (k == 1) rows.push_back({objs[i].id, label, pred, num(dec.confidence).substr(0, 6)});
    }
    acc[k] = objs.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(objs.size());
  };
  run("train", train_objs, train_labels, 0);
  run("test", test_objs, test_labels, 1);
  ctx.write("switch.csv", csv);
  printTable(*ctx.out, {"object", "label", "predicted", "confidence"}, rows);
  *ctx.out << "train accuracy " << percent(acc[0]) << ", test accuracy " << percent(acc[1]) << "\n";
  return 0;
}

int cmdMotion(const Context& ctx) {
  const HandModel model = requireHand(ctx);
  const json& m = ctx.cfg["motion"];
  const std::string path = requireArtifact(m["grasps"].get<std::string>(), "synth", "--grasps");
  const std::vector<json> records = readJsonLines(path);
  const double alpha = m["alpha"].get<double>();
  const double overshoot = m["overshoot_alpha"].get<double>();
  const int index = m["index"].get<int>();
  if (index >= static_cast<int>(records.size())) {
    throw ConfigError("--index " + std::to_string(index) + " is out of range (" +
                      std::to_string(records.size()) + " records)");
  }
  ctx.ensureDir();
  std::string lines;
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (index >= 0 && static_cast<std::size_t>(index) != i) continue;
    json out;
    try {
      const json& rec = records[i];
      GraspCandidate c;
      c.wrist = jsonWrist(rec.at("wrist"));
      c.q = jsonVec(rec.at("q"));
      if (c.q.size() != static_cast<Eigen::Index>(model.dof())) {
        throw ConfigError(path + ": q does not match the hand");
      }
      const std::string object = rec.at("object_id").get<std::string>();
      c.mode = graspModeFromString(rec.at("mode").get<std::string>());
      out = {{"meta", ctx.meta}, {"record", i}, {"object_id", object}, {"mode", toString(c.mode)},
             {"alpha", alpha}, {"overshoot_alpha", overshoot}};
      std::optional<ObjectShape> shape;
      if (c.mode == GraspMode::kPower) shape = loadObjects({object}).front();
      out["waypoints"] = trajectoryJson(model, c, shape ? &*shape : nullptr, alpha, overshoot);
      rows.push_back({std::to_string(i), object, toString(c.mode), std::to_string(out["waypoints"].size())});
    } catch (const json::exception& e) {
      throw ConfigError(path + ": " + e.what());
    } catch (const ParseError& e) {
      throw ConfigError(path + ": " + e.what());
    } catch (const DegenerateError& e) {
      out["waypoints"] = json::array();
      out["error"] = e.what();
      rows.push_back({std::to_string(i), out.value("object_id", ""), out.value("mode", ""), "0"});
    }
    lines += out.dump() + "\n";
  }
  ctx.write("trajectories.jsonl", lines);
  printTable(*ctx.out, {"record", "object", "mode", "waypoints"}, rows);
  return 0;
}

}  // namespace

int runCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"pinchkit: pinch grasp synthesis and fingertip contact-plane design"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(PINCHKIT_VERSION));

  struct Flags {
    std::uint64_t seed = 0;
    std::string out;
    std::string config;
    int jobs = 1;
    std::string hand;
    std::vector<std::string> objects;
    std::vector<std::string> test_objects;
    std::string mode;
    int seeds = 0;
    int iterations = 0;
    int batch = 0;
    int epochs = 0;
    double lr = 0.0;
    double momentum = 0.0;
    double w_att = 0.0, w_rep = 0.0, w_mani = 0.0, w_phys = 0.0;
    double inflation = 0.0;
    std::string surrogate;
    std::vector<std::string> planes;
    int random_planes = 0;
    std::string dataset;
    std::string plane;
    std::string grasps;
    double alpha = 0.0;
    double overshoot = 0.0;
    int index = -1;
  } f;

  // Each entry: option, config path it overrides, and how to write the value.
  struct Binding {
    CLI::Option* opt;
    std::vector<std::string> key;
    std::function<json()> value;
  };
  std::vector<Binding> bindings;
  auto bind = [&](CLI::Option* o, std::vector<std::string> key, std::function<json()> v) {
    bindings.push_back({o, std::move(key), std::move(v)});
  };

  std::map<std::string, CLI::App*> subs;
  auto common = [&](CLI::App* s) {
    bind(s->add_option("--seed", f.seed, "Global seed"), {"seed"}, [&] { return json(f.seed); });
    bind(s->add_option("--out", f.out, "Output directory"), {"out"}, [&] { return json(f.out); });
    s->add_option("--config", f.config, "JSON config file (flags take precedence)");
    bind(s->add_option("--jobs", f.jobs, "Worker threads"), {"jobs"}, [&] { return json(f.jobs); });
  };
  auto handFlag = [&](CLI::App* s) {
    bind(s->add_option("--hand", f.hand, "Hand description (JSON)"), {"hand"}, [&] { return json(f.hand); });
  };
  auto objectFlag = [&](CLI::App* s) {
    bind(s->add_option("--object", f.objects, "Primitive spec or PLY path (repeatable)"), {"objects"},
         [&] { return json(f.objects); });
  };

  CLI::App* synth = app.add_subcommand("synth", "Synthesize grasps for objects x seeds");
  common(synth);
  handFlag(synth);
  objectFlag(synth);
  bind(synth->add_option("--mode", f.mode, "precise or power"), {"mode"}, [&] { return json(f.mode); });
  bind(synth->add_option("--seeds", f.seeds, "Seeds per object"), {"seeds"}, [&] { return json(f.seeds); });
  bind(synth->add_option("--iterations", f.iterations, "Optimizer iterations"), {"synthesis", "iterations"},
       [&] { return json(f.iterations); });

  CLI::App* design = app.add_subcommand("design", "Optimize the shared contact plane and emit covers");
  common(design);
  handFlag(design);
  objectFlag(design);
  bind(design->add_option("--with-surrogate", f.surrogate, "Surrogate weights enabling E_phys"),
       {"design", "surrogate"}, [&] { return json(f.surrogate); });
  bind(design->add_option("--iterations", f.iterations, "Optimizer iterations"), {"design", "iterations"},
       [&] { return json(f.iterations); });
  bind(design->add_option("--batch", f.batch, "Joint configurations sharing the plane"), {"design", "batch_size"},
       [&] { return json(f.batch); });
  bind(design->add_option("--w-att", f.w_att), {"design", "w_att"}, [&] { return json(f.w_att); });
  bind(design->add_option("--w-rep", f.w_rep), {"design", "w_rep"}, [&] { return json(f.w_rep); });
  bind(design->add_option("--w-mani", f.w_mani), {"design", "w_mani"}, [&] { return json(f.w_mani); });
  bind(design->add_option("--w-phys", f.w_phys), {"design", "w_phys"}, [&] { return json(f.w_phys); });
  bind(design->add_option("--inflation", f.inflation, "Cover inflation (m)"), {"design", "inflation"},
       [&] { return json(f.inflation); });

  CLI::App* label = app.add_subcommand("label", "Label (plane, object, seed) tuples with the oracle");
  common(label);
  handFlag(label);
  objectFlag(label);
  bind(label->add_option("--planes", f.planes, "plane.json files from design"), {"label", "planes"},
       [&] { return json(f.planes); });
  bind(label->add_option("--random-planes", f.random_planes, "Extra planes perturbed from the first"),
       {"label", "random_planes"}, [&] { return json(f.random_planes); });
  bind(label->add_option("--seeds", f.seeds, "Seeds per (plane, object)"), {"label", "seeds_per_pair"},
       [&] { return json(f.seeds); });

  CLI::App* trainc = app.add_subcommand("train", "Train the surrogate on a labeled dataset");
  common(trainc);
  bind(trainc->add_option("--dataset", f.dataset, "dataset.jsonl from label"), {"train", "dataset"},
       [&] { return json(f.dataset); });
  bind(trainc->add_option("--epochs", f.epochs), {"train", "epochs"}, [&] { return json(f.epochs); });
  bind(trainc->add_option("--batch", f.batch), {"train", "batch_size"}, [&] { return json(f.batch); });
  bind(trainc->add_option("--lr", f.lr), {"train", "learning_rate"}, [&] { return json(f.lr); });
  bind(trainc->add_option("--momentum", f.momentum), {"train", "momentum"}, [&] { return json(f.momentum); });

  CLI::App* eval = app.add_subcommand("eval", "Oracle success with and without the designed covers");
  common(eval);
  handFlag(eval);
  objectFlag(eval);
  bind(eval->add_option("--plane", f.plane, "plane.json from design"), {"eval", "plane"},
       [&] { return json(f.plane); });
  bind(eval->add_option("--seeds", f.seeds, "Seeds per object"), {"seeds"}, [&] { return json(f.seeds); });

  CLI::App* sw = app.add_subcommand("switch", "Train and test the power/precise switcher");
  common(sw);
  handFlag(sw);
  objectFlag(sw);
  bind(sw->add_option("--test-object", f.test_objects, "Held-out objects (repeatable)"),
       {"switch", "test_objects"}, [&] { return json(f.test_objects); });
  bind(sw->add_option("--seeds", f.seeds, "Precise attempts per object"), {"switch", "seeds"},
       [&] { return json(f.seeds); });
  bind(sw->add_option("--epochs", f.epochs), {"switch", "epochs"}, [&] { return json(f.epochs); });

  CLI::App* cover = app.add_subcommand("cover", "Regenerate cover meshes from a plane.json");
  common(cover);
  handFlag(cover);
  bind(cover->add_option("--plane", f.plane, "plane.json from design"), {"cover", "plane"},
       [&] { return json(f.plane); });
  bind(cover->add_option("--inflation", f.inflation, "Cover inflation (m)"), {"design", "inflation"},
       [&] { return json(f.inflation); });

  CLI::App* motion = app.add_subcommand("motion", "Pre-grasp, grasp and overshoot waypoints for grasps");
  common(motion);
  handFlag(motion);
  bind(motion->add_option("--grasps", f.grasps, "grasps.jsonl from synth"), {"motion", "grasps"},
       [&] { return json(f.grasps); });
  bind(motion->add_option("--alpha", f.alpha), {"motion", "alpha"}, [&] { return json(f.alpha); });
  bind(motion->add_option("--overshoot", f.overshoot), {"motion", "overshoot_alpha"},
       [&] { return json(f.overshoot); });
  bind(motion->add_option("--index", f.index, "Single record (default all)"), {"motion", "index"},
       [&] { return json(f.index); });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << PINCHKIT_VERSION << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  const CLI::App* chosen = app.get_subcommands().front();
  try {
    json cfg = defaultConfig();
    if (!f.config.empty()) {
      if (!fs::exists(f.config)) throw ConfigError("config file not found: '" + f.config + "'");
      mergeConfig(cfg, readJsonFile(f.config), "");
    }
    for (const Binding& b : bindings) {
      if (b.opt->count() == 0) continue;
      json* slot = &cfg;
      for (const std::string& k : b.key) slot = &(*slot)[k];
      *slot = b.value();
    }
    const Context ctx = makeContext(chosen->get_name(), cfg, out);
    const std::string& name = chosen->get_name();
    if (name == "synth") return cmdSynth(ctx);
    if (name == "design") return cmdDesign(ctx);
    if (name == "label") return cmdLabel(ctx);
    if (name == "train") return cmdTrain(ctx);
    if (name == "eval") return cmdEval(ctx);
    if (name == "switch") return cmdSwitch(ctx);
    if (name == "cover") return cmdCover(ctx);
    if (name == "motion") return cmdMotion(ctx);
    err << "error: unknown command '" << name << "'\n";
    return 2;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    err << "error: config: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace pinchkit
