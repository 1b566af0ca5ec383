#include "pinchkit/cli.hpp"
#include "pinchkit/design.hpp"
#include "pinchkit/error.hpp"
#include "pinchkit/geometry.hpp"
#include "pinchkit/grasp_energy.hpp"
#include "pinchkit/kinematics.hpp"
#include "pinchkit/mesh.hpp"
#include "pinchkit/oracle.hpp"
#include "pinchkit/pipeline.hpp"
#include "pinchkit/surrogate.hpp"
#include "pinchkit/synthesis.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace pinchkit;

namespace {

using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

std::vector<Vec3> toVectors(const Points& m) {
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.emplace_back(m.row(i).transpose());
  return out;
}

Points toMatrix(const std::vector<Vec3>& v) {
  Points m(static_cast<Eigen::Index>(v.size()), 3);
  for (std::size_t i = 0; i < v.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
  return m;
}

Eigen::Matrix4d homogeneous(const RigidTransform& t) {
  Eigen::Matrix4d h = Eigen::Matrix4d::Identity();
  h.topLeftCorner<3, 3>() = t.rotation;
  h.topRightCorner<3, 1>() = t.translation;
  return h;
}

py::dict outcomeDict(const Outcome& o) {
  py::dict d;
  d["success"] = o.success;
  d["reasons"] = o.reasons;
  d["max_penetration"] = o.metrics.max_penetration;
  d["e_precise"] = o.metrics.e_precise;
  d["min_contact_gap"] = o.metrics.min_contact_gap;
  d["disturbance_residual"] = o.metrics.disturbance_residual;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Pinch grasp synthesis and fingertip contact-plane design";
  m.attr("__version__") = PINCHKIT_VERSION;

  auto error = py::register_exception<Error>(m, "Error");
  py::register_exception<ParseError>(m, "ParseError", error.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", error.ptr());
  py::register_exception<DegenerateError>(m, "DegenerateError", error.ptr());

  py::class_<Plane>(m, "Plane")
      .def(py::init([](const Vec3& p, const Vec3& n) { return Plane::fromRaw(p, n); }), py::arg("p"), py::arg("n"))
      .def_readonly("p", &Plane::p)
      .def_readonly("n", &Plane::n)
      .def("sdf", [](const Plane& pl, const Vec3& x) { return planeSdf(pl, x); })
      .def("__repr__", [](const Plane& pl) {
        std::ostringstream s;
        s << "Plane(p=[" << pl.p.transpose() << "], n=[" << pl.n.transpose() << "])";
        return s.str();
      });

  py::class_<HandModel>(m, "HandModel")
      .def_property_readonly("dof", &HandModel::dof)
      .def_property_readonly("finger_names",
                             [](const HandModel& h) {
                               std::vector<std::string> names;
                               for (const Finger& f : h.fingers()) names.push_back(f.name);
                               return names;
                             })
      .def_property_readonly("joint_names",
                             [](const HandModel& h) {
                               std::vector<std::string> names;
                               for (const Joint& j : h.joints()) names.push_back(j.name);
                               return names;
                             })
      .def_property_readonly("lower_limits", &HandModel::lowerLimits)
      .def_property_readonly("upper_limits", &HandModel::upperLimits);

  m.def("load_hand", &loadHand, py::arg("path"));
  m.def("parse_hand", [](const std::string& text) { return parseHand(text); }, py::arg("text"));
  m.def(
      "forward_kinematics",
      [](const HandModel& h, const Eigen::VectorXd& q) {
        const LinkPoses poses = forwardKinematics(h, q);
        py::dict out;
        for (std::size_t i = 0; i < poses.size(); ++i) out[py::str(h.linkNames()[i])] = homogeneous(poses[i]);
        return out;
      },
      py::arg("hand"), py::arg("q"), "World 4x4 pose of every link.");
  m.def(
      "fingertip_jacobian",
      [](const HandModel& h, const Eigen::VectorXd& q, const std::string& finger) {
        return Eigen::MatrixXd(fingertipJacobian(h, q, finger));
      },
      py::arg("hand"), py::arg("q"), py::arg("finger"));

  py::class_<ObjectShape>(m, "ObjectShape")
      .def_readonly("id", &ObjectShape::id)
      .def_property_readonly("cloud", [](const ObjectShape& s) { return toMatrix(s.cloud); })
      .def_property_readonly("center", &ObjectShape::center)
      .def_property_readonly("bounding_radius", &ObjectShape::boundingRadius);
  m.def("load_object", &loadObject, py::arg("ref"), "Primitive spec such as 'sphere:r=0.005' or a PLY path.");
  m.def(
      "sdf",
      [](const ObjectShape& s, const Vec3& x) {
        const SdfSample q = sdfQuery(s, x);
        return py::make_tuple(q.value, q.gradient);
      },
      py::arg("shape"), py::arg("x"));

  m.def(
      "e_precise",
      [](const Points& x, const Points& c) {
        if (x.rows() != c.rows()) throw DimensionError("positions and directions differ in length");
        std::vector<Contact> contacts;
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
          contacts.push_back({x.row(i).transpose(), c.row(i).transpose().normalized(), static_cast<std::size_t>(i), 0});
        }
        return ePrecise(contacts);
      },
      py::arg("positions"), py::arg("directions"), "Net unit-force wrench norm of a contact set.");

  py::class_<SynthesisOptions>(m, "SynthesisOptions")
      .def(py::init<>())
      .def_readwrite("iterations", &SynthesisOptions::iterations)
      .def_readwrite("contacts_per_finger", &SynthesisOptions::contacts_per_finger)
      .def_readwrite("w_gap", &SynthesisOptions::w_gap)
      .def_readwrite("w_pen", &SynthesisOptions::w_pen)
      .def_readwrite("tau", &SynthesisOptions::tau)
      .def_readwrite("max_penetration", &SynthesisOptions::max_penetration);

  py::class_<GraspCandidate>(m, "GraspCandidate")
      .def_readonly("object_id", &GraspCandidate::object_id)
      .def_property_readonly("mode", [](const GraspCandidate& c) { return toString(c.mode); })
      .def_property_readonly("wrist", [](const GraspCandidate& c) { return homogeneous(c.wrist); })
      .def_readonly("q", &GraspCandidate::q)
      .def_readonly("energy", &GraspCandidate::energy)
      .def_readonly("converged", &GraspCandidate::converged)
      .def_readonly("reason", &GraspCandidate::reason)
      .def_readonly("e_precise", &GraspCandidate::e_precise)
      .def_readonly("max_penetration", &GraspCandidate::max_penetration)
      .def_readonly("history", &GraspCandidate::history);
  m.def(
      "synthesize_grasp",
      [](const HandModel& h, const ObjectShape& s, const std::string& mode, std::uint64_t seed,
         const SynthesisOptions& opts) { return synthesizeGrasp(h, s, graspModeFromString(mode), seed, opts); },
      py::arg("hand"), py::arg("shape"), py::arg("mode") = "precise", py::arg("seed") = 0,
      py::arg("options") = SynthesisOptions{});
  m.def(
      "evaluate_grasp",
      [](const HandModel& h, const GraspCandidate& c, const ObjectShape& s) { return outcomeDict(evaluateGrasp(h, c, s)); },
      py::arg("hand"), py::arg("candidate"), py::arg("shape"));

  m.def(
      "optimize_plane",
      [](const HandModel& h, int iterations, int batch_size, std::uint64_t seed) {
        DesignOptions opts;
        opts.iterations = iterations;
        opts.batch_size = batch_size;
        opts.seed = seed;
        const DesignResult r = optimizePlane(h, {}, nullptr, opts);
        std::vector<double> totals;
        for (const DesignTerms& t : r.history) totals.push_back(t.total);
        return py::make_tuple(r.plane, r.q_batch[r.anchor], totals);
      },
      py::arg("hand"), py::arg("iterations") = 300, py::arg("batch_size") = 16, py::arg("seed") = 0,
      "Geometric plane design; returns (plane, anchor q, total energy history).");
  m.def(
      "cover_planes",
      [](const HandModel& h, const Plane& plane, const Eigen::VectorXd& q) {
        const CoverPlanes c = coverPlanesFromDesign(h, plane, q);
        py::dict out;
        for (std::size_t f = 0; f < c.per_finger.size(); ++f) {
          if (c.active(f)) out[py::str(h.fingers()[f].name)] = *c.per_finger[f];
        }
        return out;
      },
      py::arg("hand"), py::arg("plane"), py::arg("q"), "Local cover plane per pinch finger.");
  m.def(
      "tip_samples",
      [](const HandModel& h, const std::string& finger) {
        std::vector<Vec3> pts;
        for (const SurfaceSample& s : h.tipSamples(h.fingerIndex(finger))) pts.push_back(s.point);
        return toMatrix(pts);
      },
      py::arg("hand"), py::arg("finger"));
  m.def(
      "generate_cover",
      [](const Plane& plane, const Points& samples, double inflation) {
        const CoverMesh c = generateCover(plane, toVectors(samples), inflation);
        Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor> faces(static_cast<Eigen::Index>(c.mesh.faces.size()), 3);
        for (std::size_t i = 0; i < c.mesh.faces.size(); ++i) {
          for (int k = 0; k < 3; ++k) faces(static_cast<Eigen::Index>(i), k) = c.mesh.faces[i][static_cast<std::size_t>(k)];
        }
        py::dict out;
        out["vertices"] = toMatrix(c.mesh.vertices);
        out["faces"] = faces;
        out["watertight"] = isWatertight(c.mesh);
        out["euler"] = eulerCharacteristic(c.mesh);
        out["flat_area"] = coverFlatFaceArea(c);
        out["flat_deviation"] = coverFlatFaceDeviation(c);
        return out;
      },
      py::arg("plane"), py::arg("samples"), py::arg("inflation") = 1e-3);

  m.def(
      "surrogate_score",
      [](const std::string& weights_path, const Plane& plane, const Eigen::VectorXd& q, const ObjectShape& s) {
        const PointNetMlp net = loadNet(weights_path);
        const NormalizedCloud cloud = normalizeCloud(s.cloud);
        return net.forward(cloud, surrogateInput(plane, q, cloud.scale));
      },
      py::arg("weights"), py::arg("plane"), py::arg("q"), py::arg("shape"),
      "Predicted success probability from a trained surrogate file.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out;
        std::ostringstream err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = runCli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a subcommand in-process; returns (exit code, stdout, stderr).");
}
