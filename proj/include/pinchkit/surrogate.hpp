#pragma once

#include "pinchkit/geometry.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pinchkit {

/// Length used to bring plane offsets (m) and object scale to unit order.
inline constexpr double kPlaneLengthScale = 0.05;
inline constexpr double kObjectScaleUnit = 0.01;

struct DenseLayer {
  Eigen::MatrixXd w;  // out x in
  Eigen::VectorXd b;
};

enum class NetKind { kSurrogate, kSwitcher };

struct NetArch {
  NetKind kind = NetKind::kSurrogate;
  int d = 0;                         // joint inputs (surrogate only)
  std::vector<int> encoder{64, 128};
  std::vector<int> head{256, 128};

  int planeInputs() const { return kind == NetKind::kSurrogate ? 6 : 0; }
  int jointInputs() const { return kind == NetKind::kSurrogate ? d : 0; }
  /// Pooled feature, plane, joints, then one object-scale input.
  int headInputs() const { return encoder.back() + planeInputs() + jointInputs() + 1; }
};

/// Network inputs besides the cloud: plane features [p / L, n], joints and
/// the object scale feature.
struct NetInput {
  Eigen::VectorXd plane;  // 6 or empty
  Eigen::VectorXd q;      // d or empty
  double scale = 0.0;
};

struct InputGradient {
  double value = 0.0;     // s
  Eigen::VectorXd plane;  // ds / d plane features
  Eigen::VectorXd q;      // ds / dq
  double scale = 0.0;
};

/// Per-point encoder output for one cloud, cached for reuse across examples.
struct EncodedCloud {
  Eigen::MatrixXd h1;  // N x e1 (post-activation)
  Eigen::MatrixXd h2;  // N x e2 (post-activation)
  Eigen::VectorXd pooled;
  std::vector<Eigen::Index> argmax;  // lowest index on ties
};

/// Point encoder with max pooling followed by an MLP head and a sigmoid.
class PointNetMlp {
public:
  PointNetMlp() = default;
  /// Zero weights.
  explicit PointNetMlp(const NetArch& arch);
  /// Glorot-uniform weights, zero biases.
  static PointNetMlp random(const NetArch& arch, std::uint64_t seed);

  const NetArch& arch() const { return arch_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::size_t encoderLayers() const { return arch_.encoder.size(); }

  std::size_t parameterCount() const;
  Eigen::VectorXd flatParameters() const;
  void setFlatParameters(const Eigen::VectorXd& flat);
  /// (rows, cols) per weight matrix followed by (rows) per bias, layer by layer.
  std::vector<std::vector<int>> shapeTable() const;

  EncodedCloud encode(const Eigen::Matrix<double, Eigen::Dynamic, 3>& points) const;
  double logit(const EncodedCloud& enc, const NetInput& in) const;
  double forward(const EncodedCloud& enc, const NetInput& in) const;
  double forward(const NormalizedCloud& cloud, const NetInput& in) const;
  InputGradient inputGradient(const EncodedCloud& enc, const NetInput& in) const;

private:
  Eigen::VectorXd headInput(const EncodedCloud& enc, const NetInput& in) const;
  void checkInput(const NetInput& in) const;

  NetArch arch_;
  std::vector<DenseLayer> layers_;
};

double sigmoid(double x);

struct TrainingExample {
  Eigen::VectorXd plane;  // 6 plane features or empty
  Eigen::VectorXd q;
  std::size_t cloud = 0;  // index into TrainingSet::clouds
  double label = 0.0;
};

struct TrainingSet {
  std::vector<NormalizedCloud> clouds;
  std::vector<TrainingExample> examples;
};

struct TrainOptions {
  int epochs = 200;
  int batch_size = 32;
  double learning_rate = 1e-2;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

struct TrainResult {
  std::vector<double> loss_curve;  // full-set mean BCE after each epoch
  double accuracy = 0.0;
};

/// Mean binary cross-entropy over `indices` and its gradient over all parameters.
double lossAndGradient(const PointNetMlp& net, const TrainingSet& data,
                       const std::vector<std::size_t>& indices, Eigen::VectorXd* grad);
double datasetLoss(const PointNetMlp& net, const TrainingSet& data);
double datasetAccuracy(const PointNetMlp& net, const TrainingSet& data);

/// Mini-batch SGD with momentum on BCE. Throws on an empty or single-class set.
TrainResult train(PointNetMlp& net, const TrainingSet& data, const TrainOptions& opts);

NetInput surrogateInput(const Plane& plane, const Eigen::VectorXd& q, double object_scale);
Eigen::VectorXd planeFeatures(const Plane& plane);

struct PhysEnergy {
  double value = 0.0;   // -s
  Vec3 d_p = Vec3::Zero();
  Vec3 d_n = Vec3::Zero();  // w.r.t. the unit normal
  Eigen::VectorXd d_q;
};

/// E_phys = -f(P, q, o) with gradients w.r.t. p, n and q.
PhysEnergy ePhys(const PointNetMlp& net, const Plane& plane, const Eigen::VectorXd& q,
                 const EncodedCloud& enc, double object_scale);

struct GraspTypeDecision {
  bool precise = false;
  double confidence = 0.5;
  double score = 0.5;
};

GraspTypeDecision classifyGraspType(const PointNetMlp& switcher, const NormalizedCloud& cloud);

std::string netToJson(const PointNetMlp& net, const std::string& meta_json = "{}");
PointNetMlp netFromJson(const std::string& text, const std::string& source = "<memory>");
PointNetMlp loadNet(const std::string& path);

}  // namespace pinchkit
