#include "pinchkit/surrogate.hpp"

#include "pinchkit/error.hpp"
#include "pinchkit/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace pinchkit {

using json = nlohmann::json;

namespace {

std::vector<std::pair<int, int>> layerDims(const NetArch& arch) {
  if (arch.encoder.empty() || arch.head.empty()) {
    throw Error("network needs at least one encoder and one head layer");
  }
  std::vector<std::pair<int, int>> dims;  // (out, in)
  int in = 3;
  for (int out : arch.encoder) {
    dims.emplace_back(out, in);
    in = out;
  }
  in = arch.headInputs();
  for (int out : arch.head) {
    dims.emplace_back(out, in);
    in = out;
  }
  dims.emplace_back(1, in);
  return dims;
}

double relu(double x) { return x > 0.0 ? x : 0.0; }

double bceWithLogit(double logit, double label) {
  return std::max(logit, 0.0) - logit * label + std::log1p(std::exp(-std::abs(logit)));
}

struct HeadPass {
  std::vector<Eigen::VectorXd> acts;  // acts[0] = head input, then post-activation hidden
  double logit = 0.0;
};

HeadPass headForward(const std::vector<DenseLayer>& layers, std::size_t first,
                     const Eigen::VectorXd& input) {
  HeadPass pass;
  pass.acts.push_back(input);
  for (std::size_t l = first; l + 1 < layers.size(); ++l) {
    Eigen::VectorXd a = layers[l].w * pass.acts.back() + layers[l].b;
    pass.acts.push_back(a.unaryExpr(&relu));
  }
  pass.logit = (layers.back().w * pass.acts.back())(0, 0) + layers.back().b[0];
  return pass;
}

/// Backpropagates d logit into the head; returns d head-input. Accumulates
/// parameter gradients into `grads` when non-null.
Eigen::VectorXd headBackward(const std::vector<DenseLayer>& layers, std::size_t first,
                             const HeadPass& pass, double d_logit,
                             std::vector<DenseLayer>* grads) {
  Eigen::VectorXd delta = Eigen::VectorXd::Constant(1, d_logit);
  for (std::size_t l = layers.size(); l-- > first;) {
    const Eigen::VectorXd& input = pass.acts[l - first];
    if (grads != nullptr) {
      (*grads)[l].w.noalias() += delta * input.transpose();
      (*grads)[l].b += delta;
    }
    Eigen::VectorXd d_in = layers[l].w.transpose() * delta;
    if (l > first) {
      for (Eigen::Index i = 0; i < d_in.size(); ++i) {
        if (!(input[i] > 0.0)) d_in[i] = 0.0;
      }
    }
    delta = std::move(d_in);
  }
  return delta;
}

std::vector<DenseLayer> zeroLike(const std::vector<DenseLayer>& layers) {
  std::vector<DenseLayer> out;
  for (const DenseLayer& l : layers) {
    out.push_back({Eigen::MatrixXd::Zero(l.w.rows(), l.w.cols()), Eigen::VectorXd::Zero(l.b.size())});
  }
  return out;
}

Eigen::VectorXd flatten(const std::vector<DenseLayer>& layers) {
  std::size_t n = 0;
  for (const DenseLayer& l : layers) n += static_cast<std::size_t>(l.w.size() + l.b.size());
  Eigen::VectorXd flat(static_cast<Eigen::Index>(n));
  Eigen::Index k = 0;
  for (const DenseLayer& l : layers) {
    for (Eigen::Index r = 0; r < l.w.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.w.cols(); ++c) flat[k++] = l.w(r, c);
    }
    for (Eigen::Index r = 0; r < l.b.size(); ++r) flat[k++] = l.b[r];
  }
  return flat;
}

}  // namespace

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

PointNetMlp::PointNetMlp(const NetArch& arch) : arch_(arch) {
  for (const auto& [out, in] : layerDims(arch)) {
    layers_.push_back({Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)});
  }
}

PointNetMlp PointNetMlp::random(const NetArch& arch, std::uint64_t seed) {
  PointNetMlp net(arch);
  Rng rng(seed);
  for (DenseLayer& l : net.layers_) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.w.rows() + l.w.cols()));
    for (Eigen::Index r = 0; r < l.w.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.w.cols(); ++c) l.w(r, c) = rng.uniform(-limit, limit);
    }
  }
  return net;
}

std::size_t PointNetMlp::parameterCount() const {
  std::size_t n = 0;
  for (const DenseLayer& l : layers_) n += static_cast<std::size_t>(l.w.size() + l.b.size());
  return n;
}

Eigen::VectorXd PointNetMlp::flatParameters() const { return flatten(layers_); }

void PointNetMlp::setFlatParameters(const Eigen::VectorXd& flat) {
  if (static_cast<std::size_t>(flat.size()) != parameterCount()) {
    throw DimensionError("parameter vector length " + std::to_string(flat.size()) +
                         " does not match the network (" + std::to_string(parameterCount()) + ")");
  }
  Eigen::Index k = 0;
  for (DenseLayer& l : layers_) {
    for (Eigen::Index r = 0; r < l.w.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.w.cols(); ++c) l.w(r, c) = flat[k++];
    }
    for (Eigen::Index r = 0; r < l.b.size(); ++r) l.b[r] = flat[k++];
  }
}

std::vector<std::vector<int>> PointNetMlp::shapeTable() const {
  std::vector<std::vector<int>> shapes;
  for (const DenseLayer& l : layers_) {
    shapes.push_back({static_cast<int>(l.w.rows()), static_cast<int>(l.w.cols())});
    shapes.push_back({static_cast<int>(l.b.size())});
  }
  return shapes;
}

EncodedCloud PointNetMlp::encode(const Eigen::Matrix<double, Eigen::Dynamic, 3>& points) const {
  if (points.rows() == 0) throw DimensionError("empty point cloud");
  EncodedCloud enc;
  Eigen::MatrixXd act = points;
  for (std::size_t l = 0; l < encoderLayers(); ++l) {
    Eigen::MatrixXd pre = act * layers_[l].w.transpose();
    pre.rowwise() += layers_[l].b.transpose();
    act = pre.unaryExpr(&relu);
    if (l == 0) enc.h1 = act;
  }
  enc.h2 = act;
  enc.pooled.resize(act.cols());
  enc.argmax.resize(static_cast<std::size_t>(act.cols()));
  for (Eigen::Index j = 0; j < act.cols(); ++j) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < act.rows(); ++i) {
      if (act(i, j) > act(best, j)) best = i;
    }
    enc.pooled[j] = act(best, j);
    enc.argmax[static_cast<std::size_t>(j)] = best;
  }
  return enc;
}

void PointNetMlp::checkInput(const NetInput& in) const {
  if (in.plane.size() != arch_.planeInputs()) {
    throw DimensionError("plane input has " + std::to_string(in.plane.size()) + " entries, expected " +
                         std::to_string(arch_.planeInputs()));
  }
  if (in.q.size() != arch_.jointInputs()) {
    throw DimensionError("joint input has " + std::to_string(in.q.size()) + " entries, expected " +
                         std::to_string(arch_.jointInputs()));
  }
}

Eigen::VectorXd PointNetMlp::headInput(const EncodedCloud& enc, const NetInput& in) const {
  checkInput(in);
  Eigen::VectorXd z(arch_.headInputs());
  z << enc.pooled, in.plane, in.q, in.scale;
  return z;
}

double PointNetMlp::logit(const EncodedCloud& enc, const NetInput& in) const {
  return headForward(layers_, encoderLayers(), headInput(enc, in)).logit;
}

double PointNetMlp::forward(const EncodedCloud& enc, const NetInput& in) const {
  return sigmoid(logit(enc, in));
}

double PointNetMlp::forward(const NormalizedCloud& cloud, const NetInput& in) const {
  return forward(encode(cloud.points), in);
}

InputGradient PointNetMlp::inputGradient(const EncodedCloud& enc, const NetInput& in) const {
  const HeadPass pass = headForward(layers_, encoderLayers(), headInput(enc, in));
  InputGradient out;
  out.value = sigmoid(pass.logit);
  const Eigen::VectorXd dz =
      headBackward(layers_, encoderLayers(), pass, out.value * (1.0 - out.value), nullptr);
  const Eigen::Index e = enc.pooled.size();
  out.plane = dz.segment(e, arch_.planeInputs());
  out.q = dz.segment(e + arch_.planeInputs(), arch_.jointInputs());
  out.scale = dz[dz.size() - 1];
  return out;
}

double lossAndGradient(const PointNetMlp& net, const TrainingSet& data,
                       const std::vector<std::size_t>& indices, Eigen::VectorXd* grad) {
  if (indices.empty()) throw Error("empty batch");
  const auto& layers = net.layers();
  const std::size_t first_head = net.encoderLayers();
  std::vector<DenseLayer> grads = zeroLike(layers);

  std::vector<std::size_t> cloud_order;
  std::map<std::size_t, std::size_t> slot;
  for (std::size_t i : indices) {
    const std::size_t c = data.examples.at(i).cloud;
    if (slot.emplace(c, cloud_order.size()).second) cloud_order.push_back(c);
  }
  std::vector<EncodedCloud> encoded;
  for (std::size_t c : cloud_order) encoded.push_back(net.encode(data.clouds.at(c).points));
  std::vector<Eigen::VectorXd> d_pooled(cloud_order.size(),
                                        Eigen::VectorXd::Zero(encoded.front().pooled.size()));

  const double inv_b = 1.0 / static_cast<double>(indices.size());
  double loss = 0.0;
  for (std::size_t i : indices) {
    const TrainingExample& ex = data.examples[i];
    const std::size_t s = slot[ex.cloud];
    NetInput in{ex.plane, ex.q, data.clouds[ex.cloud].scale / kObjectScaleUnit};
    Eigen::VectorXd z(net.arch().headInputs());
    z << encoded[s].pooled, in.plane, in.q, in.scale;
    if (in.plane.size() != net.arch().planeInputs() || in.q.size() != net.arch().jointInputs()) {
      throw DimensionError("training example does not match the network inputs");
    }
    const HeadPass pass = headForward(layers, first_head, z);
    loss += bceWithLogit(pass.logit, ex.label) * inv_b;
    if (grad != nullptr) {
      const double d_logit = (sigmoid(pass.logit) - ex.label) * inv_b;
      const Eigen::VectorXd dz = headBackward(layers, first_head, pass, d_logit, &grads);
      d_pooled[s] += dz.head(encoded[s].pooled.size());
    }
  }
  if (grad == nullptr) return loss;

  // Max pooling routes each channel's gradient to its argmax point only.
  for (std::size_t s = 0; s < cloud_order.size(); ++s) {
    const EncodedCloud& enc = encoded[s];
    const auto& x = data.clouds[cloud_order[s]].points;
    const Eigen::Index e1 = enc.h1.cols();
    std::map<Eigen::Index, Eigen::VectorXd> d_h1;  // sparse rows of d(h1 pre-activation)
    for (Eigen::Index j = 0; j < enc.pooled.size(); ++j) {
      const double g = d_pooled[s][j];
      if (g == 0.0 || !(enc.pooled[j] > 0.0)) continue;
      const Eigen::Index row = enc.argmax[static_cast<std::size_t>(j)];
      grads[1].w.row(j) += g * enc.h1.row(row);
      grads[1].b[j] += g;
      auto [it, inserted] = d_h1.try_emplace(row, Eigen::VectorXd::Zero(e1));
      it->second += g * layers[1].w.row(j).transpose();
    }
    for (auto& [row, d] : d_h1) {
      for (Eigen::Index k = 0; k < e1; ++k) {
        if (!(enc.h1(row, k) > 0.0)) d[k] = 0.0;
      }
      grads[0].w.noalias() += d * x.row(row);
      grads[0].b += d;
    }
  }
  *grad = flatten(grads);
  return loss;
}

double datasetLoss(const PointNetMlp& net, const TrainingSet& data) {
  std::vector<std::size_t> all(data.examples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return lossAndGradient(net, data, all, nullptr);
}

double datasetAccuracy(const PointNetMlp& net, const TrainingSet& data) {
  if (data.examples.empty()) return 0.0;
  std::vector<EncodedCloud> encoded;
  for (const NormalizedCloud& c : data.clouds) encoded.push_back(net.encode(c.points));
  std::size_t correct = 0;
  for (const TrainingExample& ex : data.examples) {
    const double s = net.forward(encoded[ex.cloud],
                                 {ex.plane, ex.q, data.clouds[ex.cloud].scale / kObjectScaleUnit});
    if ((s >= 0.5) == (ex.label >= 0.5)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.examples.size());
}

TrainResult train(PointNetMlp& net, const TrainingSet& data, const TrainOptions& opts) {
  if (data.examples.empty()) throw Error("training set is empty");
  bool has_pos = false;
  bool has_neg = false;
  for (const TrainingExample& ex : data.examples) {
    (ex.label >= 0.5 ? has_pos : has_neg) = true;
  }
  if (!has_pos || !has_neg) throw Error("single-class dataset: both labels are required");
  if (opts.batch_size < 1 || opts.epochs < 0) throw Error("invalid training options");

  Rng rng(opts.seed);
  Eigen::VectorXd params = net.flatParameters();
  Eigen::VectorXd velocity = Eigen::VectorXd::Zero(params.size());
  std::vector<std::size_t> order(data.examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  TrainResult result;
  Eigen::VectorXd grad;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(opts.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(opts.batch_size));
      const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
      lossAndGradient(net, data, batch, &grad);
      velocity = opts.momentum * velocity + grad;
      params -= opts.learning_rate * velocity;
      net.setFlatParameters(params);
    }
    result.loss_curve.push_back(datasetLoss(net, data));
  }
  result.accuracy = datasetAccuracy(net, data);
  return result;
}

Eigen::VectorXd planeFeatures(const Plane& plane) {
  Eigen::VectorXd f(6);
  f << plane.p / kPlaneLengthScale, plane.n;
  return f;
}

NetInput surrogateInput(const Plane& plane, const Eigen::VectorXd& q, double object_scale) {
  return {planeFeatures(plane), q, object_scale / kObjectScaleUnit};
}

PhysEnergy ePhys(const PointNetMlp& net, const Plane& plane, const Eigen::VectorXd& q,
                 const EncodedCloud& enc, double object_scale) {
  const InputGradient g = net.inputGradient(enc, surrogateInput(plane, q, object_scale));
  PhysEnergy out;
  out.value = -g.value;
  out.d_p = -g.plane.head<3>() / kPlaneLengthScale;
  out.d_n = -g.plane.tail<3>();
  out.d_q = -g.q;
  return out;
}

GraspTypeDecision classifyGraspType(const PointNetMlp& switcher, const NormalizedCloud& cloud) {
  if (switcher.arch().kind != NetKind::kSwitcher) throw Error("network is not a switcher");
  GraspTypeDecision d;
  d.score = switcher.forward(cloud, {Eigen::VectorXd(), Eigen::VectorXd(), cloud.scale / kObjectScaleUnit});
  d.precise = d.score >= 0.5;
  d.confidence = std::max(d.score, 1.0 - d.score);
  return d;
}

std::string netToJson(const PointNetMlp& net, const std::string& meta_json) {
  json doc;
  doc["kind"] = net.arch().kind == NetKind::kSurrogate ? "surrogate" : "switcher";
  doc["arch"] = {{"d", net.arch().d}, {"encoder", net.arch().encoder}, {"head", net.arch().head}};
  doc["shapes"] = net.shapeTable();
  const Eigen::VectorXd flat = net.flatParameters();
  doc["data"] = std::vector<double>(flat.data(), flat.data() + flat.size());
  doc["meta"] = json::parse(meta_json);
  return doc.dump() + "\n";
}

PointNetMlp netFromJson(const std::string& text, const std::string& source) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(source + ": " + e.what());
  }
  try {
    NetArch arch;
    const std::string kind = doc.value("kind", "surrogate");
    if (kind == "surrogate") {
      arch.kind = NetKind::kSurrogate;
    } else if (kind == "switcher") {
      arch.kind = NetKind::kSwitcher;
    } else {
      throw ParseError(source + ": unknown network kind '" + kind + "'");
    }
    const json& a = doc.at("arch");
    arch.d = a.at("d").get<int>();
    arch.encoder = a.at("encoder").get<std::vector<int>>();
    arch.head = a.at("head").get<std::vector<int>>();
    PointNetMlp net(arch);
    const auto shapes = doc.at("shapes").get<std::vector<std::vector<int>>>();
    if (shapes != net.shapeTable()) {
      throw ParseError(source + ": shape mismatch between 'shapes' and 'arch'");
    }
    const auto data = doc.at("data").get<std::vector<double>>();
    if (data.size() != net.parameterCount()) {
      throw ParseError(source + ": shape mismatch, expected " + std::to_string(net.parameterCount()) +
                       " values, found " + std::to_string(data.size()));
    }
    net.setFlatParameters(Eigen::Map<const Eigen::VectorXd>(data.data(), static_cast<Eigen::Index>(data.size())));
    return net;
  } catch (const json::exception& e) {
    throw ParseError(source + ": schema error: " + e.what());
  }
}

PointNetMlp loadNet(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open weights '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return netFromJson(buffer.str(), path);
}

}  // namespace pinchkit
