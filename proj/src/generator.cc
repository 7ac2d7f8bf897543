#include "genrec/generator.h"

#include <stdexcept>
#include <string>
#include <utility>

#include "genrec/random.h"

namespace genrec {

Activation Activation::LeakyRelu(double slope) {
  if (!(slope > 0.0 && slope <= 1.0)) {
    throw std::invalid_argument("leaky ReLU slope must lie in (0, 1], got " +
                                std::to_string(slope));
  }
  return Activation(ActivationType::kLeakyRelu, slope);
}

GeneratorNetwork::GeneratorNetwork(std::vector<Matrix> weights,
                                   std::vector<Vector> biases,
                                   Activation activation, uint64_t seed)
    : weights_(std::move(weights)),
      biases_(std::move(biases)),
      activation_(activation),
      seed_(seed) {
  if (weights_.empty()) {
    throw std::invalid_argument("generator needs at least one layer");
  }
  if (biases_.size() != weights_.size()) {
    throw std::invalid_argument("generator needs one bias vector per layer");
  }
  for (size_t i = 0; i < weights_.size(); ++i) {
    const Matrix& h = weights_[i];
    if (h.rows() < 1 || h.cols() < 1) {
      throw std::invalid_argument("layer " + std::to_string(i) +
                                  " has an empty weight matrix");
    }
    if (i > 0 && h.cols() != weights_[i - 1].rows()) {
      throw std::invalid_argument("layer " + std::to_string(i) +
                                  " input width does not match previous layer");
    }
    if (biases_[i].size() != h.rows()) {
      throw std::invalid_argument("layer " + std::to_string(i) +
                                  " bias length does not match its width");
    }
  }
}

std::vector<int> GeneratorNetwork::dims() const {
  std::vector<int> d;
  d.push_back(input_dim());
  for (const Matrix& h : weights_) d.push_back(static_cast<int>(h.rows()));
  return d;
}

bool GeneratorNetwork::has_zero_biases() const {
  for (const Vector& b : biases_) {
    if (!b.isZero(0.0)) return false;
  }
  return true;
}

void GeneratorNetwork::CheckInput(const Vector& z) const {
  if (z.size() != input_dim()) {
    throw std::invalid_argument("latent vector has length " +
                                std::to_string(z.size()) + ", expected " +
                                std::to_string(input_dim()));
  }
}

Vector GeneratorNetwork::Forward(const Vector& z) const {
  CheckInput(z);
  Vector a = z;
  for (int i = 0; i < depth(); ++i) {
    Vector pre = weights_[i] * a + biases_[i];
    a = pre.unaryExpr([this](double x) { return activation_.Apply(x); });
  }
  return a;
}

Linearization GeneratorNetwork::Linearize(const Vector& z) const {
  CheckInput(z);
  Vector a = z;
  Matrix jac;
  for (int i = 0; i < depth(); ++i) {
    const Vector pre = weights_[i] * a + biases_[i];
    const Vector slope =
        pre.unaryExpr([this](double x) { return activation_.Derivative(x); });
    if (i == 0) {
      jac = slope.asDiagonal() * weights_[0];
    } else {
      jac = slope.asDiagonal() * (weights_[i] * jac);
    }
    a = pre.unaryExpr([this](double x) { return activation_.Apply(x); });
  }
  return {std::move(a), std::move(jac)};
}

Matrix GeneratorNetwork::Jacobian(const Vector& z) const {
  return Linearize(z).jacobian;
}

std::vector<Vector> GeneratorNetwork::PreActivations(const Vector& z) const {
  CheckInput(z);
  std::vector<Vector> out;
  Vector a = z;
  for (int i = 0; i < depth(); ++i) {
    out.push_back(weights_[i] * a + biases_[i]);
    a = out.back().unaryExpr([this](double x) { return activation_.Apply(x); });
  }
  return out;
}

bool GeneratorNetwork::operator==(const GeneratorNetwork& other) const {
  if (activation_ != other.activation_ || seed_ != other.seed_ ||
      depth() != other.depth()) {
    return false;
  }
  for (int i = 0; i < depth(); ++i) {
    if (weights_[i].rows() != other.weights_[i].rows() ||
        weights_[i].cols() != other.weights_[i].cols() ||
        weights_[i] != other.weights_[i] || biases_[i] != other.biases_[i]) {
      return false;
    }
  }
  return true;
}

GeneratorNetwork RandomGaussianNet(const std::vector<int>& dims,
                                   const Activation& activation, uint64_t seed) {
  if (dims.size() < 2) {
    throw std::invalid_argument("dims must list at least input and output widths");
  }
  for (int w : dims) {
    if (w < 1) throw std::invalid_argument("every layer width must be >= 1");
  }
  Rng rng(seed);
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  for (size_t i = 1; i < dims.size(); ++i) {
    weights.push_back(rng.NormalMatrix(dims[i], dims[i - 1]));
    biases.push_back(rng.NormalVector(dims[i]));
  }
  return GeneratorNetwork(std::move(weights), std::move(biases), activation, seed);
}

Matrix ComposeLinear(const GeneratorNetwork& net) {
  if (net.activation().type() != ActivationType::kIdentity) {
    throw std::invalid_argument("ComposeLinear requires identity activation");
  }
  Matrix w = net.weight(0);
  for (int i = 1; i < net.depth(); ++i) w = net.weight(i) * w;
  return w;
}

nlohmann::json ActivationToJson(const Activation& activation) {
  switch (activation.type()) {
    case ActivationType::kIdentity: return {{"kind", "identity"}};
    case ActivationType::kRelu: return {{"kind", "relu"}};
    case ActivationType::kLeakyRelu:
      return {{"kind", "leaky_relu"}, {"h", activation.slope()}};
  }
  return {};
}

Activation ActivationFromJson(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "identity") return Activation::Identity();
  if (kind == "relu") return Activation::Relu();
  if (kind == "leaky_relu") return Activation::LeakyRelu(j.at("h").get<double>());
  throw std::invalid_argument("unknown activation kind '" + kind + "'");
}

nlohmann::json MatrixToJson(const Matrix& a) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < a.cols(); ++j) row.push_back(a(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix MatrixFromJson(const nlohmann::json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows == 0 ? 0 : static_cast<Eigen::Index>(j.at(0).size());
  Matrix a(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j[i].size()) != cols) {
      throw std::invalid_argument("ragged matrix in JSON");
    }
    for (Eigen::Index c = 0; c < cols; ++c) a(i, c) = j[i][c].get<double>();
  }
  return a;
}

nlohmann::json VectorToJson(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Vector VectorFromJson(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

nlohmann::json ToJson(const GeneratorNetwork& net) {
  nlohmann::json weights = nlohmann::json::array();
  nlohmann::json biases = nlohmann::json::array();
  for (int i = 0; i < net.depth(); ++i) {
    weights.push_back(MatrixToJson(net.weight(i)));
    biases.push_back(VectorToJson(net.bias(i)));
  }
  return {{"dims", net.dims()},
          {"activation", ActivationToJson(net.activation())},
          {"weights", std::move(weights)},
          {"biases", std::move(biases)},
          {"seed", net.seed()}};
}

GeneratorNetwork NetworkFromJson(const nlohmann::json& j) {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  for (const auto& w : j.at("weights")) weights.push_back(MatrixFromJson(w));
  for (const auto& b : j.at("biases")) biases.push_back(VectorFromJson(b));
  GeneratorNetwork net(std::move(weights), std::move(biases),
                       ActivationFromJson(j.at("activation")),
                       j.value("seed", uint64_t{0}));
  if (j.contains("dims") && j.at("dims").get<std::vector<int>>() != net.dims()) {
    throw std::invalid_argument("network JSON dims disagree with weight shapes");
  }
  return net;
}

}  // namespace genrec
