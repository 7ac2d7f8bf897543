#ifndef GENREC_GENERATOR_H_
#define GENREC_GENERATOR_H_

#include <cstdint>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace genrec {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class ActivationType { kIdentity, kRelu, kLeakyRelu };

// Element-wise activation shared by every layer of a generator. For leaky
// ReLU, `slope` is the negative-side slope h with 0 < h <= 1; the other kinds
// ignore it.
class Activation {
 public:
  static Activation Identity() { return Activation(ActivationType::kIdentity, 1.0); }
  static Activation Relu() { return Activation(ActivationType::kRelu, 0.0); }
  static Activation LeakyRelu(double slope);

  ActivationType type() const { return type_; }
  double slope() const { return slope_; }

  double Apply(double x) const {
    switch (type_) {
      case ActivationType::kIdentity: return x;
      case ActivationType::kRelu: return x >= 0.0 ? x : 0.0;
      case ActivationType::kLeakyRelu: return x >= 0.0 ? x : slope_ * x;
    }
    return x;
  }

  // Derivative with the kink assigned to the non-negative branch.
  double Derivative(double x) const {
    switch (type_) {
      case ActivationType::kIdentity: return 1.0;
      case ActivationType::kRelu: return x >= 0.0 ? 1.0 : 0.0;
      case ActivationType::kLeakyRelu: return x >= 0.0 ? 1.0 : slope_;
    }
    return 1.0;
  }

  bool operator==(const Activation& other) const = default;

 private:
  Activation(ActivationType type, double slope) : type_(type), slope_(slope) {}

  ActivationType type_;
  double slope_;
};

// Output of a generator together with its Jacobian at the same point.
struct Linearization {
  Vector output;
  Matrix jacobian;
};

// A d-layer fully connected generator
//   G(z) = s(H_d s(... s(H_1 z + b_1) ...) + b_d)
// mapping R^k to R^n. Immutable after construction.
class GeneratorNetwork {
 public:
  GeneratorNetwork(std::vector<Matrix> weights, std::vector<Vector> biases,
                   Activation activation, uint64_t seed = 0);

  int depth() const { return static_cast<int>(weights_.size()); }
  int input_dim() const { return static_cast<int>(weights_.front().cols()); }
  int output_dim() const { return static_cast<int>(weights_.back().rows()); }
  // Layer widths [k, n_1, ..., n].
  std::vector<int> dims() const;

  const Matrix& weight(int layer) const { return weights_.at(layer); }
  const Vector& bias(int layer) const { return biases_.at(layer); }
  const std::vector<Matrix>& weights() const { return weights_; }
  const std::vector<Vector>& biases() const { return biases_; }
  const Activation& activation() const { return activation_; }
  uint64_t seed() const { return seed_; }
  bool has_zero_biases() const;

  Vector Forward(const Vector& z) const;
  // J = D_d H_d ... D_1 H_1 with D_i the activation derivatives at layer i.
  Matrix Jacobian(const Vector& z) const;
  Linearization Linearize(const Vector& z) const;
  // Pre-activation vector H_i a_{i-1} + b_i of every layer.
  std::vector<Vector> PreActivations(const Vector& z) const;

  bool operator==(const GeneratorNetwork& other) const;

 private:
  void CheckInput(const Vector& z) const;

  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
  Activation activation_;
  uint64_t seed_;
};

// Every weight and bias entry i.i.d. standard normal. `dims` = [k, ..., n].
GeneratorNetwork RandomGaussianNet(const std::vector<int>& dims,
                                   const Activation& activation, uint64_t seed);

// W = H_d ... H_1 for an identity-activation network. The network then acts
// as z -> W z + Forward(0).
Matrix ComposeLinear(const GeneratorNetwork& net);

nlohmann::json ActivationToJson(const Activation& activation);
Activation ActivationFromJson(const nlohmann::json& j);

nlohmann::json ToJson(const GeneratorNetwork& net);
GeneratorNetwork NetworkFromJson(const nlohmann::json& j);

nlohmann::json MatrixToJson(const Matrix& a);
Matrix MatrixFromJson(const nlohmann::json& j);
nlohmann::json VectorToJson(const Vector& v);
Vector VectorFromJson(const nlohmann::json& j);

}  // namespace genrec

#endif  // GENREC_GENERATOR_H_
