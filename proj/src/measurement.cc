#include "genrec/measurement.h"

#include <cmath>
#include <stdexcept>
#include <string>

#include "genrec/random.h"

namespace genrec {
namespace {

// Substream indices for BuildInstance.
constexpr uint64_t kMatrixStream = 1;
constexpr uint64_t kLatentStream = 2;
constexpr uint64_t kOutlierStream = 3;
constexpr uint64_t kNoiseStream = 4;

}  // namespace

void MeasurementModel::Validate() const {
  if (m < 1 || n < 1) throw std::invalid_argument("measurement model needs m, n >= 1");
  if (outliers < 0 || outliers >= m) {
    throw std::invalid_argument("outlier count must satisfy 0 <= l < m");
  }
  if (!(outlier_lo <= outlier_hi)) {
    throw std::invalid_argument("outlier range must satisfy lo <= hi");
  }
  if (!(noise_target >= 0.0)) throw std::invalid_argument("noise target must be >= 0");
  if (matrix_kind == MatrixKind::kIdentity && m != n) {
    throw std::invalid_argument("identity measurement matrix requires m == n");
  }
}

Matrix SampleMeasurementMatrix(const MeasurementModel& model) {
  model.Validate();
  if (model.matrix_kind == MatrixKind::kIdentity) {
    return Matrix::Identity(model.m, model.n);
  }
  Rng rng(model.seed);
  return rng.NormalMatrix(model.m, model.n);
}

Vector SampleOutliers(int m, int count, double lo, double hi, bool signed_outliers,
                      uint64_t seed, std::vector<int>* support) {
  if (m < 1) throw std::invalid_argument("SampleOutliers: m must be >= 1");
  if (count < 0 || count >= m) {
    throw std::invalid_argument("SampleOutliers: need 0 <= l < m");
  }
  if (!(lo <= hi)) throw std::invalid_argument("SampleOutliers: need lo <= hi");
  if (lo == 0.0 && hi == 0.0 && count > 0) {
    throw std::invalid_argument("SampleOutliers: range [0, 0] cannot produce outliers");
  }
  Rng rng(seed);
  const std::vector<int> positions = rng.Sample(m, count);
  Vector e = Vector::Zero(m);
  for (int idx : positions) {
    double magnitude = 0.0;
    // A zero draw would silently reduce ||e||_0.
    while (magnitude == 0.0) magnitude = lo == hi ? lo : rng.Uniform(lo, hi);
    if (signed_outliers && rng.Coin()) magnitude = -magnitude;
    e(idx) = magnitude;
  }
  if (support != nullptr) *support = positions;
  return e;
}

Vector SampleNoise(int m, double noise_target, uint64_t seed) {
  if (m < 1) throw std::invalid_argument("SampleNoise: m must be >= 1");
  if (!(noise_target >= 0.0)) throw std::invalid_argument("SampleNoise: target must be >= 0");
  if (noise_target == 0.0) return Vector::Zero(m);
  Rng rng(seed);
  return rng.NormalVector(m) * (noise_target / std::sqrt(static_cast<double>(m)));
}

ProblemInstance BuildInstance(const GeneratorNetwork& net, const MeasurementModel& model,
                              const std::optional<Vector>& z0, uint64_t seed) {
  model.Validate();
  if (net.output_dim() != model.n) {
    throw std::invalid_argument("generator output width " +
                                std::to_string(net.output_dim()) +
                                " does not match measurement model n = " +
                                std::to_string(model.n));
  }
  ProblemInstance inst;
  inst.net_dims = net.dims();
  inst.net_seed = net.seed();
  inst.seed = seed;
  inst.matrix_kind = model.matrix_kind;
  inst.noise_target = model.noise_target;

  if (z0.has_value()) {
    if (z0->size() != net.input_dim()) {
      throw std::invalid_argument("supplied z0 has the wrong length");
    }
    inst.z0 = *z0;
  } else {
    Rng rng(DeriveSeed(seed, kLatentStream));
    inst.z0 = rng.NormalVector(net.input_dim());
  }
  inst.x0 = net.Forward(inst.z0);

  MeasurementModel drawn = model;
  drawn.seed = DeriveSeed(seed, kMatrixStream);
  inst.M = SampleMeasurementMatrix(drawn);
  inst.e = SampleOutliers(model.m, model.outliers, model.outlier_lo, model.outlier_hi,
                          model.signed_outliers, DeriveSeed(seed, kOutlierStream),
                          &inst.outlier_support);
  inst.eta = SampleNoise(model.m, model.noise_target, DeriveSeed(seed, kNoiseStream));
  inst.y = inst.M * inst.x0 + inst.e + inst.eta;
  return inst;
}

const char* MatrixKindName(MatrixKind kind) {
  return kind == MatrixKind::kIdentity ? "identity" : "gaussian";
}

MatrixKind MatrixKindFromName(const std::string& name) {
  if (name == "gaussian") return MatrixKind::kGaussian;
  if (name == "identity") return MatrixKind::kIdentity;
  throw std::invalid_argument("unknown matrix kind '" + name + "'");
}

nlohmann::json ToJson(const MeasurementModel& model) {
  return {{"m", model.m},
          {"n", model.n},
          {"matrix_kind", MatrixKindName(model.matrix_kind)},
          {"outliers", model.outliers},
          {"outlier_range", {model.outlier_lo, model.outlier_hi}},
          {"signed", model.signed_outliers},
          {"noise_target", model.noise_target},
          {"seed", model.seed}};
}

MeasurementModel MeasurementModelFromJson(const nlohmann::json& j) {
  MeasurementModel model;
  model.m = j.value("m", 0);
  model.n = j.value("n", 0);
  model.matrix_kind = MatrixKindFromName(j.value("matrix_kind", std::string("gaussian")));
  model.outliers = j.value("outliers", 0);
  if (j.contains("outlier_range")) {
    const auto range = j.at("outlier_range").get<std::vector<double>>();
    if (range.size() != 2) throw std::invalid_argument("outlier_range needs two values");
    model.outlier_lo = range[0];
    model.outlier_hi = range[1];
  }
  model.signed_outliers = j.value("signed", false);
  model.noise_target = j.value("noise_target", 0.0);
  model.seed = j.value("seed", uint64_t{0});
  return model;
}

nlohmann::json ToJson(const ProblemInstance& inst) {
  return {{"seeds", {{"instance", inst.seed}, {"net", inst.net_seed}}},
          {"net_dims", inst.net_dims},
          {"l", inst.outlier_count()},
          {"outlier_support", inst.outlier_support},
          {"noise_target", inst.noise_target},
          {"matrix_kind", MatrixKindName(inst.matrix_kind)},
          {"z0", VectorToJson(inst.z0)},
          {"x0", VectorToJson(inst.x0)},
          {"M", MatrixToJson(inst.M)},
          {"e", VectorToJson(inst.e)},
          {"eta", VectorToJson(inst.eta)},
          {"y", VectorToJson(inst.y)}};
}

ProblemInstance InstanceFromJson(const nlohmann::json& j) {
  ProblemInstance inst;
  inst.seed = j.at("seeds").value("instance", uint64_t{0});
  inst.net_seed = j.at("seeds").value("net", uint64_t{0});
  inst.net_dims = j.value("net_dims", std::vector<int>{});
  inst.outlier_support = j.value("outlier_support", std::vector<int>{});
  inst.noise_target = j.value("noise_target", 0.0);
  inst.matrix_kind = MatrixKindFromName(j.value("matrix_kind", std::string("gaussian")));
  inst.z0 = VectorFromJson(j.at("z0"));
  inst.x0 = VectorFromJson(j.at("x0"));
  inst.M = MatrixFromJson(j.at("M"));
  inst.e = VectorFromJson(j.at("e"));
  inst.eta = VectorFromJson(j.at("eta"));
  inst.y = VectorFromJson(j.at("y"));
  if (inst.M.rows() != inst.y.size() || inst.M.cols() != inst.x0.size() ||
      inst.e.size() != inst.y.size() || inst.eta.size() != inst.y.size()) {
    throw std::invalid_argument("instance JSON has inconsistent shapes");
  }
  if (static_cast<int>(inst.outlier_support.size()) != j.value("l", 0)) {
    throw std::invalid_argument("instance JSON outlier support disagrees with l");
  }
  return inst;
}

}  // namespace genrec
