#ifndef GENREC_MEASUREMENT_H_
#define GENREC_MEASUREMENT_H_

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "genrec/generator.h"

namespace genrec {

enum class MatrixKind { kGaussian, kIdentity };

// How measurements y = M G(z0) + e + eta are produced.
struct MeasurementModel {
  int m = 0;
  int n = 0;
  MatrixKind matrix_kind = MatrixKind::kGaussian;
  int outliers = 0;
  double outlier_lo = 5000.0;
  double outlier_hi = 10000.0;
  // Independent fair-coin sign per outlier; positive only when false.
  bool signed_outliers = false;
  // Target value of sqrt(E ||eta||^2). Zero gives noiseless measurements.
  double noise_target = 0.0;
  uint64_t seed = 0;

  void Validate() const;
};

// One concrete recovery problem with its ground truth.
struct ProblemInstance {
  std::vector<int> net_dims;
  uint64_t net_seed = 0;
  Vector z0;
  Vector x0;
  Matrix M;
  Vector e;
  Vector eta;
  Vector y;
  // Sorted indices of the nonzero entries of e.
  std::vector<int> outlier_support;
  uint64_t seed = 0;
  MatrixKind matrix_kind = MatrixKind::kGaussian;
  double noise_target = 0.0;

  int outlier_count() const { return static_cast<int>(outlier_support.size()); }
};

Matrix SampleMeasurementMatrix(const MeasurementModel& model);

// Exactly `count` nonzero entries at positions chosen uniformly without
// replacement, magnitudes uniform in [lo, hi].
Vector SampleOutliers(int m, int count, double lo, double hi, bool signed_outliers,
                      uint64_t seed, std::vector<int>* support = nullptr);

// i.i.d. N(0, (target^2 / m)) entries so that sqrt(E ||eta||^2) = target.
Vector SampleNoise(int m, double noise_target, uint64_t seed);

// Draws M, e, eta (and z0 when not supplied) from substreams of `seed`;
// model.seed is not consulted.
ProblemInstance BuildInstance(const GeneratorNetwork& net, const MeasurementModel& model,
                              const std::optional<Vector>& z0, uint64_t seed);

const char* MatrixKindName(MatrixKind kind);
MatrixKind MatrixKindFromName(const std::string& name);

nlohmann::json ToJson(const MeasurementModel& model);
MeasurementModel MeasurementModelFromJson(const nlohmann::json& j);

nlohmann::json ToJson(const ProblemInstance& instance);
ProblemInstance InstanceFromJson(const nlohmann::json& j);

}  // namespace genrec

#endif  // GENREC_MEASUREMENT_H_
