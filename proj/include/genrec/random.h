#ifndef GENREC_RANDOM_H_
#define GENREC_RANDOM_H_

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Core>

namespace genrec {

// Mixes a base seed with a stream index (splitmix64 finalizer). Used to give
// every trial, restart and sampled quantity its own independent substream so
// that results do not depend on execution order.
uint64_t DeriveSeed(uint64_t seed, uint64_t stream);

// Thin wrapper over a 64-bit Mersenne Twister. Reproducible for a fixed seed
// within one build; no cross-platform guarantee is made for the normal draws.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  double Normal() { return normal_(engine_); }
  double Uniform(double lo, double hi);
  // Uniform integer in [0, n).
  int Index(int n);
  bool Coin() { return Index(2) == 1; }

  Eigen::VectorXd NormalVector(int size);
  Eigen::MatrixXd NormalMatrix(int rows, int cols);

  // `count` distinct indices from [0, n), uniformly without replacement,
  // returned in sorted order.
  std::vector<int> Sample(int n, int count);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace genrec

#endif  // GENREC_RANDOM_H_
