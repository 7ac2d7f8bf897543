#include "genrec/random.h"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace genrec {

uint64_t DeriveSeed(uint64_t seed, uint64_t stream) {
  uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double Rng::Uniform(double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  return dist(engine_);
}

int Rng::Index(int n) {
  if (n <= 0) throw std::invalid_argument("Rng::Index: n must be positive");
  std::uniform_int_distribution<int> dist(0, n - 1);
  return dist(engine_);
}

Eigen::VectorXd Rng::NormalVector(int size) {
  Eigen::VectorXd v(size);
  for (int i = 0; i < size; ++i) v(i) = Normal();
  return v;
}

Eigen::MatrixXd Rng::NormalMatrix(int rows, int cols) {
  // Filled row by row so the draw order matches the serialized layout.
  Eigen::MatrixXd a(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) a(i, j) = Normal();
  }
  return a;
}

std::vector<int> Rng::Sample(int n, int count) {
  if (count < 0 || count > n) {
    throw std::invalid_argument("Rng::Sample: count out of range");
  }
  std::vector<int> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  // Partial Fisher-Yates.
  for (int i = 0; i < count; ++i) {
    const int j = i + Index(n - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace genrec
