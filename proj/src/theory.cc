#include "genrec/theory.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include <Eigen/SVD>
#include <boost/multiprecision/cpp_int.hpp>

#include "genrec/random.h"

namespace genrec {
namespace {

using boost::multiprecision::cpp_rational;

constexpr double kInf = std::numeric_limits<double>::infinity();

int CountNonzero(const Vector& v, double zero_tol) {
  int count = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > zero_tol) ++count;
  }
  return count;
}

double SmallestSingularValue(const Matrix& a) {
  Eigen::JacobiSVD<Matrix> svd(a);
  const Vector& sv = svd.singularValues();
  return sv.size() == 0 ? 0.0 : sv(sv.size() - 1);
}

double LargestSingularValue(const Matrix& a) {
  Eigen::JacobiSVD<Matrix> svd(a);
  const Vector& sv = svd.singularValues();
  return sv.size() == 0 ? 0.0 : sv(0);
}

// Advances `idx` to the next r-subset of [0, n) in lexicographic order.
bool NextCombination(std::vector<int>& idx, int n) {
  const int r = static_cast<int>(idx.size());
  int i = r - 1;
  while (i >= 0 && idx[i] == n - r + i) --i;
  if (i < 0) return false;
  ++idx[i];
  for (int j = i + 1; j < r; ++j) idx[j] = idx[j - 1] + 1;
  return true;
}

Matrix GatherRows(const Matrix& W, const std::vector<int>& rows) {
  Matrix sub(static_cast<Eigen::Index>(rows.size()), W.cols());
  for (size_t i = 0; i < rows.size(); ++i) sub.row(i) = W.row(rows[i]);
  return sub;
}

int SupportSize(double rho, int n) {
  return static_cast<int>(std::floor(rho * n + 1e-9));
}

double SumAbs(const Vector& d, const std::vector<int>& idx) {
  double s = 0.0;
  for (int i : idx) s += std::abs(d(i));
  return s;
}

// Activation pattern (sign of every pre-activation) at z.
std::vector<bool> Pattern(const GeneratorNetwork& net, const Vector& z) {
  std::vector<bool> out;
  for (const Vector& pre : net.PreActivations(z)) {
    for (Eigen::Index i = 0; i < pre.size(); ++i) out.push_back(pre(i) >= 0.0);
  }
  return out;
}

}  // namespace

nlohmann::json ToJson(const ConditionReport& report) {
  return {{"condition", report.condition_name},
          {"trials", report.trials},
          {"failures", report.failures},
          {"min_margin", report.min_margin},
          {"zero_failures_required", report.zero_failures_required},
          {"params", report.params}};
}

ConditionReport ReportFromJson(const nlohmann::json& j) {
  ConditionReport r;
  r.condition_name = j.at("condition").get<std::string>();
  r.trials = j.at("trials").get<int64_t>();
  r.failures = j.at("failures").get<int64_t>();
  r.min_margin = j.at("min_margin").get<double>();
  r.zero_failures_required = j.value("zero_failures_required", true);
  r.params = j.value("params", nlohmann::json::object());
  return r;
}

int L0Separation(const GeneratorNetwork& net, const Matrix& M, const Vector& z,
                 const Vector& z0, double zero_tol) {
  const Vector diff = M * net.Forward(z) - M * net.Forward(z0);
  return CountNonzero(diff, zero_tol);
}

std::vector<Vector> UniformGrid(int k, int points, double lo, double hi) {
  if (k < 1 || points < 1) throw std::invalid_argument("UniformGrid: need k, points >= 1");
  std::vector<double> axis(points);
  for (int i = 0; i < points; ++i) {
    axis[i] = points == 1 ? lo : lo + (hi - lo) * i / (points - 1);
  }
  int64_t total = 1;
  for (int d = 0; d < k; ++d) total *= points;
  std::vector<Vector> grid;
  grid.reserve(static_cast<size_t>(total));
  for (int64_t flat = 0; flat < total; ++flat) {
    Vector z(k);
    int64_t rest = flat;
    for (int d = k - 1; d >= 0; --d) {
      z(d) = axis[rest % points];
      rest /= points;
    }
    grid.push_back(std::move(z));
  }
  return grid;
}

L0BruteforceResult L0RecoveryBruteforce(const GeneratorNetwork& net, const Matrix& M,
                                        const Vector& z0, int l,
                                        const std::vector<Vector>& grid, double zero_tol) {
  if (l < 0) throw std::invalid_argument("outlier count must be >= 0");
  if (M.cols() != net.output_dim()) {
    throw std::invalid_argument("measurement matrix does not match the generator");
  }
  if (l >= M.rows()) throw std::invalid_argument("outlier count must be < m");
  int z0_index = -1;
  for (size_t i = 0; i < grid.size(); ++i) {
    if (grid[i].size() == z0.size() && (grid[i] - z0).lpNorm<Eigen::Infinity>() <= 1e-12) {
      z0_index = static_cast<int>(i);
      break;
    }
  }
  if (z0_index < 0) throw std::invalid_argument("candidate grid does not contain z0");

  std::vector<Vector> measured;
  measured.reserve(grid.size());
  for (const Vector& z : grid) measured.push_back(M * net.Forward(z));
  const Vector& base = measured[z0_index];

  L0BruteforceResult out;
  out.min_separation = std::numeric_limits<int>::max();
  int closest = -1;
  for (size_t i = 0; i < grid.size(); ++i) {
    if (static_cast<int>(i) == z0_index) continue;
    const int sep = CountNonzero(measured[i] - base, zero_tol);
    if (sep < out.min_separation) {
      out.min_separation = sep;
      closest = static_cast<int>(i);
    }
  }
  out.separation_holds = out.min_separation >= 2 * l + 1;

  // Worst-case outliers: copy l of the entries where the closest candidate
  // differs from z0, so y sits as near to that candidate as allowed.
  out.adversarial_e = Vector::Zero(M.rows());
  if (closest >= 0) {
    out.closest_candidate = grid[closest];
    const Vector diff = measured[closest] - base;
    int copied = 0;
    for (Eigen::Index i = 0; i < diff.size() && copied < l; ++i) {
      if (std::abs(diff(i)) > zero_tol) {
        out.adversarial_e(i) = diff(i);
        ++copied;
      }
    }
  }
  const Vector y = base + out.adversarial_e;

  int best = std::numeric_limits<int>::max();
  for (size_t i = 0; i < grid.size(); ++i) {
    const int objective = CountNonzero(measured[i] - y, zero_tol);
    if (static_cast<int>(i) == z0_index) out.objective_at_z0 = objective;
    if (objective < best) {
      best = objective;
      out.argmin_count = 1;
    } else if (objective == best) {
      ++out.argmin_count;
    }
  }
  out.recovered = out.objective_at_z0 == best && out.argmin_count == 1;
  return out;
}

int64_t BinomialCoefficient(int n, int r) {
  if (r < 0 || r > n) return 0;
  r = std::min(r, n - r);
  int64_t c = 1;
  for (int i = 1; i <= r; ++i) {
    c = c * (n - r + i) / i;
  }
  return c;
}

ConditionReport EveryRRowsFullRank(const Matrix& W, int r, double sv_rel_tol,
                                   int64_t budget) {
  const int n = static_cast<int>(W.rows());
  const int k = static_cast<int>(W.cols());
  if (r < k || r > n) {
    throw std::invalid_argument("EveryRRowsFullRank: need k <= r <= n");
  }
  const int64_t subsets = BinomialCoefficient(n, r);
  if (subsets > budget) {
    throw std::invalid_argument("EveryRRowsFullRank: C(" + std::to_string(n) + ", " +
                                std::to_string(r) + ") = " + std::to_string(subsets) +
                                " exceeds the enumeration budget; use "
                                "EveryRRowsFullRankSampled instead");
  }
  const double threshold = sv_rel_tol * LargestSingularValue(W);
  ConditionReport report;
  report.condition_name = "every_r_rows_full_rank";
  double smallest = kInf;
  std::vector<int> rows(r);
  std::iota(rows.begin(), rows.end(), 0);
  do {
    const double sigma_min = SmallestSingularValue(GatherRows(W, rows));
    smallest = std::min(smallest, sigma_min);
    ++report.trials;
    if (!(sigma_min > threshold)) ++report.failures;
  } while (NextCombination(rows, n));
  report.min_margin = smallest - threshold;
  report.params = {{"n", n},          {"k", k},
                   {"r", r},          {"mode", "enumerate"},
                   {"sv_rel_tol", sv_rel_tol}, {"sv_threshold", threshold},
                   {"smallest_sigma_min", smallest}};
  return report;
}

ConditionReport EveryRRowsFullRankSampled(const Matrix& W, int r, int64_t samples,
                                          uint64_t seed, double sv_rel_tol) {
  const int n = static_cast<int>(W.rows());
  const int k = static_cast<int>(W.cols());
  if (r < k || r > n) {
    throw std::invalid_argument("EveryRRowsFullRankSampled: need k <= r <= n");
  }
  const double threshold = sv_rel_tol * LargestSingularValue(W);
  ConditionReport report;
  report.condition_name = "every_r_rows_full_rank";
  double smallest = kInf;
  for (int64_t s = 0; s < samples; ++s) {
    Rng rng(DeriveSeed(seed, static_cast<uint64_t>(s)));
    const double sigma_min = SmallestSingularValue(GatherRows(W, rng.Sample(n, r)));
    smallest = std::min(smallest, sigma_min);
    ++report.trials;
    if (!(sigma_min > threshold)) ++report.failures;
  }
  report.min_margin = smallest - threshold;
  report.params = {{"n", n},       {"k", k},       {"r", r},
                   {"mode", "sampled"}, {"seed", seed}, {"sv_threshold", threshold},
                   {"smallest_sigma_min", smallest}};
  return report;
}

ConditionReport GaussianFullRank(int m, int n, int trials, uint64_t seed,
                                 double sv_rel_tol) {
  ConditionReport report;
  report.condition_name = "gaussian_full_rank";
  report.min_margin = kInf;
  for (int t = 0; t < trials; ++t) {
    Rng rng(DeriveSeed(seed, static_cast<uint64_t>(t)));
    const Matrix a = rng.NormalMatrix(m, n);
    Eigen::JacobiSVD<Matrix> svd(a);
    const Vector& sv = svd.singularValues();
    const double threshold = sv_rel_tol * sv(0);
    // Margin: smallest singular value relative to the rank threshold.
    const double margin = sv(sv.size() - 1) - threshold;
    report.min_margin = std::min(report.min_margin, margin);
    ++report.trials;
    if (!(margin > 0.0)) ++report.failures;
  }
  report.params = {{"m", m}, {"n", n}, {"seed", seed}, {"sv_rel_tol", sv_rel_tol}};
  return report;
}

double LeakyBeta(double x, double y, double h) {
  if (x == y) throw std::invalid_argument("LeakyBeta: x and y must differ");
  if (!(h > 0.0 && h <= 1.0)) throw std::invalid_argument("LeakyBeta: h must lie in (0, 1]");
  // Exact rational arithmetic, rounded once. The exact ratio lies in [h, 1]
  // and both ends are doubles, so the rounded value does too.
  const cpp_rational rx(x), ry(y), rh(h);
  const cpp_rational sx = x >= 0.0 ? rx : rh * rx;
  const cpp_rational sy = y >= 0.0 ? ry : rh * ry;
  const cpp_rational beta = (sx - sy) / (rx - ry);
  return beta.convert_to<double>();
}

ConditionReport LeakyBetaSweep(int64_t trials, uint64_t seed) {
  ConditionReport report;
  report.condition_name = "leaky_beta_bound";
  report.min_margin = kInf;
  Rng rng(seed);
  for (int64_t t = 0; t < trials; ++t) {
    // Mixed scales so that both sign branches and near-equal pairs occur.
    const double scale = std::pow(10.0, rng.Uniform(-3.0, 3.0));
    const double x = scale * rng.Normal();
    double y = scale * rng.Normal();
    if (y == x) y = std::nextafter(x, kInf);
    const double h = 1.0 - rng.Uniform(0.0, 1.0);  // (0, 1]
    const double beta = LeakyBeta(x, y, h);
    // Zero slack is allowed: beta hits h or 1 exactly on same-sign pairs.
    const bool ok = beta >= h && beta <= 1.0;
    const double slack = std::min(beta - h, 1.0 - beta);
    report.min_margin = std::min(report.min_margin, ok ? 1.0 + slack : slack);
    ++report.trials;
    if (!ok) ++report.failures;
  }
  report.params = {{"seed", seed},
                   {"margin_convention", "1 + min(beta - h, 1 - beta) when in range"}};
  return report;
}

ConditionReport LeakyLayerBetaCheck(const GeneratorNetwork& net, int pairs, uint64_t seed) {
  if (net.activation().type() != ActivationType::kLeakyRelu) {
    throw std::invalid_argument("LeakyLayerBetaCheck requires a leaky ReLU network");
  }
  const double h = net.activation().slope();
  ConditionReport report;
  report.condition_name = "leaky_layer_beta";
  report.min_margin = kInf;
  double worst_identity = 0.0;
  for (int p = 0; p < pairs; ++p) {
    Rng rng(DeriveSeed(seed, static_cast<uint64_t>(p)));
    const Vector z = rng.NormalVector(net.input_dim());
    const Vector z0 = rng.NormalVector(net.input_dim());
    Vector out = z;
    Vector out0 = z0;
    for (int layer = 0; layer < net.depth(); ++layer) {
      const Vector pre = net.weight(layer) * out + net.bias(layer);
      const Vector pre0 = net.weight(layer) * out0 + net.bias(layer);
      // Biases cancel: the linear difference is H (out - out0).
      const Vector linear = net.weight(layer) * (out - out0);
      const Vector next = pre.unaryExpr([&](double v) { return net.activation().Apply(v); });
      const Vector next0 = pre0.unaryExpr([&](double v) { return net.activation().Apply(v); });
      const Vector diff = next - next0;
      for (Eigen::Index i = 0; i < pre.size(); ++i) {
        if (pre(i) == pre0(i)) continue;
        const double beta = LeakyBeta(pre(i), pre0(i), h);
        const double scale = 1.0 + std::abs(diff(i)) + std::abs(linear(i));
        const double mismatch = std::abs(beta * linear(i) - diff(i)) / scale;
        worst_identity = std::max(worst_identity, mismatch);
        const bool ok = beta >= h && beta <= 1.0 && mismatch <= 1e-9;
        const double slack = std::min({beta - h, 1.0 - beta, 1e-9 - mismatch});
        report.min_margin = std::min(report.min_margin, ok ? 1.0 + slack : slack);
        ++report.trials;
        if (!ok) ++report.failures;
      }
      out = next;
      out0 = next0;
    }
  }
  report.params = {{"dims", net.dims()},
                   {"h", h},
                   {"pairs", pairs},
                   {"seed", seed},
                   {"biases", net.has_zero_biases() ? "zero" : "gaussian"},
                   {"worst_identity_mismatch", worst_identity}};
  return report;
}

MajorityCheck KMajorityCondition(const GeneratorNetwork& net, const Vector& r,
                                 const Vector& c, const std::vector<int>& K) {
  if (c.isZero(0.0)) throw std::invalid_argument("KMajorityCondition: c must be nonzero");
  const Vector d = net.Forward(r + c) - net.Forward(r);
  std::vector<bool> in_k(d.size(), false);
  for (int i : K) {
    if (i < 0 || i >= d.size()) throw std::invalid_argument("support index out of range");
    if (in_k[i]) throw std::invalid_argument("support indices must be distinct");
    in_k[i] = true;
  }
  double on = 0.0;
  double off = 0.0;
  for (Eigen::Index i = 0; i < d.size(); ++i) (in_k[i] ? on : off) += std::abs(d(i));
  return {on < off, off - on};
}

std::vector<int> LargestMagnitudeSupport(const Vector& d, int s) {
  std::vector<int> idx(d.size());
  std::iota(idx.begin(), idx.end(), 0);
  s = std::clamp(s, 0, static_cast<int>(d.size()));
  std::partial_sort(idx.begin(), idx.begin() + s, idx.end(), [&d](int a, int b) {
    const double da = std::abs(d(a));
    const double db = std::abs(d(b));
    return da > db || (da == db && a < b);
  });
  idx.resize(s);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<ConditionReport> EstimateRhoStar(const GeneratorNetwork& net, int64_t trials,
                                             const std::vector<double>& rho_grid,
                                             SupportMode mode, uint64_t seed) {
  for (double rho : rho_grid) {
    if (!(rho >= 0.0 && rho < 1.0)) {
      throw std::invalid_argument("rho values must lie in [0, 1)");
    }
  }
  const int n = net.output_dim();
  const int k = net.input_dim();
  std::vector<ConditionReport> reports(rho_grid.size());
  for (size_t g = 0; g < rho_grid.size(); ++g) {
    ConditionReport& rep = reports[g];
    rep.condition_name = "k_majority";
    rep.min_margin = kInf;
    rep.zero_failures_required = false;
    rep.params = {{"rho", rho_grid[g]},
                  {"support_size", SupportSize(rho_grid[g], n)},
                  {"mode", mode == SupportMode::kRandom ? "random" : "worst_by_magnitude"},
                  {"dims", net.dims()},
                  {"seed", seed},
                  {"quantifier", "sampled r and c (uniform-over-r regime)"}};
    if (net.activation().type() == ActivationType::kLeakyRelu) {
      rep.params["h"] = net.activation().slope();
    }
  }
  // The same (r, c) pairs are reused across the rho grid.
  for (int64_t t = 0; t < trials; ++t) {
    Rng rng(DeriveSeed(seed, static_cast<uint64_t>(t)));
    const Vector r = rng.NormalVector(k);
    Vector c = rng.NormalVector(k);
    while (c.isZero(0.0)) c = rng.NormalVector(k);
    const Vector d = net.Forward(r + c) - net.Forward(r);
    for (size_t g = 0; g < rho_grid.size(); ++g) {
      const int s = SupportSize(rho_grid[g], n);
      Rng support_rng(DeriveSeed(DeriveSeed(seed, static_cast<uint64_t>(t)), g + 1));
      const std::vector<int> K = mode == SupportMode::kWorstByMagnitude
                                     ? LargestMagnitudeSupport(d, s)
                                     : support_rng.Sample(n, s);
      const double on = SumAbs(d, K);
      const double margin = d.lpNorm<1>() - 2.0 * on;
      ConditionReport& rep = reports[g];
      ++rep.trials;
      if (!(margin > 0.0)) ++rep.failures;
      rep.min_margin = std::min(rep.min_margin, margin);
    }
  }
  return reports;
}

double EmpiricalRhoStar(const std::vector<ConditionReport>& reports) {
  double best = 0.0;
  for (const ConditionReport& r : reports) {
    if (r.failures == 0) best = std::max(best, r.params.value("rho", 0.0));
  }
  return best;
}

ConditionReport WorstSupportDominance(int n, int trials, uint64_t seed) {
  if (n < 1 || n > 16) throw std::invalid_argument("WorstSupportDominance: need 1 <= n <= 16");
  ConditionReport report;
  report.condition_name = "worst_support_dominance";
  report.min_margin = kInf;
  for (int t = 0; t < trials; ++t) {
    Rng rng(DeriveSeed(seed, static_cast<uint64_t>(t)));
    const Vector d = rng.NormalVector(n);
    for (int s = 1; s < n; ++s) {
      const std::vector<int> top = LargestMagnitudeSupport(d, s);
      uint32_t top_mask = 0;
      for (int i : top) top_mask |= 1u << i;
      const double top_sum = SumAbs(d, top);
      double best_other = -kInf;
      for (uint32_t mask = 0; mask < (1u << n); ++mask) {
        if (std::popcount(mask) != s || mask == top_mask) continue;
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
          if (mask & (1u << i)) sum += std::abs(d(i));
        }
        best_other = std::max(best_other, sum);
      }
      const double margin = top_sum - best_other;
      report.min_margin = std::min(report.min_margin, margin);
      ++report.trials;
      if (!(margin > 0.0)) ++report.failures;
    }
  }
  report.params = {{"n", n}, {"seed", seed}};
  return report;
}

double ReluPathSlope(const Vector& hcol, const Vector& Hc, double t) {
  if (hcol.size() != Hc.size()) throw std::invalid_argument("ReluPathSlope: length mismatch");
  double slope = 0.0;
  for (Eigen::Index i = 0; i < hcol.size(); ++i) {
    if (hcol(i) + t * Hc(i) >= 0.0) slope += std::abs(Hc(i));
  }
  return slope;
}

double ReluPathLength(const Vector& hcol, const Vector& Hc, double t) {
  if (hcol.size() != Hc.size()) throw std::invalid_argument("ReluPathLength: length mismatch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < hcol.size(); ++i) {
    const double moved = std::max(hcol(i) + t * Hc(i), 0.0);
    total += std::abs(moved - std::max(hcol(i), 0.0));
  }
  return total;
}

ConditionReport NormBoundsCheck(const Matrix& H, int64_t trials, double h,
                                const std::vector<double>& rho_grid, uint64_t seed) {
  const int n = static_cast<int>(H.rows());
  const int p = static_cast<int>(H.cols());
  if (p < 1 || p >= n) throw std::invalid_argument("NormBoundsCheck: need n > n - m >= 1");
  if (!(h > 0.0 && h <= 1.0)) throw std::invalid_argument("NormBoundsCheck: h in (0, 1]");
  double lambda_min = kInf;
  double lambda_max = 0.0;
  std::vector<double> worst(rho_grid.size(), 0.0);
  int64_t failures = 0;
  for (int64_t t = 0; t < trials; ++t) {
    Rng rng(DeriveSeed(seed, static_cast<uint64_t>(t)));
    Vector v = rng.NormalVector(p);
    v.normalize();
    const Vector u = H * v;
    const double ratio = u.lpNorm<1>() / n;
    if (!(ratio > 0.0)) ++failures;
    lambda_min = std::min(lambda_min, ratio);
    lambda_max = std::max(lambda_max, ratio);
    for (size_t g = 0; g < rho_grid.size(); ++g) {
      const std::vector<int> K = LargestMagnitudeSupport(u, SupportSize(rho_grid[g], n));
      worst[g] = std::max(worst[g], SumAbs(u, K) / n);
    }
  }
  nlohmann::json per_rho = nlohmann::json::array();
  double rho_hat = 0.0;
  for (size_t g = 0; g < rho_grid.size(); ++g) {
    const bool below = worst[g] < lambda_min / 2.0;
    if (below) rho_hat = std::max(rho_hat, rho_grid[g]);
    per_rho.push_back({{"rho", rho_grid[g]},
                       {"support_size", SupportSize(rho_grid[g], n)},
                       {"max_adversarial", worst[g]},
                       {"below_half_lambda_min", below}});
  }
  ConditionReport report;
  report.condition_name = "norm_bounds";
  report.trials = trials;
  report.failures = failures;
  report.min_margin = lambda_min;
  report.params = {{"n", n},
                   {"cols", p},
                   {"alpha", 1.0 - static_cast<double>(p) / n},
                   {"h", h},
                   {"seed", seed},
                   {"lambda_min_hat", lambda_min},
                   {"lambda_max_hat", lambda_max},
                   // Constants in the form ||Hv||_1 > lambda n / h.
                   {"lambda_min_hat_times_h", lambda_min * h},
                   {"lambda_max_hat_times_h", lambda_max * h},
                   {"per_rho", per_rho},
                   {"rho_hat", rho_hat}};
  return report;
}

double KinkDistance(const GeneratorNetwork& net, const Vector& z) {
  if (net.activation().type() == ActivationType::kIdentity) return kInf;
  double dist = kInf;
  for (const Vector& pre : net.PreActivations(z)) {
    dist = std::min(dist, pre.cwiseAbs().minCoeff());
  }
  return dist;
}

double JacobianFiniteDifferenceError(const GeneratorNetwork& net, const Vector& z,
                                     double step) {
  const Matrix analytic = net.Jacobian(z);
  Matrix numeric(analytic.rows(), analytic.cols());
  for (int j = 0; j < net.input_dim(); ++j) {
    Vector plus = z;
    Vector minus = z;
    plus(j) += step;
    minus(j) -= step;
    numeric.col(j) = (net.Forward(plus) - net.Forward(minus)) / (plus(j) - minus(j));
  }
  const double scale = numeric.cwiseAbs().maxCoeff();
  const double err = (analytic - numeric).cwiseAbs().maxCoeff();
  if (scale == 0.0) return err == 0.0 ? 0.0 : kInf;
  return err / scale;
}

ConditionReport JacobianFiniteDifferenceCheck(int nets, int max_depth, int max_width,
                                              uint64_t seed, double step, double rel_tol,
                                              double kink_margin) {
  ConditionReport report;
  report.condition_name = "jacobian_finite_difference";
  report.min_margin = kInf;
  double worst = 0.0;
  int64_t redraws = 0;
  for (int i = 0; i < nets; ++i) {
    Rng rng(DeriveSeed(seed, static_cast<uint64_t>(i)));
    const int depth = 1 + rng.Index(max_depth);
    std::vector<int> dims{1 + rng.Index(std::min(8, max_width))};
    for (int d = 0; d < depth; ++d) dims.push_back(1 + rng.Index(max_width));
    Activation act = Activation::Identity();
    switch (i % 3) {
      case 1: act = Activation::Relu(); break;
      case 2: act = Activation::LeakyRelu(rng.Uniform(0.05, 1.0)); break;
      default: break;
    }
    const GeneratorNetwork net = RandomGaussianNet(dims, act, rng.engine()());

    // Redraw until no pre-activation is near zero and the stencil stays on
    // one linear piece.
    Vector z = rng.NormalVector(dims[0]);
    for (int attempt = 0; attempt < 10000; ++attempt) {
      bool clean = KinkDistance(net, z) >= kink_margin;
      if (clean && act.type() != ActivationType::kIdentity) {
        const std::vector<bool> center = Pattern(net, z);
        for (int j = 0; j < dims[0] && clean; ++j) {
          Vector plus = z;
          Vector minus = z;
          plus(j) += step;
          minus(j) -= step;
          clean = Pattern(net, plus) == center && Pattern(net, minus) == center;
        }
      }
      if (clean) break;
      ++redraws;
      z = rng.NormalVector(dims[0]);
    }
    const double err = JacobianFiniteDifferenceError(net, z, step);
    worst = std::max(worst, err);
    report.min_margin = std::min(report.min_margin, rel_tol - err);
    ++report.trials;
    if (!(err < rel_tol)) ++report.failures;
  }
  report.params = {{"nets", nets},     {"max_depth", max_depth}, {"max_width", max_width},
                   {"seed", seed},     {"step", step},           {"rel_tol", rel_tol},
                   {"kink_margin", kink_margin}, {"worst_rel_error", worst},
                   {"redraws", redraws}};
  return report;
}

}  // namespace genrec

namespace genrec {

double ReluPathForwardDifferenceSlope(const Vector& hcol, const Vector& Hc, double t) {
  using Real = long double;
  const auto path = [&](Real s) {
    Real total = 0.0L;
    for (Eigen::Index i = 0; i < hcol.size(); ++i) {
      const Real base = std::max<Real>(hcol(i), 0.0L);
      const Real moved = std::max<Real>(static_cast<Real>(hcol(i)) + s * Hc(i), 0.0L);
      total += std::abs(moved - base);
    }
    return total;
  };
  // Next breakpoint after t: where some hcol_i + s Hc_i changes sign.
  Real next = std::numeric_limits<Real>::infinity();
  for (Eigen::Index i = 0; i < hcol.size(); ++i) {
    if (Hc(i) == 0.0) continue;
    const Real kink = -static_cast<Real>(hcol(i)) / Hc(i);
    if (kink > t) next = std::min(next, kink);
  }
  const Real eps = std::min<Real>(1.0L, (next - t) / 2.0L);
  return static_cast<double>((path(t + eps) - path(t)) / eps);
}

ConditionReport ReluPathSlopeCheck(int64_t cases, int n, uint64_t seed, double rel_tol) {
  ConditionReport report;
  report.condition_name = "relu_path_slope";
  report.min_margin = kInf;
  double worst = 0.0;
  for (int64_t c = 0; c < cases; ++c) {
    Rng rng(DeriveSeed(seed, static_cast<uint64_t>(c)));
    const Vector hcol = rng.NormalVector(n);
    const Vector Hc = rng.NormalVector(n);
    const double t = rng.Uniform(0.0, 3.0);
    const double formula = ReluPathSlope(hcol, Hc, t);
    const double numeric = ReluPathForwardDifferenceSlope(hcol, Hc, t);
    const double err = std::abs(formula - numeric) / std::max(1.0, std::abs(numeric));
    worst = std::max(worst, err);
    report.min_margin = std::min(report.min_margin, rel_tol - err);
    ++report.trials;
    if (!(err <= rel_tol)) ++report.failures;
  }
  report.params = {{"n", n}, {"seed", seed}, {"rel_tol", rel_tol}, {"worst_rel_error", worst}};
  return report;
}

ConditionReport L0RoundTripCheck(int instances, uint64_t seed, int grid_points_1d,
                                 int grid_points_2d) {
  ConditionReport report;
  report.condition_name = "l0_round_trip";
  int holds = 0;
  int defeated = 0;
  for (int i = 0; i < instances; ++i) {
    Rng rng(DeriveSeed(seed, static_cast<uint64_t>(i)));
    const int k = 1 + i % 2;
    Activation act = Activation::Identity();
    switch ((i / 2) % 3) {
      case 1: act = Activation::Relu(); break;
      case 2: act = Activation::LeakyRelu(0.5); break;
      default: break;
    }
    const int n = 4 + rng.Index(6);
    const int m = 3 + rng.Index(n - 2);
    const int l = 1 + rng.Index(std::max(1, (m - 1) / 2 + 1));
    const int depth = 1 + rng.Index(2);
    std::vector<int> dims{k};
    for (int d = 1; d < depth; ++d) dims.push_back(2 + rng.Index(4));
    dims.push_back(n);
    const GeneratorNetwork net = RandomGaussianNet(dims, act, rng.engine()());
    const Matrix M = rng.NormalMatrix(m, n);
    const int points = k == 1 ? grid_points_1d : grid_points_2d;
    const std::vector<Vector> grid = UniformGrid(k, points, -3.0, 3.0);
    const Vector z0 = grid[static_cast<size_t>(rng.Index(static_cast<int>(grid.size())))];
    const double zero_tol = 1e-8 * (1.0 + (M * net.Forward(z0)).lpNorm<Eigen::Infinity>());
    // l ranges over 1 .. (m - 1) / 2 + 1, so both outcomes occur.
    const L0BruteforceResult res = L0RecoveryBruteforce(net, M, z0, l, grid, zero_tol);
    const bool agree = res.recovered == res.separation_holds;
    if (res.separation_holds) ++holds;
    if (!res.recovered) ++defeated;
    ++report.trials;
    if (!agree) ++report.failures;
  }
  report.min_margin = report.failures == 0 ? 1.0 : -1.0;
  report.params = {{"instances", instances},
                   {"seed", seed},
                   {"grid_points_1d", grid_points_1d},
                   {"grid_points_2d", grid_points_2d},
                   {"separation_held", holds},
                   {"recovery_defeated", defeated}};
  return report;
}

}  // namespace genrec
