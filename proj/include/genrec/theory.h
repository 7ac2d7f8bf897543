#ifndef GENREC_THEORY_H_
#define GENREC_THEORY_H_

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "genrec/generator.h"

namespace genrec {

// Outcome of one empirical check of a recovery condition. min_margin follows
// the convention "positive means the condition held", so failures == 0 exactly
// when min_margin > 0.
struct ConditionReport {
  std::string condition_name;
  int64_t trials = 0;
  int64_t failures = 0;
  double min_margin = 0.0;
  nlohmann::json params = nlohmann::json::object();
  // When set, any failure makes the verification run fail.
  bool zero_failures_required = true;

  bool passed() const { return failures == 0; }
};

nlohmann::json ToJson(const ConditionReport& report);
ConditionReport ReportFromJson(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// l0 recovery.

// ||M G(z) - M G(z0)||_0, entries with magnitude <= zero_tol counted as zero.
int L0Separation(const GeneratorNetwork& net, const Matrix& M, const Vector& z,
                 const Vector& z0, double zero_tol);

// Cartesian grid with `points` values per axis on [lo, hi] in dimension k.
std::vector<Vector> UniformGrid(int k, int points, double lo, double hi);

struct L0BruteforceResult {
  // z0 is the unique minimizer of ||M G(z) - y||_0 over the grid.
  bool recovered = false;
  Vector adversarial_e;
  // Smallest separation over grid candidates other than z0, and where.
  int min_separation = 0;
  Vector closest_candidate;
  // Every grid candidate z != z0 has separation >= 2l + 1.
  bool separation_holds = false;
  int argmin_count = 0;
  int objective_at_z0 = 0;
};

// Exhaustive l0 decoding against the worst-case outliers: e copies l of the
// entries where the least-separated candidate differs from z0 (all of them if
// fewer differ). Throws when z0 is not on the grid.
L0BruteforceResult L0RecoveryBruteforce(const GeneratorNetwork& net, const Matrix& M,
                                        const Vector& z0, int l,
                                        const std::vector<Vector>& grid, double zero_tol);

// Decoding round trip on small random instances (k in {1, 2}, mixed
// activations and outlier counts): recovery against the worst-case outliers
// must succeed exactly when every grid candidate is (2l + 1)-separated.
// A failure is a discrepancy between the two.
ConditionReport L0RoundTripCheck(int instances, uint64_t seed, int grid_points_1d = 201,
                                 int grid_points_2d = 41);

// ---------------------------------------------------------------------------
// Rank conditions.

// Checks that every r-row submatrix of W has smallest singular value above
// sv_rel_tol * sigma_max(W). Enumerates all C(n, r) subsets; throws when that
// exceeds `budget`.
ConditionReport EveryRRowsFullRank(const Matrix& W, int r, double sv_rel_tol = 1e-10,
                                   int64_t budget = 1000000);

// Same check on `samples` uniformly drawn r-row subsets.
ConditionReport EveryRRowsFullRankSampled(const Matrix& W, int r, int64_t samples,
                                          uint64_t seed, double sv_rel_tol = 1e-10);

// Gaussian m x n matrices have rank min(m, n).
ConditionReport GaussianFullRank(int m, int n, int trials, uint64_t seed,
                                 double sv_rel_tol = 1e-10);

int64_t BinomialCoefficient(int n, int r);

// ---------------------------------------------------------------------------
// Leaky ReLU slope bound.

// (s(x) - s(y)) / (x - y) for the leaky ReLU with slope h.
double LeakyBeta(double x, double y, double h);

// Random (x, y, h) triples must give beta in [h, 1].
ConditionReport LeakyBetaSweep(int64_t trials, uint64_t seed);

// Layer-wise version: for every layer of a leaky ReLU net and random z, z',
// each coordinate of the output difference is beta times the pre-activation
// difference with beta in [h, 1].
ConditionReport LeakyLayerBetaCheck(const GeneratorNetwork& net, int pairs, uint64_t seed);

// ---------------------------------------------------------------------------
// l1 recovery (majority) condition.

struct MajorityCheck {
  bool holds = false;
  double margin = 0.0;  // ||D_Kc||_1 - ||D_K||_1
};

// D = G(r + c) - G(r); holds when ||D_K||_1 < ||D_Kc||_1. K is 0-based.
MajorityCheck KMajorityCondition(const GeneratorNetwork& net, const Vector& r,
                                 const Vector& c, const std::vector<int>& K);

// Indices of the s largest |d_i|, ties broken by lower index.
std::vector<int> LargestMagnitudeSupport(const Vector& d, int s);

enum class SupportMode { kRandom, kWorstByMagnitude };

// One report per rho in rho_grid, with |K| = floor(rho * n).
std::vector<ConditionReport> EstimateRhoStar(const GeneratorNetwork& net, int64_t trials,
                                             const std::vector<double>& rho_grid,
                                             SupportMode mode, uint64_t seed);

// Largest rho among the reports with zero failures (0 when none).
double EmpiricalRhoStar(const std::vector<ConditionReport>& reports);

// For random d and every size s, the top-|d| support dominates every
// same-size subset. Exhaustive over subsets, so n must be small.
ConditionReport WorstSupportDominance(int n, int trials, uint64_t seed);

// ---------------------------------------------------------------------------
// ReLU path slope.

// sum_i 1[hcol_i + t Hc_i >= 0] |Hc_i|, the right derivative in t of
// ||relu(hcol + t Hc) - relu(hcol)||_1 for t >= 0.
double ReluPathSlope(const Vector& hcol, const Vector& Hc, double t);

// ||relu(hcol + t Hc) - relu(hcol)||_1
double ReluPathLength(const Vector& hcol, const Vector& Hc, double t);

// Forward-difference slope of ReluPathLength at t, evaluated in extended
// precision with the step kept inside the current linear piece.
double ReluPathForwardDifferenceSlope(const Vector& hcol, const Vector& Hc, double t);

// Random cases of length n: ReluPathSlope must equal the forward-difference
// slope to rel_tol * max(1, |slope|).
ConditionReport ReluPathSlopeCheck(int64_t cases, int n, uint64_t seed,
                                   double rel_tol = 1e-9);

// ---------------------------------------------------------------------------
// Norm bounds for Gaussian H of shape n x (n - m).

// Samples unit v and records ||Hv||_1 / n (min and max) and, for each rho, the
// largest ||(Hv)_K||_1 / n over the worst support K of size floor(rho n).
ConditionReport NormBoundsCheck(const Matrix& H, int64_t trials, double h,
                                const std::vector<double>& rho_grid, uint64_t seed);

// ---------------------------------------------------------------------------
// Jacobian against central differences.

// Random nets and points; the analytic Jacobian must match central
// differences to `rel_tol` (max relative error). Points whose pre-activations
// come within `kink_margin` of 0 are redrawn.
ConditionReport JacobianFiniteDifferenceCheck(int nets, int max_depth, int max_width,
                                              uint64_t seed, double step = 1e-5,
                                              double rel_tol = 1e-5,
                                              double kink_margin = 1e-3);

// Max relative error max|J - J_fd| / max(1, max|J_fd|) at one point.
double JacobianFiniteDifferenceError(const GeneratorNetwork& net, const Vector& z,
                                     double step);

// Smallest |pre-activation| over all layers at z.
double KinkDistance(const GeneratorNetwork& net, const Vector& z);

}  // namespace genrec

#endif  // GENREC_THEORY_H_
