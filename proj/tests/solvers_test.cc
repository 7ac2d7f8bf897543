#include "genrec/solvers.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "genrec/measurement.h"
#include "genrec/random.h"

namespace genrec {
namespace {

// Minimizer of |w| + (rho/2)(w - v)^2 found by a dense scan followed by
// bisection on the sign of the right derivative. Shares nothing with
// SoftThreshold.
double ProxOracle(double v, double rho) {
  const auto objective = [&](double w) { return std::abs(w) + 0.5 * rho * (w - v) * (w - v); };
  const auto right_slope = [&](double w) { return (w >= 0 ? 1.0 : -1.0) + rho * (w - v); };
  const double span = std::abs(v) + 2.0 / rho;
  const int points = 2001;
  double best_w = -span;
  double best_f = objective(best_w);
  for (int i = 1; i < points; ++i) {
    const double w = -span + 2.0 * span * i / (points - 1);
    if (objective(w) < best_f) {
      best_f = objective(w);
      best_w = w;
    }
  }
  const double cell = 2.0 * span / (points - 1);
  double lo = best_w - cell, hi = best_w + cell;
  for (int it = 0; it < 300; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (right_slope(mid) < 0) lo = mid; else hi = mid;
  }
  return hi;
}

// Exact l1 regression min_z ||A z - b||_1 by enumerating basic solutions:
// some optimum interpolates k of the rows.
Vector LeastAbsoluteDeviationsOracle(const Matrix& A, const Vector& b) {
  const int m = static_cast<int>(A.rows());
  const int k = static_cast<int>(A.cols());
  std::vector<int> idx(k);
  for (int i = 0; i < k; ++i) idx[i] = i;
  double best = std::numeric_limits<double>::infinity();
  Vector best_z = Vector::Zero(k);
  Matrix sub(k, k);
  Vector rhs(k);
  while (true) {
    for (int i = 0; i < k; ++i) {
      sub.row(i) = A.row(idx[i]);
      rhs(i) = b(idx[i]);
    }
    Eigen::FullPivLU<Matrix> lu(sub);
    if (lu.isInvertible()) {
      const Vector z = lu.solve(rhs);
      const double value = (A * z - b).lpNorm<1>();
      if (value < best) {
        best = value;
        best_z = z;
      }
    }
    int i = k - 1;
    while (i >= 0 && idx[i] == m - k + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
  return best_z;
}

SolverConfig Config(Method method, uint64_t seed = 0) {
  SolverConfig cfg;
  cfg.method = method;
  cfg.seed = seed;
  return cfg;
}

// Linear net k=5 -> 20 -> 60 with 40 Gaussian measurements and 3 large outliers.
struct LinearFixture {
  GeneratorNetwork net = RandomGaussianNet({5, 20, 60}, Activation::Identity(), 404);
  ProblemInstance inst;
  LinearFixture() {
    MeasurementModel model;
    model.m = 40;
    model.n = 60;
    model.outliers = 3;
    inst = BuildInstance(net, model, std::nullopt, 505);
  }
};

TEST(SoftThreshold, Examples) {
  EXPECT_DOUBLE_EQ(SoftThreshold(Vector::Constant(1, 2.5), 1.0)(0), 1.5);
  EXPECT_DOUBLE_EQ(SoftThreshold(Vector::Constant(1, 0.3), 1.0)(0), 0.0);
  EXPECT_DOUBLE_EQ(SoftThreshold(Vector::Constant(1, -2.0), 0.5)(0), -1.5);
}

TEST(SoftThreshold, IsTheL1Prox) {
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    const double rho = std::pow(10.0, rng.Uniform(-2, 2));
    const double v = rng.Normal() * std::pow(10.0, rng.Uniform(-3, 3));
    const double got = SoftThreshold(Vector::Constant(1, v), 1.0 / rho)(0);
    EXPECT_NEAR(got, ProxOracle(v, rho), 1e-10 * std::max(1.0, std::abs(v)));
  }
}

TEST(PseudoInverse, Identity) {
  EXPECT_TRUE(PseudoInverse(Matrix::Identity(4, 4)).isApprox(Matrix::Identity(4, 4)));
}

TEST(PseudoInverse, RankDeficientDiagonal) {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 0) = 2.0;
  const Matrix p = PseudoInverse(a);
  EXPECT_DOUBLE_EQ(p(0, 0), 0.5);
  EXPECT_EQ(p(1, 1), 0.0);
  EXPECT_EQ(p(0, 1), 0.0);
  EXPECT_EQ(p(1, 0), 0.0);
}

TEST(PseudoInverse, TallFullRankIsLeftInverse) {
  Rng rng(11);
  const Matrix a = rng.NormalMatrix(40, 20);
  const Matrix p = PseudoInverse(a);
  ASSERT_EQ(p.rows(), 20);
  ASSERT_EQ(p.cols(), 40);
  EXPECT_LT((p * a - Matrix::Identity(20, 20)).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((a * p * a - a).norm() / a.norm(), 1e-8);
}

TEST(PseudoInverse, PenroseConditionsOnRankDeficientMatrix) {
  Rng rng(12);
  const Matrix a = rng.NormalMatrix(15, 4) * rng.NormalMatrix(4, 10);  // rank 4
  const Matrix p = PseudoInverse(a);
  EXPECT_LT((a * p * a - a).norm() / a.norm(), 1e-8);
  EXPECT_LT((p * a * p - p).norm() / p.norm(), 1e-8);
  EXPECT_LT(((a * p).transpose() - a * p).norm(), 1e-8);
}

TEST(PseudoInverse, RejectsNonFinite) {
  Matrix a = Matrix::Identity(2, 2);
  a(1, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(PseudoInverse(a), std::invalid_argument);
}

TEST(AdmmL1, FixedPointAtInitialization) {
  const auto net = RandomGaussianNet({4, 16, 30}, Activation::LeakyRelu(0.2), 5);
  Rng rng(6);
  const Matrix M = rng.NormalMatrix(20, 30);
  const SolverConfig cfg = Config(Method::kAdmmL1, 77);
  const Vector z_init = RestartInit(cfg, 4, 0);
  const Vector y = M * net.Forward(z_init);
  const RecoveryResult res = AdmmL1(net, M, y, cfg);
  EXPECT_LE(res.eps_m, 1e-8);
  EXPECT_LE(res.iters_used, 2);
  EXPECT_TRUE(res.converged);
}

TEST(AdmmL1, LinearNetMatchesLinearProgramOracle) {
  LinearFixture f;
  const Matrix A = f.inst.M * ComposeLinear(f.net);
  const Vector b = f.inst.y - f.inst.M * f.net.Forward(Vector::Zero(5));
  const Vector oracle = LeastAbsoluteDeviationsOracle(A, b);
  EXPECT_LT((oracle - f.inst.z0).norm() / f.inst.z0.norm(), 1e-8);

  SolverConfig cfg = Config(Method::kAdmmL1, 1);
  cfg.restarts = 10;
  const RecoveryResult res = Solve(f.net, f.inst.M, f.inst.y, cfg);
  EXPECT_LT((res.z_hat - oracle).norm() / oracle.norm(), 1e-4);
  EXPECT_LT((res.z_hat - f.inst.z0).norm() / f.inst.z0.norm(), 1e-4);
}

TEST(AdmmL1, AgreesWithSquaredL1GradientDescentOnLeakyNet) {
  const auto net = RandomGaussianNet({5, 20, 60}, Activation::LeakyRelu(0.2), 808);
  MeasurementModel model;
  model.m = 40;
  model.n = 60;
  model.outliers = 3;
  for (uint64_t seed = 0; seed < 5; ++seed) {
    const ProblemInstance inst = BuildInstance(net, model, std::nullopt, 900 + seed);
    SolverConfig admm = Config(Method::kAdmmL1, seed);
    admm.restarts = 10;
    SolverConfig gd = admm;
    gd.method = Method::kGdSquaredL1;
    const double a = Solve(net, inst.M, inst.y, admm).eps_m;
    const double g = Solve(net, inst.M, inst.y, gd).eps_m;
    EXPECT_NEAR(a, g, 1e-3) << "seed " << seed;
  }
}

TEST(AdmmL1, UpdatesSatisfyOptimalityConditions) {
  const auto net = RandomGaussianNet({4, 15, 40}, Activation::LeakyRelu(0.3), 19);
  MeasurementModel model;
  model.m = 30;
  model.n = 40;
  model.outliers = 2;
  const ProblemInstance inst = BuildInstance(net, model, std::nullopt, 20);
  SolverConfig cfg = Config(Method::kAdmmL1, 4);
  cfg.rho = 0.7;
  cfg.max_iters = 200;
  int observed = 0;
  double worst_prox = 0.0, worst_normal = 0.0;
  AdmmL1(net, inst.M, inst.y, cfg, RestartInit(cfg, 4, 0), [&](const AdmmIterate& it) {
    ++observed;
    for (Eigen::Index i = 0; i < it.w_next.size(); ++i) {
      const double v = it.shrink_input(i);
      const double err = std::abs(it.w_next(i) - ProxOracle(v, it.rho)) / std::max(1.0, std::abs(v));
      worst_prox = std::max(worst_prox, err);
    }
    const Vector normal = it.linearized.transpose() * (it.linearized * it.z_next - it.rhs);
    const double a_norm = it.linearized.norm();
    const double scale = a_norm * a_norm * it.z_next.norm() + a_norm * it.rhs.norm();
    worst_normal = std::max(worst_normal, normal.norm() / scale);
  });
  EXPECT_GT(observed, 0);
  EXPECT_LT(worst_prox, 1e-10);
  EXPECT_LT(worst_normal, 1e-8);
}

TEST(AdmmL1, BestIterateIsReportedAndRecomputable) {
  LinearFixture f;
  const RecoveryResult res = AdmmL1(f.net, f.inst.M, f.inst.y, Config(Method::kAdmmL1, 2));
  double best = std::numeric_limits<double>::infinity();
  for (const TraceEntry& t : res.trace) best = std::min(best, t.eps_m);
  EXPECT_NEAR(res.eps_m, best, 1e-9 * best);
  EXPECT_EQ(res.x_hat, f.net.Forward(res.z_hat));
  EXPECT_EQ(res.eps_m, (f.inst.y - f.inst.M * res.x_hat).lpNorm<1>());
}

TEST(AdmmL1, NonFiniteIterateRaisesDivergence) {
  const auto net = RandomGaussianNet({2, 5}, Activation::Identity(), 1);
  Matrix M = Matrix::Ones(3, 5);
  Vector y = Vector::Zero(3);
  y(0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(AdmmL1(net, M, y, Config(Method::kAdmmL1)), DivergenceError);
}

TEST(GdSquaredL1, ZeroResidualReturnsImmediately) {
  const auto net = RandomGaussianNet({3, 10}, Activation::Relu(), 2);
  const SolverConfig cfg = Config(Method::kGdSquaredL1, 5);
  const Matrix M = Matrix::Identity(10, 10);
  const Vector y = net.Forward(RestartInit(cfg, 3, 0));
  const RecoveryResult res = GdSquaredL1(net, M, y, cfg);
  EXPECT_EQ(res.iters_used, 0);
  EXPECT_TRUE(res.converged);
  EXPECT_EQ(res.eps_m, 0.0);
}

TEST(GdSquaredL1, ScalarToyProblem) {
  const GeneratorNetwork net({Matrix::Ones(1, 1)}, {Vector::Zero(1)}, Activation::Identity());
  const RecoveryResult res = GdSquaredL1(net, Matrix::Ones(1, 1), Vector::Constant(1, 3.0),
                                         Config(Method::kGdSquaredL1), Vector::Zero(1));
  EXPECT_NEAR(res.z_hat(0), 3.0, 1e-5);
  EXPECT_LT(res.trace.back().objective, 1e-10);
}

TEST(GdSquaredL1, ObjectiveNeverIncreases) {
  const auto net = RandomGaussianNet({5, 25, 50}, Activation::Relu(), 71);
  MeasurementModel model;
  model.m = 35;
  model.n = 50;
  model.outliers = 4;
  const ProblemInstance inst = BuildInstance(net, model, std::nullopt, 72);
  for (uint64_t seed = 0; seed < 5; ++seed) {
    const RecoveryResult res = GdSquaredL1(net, inst.M, inst.y, Config(Method::kGdSquaredL1, seed));
    ASSERT_GT(res.trace.size(), 1u);
    for (size_t i = 1; i < res.trace.size(); ++i) {
      EXPECT_LE(res.trace[i].objective, res.trace[i - 1].objective);
    }
  }
}

TEST(GdSquaredL2, ZeroResidualReturnsImmediately) {
  const auto net = RandomGaussianNet({3, 10}, Activation::LeakyRelu(0.5), 2);
  const SolverConfig cfg = Config(Method::kGdSquaredL2, 5);
  const Matrix M = Matrix::Identity(10, 10);
  const Vector y = net.Forward(RestartInit(cfg, 3, 0));
  const RecoveryResult res = GdSquaredL2(net, M, y, cfg);
  EXPECT_EQ(res.iters_used, 0);
  EXPECT_TRUE(res.converged);
}

TEST(GdSquaredL2, CleanLinearProblemIsSolvedExactly) {
  const auto net = RandomGaussianNet({5, 20, 60}, Activation::Identity(), 404);
  MeasurementModel model;
  model.m = 40;
  model.n = 60;
  const ProblemInstance inst = BuildInstance(net, model, std::nullopt, 3);
  // Normal equations of the reduced linear problem.
  const Matrix A = inst.M * ComposeLinear(net);
  const Vector b = inst.y - inst.M * net.Forward(Vector::Zero(5));
  const Vector normal = (A.transpose() * A).ldlt().solve(A.transpose() * b);
  const RecoveryResult res = Solve(net, inst.M, inst.y, Config(Method::kGdSquaredL2, 1));
  EXPECT_LT((res.z_hat - normal).norm(), 1e-6 * normal.norm());
  const Metrics met = ComputeMetrics(net, inst.M, inst.y, res.z_hat, &inst.x0);
  EXPECT_LT(*met.eps_r, 1e-8);
}

TEST(GdSquaredL2, RegularizedSolutionSolvesShiftedNormalEquations) {
  const auto net = RandomGaussianNet({4, 12, 30}, Activation::Identity(), 9);
  MeasurementModel model;
  model.m = 20;
  model.n = 30;
  model.outliers = 2;
  model.outlier_lo = 1.0;
  model.outlier_hi = 2.0;
  const ProblemInstance inst = BuildInstance(net, model, std::nullopt, 10);
  SolverConfig cfg = Config(Method::kGdSquaredL2Reg, 2);
  cfg.lambda_reg = 0.1;
  const Matrix A = inst.M * ComposeLinear(net);
  const Vector b = inst.y - inst.M * net.Forward(Vector::Zero(4));
  const Matrix lhs = A.transpose() * A + cfg.lambda_reg * Matrix::Identity(4, 4);
  const Vector expected = lhs.ldlt().solve(A.transpose() * b);
  const RecoveryResult res = Solve(net, inst.M, inst.y, cfg);
  EXPECT_EQ(res.method, Method::kGdSquaredL2Reg);
  EXPECT_LT((res.z_hat - expected).norm(), 1e-6 * expected.norm());
}

TEST(GdSquaredL2, OutliersDegradeLeastSquaresFarMoreThanL1) {
  LinearFixture f;
  SolverConfig cfg = Config(Method::kGdSquaredL2, 6);
  cfg.restarts = 3;
  const RecoveryResult l2 = Solve(f.net, f.inst.M, f.inst.y, cfg);
  cfg.method = Method::kAdmmL1;
  const RecoveryResult l1 = Solve(f.net, f.inst.M, f.inst.y, cfg);
  cfg.method = Method::kGdSquaredL1;
  const RecoveryResult l1sq = Solve(f.net, f.inst.M, f.inst.y, cfg);
  const double r2 = *ComputeMetrics(f.net, f.inst.M, f.inst.y, l2.z_hat, &f.inst.x0).eps_r;
  const double r1 = *ComputeMetrics(f.net, f.inst.M, f.inst.y, l1.z_hat, &f.inst.x0).eps_r;
  const double r1sq = *ComputeMetrics(f.net, f.inst.M, f.inst.y, l1sq.z_hat, &f.inst.x0).eps_r;
  EXPECT_GE(r2, 1e3 * r1);
  EXPECT_GE(r2, 1e3 * r1sq);
}

TEST(GdSquaredL2, ObjectiveScalesQuadraticallyForHomogeneousNets) {
  auto base = RandomGaussianNet({4, 20, 30}, Activation::Relu(), 13);
  std::vector<Vector> zeros;
  for (const Vector& b : base.biases()) zeros.push_back(Vector::Zero(b.size()));
  const GeneratorNetwork net(base.weights(), zeros, Activation::Relu());
  Rng rng(14);
  const Matrix M = rng.NormalMatrix(25, 30);
  const Vector y = M * net.Forward(rng.NormalVector(4));
  SolverConfig cfg = Config(Method::kGdSquaredL2, 15);
  cfg.max_iters = 300;
  const double a = 4.0;
  const RecoveryResult small = GdSquaredL2(net, M, y, cfg);
  cfg.init_scale *= a;
  const RecoveryResult large = GdSquaredL2(net, M, a * y, cfg);
  const double f_small = small.trace.back().objective;
  const double f_large = large.trace.back().objective;
  EXPECT_NEAR(f_large, a * a * f_small, 1e-6 * (a * a * f_small) + 1e-12);
}

TEST(MultiRestart, SingleRestartEqualsSingleRun) {
  LinearFixture f;
  const SolverConfig cfg = Config(Method::kGdSquaredL1, 8);
  const RecoveryResult single = GdSquaredL1(f.net, f.inst.M, f.inst.y, cfg);
  const RecoveryResult multi = Solve(f.net, f.inst.M, f.inst.y, cfg);
  EXPECT_EQ(single.z_hat, multi.z_hat);
  EXPECT_EQ(single.eps_m, multi.eps_m);
  EXPECT_EQ(multi.restart_index, 0);
}

TEST(MultiRestart, ReturnsMinimumMeasurementError) {
  const auto net = RandomGaussianNet({3, 10, 20}, Activation::Relu(), 15);
  MeasurementModel model;
  model.m = 12;
  model.n = 20;
  model.outliers = 2;
  const ProblemInstance inst = BuildInstance(net, model, std::nullopt, 16);
  SolverConfig cfg = Config(Method::kGdSquaredL1, 17);
  cfg.restarts = 10;
  cfg.max_iters = 50;
  double best = std::numeric_limits<double>::infinity();
  int best_index = -1;
  for (int r = 0; r < 10; ++r) {
    const double e = GdSquaredL1(net, inst.M, inst.y, cfg, RestartInit(cfg, 3, r)).eps_m;
    if (e < best) {
      best = e;
      best_index = r;
    }
  }
  const RecoveryResult res = Solve(net, inst.M, inst.y, cfg);
  EXPECT_EQ(res.eps_m, best);
  EXPECT_EQ(res.restart_index, best_index);
}

TEST(MultiRestart, TenRestartThousandIterationConfigIsExpressible) {
  SolverConfig cfg;
  cfg.restarts = 10;
  cfg.max_iters = 1000;
  EXPECT_NO_THROW(cfg.Validate());
  const SolverConfig back = SolverConfigFromJson(ToJson(cfg));
  EXPECT_EQ(back.restarts, 10);
  EXPECT_EQ(back.max_iters, 1000);
}

TEST(MultiRestart, DivergenceOnlyPropagatesWhenEveryRestartFails) {
  const auto net = RandomGaussianNet({2, 5}, Activation::Identity(), 1);
  Vector y = Vector::Zero(3);
  y(1) = std::numeric_limits<double>::infinity();
  SolverConfig cfg = Config(Method::kGdSquaredL1);
  cfg.restarts = 3;
  EXPECT_THROW(Solve(net, Matrix::Ones(3, 5), y, cfg), DivergenceError);
}

TEST(SolverConfig, ValidationAndDefaults) {
  SolverConfig cfg;
  EXPECT_DOUBLE_EQ(cfg.PrimalTolerance(100), 1e-5);
  EXPECT_DOUBLE_EQ(cfg.ZeroTolerance(Vector::Constant(2, -4.0)), 5e-8);
  cfg.max_iters = 0;
  EXPECT_THROW(cfg.Validate(), std::invalid_argument);
  cfg = SolverConfig{};
  cfg.armijo_c = 1.0;
  EXPECT_THROW(cfg.Validate(), std::invalid_argument);
  EXPECT_THROW(MethodFromName("newton"), std::invalid_argument);
}

TEST(SolverConfig, JsonRoundTrip) {
  SolverConfig cfg = Config(Method::kGdSquaredL2Reg, 42);
  cfg.rho = 2.5;
  cfg.tol_primal = 1e-4;
  const SolverConfig back = SolverConfigFromJson(nlohmann::json::parse(ToJson(cfg).dump()));
  EXPECT_EQ(back.method, Method::kGdSquaredL2Reg);
  EXPECT_EQ(back.rho, 2.5);
  EXPECT_EQ(*back.tol_primal, 1e-4);
  EXPECT_FALSE(back.zero_tol.has_value());
  EXPECT_EQ(back.seed, 42u);
}

TEST(Metrics, ExactFitAndRecomputation) {
  const GeneratorNetwork net({Matrix::Identity(2, 2)}, {Vector::Zero(2)}, Activation::Identity());
  Matrix M(2, 2);
  M << 1, 2, 3, 4;
  const Vector z = Vector::Constant(2, 1.0);
  const Metrics exact = ComputeMetrics(net, M, M * z, z, &z);
  EXPECT_EQ(exact.eps_m, 0.0);
  EXPECT_EQ(*exact.eps_r, 0.0);

  const Vector y(Vector::Constant(2, 0.0));
  const Vector x0 = (Vector(2) << 2.0, -1.0).finished();
  const Metrics m = ComputeMetrics(net, M, y, z, &x0);
  // M z = (3, 7); x0 - z = (1, -2).
  EXPECT_DOUBLE_EQ(m.eps_m, 10.0);
  EXPECT_DOUBLE_EQ(*m.eps_r, 5.0);
  EXPECT_DOUBLE_EQ(*m.eps_r_per_pixel, 2.5);
  EXPECT_FALSE(ComputeMetrics(net, M, y, z).eps_r.has_value());
}

TEST(Trace, CsvHeaderAndRows) {
  std::ostringstream out;
  WriteTraceCsv(out, {{0, 2.0, 0.5, 1.0}, {1, 1.5, 0.25, 0.75}});
  EXPECT_EQ(out.str(), "iter,objective,primal_residual,eps_m\n0,2,0.5,1\n1,1.5,0.25,0.75\n");
}

TEST(Solvers, DeterministicGivenSeed) {
  LinearFixture f;
  for (Method m : {Method::kAdmmL1, Method::kGdSquaredL1, Method::kGdSquaredL2}) {
    SolverConfig cfg = Config(m, 21);
    cfg.restarts = 2;
    const RecoveryResult a = Solve(f.net, f.inst.M, f.inst.y, cfg);
    const RecoveryResult b = Solve(f.net, f.inst.M, f.inst.y, cfg);
    EXPECT_EQ(a.z_hat, b.z_hat);
    EXPECT_EQ(a.trace.size(), b.trace.size());
  }
}

}  // namespace
}  // namespace genrec
