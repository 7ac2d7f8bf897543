#ifndef GENREC_SOLVERS_H_
#define GENREC_SOLVERS_H_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "genrec/generator.h"

namespace genrec {

enum class Method { kAdmmL1, kGdSquaredL1, kGdSquaredL2, kGdSquaredL2Reg };

// CLI spellings: admm-l1, gd-l1sq, gd-l2sq, gd-l2sq-reg.
const char* MethodName(Method method);
Method MethodFromName(const std::string& name);

struct SolverConfig {
  Method method = Method::kAdmmL1;
  // ADMM penalty.
  double rho = 1.0;
  // Weight of ||z||_2^2 for kGdSquaredL2Reg.
  double lambda_reg = 0.1;
  int max_iters = 1000;
  int restarts = 1;
  // Standard deviation of the random starting latent vectors.
  double init_scale = 1.0;
  double step_init = 1.0;
  double armijo_c = 1e-4;
  double armijo_shrink = 0.5;
  // Defaults to 1e-6 * sqrt(m) when unset.
  std::optional<double> tol_primal;
  double tol_step = 1e-8;
  // Defaults to 1e-8 * (1 + ||y||_inf) when unset.
  std::optional<double> zero_tol;
  uint64_t seed = 0;

  void Validate() const;
  double PrimalTolerance(int m) const;
  double ZeroTolerance(const Vector& y) const;
};

nlohmann::json ToJson(const SolverConfig& cfg);
// Fields absent from `j` keep the values already in `base`.
SolverConfig SolverConfigFromJson(const nlohmann::json& j, SolverConfig base = {});

struct TraceEntry {
  int iter = 0;
  double objective = 0.0;
  // ADMM: ||M G(z) - w - y||_2. Gradient methods: ||M G(z) - y||_2.
  double primal_residual = 0.0;
  double eps_m = 0.0;
};

struct RecoveryResult {
  Method method = Method::kAdmmL1;
  Vector z_hat;
  Vector x_hat;
  // ||y - M G(z_hat)||_1
  double eps_m = 0.0;
  // ||x0 - G(z_hat)||_2^2, only when the ground truth is known.
  std::optional<double> eps_r;
  // Final iterate. Equal to z_hat for the gradient methods; ADMM reports its
  // best iterate by eps_m as z_hat.
  Vector z_last;
  int iters_used = 0;
  std::vector<TraceEntry> trace;
  int restart_index = 0;
  bool converged = false;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::vector<TraceEntry> trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const std::vector<TraceEntry>& trace() const { return trace_; }

 private:
  std::vector<TraceEntry> trace_;
};

// Element-wise shrinkage toward zero by tau.
Vector SoftThreshold(const Vector& v, double tau);

// Moore-Penrose pseudo-inverse from the SVD. Singular values below
// eps * max(p, q) * sigma_max are dropped.
Matrix PseudoInverse(const Matrix& a);

// Everything one linearized ADMM iteration computed, for inspection.
struct AdmmIterate {
  int iter;
  const Vector& z_prev;
  // M * J(z_prev)
  const Matrix& linearized;
  // Least-squares right-hand side solved for z_next.
  const Vector& rhs;
  const Vector& z_next;
  // M G(z_next) - y + lambda_prev / rho, the argument of the shrinkage.
  const Vector& shrink_input;
  const Vector& w_next;
  const Vector& lambda_next;
  double rho;
};
using AdmmObserver = std::function<void(const AdmmIterate&)>;

// Linearized ADMM for min_z ||M G(z) - y||_1, started from z_init with
// w = M G(z_init) - y and zero multipliers.
RecoveryResult AdmmL1(const GeneratorNetwork& net, const Matrix& M, const Vector& y,
                      const SolverConfig& cfg, const Vector& z_init,
                      const AdmmObserver& observer = {});
RecoveryResult AdmmL1(const GeneratorNetwork& net, const Matrix& M, const Vector& y,
                      const SolverConfig& cfg);

// Armijo-backtracked (sub)gradient descent on ||M G(z) - y||_1^2.
RecoveryResult GdSquaredL1(const GeneratorNetwork& net, const Matrix& M, const Vector& y,
                           const SolverConfig& cfg, const Vector& z_init);
RecoveryResult GdSquaredL1(const GeneratorNetwork& net, const Matrix& M, const Vector& y,
                           const SolverConfig& cfg);

// Gradient descent on ||M G(z) - y||_2^2, plus lambda_reg ||z||_2^2 when
// cfg.method is kGdSquaredL2Reg.
RecoveryResult GdSquaredL2(const GeneratorNetwork& net, const Matrix& M, const Vector& y,
                           const SolverConfig& cfg, const Vector& z_init);
RecoveryResult GdSquaredL2(const GeneratorNetwork& net, const Matrix& M, const Vector& y,
                           const SolverConfig& cfg);

using SolverFn = std::function<RecoveryResult(const GeneratorNetwork&, const Matrix&,
                                              const Vector&, const SolverConfig&,
                                              const Vector&)>;

// Solver entry point for cfg.method.
SolverFn SolverFor(Method method);

// Starting point of restart `index`: N(0, init_scale^2 I) from a substream of
// cfg.seed.
Vector RestartInit(const SolverConfig& cfg, int k, int index);

// Runs `solver` from cfg.restarts random starts and keeps the smallest eps_m.
RecoveryResult MultiRestart(const SolverFn& solver, const GeneratorNetwork& net,
                            const Matrix& M, const Vector& y, const SolverConfig& cfg);

// MultiRestart with the solver selected by cfg.method.
RecoveryResult Solve(const GeneratorNetwork& net, const Matrix& M, const Vector& y,
                     const SolverConfig& cfg);

struct Metrics {
  double eps_m = 0.0;
  std::optional<double> eps_r;
  std::optional<double> eps_r_per_pixel;
};

Metrics ComputeMetrics(const GeneratorNetwork& net, const Matrix& M, const Vector& y,
                       const Vector& z_hat, const Vector* x0 = nullptr);

// CSV with header iter,objective,primal_residual,eps_m.
void WriteTraceCsv(std::ostream& out, const std::vector<TraceEntry>& trace);

nlohmann::json ToJson(const RecoveryResult& result);

}  // namespace genrec

#endif  // GENREC_SOLVERS_H_
