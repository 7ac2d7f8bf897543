#include "genrec/solvers.h"

#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <utility>

#include <Eigen/SVD>

#include "genrec/random.h"

namespace genrec {
namespace {

constexpr int kMaxBacktracks = 80;

bool AllFinite(const Vector& v) { return v.allFinite(); }

// Value, gradient and residual of a smooth-almost-everywhere objective.
struct Evaluation {
  double value = 0.0;
  Vector grad;
  Vector residual;  // M G(z) - y
};

enum class GdObjective { kSquaredL1, kSquaredL2, kSquaredL2Reg };

Evaluation Evaluate(GdObjective kind, const GeneratorNetwork& net, const Matrix& M,
                    const Vector& y, double lambda_reg, const Vector& z, bool with_grad) {
  Evaluation ev;
  Linearization lin;
  if (with_grad) {
    lin = net.Linearize(z);
  } else {
    lin.output = net.Forward(z);
  }
  ev.residual = M * lin.output - y;
  if (kind == GdObjective::kSquaredL1) {
    const double l1 = ev.residual.lpNorm<1>();
    ev.value = l1 * l1;
    if (with_grad) {
      const Vector sign = ev.residual.unaryExpr(
          [](double r) { return r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0); });
      ev.grad = 2.0 * l1 * (lin.jacobian.transpose() * (M.transpose() * sign));
    }
  } else {
    ev.value = ev.residual.squaredNorm();
    if (with_grad) {
      ev.grad = 2.0 * (lin.jacobian.transpose() * (M.transpose() * ev.residual));
    }
    if (kind == GdObjective::kSquaredL2Reg) {
      ev.value += lambda_reg * z.squaredNorm();
      if (with_grad) ev.grad += 2.0 * lambda_reg * z;
    }
  }
  return ev;
}

void CheckShapes(const GeneratorNetwork& net, const Matrix& M, const Vector& y,
                 const Vector& z_init) {
  if (M.cols() != net.output_dim()) {
    throw std::invalid_argument("measurement matrix has " + std::to_string(M.cols()) +
                                " columns, generator outputs " +
                                std::to_string(net.output_dim()));
  }
  if (M.rows() != y.size()) {
    throw std::invalid_argument("measurement matrix rows do not match y");
  }
  if (z_init.size() != net.input_dim()) {
    throw std::invalid_argument("initial latent vector has the wrong length");
  }
}

// Armijo backtracking with a Barzilai-Borwein trial step.
RecoveryResult GradientDescent(GdObjective kind, Method method, const GeneratorNetwork& net,
                               const Matrix& M, const Vector& y, const SolverConfig& cfg,
                               const Vector& z_init) {
  cfg.Validate();
  CheckShapes(net, M, y, z_init);

  RecoveryResult result;
  result.method = method;
  Vector z = z_init;
  Evaluation ev = Evaluate(kind, net, M, y, cfg.lambda_reg, z, true);
  if (!std::isfinite(ev.value) || !AllFinite(ev.grad)) {
    throw DivergenceError("objective is not finite at the starting point", {});
  }
  result.trace.push_back({0, ev.value, ev.residual.norm(), ev.residual.lpNorm<1>()});

  Vector z_prev;
  Vector grad_prev;
  int iter = 0;
  bool converged = ev.grad.isZero(0.0);
  while (!converged && iter < cfg.max_iters) {
    double step = cfg.step_init;
    if (iter > 0) {
      const Vector s = z - z_prev;
      const double sy = s.dot(ev.grad - grad_prev);
      const double bb = s.squaredNorm() / sy;
      if (sy > 0.0 && std::isfinite(bb) && bb > 0.0) step = bb;
    }
    const double grad_sq = ev.grad.squaredNorm();
    bool accepted = false;
    Vector z_try;
    for (int bt = 0; bt < kMaxBacktracks; ++bt) {
      z_try = z - step * ev.grad;
      const double value =
          Evaluate(kind, net, M, y, cfg.lambda_reg, z_try, false).value;
      if (std::isfinite(value) && value <= ev.value - cfg.armijo_c * step * grad_sq) {
        accepted = true;
        break;
      }
      step *= cfg.armijo_shrink;
    }
    if (!accepted) break;  // No descent along the (sub)gradient.

    ++iter;
    const double step_norm = step * std::sqrt(grad_sq);
    z_prev = std::move(z);
    grad_prev = std::move(ev.grad);
    z = std::move(z_try);
    ev = Evaluate(kind, net, M, y, cfg.lambda_reg, z, true);
    if (!std::isfinite(ev.value) || !AllFinite(ev.grad) || !AllFinite(z)) {
      throw DivergenceError("gradient descent produced a non-finite iterate",
                            std::move(result.trace));
    }
    result.trace.push_back({iter, ev.value, ev.residual.norm(), ev.residual.lpNorm<1>()});
    converged = step_norm < cfg.tol_step || ev.grad.isZero(0.0);
  }

  result.iters_used = iter;
  result.converged = converged;
  result.z_hat = z;
  result.z_last = z;
  result.x_hat = net.Forward(z);
  result.eps_m = (y - M * result.x_hat).lpNorm<1>();
  return result;
}

}  // namespace

const char* MethodName(Method method) {
  switch (method) {
    case Method::kAdmmL1: return "admm-l1";
    case Method::kGdSquaredL1: return "gd-l1sq";
    case Method::kGdSquaredL2: return "gd-l2sq";
    case Method::kGdSquaredL2Reg: return "gd-l2sq-reg";
  }
  return "unknown";
}

Method MethodFromName(const std::string& name) {
  if (name == "admm-l1") return Method::kAdmmL1;
  if (name == "gd-l1sq") return Method::kGdSquaredL1;
  if (name == "gd-l2sq") return Method::kGdSquaredL2;
  if (name == "gd-l2sq-reg") return Method::kGdSquaredL2Reg;
  throw std::invalid_argument("unknown solver method '" + name + "'");
}

void SolverConfig::Validate() const {
  if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
  if (restarts < 1) throw std::invalid_argument("restarts must be >= 1");
  if (!(rho > 0.0)) throw std::invalid_argument("rho must be > 0");
  if (!(lambda_reg >= 0.0)) throw std::invalid_argument("lambda_reg must be >= 0");
  if (!(init_scale >= 0.0)) throw std::invalid_argument("init_scale must be >= 0");
  if (!(step_init > 0.0)) throw std::invalid_argument("step_init must be > 0");
  if (!(armijo_c > 0.0 && armijo_c < 1.0)) {
    throw std::invalid_argument("armijo_c must lie in (0, 1)");
  }
  if (!(armijo_shrink > 0.0 && armijo_shrink < 1.0)) {
    throw std::invalid_argument("armijo_shrink must lie in (0, 1)");
  }
  if (!(tol_step > 0.0)) throw std::invalid_argument("tol_step must be > 0");
  if (tol_primal && !(*tol_primal > 0.0)) {
    throw std::invalid_argument("tol_primal must be > 0");
  }
  if (zero_tol && !(*zero_tol > 0.0)) throw std::invalid_argument("zero_tol must be > 0");
}

double SolverConfig::PrimalTolerance(int m) const {
  return tol_primal.value_or(1e-6 * std::sqrt(static_cast<double>(m)));
}

double SolverConfig::ZeroTolerance(const Vector& y) const {
  return zero_tol.value_or(1e-8 * (1.0 + y.lpNorm<Eigen::Infinity>()));
}

nlohmann::json ToJson(const SolverConfig& cfg) {
  nlohmann::json j = {{"method", MethodName(cfg.method)},
                      {"rho", cfg.rho},
                      {"lambda_reg", cfg.lambda_reg},
                      {"max_iters", cfg.max_iters},
                      {"restarts", cfg.restarts},
                      {"init_scale", cfg.init_scale},
                      {"step_init", cfg.step_init},
                      {"armijo_c", cfg.armijo_c},
                      {"armijo_shrink", cfg.armijo_shrink},
                      {"tol_step", cfg.tol_step},
                      {"seed", cfg.seed}};
  j["tol_primal"] = cfg.tol_primal ? nlohmann::json(*cfg.tol_primal) : nlohmann::json();
  j["zero_tol"] = cfg.zero_tol ? nlohmann::json(*cfg.zero_tol) : nlohmann::json();
  return j;
}

SolverConfig SolverConfigFromJson(const nlohmann::json& j, SolverConfig cfg) {
  if (j.contains("method")) cfg.method = MethodFromName(j.at("method").get<std::string>());
  cfg.rho = j.value("rho", cfg.rho);
  cfg.lambda_reg = j.value("lambda_reg", cfg.lambda_reg);
  cfg.max_iters = j.value("max_iters", cfg.max_iters);
  cfg.restarts = j.value("restarts", cfg.restarts);
  cfg.init_scale = j.value("init_scale", cfg.init_scale);
  cfg.step_init = j.value("step_init", cfg.step_init);
  cfg.armijo_c = j.value("armijo_c", cfg.armijo_c);
  cfg.armijo_shrink = j.value("armijo_shrink", cfg.armijo_shrink);
  cfg.tol_step = j.value("tol_step", cfg.tol_step);
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("tol_primal")) {
    cfg.tol_primal = j.at("tol_primal").is_null()
                         ? std::nullopt
                         : std::optional<double>(j.at("tol_primal").get<double>());
  }
  if (j.contains("zero_tol")) {
    cfg.zero_tol = j.at("zero_tol").is_null()
                       ? std::nullopt
                       : std::optional<double>(j.at("zero_tol").get<double>());
  }
  cfg.Validate();
  return cfg;
}

Vector SoftThreshold(const Vector& v, double tau) {
  return v.unaryExpr([tau](double x) {
    if (x > tau) return x - tau;
    if (x < -tau) return x + tau;
    return 0.0;
  });
}

Matrix PseudoInverse(const Matrix& a) {
  if (!a.allFinite()) throw std::invalid_argument("PseudoInverse: non-finite input");
  if (a.size() == 0) return Matrix::Zero(a.cols(), a.rows());
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double cutoff = std::numeric_limits<double>::epsilon() *
                        static_cast<double>(std::max(a.rows(), a.cols())) *
                        (sv.size() > 0 ? sv(0) : 0.0);
  Vector inv = Vector::Zero(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff) inv(i) = 1.0 / sv(i);
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

RecoveryResult AdmmL1(const GeneratorNetwork& net, const Matrix& M, const Vector& y,
                      const SolverConfig& cfg, const Vector& z_init,
                      const AdmmObserver& observer) {
  cfg.Validate();
  CheckShapes(net, M, y, z_init);
  const double rho = cfg.rho;
  const double tol_primal = cfg.PrimalTolerance(static_cast<int>(M.rows()));

  RecoveryResult result;
  result.method = Method::kAdmmL1;

  Vector z = z_init;
  Linearization lin = net.Linearize(z);
  Vector measured = M * lin.output;
  // Feasible start: the constraint M G(z) - w - y = 0 holds exactly.
  Vector w = measured - y;
  Vector lambda = Vector::Zero(y.size());
  if (!AllFinite(measured)) {
    throw DivergenceError("generator output is not finite at the starting point", {});
  }

  Vector best_z = z;
  double best_eps = (measured - y).lpNorm<1>();
  result.trace.push_back({0, best_eps, 0.0, best_eps});

  int iter = 0;
  bool converged = false;
  while (iter < cfg.max_iters) {
    ++iter;
    const Matrix linearized = M * lin.jacobian;
    const Vector rhs = w + y - lambda / rho - (measured - linearized * z);
    Vector z_next = PseudoInverse(linearized) * rhs;
    Linearization lin_next = net.Linearize(z_next);
    Vector measured_next = M * lin_next.output;
    const Vector shrink_input = measured_next - y + lambda / rho;
    Vector w_next = SoftThreshold(shrink_input, 1.0 / rho);
    const Vector constraint = measured_next - w_next - y;
    Vector lambda_next = lambda + rho * constraint;

    const double primal = constraint.norm();
    const double eps_m = (measured_next - y).lpNorm<1>();
    if (!AllFinite(z_next) || !AllFinite(lambda_next) || !std::isfinite(eps_m)) {
      throw DivergenceError("linearized ADMM produced a non-finite iterate",
                            std::move(result.trace));
    }
    if (observer) {
      observer(AdmmIterate{iter, z, linearized, rhs, z_next, shrink_input, w_next,
                           lambda_next, rho});
    }
    result.trace.push_back({iter, eps_m, primal, eps_m});
    if (eps_m < best_eps) {
      best_eps = eps_m;
      best_z = z_next;
    }
    const double step = (z_next - z).norm();

    z = std::move(z_next);
    lin = std::move(lin_next);
    measured = std::move(measured_next);
    w = std::move(w_next);
    lambda = std::move(lambda_next);

    if (primal < tol_primal && step < cfg.tol_step) {
      converged = true;
      break;
    }
  }

  result.iters_used = iter;
  result.converged = converged;
  result.z_last = z;
  result.z_hat = best_z;
  result.x_hat = net.Forward(best_z);
  result.eps_m = (y - M * result.x_hat).lpNorm<1>();
  return result;
}

Vector RestartInit(const SolverConfig& cfg, int k, int index) {
  Rng rng(DeriveSeed(cfg.seed, static_cast<uint64_t>(index)));
  return cfg.init_scale * rng.NormalVector(k);
}

RecoveryResult AdmmL1(const GeneratorNetwork& net, const Matrix& M, const Vector& y,
                      const SolverConfig& cfg) {
  return AdmmL1(net, M, y, cfg, RestartInit(cfg, net.input_dim(), 0));
}

RecoveryResult GdSquaredL1(const GeneratorNetwork& net, const Matrix& M, const Vector& y,
                           const SolverConfig& cfg, const Vector& z_init) {
  return GradientDescent(GdObjective::kSquaredL1, Method::kGdSquaredL1, net, M, y, cfg,
                         z_init);
}

RecoveryResult GdSquaredL1(const GeneratorNetwork& net, const Matrix& M, const Vector& y,
                           const SolverConfig& cfg) {
  return GdSquaredL1(net, M, y, cfg, RestartInit(cfg, net.input_dim(), 0));
}

RecoveryResult GdSquaredL2(const GeneratorNetwork& net, const Matrix& M, const Vector& y,
                           const SolverConfig& cfg, const Vector& z_init) {
  if (cfg.method == Method::kGdSquaredL2Reg) {
    return GradientDescent(GdObjective::kSquaredL2Reg, Method::kGdSquaredL2Reg, net, M, y,
                           cfg, z_init);
  }
  return GradientDescent(GdObjective::kSquaredL2, Method::kGdSquaredL2, net, M, y, cfg,
                         z_init);
}

RecoveryResult GdSquaredL2(const GeneratorNetwork& net, const Matrix& M, const Vector& y,
                           const SolverConfig& cfg) {
  return GdSquaredL2(net, M, y, cfg, RestartInit(cfg, net.input_dim(), 0));
}

SolverFn SolverFor(Method method) {
  switch (method) {
    case Method::kAdmmL1:
      return [](const GeneratorNetwork& net, const Matrix& M, const Vector& y,
                const SolverConfig& cfg, const Vector& z0) {
        return AdmmL1(net, M, y, cfg, z0);
      };
    case Method::kGdSquaredL1:
      return [](const GeneratorNetwork& net, const Matrix& M, const Vector& y,
                const SolverConfig& cfg, const Vector& z0) {
        return GdSquaredL1(net, M, y, cfg, z0);
      };
    case Method::kGdSquaredL2:
    case Method::kGdSquaredL2Reg:
      return [](const GeneratorNetwork& net, const Matrix& M, const Vector& y,
                const SolverConfig& cfg, const Vector& z0) {
        return GdSquaredL2(net, M, y, cfg, z0);
      };
  }
  throw std::invalid_argument("unknown solver method");
}

RecoveryResult MultiRestart(const SolverFn& solver, const GeneratorNetwork& net,
                            const Matrix& M, const Vector& y, const SolverConfig& cfg) {
  cfg.Validate();
  std::optional<RecoveryResult> best;
  std::optional<DivergenceError> last_error;
  for (int r = 0; r < cfg.restarts; ++r) {
    try {
      RecoveryResult run = solver(net, M, y, cfg, RestartInit(cfg, net.input_dim(), r));
      run.restart_index = r;
      if (!best || run.eps_m < best->eps_m) best = std::move(run);
    } catch (const DivergenceError& err) {
      last_error = err;
    }
  }
  if (!best) throw *last_error;
  return std::move(*best);
}

RecoveryResult Solve(const GeneratorNetwork& net, const Matrix& M, const Vector& y,
                     const SolverConfig& cfg) {
  return MultiRestart(SolverFor(cfg.method), net, M, y, cfg);
}

Metrics ComputeMetrics(const GeneratorNetwork& net, const Matrix& M, const Vector& y,
                       const Vector& z_hat, const Vector* x0) {
  const Vector x_hat = net.Forward(z_hat);
  if (M.cols() != x_hat.size() || M.rows() != y.size()) {
    throw std::invalid_argument("ComputeMetrics: inconsistent shapes");
  }
  Metrics out;
  out.eps_m = (y - M * x_hat).lpNorm<1>();
  if (x0 != nullptr) {
    if (x0->size() != x_hat.size()) {
      throw std::invalid_argument("ComputeMetrics: ground truth has the wrong length");
    }
    out.eps_r = (*x0 - x_hat).squaredNorm();
    out.eps_r_per_pixel = *out.eps_r / static_cast<double>(x_hat.size());
  }
  return out;
}

void WriteTraceCsv(std::ostream& out, const std::vector<TraceEntry>& trace) {
  const auto old_precision = out.precision(17);
  out << "iter,objective,primal_residual,eps_m\n";
  for (const TraceEntry& t : trace) {
    out << t.iter << ',' << t.objective << ',' << t.primal_residual << ',' << t.eps_m
        << '\n';
  }
  out.precision(old_precision);
}

nlohmann::json ToJson(const RecoveryResult& result) {
  nlohmann::json j = {{"method", MethodName(result.method)},
                      {"z_hat", VectorToJson(result.z_hat)},
                      {"x_hat", VectorToJson(result.x_hat)},
                      {"z_last", VectorToJson(result.z_last)},
                      {"eps_m", result.eps_m},
                      {"iters_used", result.iters_used},
                      {"restart_index", result.restart_index},
                      {"converged", result.converged},
                      {"z_hat_is", result.method == Method::kAdmmL1 ? "best_iterate"
                                                                    : "last_iterate"}};
  j["eps_r"] = result.eps_r ? nlohmann::json(*result.eps_r) : nlohmann::json();
  return j;
}

}  // namespace genrec
