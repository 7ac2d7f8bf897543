// genrec: command-line front end for network/instance generation, recovery,
// sweeps, theory verification and report export.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "genrec/generator.h"
#include "genrec/harness.h"
#include "genrec/measurement.h"
#include "genrec/solvers.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace genrec {
namespace {

json ReadJson(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  return json::parse(in);
}

void WriteText(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

void WriteJson(const fs::path& path, const json& j) { WriteText(path, j.dump(2) + "\n"); }

// Commands that produce a single file echo their resolved config next to it.
fs::path RunEchoFor(const fs::path& output) { return fs::path(output.string() + ".run.json"); }

Activation ParseActivation(const std::string& kind, double h) {
  if (kind == "identity") return Activation::Identity();
  if (kind == "relu") return Activation::Relu();
  if (kind == "leaky_relu") return Activation::LeakyRelu(h);
  throw std::invalid_argument("unknown activation '" + kind + "'");
}

struct GenNetArgs {
  std::vector<int> dims;
  std::string activation = "relu";
  double h = 0.2;
  uint64_t seed = 0;
  std::string out;
};

int GenNet(const GenNetArgs& a) {
  const GeneratorNetwork net = RandomGaussianNet(a.dims, ParseActivation(a.activation, a.h), a.seed);
  WriteJson(a.out, ToJson(net));
  WriteJson(RunEchoFor(a.out), {{"command", "gen-net"},
                                {"dims", a.dims},
                                {"activation", ActivationToJson(net.activation())},
                                {"seed", a.seed},
                                {"out", a.out}});
  return 0;
}

struct GenInstanceArgs {
  std::string net;
  int m = 0;
  int outliers = 0;
  double noise = 0.0;
  std::string matrix = "gaussian";
  double outlier_lo = 5000.0;
  double outlier_hi = 10000.0;
  bool signed_outliers = false;
  uint64_t seed = 0;
  std::string out;
};

int GenInstance(const GenInstanceArgs& a) {
  const GeneratorNetwork net = NetworkFromJson(ReadJson(a.net));
  MeasurementModel model;
  model.m = a.m;
  model.n = net.output_dim();
  model.matrix_kind = MatrixKindFromName(a.matrix);
  model.outliers = a.outliers;
  model.outlier_lo = a.outlier_lo;
  model.outlier_hi = a.outlier_hi;
  model.signed_outliers = a.signed_outliers;
  model.noise_target = a.noise;
  const ProblemInstance inst = BuildInstance(net, model, std::nullopt, a.seed);
  WriteJson(a.out, ToJson(inst));
  WriteJson(RunEchoFor(a.out), {{"command", "gen-instance"},
                                {"net", a.net},
                                {"measurement", ToJson(model)},
                                {"seed", a.seed},
                                {"out", a.out}});
  return 0;
}

struct SolveArgs {
  std::string net;
  std::string instance;
  std::string config;
  std::optional<std::string> method;
  std::optional<double> rho;
  std::optional<double> lambda_reg;
  std::optional<int> max_iters;
  std::optional<int> restarts;
  std::optional<uint64_t> seed;
  std::string out;
};

int SolveCommand(const SolveArgs& a) {
  const GeneratorNetwork net = NetworkFromJson(ReadJson(a.net));
  const ProblemInstance inst = InstanceFromJson(ReadJson(a.instance));
  json overrides = a.config.empty() ? json::object() : ReadJson(a.config);
  if (overrides.contains("solver")) overrides = overrides.at("solver");
  if (a.method) overrides["method"] = *a.method;
  if (a.rho) overrides["rho"] = *a.rho;
  if (a.lambda_reg) overrides["lambda_reg"] = *a.lambda_reg;
  if (a.max_iters) overrides["max_iters"] = *a.max_iters;
  if (a.restarts) overrides["restarts"] = *a.restarts;
  if (a.seed) overrides["seed"] = *a.seed;
  const SolverConfig cfg = SolverConfigFromJson(overrides);

  const RecoveryResult res = Solve(net, inst.M, inst.y, cfg);
  const Metrics met = ComputeMetrics(net, inst.M, inst.y, res.z_hat, &inst.x0);
  json result = ToJson(res);
  result["eps_r"] = *met.eps_r;
  result["eps_r_per_pixel"] = *met.eps_r_per_pixel;
  result["z_error_rel"] = inst.z0.norm() > 0 ? (res.z_hat - inst.z0).norm() / inst.z0.norm()
                                             : (res.z_hat - inst.z0).norm();
  if (a.out.empty()) {
    std::cout << result.dump(2) << "\n";
    return 0;
  }
  const fs::path dir(a.out);
  WriteJson(dir / "result.json", result);
  std::ostringstream trace;
  WriteTraceCsv(trace, res.trace);
  WriteText(dir / "trace.csv", trace.str());
  WriteJson(dir / "run.json", {{"command", "solve"},
                               {"net", a.net},
                               {"instance", a.instance},
                               {"solver", ToJson(cfg)},
                               {"out", a.out}});
  std::cout << MethodName(res.method) << ": eps_m=" << res.eps_m << " eps_r=" << *met.eps_r
            << " restart=" << res.restart_index << "\n";
  return 0;
}

struct SweepArgs {
  std::string config;
  std::string out;
  std::optional<uint64_t> seed;
  std::optional<int> workers;
};

ExperimentSpec LoadSpec(const std::string& config, const std::string& out,
                        const std::optional<uint64_t>& seed, const std::optional<int>& workers) {
  ExperimentSpec spec = config.empty() ? ExperimentSpec{} : ExperimentSpecFromJson(ReadJson(config));
  if (!out.empty()) spec.output_dir = out;
  if (seed) spec.seed = *seed;
  if (workers) spec.workers = *workers;
  return spec;
}

int SweepCommand(const SweepArgs& a) {
  ExperimentSpec spec = LoadSpec(a.config, a.out, a.seed, a.workers);
  if (spec.output_dir.empty()) spec.output_dir = "genrec_out/" + spec.name;
  const SweepTable table = RunSweep(spec);
  WriteSummaryCsv(std::cout, table.summary);
  std::cerr << "wrote " << table.rows.size() << " rows to " << spec.output_dir << "\n";
  return 0;
}

int VerifyCommand(const SweepArgs& a) {
  ExperimentSpec spec = LoadSpec(a.config, a.out, a.seed, a.workers);
  if (spec.output_dir.empty()) spec.output_dir = "genrec_out/" + spec.name + "_verify";
  const VerificationManifest manifest = RunVerify(spec);
  for (const ConditionReport& r : manifest.reports) {
    std::cout << (r.failures == 0 ? "ok   " : (r.zero_failures_required ? "FAIL " : "info "))
              << r.condition_name << " trials=" << r.trials << " failures=" << r.failures
              << " min_margin=" << r.min_margin << "\n";
  }
  std::cout << (manifest.ok() ? "verification passed" : "verification FAILED") << "\n";
  return manifest.ok() ? 0 : 1;
}

struct ReportArgs {
  std::string results;
  std::string out;
};

int ReportCommand(const ReportArgs& a) {
  std::ifstream in(a.results);
  if (!in) throw std::runtime_error("cannot read '" + a.results + "'");
  const std::vector<SweepRow> rows = ReadSweepCsv(in);
  std::ostringstream report;
  WriteReportCsv(report, rows);
  if (a.out.empty()) {
    std::cout << report.str();
    return 0;
  }
  WriteText(a.out, report.str());
  WriteJson(RunEchoFor(a.out), {{"command", "report"}, {"results", a.results}, {"out", a.out}});
  return 0;
}

}  // namespace
}  // namespace genrec

int main(int argc, char** argv) {
  using namespace genrec;
  CLI::App app{"Robust recovery of generative-model signals from outlier-corrupted measurements"};
  app.require_subcommand(1);

  GenNetArgs net_args;
  auto* gen_net = app.add_subcommand("gen-net", "Sample a random Gaussian generator network");
  gen_net->add_option("--dims", net_args.dims, "Layer widths k,n1,...,nd")->required()->delimiter(',');
  gen_net->add_option("--activation", net_args.activation, "identity | relu | leaky_relu")
      ->check(CLI::IsMember({"identity", "relu", "leaky_relu"}));
  gen_net->add_option("--slope", net_args.h, "Leaky ReLU negative slope");
  gen_net->add_option("--seed", net_args.seed);
  gen_net->add_option("--out", net_args.out, "Network JSON path")->required();

  GenInstanceArgs inst_args;
  auto* gen_inst = app.add_subcommand("gen-instance", "Sample a measurement instance for a network");
  gen_inst->add_option("--net", inst_args.net)->required()->check(CLI::ExistingFile);
  gen_inst->add_option("--m", inst_args.m, "Number of measurements")->required();
  gen_inst->add_option("--outliers,-l", inst_args.outliers, "Number of outliers");
  gen_inst->add_option("--noise", inst_args.noise, "Target noise norm");
  gen_inst->add_option("--matrix", inst_args.matrix, "gaussian | identity");
  gen_inst->add_option("--outlier-lo", inst_args.outlier_lo);
  gen_inst->add_option("--outlier-hi", inst_args.outlier_hi);
  gen_inst->add_flag("--signed", inst_args.signed_outliers, "Random outlier signs");
  gen_inst->add_option("--seed", inst_args.seed);
  gen_inst->add_option("--out", inst_args.out, "Instance JSON path")->required();

  SolveArgs solve_args;
  auto* solve = app.add_subcommand("solve", "Recover the latent code of one instance");
  solve->add_option("--net", solve_args.net)->required()->check(CLI::ExistingFile);
  solve->add_option("--instance", solve_args.instance)->required()->check(CLI::ExistingFile);
  solve->add_option("--config", solve_args.config, "Solver config JSON")->check(CLI::ExistingFile);
  solve->add_option("--method", solve_args.method, "admm-l1 | gd-l1sq | gd-l2sq | gd-l2sq-reg")
      ->check(CLI::IsMember({"admm-l1", "gd-l1sq", "gd-l2sq", "gd-l2sq-reg"}));
  solve->add_option("--rho", solve_args.rho);
  solve->add_option("--lambda-reg", solve_args.lambda_reg);
  solve->add_option("--max-iters", solve_args.max_iters);
  solve->add_option("--restarts", solve_args.restarts);
  solve->add_option("--seed", solve_args.seed);
  solve->add_option("--out", solve_args.out, "Output directory (result.json, trace.csv)");

  SweepArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "Run a measurement or outlier sweep");
  sweep->add_option("--config", sweep_args.config)->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", sweep_args.out, "Output directory");
  sweep->add_option("--seed", sweep_args.seed);
  sweep->add_option("--workers", sweep_args.workers);

  SweepArgs verify_args;
  auto* verify = app.add_subcommand("verify", "Run the theory verification suite");
  verify->add_option("--config", verify_args.config)->check(CLI::ExistingFile);
  verify->add_option("--out", verify_args.out, "Output directory");
  verify->add_option("--seed", verify_args.seed);

  ReportArgs report_args;
  auto* report = app.add_subcommand("report", "Export plot-ready long-format CSV");
  report->add_option("--results", report_args.results, "results.csv from a sweep")
      ->required()->check(CLI::ExistingFile);
  report->add_option("--out", report_args.out, "Output CSV path (stdout if omitted)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen_net) return GenNet(net_args);
    if (*gen_inst) return GenInstance(inst_args);
    if (*solve) return SolveCommand(solve_args);
    if (*sweep) return SweepCommand(sweep_args);
    if (*verify) return VerifyCommand(verify_args);
    if (*report) return ReportCommand(report_args);
  } catch (const std::exception& e) {
    std::cerr << "genrec: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
