#include "genrec/harness.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "genrec/random.h"

namespace genrec {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const char* AxisName(SweepAxis axis) {
  return axis == SweepAxis::kOutliers ? "outliers" : "measurements";
}

SweepAxis AxisFromName(const std::string& name) {
  if (name == "measurements") return SweepAxis::kMeasurements;
  if (name == "outliers") return SweepAxis::kOutliers;
  throw std::invalid_argument("unknown sweep axis '" + name + "'");
}

std::filesystem::path PrepareOutputDir(const std::string& dir) {
  std::filesystem::path path(dir);
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec || !std::filesystem::is_directory(path)) {
    throw std::runtime_error("cannot create output directory '" + dir + "'");
  }
  return path;
}

std::ofstream OpenForWrite(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

void WriteJsonFile(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out = OpenForWrite(path);
  out << j.dump(2) << '\n';
}

std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

// --- verification checks ---------------------------------------------------

template <typename T>
T Param(const nlohmann::json& check, const char* key, T fallback) {
  return check.contains(key) ? check.at(key).get<T>() : fallback;
}

void Accumulate(ConditionReport& total, const ConditionReport& part) {
  total.trials += part.trials;
  total.failures += part.failures;
  total.min_margin = std::min(total.min_margin, part.min_margin);
}

std::vector<ConditionReport> RunCheck(const nlohmann::json& check, uint64_t seed) {
  const std::string name = check.at("check").get<std::string>();
  seed = Param<uint64_t>(check, "seed", seed);

  if (name == "jacobian_fd") {
    return {JacobianFiniteDifferenceCheck(Param(check, "nets", 50), Param(check, "max_depth", 4),
                                          Param(check, "max_width", 256), seed,
                                          Param(check, "step", 1e-5),
                                          Param(check, "rel_tol", 1e-5))};
  }
  if (name == "l0_round_trip") {
    return {L0RoundTripCheck(Param(check, "instances", 24), seed,
                             Param(check, "grid_points_1d", 201),
                             Param(check, "grid_points_2d", 41))};
  }
  if (name == "every_r_rows_full_rank") {
    const double tol = Param(check, "sv_rel_tol", 1e-10);
    if (check.contains("W")) {
      const Matrix W = MatrixFromJson(check.at("W"));
      ConditionReport rep = EveryRRowsFullRank(W, check.at("r").get<int>(), tol);
      rep.params["source"] = "supplied matrix";
      return {rep};
    }
    const int n = Param(check, "n", 12);
    const int k = Param(check, "k", 3);
    const int l = Param(check, "l", 2);
    const int hidden = Param(check, "hidden", 6);
    const int seeds = Param(check, "seeds", 100);
    const int r = n - (2 * l + 1);
    ConditionReport total;
    total.condition_name = "every_r_rows_full_rank";
    total.min_margin = std::numeric_limits<double>::infinity();
    for (int s = 0; s < seeds; ++s) {
      const GeneratorNetwork net = RandomGaussianNet({k, hidden, n}, Activation::Identity(),
                                                     DeriveSeed(seed, static_cast<uint64_t>(s)));
      Accumulate(total, EveryRRowsFullRank(ComposeLinear(net), r, tol));
    }
    total.params = {{"n", n}, {"k", k}, {"l", l}, {"r", r}, {"hidden", hidden},
                    {"seeds", seeds}, {"seed", seed}, {"sv_rel_tol", tol},
                    {"source", "composite H2 H1"}};
    return {total};
  }
  if (name == "gaussian_full_rank") {
    return {GaussianFullRank(Param(check, "m", 40), Param(check, "n", 60),
                             Param(check, "trials", 20), seed)};
  }
  if (name == "leaky_beta") {
    return {LeakyBetaSweep(Param<int64_t>(check, "trials", 100000), seed)};
  }
  if (name == "leaky_layer_beta") {
    const int nets = Param(check, "nets", 100);
    const auto dims = Param(check, "dims", std::vector<int>{4, 16, 32, 64});
    const int pairs = Param(check, "pairs", 5);
    ConditionReport total;
    total.condition_name = "leaky_layer_beta";
    total.min_margin = std::numeric_limits<double>::infinity();
    double worst = 0.0;
    for (int i = 0; i < nets; ++i) {
      Rng rng(DeriveSeed(seed, static_cast<uint64_t>(i)));
      const double h = rng.Uniform(0.05, 1.0);
      const GeneratorNetwork net =
          RandomGaussianNet(dims, Activation::LeakyRelu(h), rng.engine()());
      const ConditionReport part = LeakyLayerBetaCheck(net, pairs, rng.engine()());
      worst = std::max(worst, part.params.at("worst_identity_mismatch").get<double>());
      Accumulate(total, part);
    }
    total.params = {{"nets", nets}, {"dims", dims}, {"pairs", pairs}, {"seed", seed},
                    {"biases", "gaussian"}, {"worst_identity_mismatch", worst}};
    return {total};
  }
  if (name == "relu_path_slope") {
    return {ReluPathSlopeCheck(Param<int64_t>(check, "cases", 1000), Param(check, "n", 50),
                               seed, Param(check, "rel_tol", 1e-9))};
  }
  if (name == "k_majority") {
    const auto dims = Param(check, "dims", std::vector<int>{10, 40, 160});
    const auto hs = Param(check, "h", std::vector<double>{0.2, 1.0});
    const auto grid = Param(check, "rho_grid", std::vector<double>{0.01, 0.02, 0.05, 0.1});
    const int64_t trials = Param<int64_t>(check, "trials", 1000);
    const double require_rho = Param(check, "require_rho", 0.02);
    const std::string mode_name = Param<std::string>(check, "mode", "worst_by_magnitude");
    SupportMode mode;
    if (mode_name == "worst_by_magnitude") {
      mode = SupportMode::kWorstByMagnitude;
    } else if (mode_name == "random") {
      mode = SupportMode::kRandom;
    } else {
      throw std::invalid_argument("unknown support mode '" + mode_name + "'");
    }
    std::vector<ConditionReport> out;
    for (size_t i = 0; i < hs.size(); ++i) {
      const GeneratorNetwork net =
          RandomGaussianNet(dims, Activation::LeakyRelu(hs[i]), DeriveSeed(seed, 2 * i));
      auto reports = EstimateRhoStar(net, trials, grid, mode, DeriveSeed(seed, 2 * i + 1));
      const double rho_hat = EmpiricalRhoStar(reports);
      for (ConditionReport& rep : reports) {
        rep.zero_failures_required = rep.params.at("rho").get<double>() <= require_rho;
        rep.params["rho_hat"] = rho_hat;
        out.push_back(std::move(rep));
      }
    }
    return out;
  }
  if (name == "norm_bounds") {
    const int n = Param(check, "n", 200);
    const double alpha = Param(check, "alpha", 0.5);
    const int cols = n - static_cast<int>(std::lround(alpha * n));
    Rng rng(DeriveSeed(seed, 0));
    const Matrix H = rng.NormalMatrix(n, cols);
    return {NormBoundsCheck(H, Param<int64_t>(check, "trials", 10000), Param(check, "h", 0.5),
                            Param(check, "rho_grid",
                                  std::vector<double>{0.01, 0.02, 0.05, 0.1, 0.2, 0.3}),
                            DeriveSeed(seed, 1))};
  }
  if (name == "worst_support_dominance") {
    return {WorstSupportDominance(Param(check, "n", 10), Param(check, "trials", 20), seed)};
  }
  throw std::invalid_argument("unknown check '" + name + "'");
}

}  // namespace

void ExperimentSpec::Validate() const {
  if (sweep_values.empty()) throw std::invalid_argument("sweep values must be nonempty");
  for (size_t i = 1; i < sweep_values.size(); ++i) {
    if (sweep_values[i] <= sweep_values[i - 1]) {
      throw std::invalid_argument("sweep values must be strictly increasing");
    }
  }
  if (trials_per_point < 1) throw std::invalid_argument("trials_per_point must be >= 1");
  if (solvers.empty()) throw std::invalid_argument("at least one solver config is required");
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");
  for (const SolverConfig& cfg : solvers) cfg.Validate();
}

ExperimentSpec ExperimentSpecFromJson(const nlohmann::json& j) {
  ExperimentSpec spec;
  spec.name = j.value("name", spec.name);
  spec.seed = j.value("seed", uint64_t{0});
  spec.workers = j.value("workers", 1);
  spec.output_dir = j.value("output_dir", std::string());
  spec.trials_per_point = j.value("trials_per_point", 1);
  if (j.contains("net")) {
    const auto& net = j.at("net");
    spec.net.dims = net.at("dims").get<std::vector<int>>();
    if (net.contains("activation")) spec.net.activation = ActivationFromJson(net.at("activation"));
    spec.net.seed = net.value("seed", uint64_t{0});
  }
  if (j.contains("measurement")) {
    spec.measurement = MeasurementModelFromJson(j.at("measurement"));
  }
  if (j.contains("sweep")) {
    spec.axis = AxisFromName(j.at("sweep").value("axis", std::string("measurements")));
    spec.sweep_values = j.at("sweep").at("values").get<std::vector<int>>();
  }
  if (j.contains("solvers")) {
    for (const auto& s : j.at("solvers")) spec.solvers.push_back(SolverConfigFromJson(s));
  }
  if (j.contains("checks")) spec.checks = j.at("checks");
  return spec;
}

nlohmann::json ToJson(const ExperimentSpec& spec) {
  nlohmann::json solvers = nlohmann::json::array();
  for (const SolverConfig& cfg : spec.solvers) solvers.push_back(ToJson(cfg));
  nlohmann::json j = {
      {"name", spec.name},
      {"seed", spec.seed},
      {"workers", spec.workers},
      {"output_dir", spec.output_dir},
      {"trials_per_point", spec.trials_per_point},
      {"net",
       {{"dims", spec.net.dims},
        {"activation", ActivationToJson(spec.net.activation)},
        {"seed", spec.net.seed}}},
      {"measurement", ToJson(spec.measurement)},
      {"sweep", {{"axis", AxisName(spec.axis)}, {"values", spec.sweep_values}}},
      {"solvers", solvers}};
  j["checks"] = spec.checks;
  return j;
}

uint64_t TrialSeed(uint64_t spec_seed, int point, int trial) {
  return DeriveSeed(DeriveSeed(spec_seed, static_cast<uint64_t>(point)),
                    static_cast<uint64_t>(trial));
}

void ParallelFor(int count, int workers, const std::function<void(int)>& fn) {
  const int threads = std::max(1, std::min(workers, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (std::thread& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

SweepTable RunSweep(const ExperimentSpec& spec) {
  spec.Validate();
  std::filesystem::path out_dir;
  if (!spec.output_dir.empty()) {
    out_dir = PrepareOutputDir(spec.output_dir);
    WriteJsonFile(out_dir / "run.json", ToJson(spec));
  }
  const GeneratorNetwork net = spec.net.Build();
  const int points = static_cast<int>(spec.sweep_values.size());
  const int tasks = points * spec.trials_per_point;
  std::vector<std::vector<SweepRow>> per_task(tasks);

  ParallelFor(tasks, spec.workers, [&](int task) {
    const int point = task / spec.trials_per_point;
    const int trial = task % spec.trials_per_point;
    const int value = spec.sweep_values[point];
    MeasurementModel model = spec.measurement;
    model.n = net.output_dim();
    if (spec.axis == SweepAxis::kMeasurements) {
      model.m = value;
    } else {
      model.outliers = value;
    }
    const uint64_t seed = TrialSeed(spec.seed, point, trial);
    const ProblemInstance inst = BuildInstance(net, model, std::nullopt, seed);
    for (const SolverConfig& base : spec.solvers) {
      SolverConfig cfg = base;
      cfg.seed = DeriveSeed(seed, base.seed);
      SweepRow row;
      row.sweep_value = value;
      row.trial = trial;
      row.solver = MethodName(cfg.method);
      row.seed = seed;
      const auto start = std::chrono::steady_clock::now();
      try {
        const RecoveryResult res = Solve(net, inst.M, inst.y, cfg);
        const Metrics met = ComputeMetrics(net, inst.M, inst.y, res.z_hat, &inst.x0);
        row.eps_m = met.eps_m;
        row.eps_r = *met.eps_r;
        row.eps_r_per_pixel = *met.eps_r_per_pixel;
        row.iters = res.iters_used;
        row.restart_index = res.restart_index;
      } catch (const DivergenceError&) {
        row.eps_m = row.eps_r = row.eps_r_per_pixel = kNaN;
        row.status = "diverged";
      }
      row.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - start)
                        .count();
      per_task[task].push_back(std::move(row));
    }
  });

  SweepTable table;
  for (auto& rows : per_task) {
    for (SweepRow& row : rows) table.rows.push_back(std::move(row));
  }
  table.summary = Summarize(table.rows);
  if (!out_dir.empty()) {
    std::ofstream results = OpenForWrite(out_dir / "results.csv");
    WriteSweepCsv(results, table.rows);
    std::ofstream summary = OpenForWrite(out_dir / "summary.csv");
    WriteSummaryCsv(summary, table.summary);
  }
  return table;
}

double Quantile(std::vector<double> values, double q) {
  values.erase(std::remove_if(values.begin(), values.end(),
                              [](double v) { return std::isnan(v); }),
               values.end());
  if (values.empty()) return kNaN;
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<size_t>(std::floor(pos));
  const auto hi = static_cast<size_t>(std::ceil(pos));
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<SummaryRow> Summarize(const std::vector<SweepRow>& rows) {
  // Groups keep first-appearance order.
  std::vector<std::pair<double, std::string>> keys;
  std::map<std::pair<double, std::string>, std::vector<const SweepRow*>> groups;
  for (const SweepRow& row : rows) {
    auto key = std::make_pair(row.sweep_value, row.solver);
    if (!groups.count(key)) keys.push_back(key);
    groups[key].push_back(&row);
  }
  std::vector<SummaryRow> summary;
  for (const auto& key : keys) {
    std::vector<double> eps_m, eps_r, per_pixel;
    for (const SweepRow* row : groups[key]) {
      eps_m.push_back(row->eps_m);
      eps_r.push_back(row->eps_r);
      per_pixel.push_back(row->eps_r_per_pixel);
    }
    SummaryRow s;
    s.sweep_value = key.first;
    s.solver = key.second;
    s.count = static_cast<int>(groups[key].size());
    s.median_eps_m = Quantile(eps_m, 0.5);
    s.median_eps_r = Quantile(eps_r, 0.5);
    s.q1_eps_r = Quantile(eps_r, 0.25);
    s.q3_eps_r = Quantile(eps_r, 0.75);
    s.iqr_eps_r = s.q3_eps_r - s.q1_eps_r;
    s.median_eps_r_per_pixel = Quantile(per_pixel, 0.5);
    summary.push_back(std::move(s));
  }
  return summary;
}

void WriteSweepCsv(std::ostream& out, const std::vector<SweepRow>& rows,
                   bool include_timing) {
  const auto old_precision = out.precision(17);
  out << "sweep_value,trial,solver,eps_m,eps_r,eps_r_per_pixel,iters,restart_index,seed,"
         "wall_ms,status\n";
  for (const SweepRow& r : rows) {
    out << r.sweep_value << ',' << r.trial << ',' << r.solver << ',' << r.eps_m << ','
        << r.eps_r << ',' << r.eps_r_per_pixel << ',' << r.iters << ',' << r.restart_index
        << ',' << r.seed << ',';
    if (include_timing) out << r.wall_ms;
    out << ',' << r.status << '\n';
  }
  out.precision(old_precision);
}

std::vector<SweepRow> ReadSweepCsv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("results CSV is empty");
  const std::vector<std::string> header = SplitCsvLine(line);
  if (header.size() < 10 || header[0] != "sweep_value" || header[2] != "solver") {
    throw std::runtime_error("results CSV has an unexpected header");
  }
  std::vector<SweepRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = SplitCsvLine(line);
    if (f.size() < 10) throw std::runtime_error("malformed results CSV row: " + line);
    SweepRow r;
    r.sweep_value = std::stod(f[0]);
    r.trial = std::stoi(f[1]);
    r.solver = f[2];
    r.eps_m = std::stod(f[3]);
    r.eps_r = std::stod(f[4]);
    r.eps_r_per_pixel = std::stod(f[5]);
    r.iters = std::stoi(f[6]);
    r.restart_index = std::stoi(f[7]);
    r.seed = std::stoull(f[8]);
    r.wall_ms = f[9].empty() ? 0.0 : std::stod(f[9]);
    if (f.size() > 10) r.status = f[10];
    rows.push_back(std::move(r));
  }
  return rows;
}

void WriteSummaryCsv(std::ostream& out, const std::vector<SummaryRow>& summary) {
  const auto old_precision = out.precision(17);
  out << "sweep_value,solver,count,median_eps_m,median_eps_r,q1_eps_r,q3_eps_r,iqr_eps_r,"
         "median_eps_r_per_pixel\n";
  for (const SummaryRow& s : summary) {
    out << s.sweep_value << ',' << s.solver << ',' << s.count << ',' << s.median_eps_m << ','
        << s.median_eps_r << ',' << s.q1_eps_r << ',' << s.q3_eps_r << ',' << s.iqr_eps_r
        << ',' << s.median_eps_r_per_pixel << '\n';
  }
  out.precision(old_precision);
}

void WriteReportCsv(std::ostream& out, const std::vector<SweepRow>& rows) {
  const auto old_precision = out.precision(17);
  out << "sweep_value,solver,metric,statistic,value\n";
  for (const SummaryRow& s : Summarize(rows)) {
    std::vector<double> eps_m, eps_r, per_pixel;
    for (const SweepRow& r : rows) {
      if (r.sweep_value != s.sweep_value || r.solver != s.solver) continue;
      eps_m.push_back(r.eps_m);
      eps_r.push_back(r.eps_r);
      per_pixel.push_back(r.eps_r_per_pixel);
    }
    const std::pair<const char*, const std::vector<double>*> metrics[] = {
        {"eps_m", &eps_m}, {"eps_r", &eps_r}, {"eps_r_per_pixel", &per_pixel}};
    for (const auto& [metric, values] : metrics) {
      const std::pair<const char*, double> stats[] = {{"median", 0.5}, {"q1", 0.25},
                                                      {"q3", 0.75}};
      for (const auto& [stat, q] : stats) {
        out << s.sweep_value << ',' << s.solver << ',' << metric << ',' << stat << ','
            << Quantile(*values, q) << '\n';
      }
    }
  }
  out.precision(old_precision);
}

bool VerificationManifest::ok() const {
  return std::none_of(reports.begin(), reports.end(), [](const ConditionReport& r) {
    return r.zero_failures_required && r.failures > 0;
  });
}

nlohmann::json VerificationManifest::ToJson() const {
  nlohmann::json list = nlohmann::json::array();
  for (const ConditionReport& r : reports) list.push_back(genrec::ToJson(r));
  return {{"ok", ok()}, {"reports", list}};
}

nlohmann::json DefaultVerifySuite() {
  return nlohmann::json::array({
      {{"check", "jacobian_fd"}},
      {{"check", "l0_round_trip"}},
      {{"check", "every_r_rows_full_rank"}},
      {{"check", "gaussian_full_rank"}},
      {{"check", "leaky_beta"}},
      {{"check", "leaky_layer_beta"}},
      {{"check", "relu_path_slope"}},
      {{"check", "k_majority"}},
      {{"check", "norm_bounds"}},
      {{"check", "worst_support_dominance"}},
  });
}

VerificationManifest RunChecks(const nlohmann::json& checks, uint64_t seed) {
  if (!checks.is_array()) throw std::invalid_argument("checks must be a JSON array");
  VerificationManifest manifest;
  for (size_t i = 0; i < checks.size(); ++i) {
    for (ConditionReport& rep : RunCheck(checks[i], DeriveSeed(seed, i))) {
      manifest.reports.push_back(std::move(rep));
    }
  }
  return manifest;
}

VerificationManifest RunVerify(const ExperimentSpec& spec) {
  const nlohmann::json checks = spec.checks.is_null() ? DefaultVerifySuite() : spec.checks;
  VerificationManifest manifest = RunChecks(checks, spec.seed);
  if (!spec.output_dir.empty()) {
    const auto dir = PrepareOutputDir(spec.output_dir);
    nlohmann::json run = ToJson(spec);
    run["checks"] = checks;
    WriteJsonFile(dir / "run.json", run);
    nlohmann::json doc = manifest.ToJson();
    doc["name"] = spec.name;
    doc["seed"] = spec.seed;
    WriteJsonFile(dir / "manifest.json", doc);
  }
  return manifest;
}

}  // namespace genrec
