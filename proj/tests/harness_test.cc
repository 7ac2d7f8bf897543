#include "genrec/harness.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <gtest/gtest.h>

namespace genrec {
namespace {

namespace fs = std::filesystem;

SolverConfig Solver(Method method, int restarts, int max_iters) {
  SolverConfig cfg;
  cfg.method = method;
  cfg.restarts = restarts;
  cfg.max_iters = max_iters;
  return cfg;
}

std::string TempDir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("genrec_harness_" + name);
  fs::remove_all(dir);
  return dir.string();
}

double Median(const std::vector<SummaryRow>& summary, double value, const std::string& solver) {
  for (const SummaryRow& s : summary) {
    if (s.sweep_value == value && s.solver == solver) return s.median_eps_r;
  }
  ADD_FAILURE() << "missing summary row " << value << " " << solver;
  return NAN;
}

std::string CsvWithoutTiming(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  WriteSweepCsv(out, rows, false);
  return out.str();
}

TEST(RunSweep, CleanLinearPointRecoversExactly) {
  ExperimentSpec spec;
  spec.net = {{4, 12, 40}, Activation::Identity(), 3};
  spec.sweep_values = {30};
  spec.solvers = {Solver(Method::kGdSquaredL2, 1, 1000)};
  spec.seed = 5;
  const SweepTable table = RunSweep(spec);
  ASSERT_EQ(table.rows.size(), 1u);
  EXPECT_EQ(table.rows[0].status, "ok");
  EXPECT_LT(table.rows[0].eps_r, 1e-8);
  EXPECT_EQ(table.rows[0].seed, TrialSeed(5, 0, 0));
  ASSERT_EQ(table.summary.size(), 1u);
  EXPECT_EQ(table.summary[0].count, 1);
}

TEST(RunSweep, MeasurementSweepTrend) {
  ExperimentSpec spec;
  spec.net = {{5, 20, 200}, Activation::LeakyRelu(0.2), 1};
  spec.measurement.outliers = 3;
  spec.measurement.noise_target = 1.0;
  spec.sweep_values = {25, 50, 100, 200, 400};
  spec.trials_per_point = 5;
  spec.solvers = {Solver(Method::kAdmmL1, 4, 400), Solver(Method::kGdSquaredL1, 4, 400),
                  Solver(Method::kGdSquaredL2, 4, 400)};
  const SweepTable table = RunSweep(spec);
  EXPECT_EQ(table.rows.size(), 5u * 5u * 3u);
  for (const char* solver : {"admm-l1", "gd-l1sq"}) {
    for (size_t i = 1; i < spec.sweep_values.size(); ++i) {
      EXPECT_LE(Median(table.summary, spec.sweep_values[i], solver),
                Median(table.summary, spec.sweep_values[i - 1], solver))
          << solver << " at m=" << spec.sweep_values[i];
    }
    EXPECT_LE(1e3 * Median(table.summary, 400, solver), Median(table.summary, 400, "gd-l2sq"))
        << solver;
  }
}

// Smallest m on the grid from which the median per-pixel error stays below
// the threshold for every larger m as well.
int MeasurementsNeeded(const SweepTable& table, const std::vector<int>& grid, double threshold) {
  int needed = -1;
  for (auto it = grid.rbegin(); it != grid.rend(); ++it) {
    double median = NAN;
    for (const SummaryRow& s : table.summary) {
      if (s.sweep_value == *it) median = s.median_eps_r_per_pixel;
    }
    if (!(median < threshold)) break;
    needed = *it;
  }
  return needed;
}

TEST(RunSweep, MoreOutliersNeedMoreMeasurements) {
  const std::vector<int> grid = {8, 12, 16, 20, 30, 40, 60, 80, 110, 150, 200};
  for (Method method : {Method::kAdmmL1, Method::kGdSquaredL1}) {
    std::vector<int> needed;
    for (int l : {5, 10, 25, 50}) {
      ExperimentSpec spec;
      spec.net = {{5, 20, 200}, Activation::LeakyRelu(0.2), 1};
      spec.measurement.outliers = l;
      for (int m : grid) {
        if (m > l) spec.sweep_values.push_back(m);
      }
      spec.trials_per_point = 3;
      spec.solvers = {Solver(method, 4, 400)};
      needed.push_back(MeasurementsNeeded(RunSweep(spec), spec.sweep_values, 1e-6));
      EXPECT_GT(needed.back(), 0) << "l=" << l;
    }
    for (size_t i = 1; i < needed.size(); ++i) {
      EXPECT_GE(needed[i], needed[i - 1]) << MethodName(method);
    }
    EXPECT_GT(needed.back(), needed.front()) << MethodName(method);
  }
}

TEST(RunSweep, OutlierAxisOverridesOutlierCount) {
  ExperimentSpec spec;
  spec.net = {{3, 10, 30}, Activation::Relu(), 2};
  spec.measurement.m = 20;
  spec.axis = SweepAxis::kOutliers;
  spec.sweep_values = {1, 4};
  spec.solvers = {Solver(Method::kGdSquaredL1, 1, 50)};
  const SweepTable table = RunSweep(spec);
  ASSERT_EQ(table.rows.size(), 2u);
  EXPECT_EQ(table.rows[0].sweep_value, 1);
  EXPECT_EQ(table.rows[1].sweep_value, 4);
}

TEST(RunSweep, DeterministicApartFromTimingAndWorkerCount) {
  ExperimentSpec spec;
  spec.net = {{3, 10, 30}, Activation::LeakyRelu(0.1), 4};
  spec.measurement.outliers = 2;
  spec.sweep_values = {10, 20};
  spec.trials_per_point = 3;
  spec.solvers = {Solver(Method::kAdmmL1, 2, 100), Solver(Method::kGdSquaredL2Reg, 2, 100)};
  spec.seed = 9;
  const std::string first = CsvWithoutTiming(RunSweep(spec).rows);
  EXPECT_EQ(first, CsvWithoutTiming(RunSweep(spec).rows));
  spec.workers = 3;
  EXPECT_EQ(first, CsvWithoutTiming(RunSweep(spec).rows));
  spec.seed = 10;
  EXPECT_NE(first, CsvWithoutTiming(RunSweep(spec).rows));
}

TEST(RunSweep, WritesOutputsAndRunEcho) {
  ExperimentSpec spec;
  spec.name = "io";
  spec.net = {{2, 8}, Activation::Relu(), 1};
  spec.sweep_values = {6};
  spec.trials_per_point = 2;
  spec.solvers = {Solver(Method::kGdSquaredL1, 1, 20)};
  spec.output_dir = TempDir("io");
  const SweepTable table = RunSweep(spec);
  for (const char* file : {"run.json", "results.csv", "summary.csv"}) {
    EXPECT_TRUE(fs::exists(fs::path(spec.output_dir) / file)) << file;
  }
  std::ifstream run(fs::path(spec.output_dir) / "run.json");
  const ExperimentSpec echoed = ExperimentSpecFromJson(nlohmann::json::parse(run));
  EXPECT_EQ(echoed.name, "io");
  EXPECT_EQ(echoed.sweep_values, spec.sweep_values);
  EXPECT_EQ(echoed.solvers.size(), 1u);
  std::ifstream results(fs::path(spec.output_dir) / "results.csv");
  const auto rows = ReadSweepCsv(results);
  EXPECT_EQ(CsvWithoutTiming(rows), CsvWithoutTiming(table.rows));
  fs::remove_all(spec.output_dir);
}

TEST(RunSweep, UnwritableOutputDirectoryThrows) {
  const std::string blocker = TempDir("blocker");
  std::ofstream(blocker) << "file";
  ExperimentSpec spec;
  spec.net = {{2, 8}, Activation::Relu(), 1};
  spec.sweep_values = {6};
  spec.solvers = {Solver(Method::kGdSquaredL1, 1, 5)};
  spec.output_dir = blocker + "/sub";
  EXPECT_THROW(RunSweep(spec), std::runtime_error);
  fs::remove(blocker);
}

TEST(ExperimentSpec, Validation) {
  ExperimentSpec spec;
  spec.net = {{2, 8}, Activation::Relu(), 1};
  spec.solvers = {SolverConfig{}};
  EXPECT_THROW(spec.Validate(), std::invalid_argument);  // no sweep values
  spec.sweep_values = {10, 10};
  EXPECT_THROW(spec.Validate(), std::invalid_argument);
  spec.sweep_values = {10, 20};
  EXPECT_NO_THROW(spec.Validate());
  spec.trials_per_point = 0;
  EXPECT_THROW(spec.Validate(), std::invalid_argument);
  spec.trials_per_point = 1;
  spec.solvers.clear();
  EXPECT_THROW(spec.Validate(), std::invalid_argument);
}

TEST(ExperimentSpec, JsonRoundTrip) {
  const auto j = nlohmann::json::parse(R"({
    "name": "demo", "seed": 7, "workers": 2, "trials_per_point": 4,
    "net": {"dims": [5, 20, 60], "activation": {"kind": "leaky_relu", "h": 0.2}, "seed": 11},
    "measurement": {"outliers": 3, "noise_target": 0.5},
    "sweep": {"axis": "outliers", "values": [1, 2, 3]},
    "solvers": [{"method": "admm-l1", "restarts": 10}]
  })");
  const ExperimentSpec spec = ExperimentSpecFromJson(j);
  EXPECT_EQ(spec.net.activation, Activation::LeakyRelu(0.2));
  EXPECT_EQ(spec.axis, SweepAxis::kOutliers);
  EXPECT_EQ(spec.solvers[0].restarts, 10);
  const ExperimentSpec back = ExperimentSpecFromJson(ToJson(spec));
  EXPECT_EQ(ToJson(back), ToJson(spec));
}

TEST(Summaries, QuantilesAndCsv) {
  EXPECT_DOUBLE_EQ(Quantile({4.0, 1.0, 3.0, 2.0}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(Quantile({4.0, 1.0, 3.0, 2.0}, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(Quantile({1.0, NAN, 3.0}, 0.5), 2.0);
  EXPECT_TRUE(std::isnan(Quantile({}, 0.5)));

  std::vector<SweepRow> rows(3);
  for (int i = 0; i < 3; ++i) {
    rows[i].sweep_value = 10;
    rows[i].trial = i;
    rows[i].solver = "admm-l1";
    rows[i].eps_r = i + 1.0;
    rows[i].wall_ms = 5.5;
  }
  rows[2].status = "diverged";
  rows[2].eps_r = NAN;
  const auto summary = Summarize(rows);
  ASSERT_EQ(summary.size(), 1u);
  EXPECT_EQ(summary[0].count, 3);
  EXPECT_DOUBLE_EQ(summary[0].median_eps_r, 1.5);

  std::stringstream csv;
  WriteSweepCsv(csv, rows);
  const auto back = ReadSweepCsv(csv);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[1].eps_r, 2.0);
  EXPECT_EQ(back[0].wall_ms, 5.5);
  EXPECT_EQ(back[2].status, "diverged");
  EXPECT_TRUE(std::isnan(back[2].eps_r));

  std::ostringstream report;
  WriteReportCsv(report, rows);
  EXPECT_EQ(report.str().substr(0, report.str().find('\n')),
            "sweep_value,solver,metric,statistic,value");
  EXPECT_NE(report.str().find("10,admm-l1,eps_r,median,1.5\n"), std::string::npos);
}

TEST(Verify, DefaultSuitePassesOnSeedZero) {
  const VerificationManifest manifest = RunChecks(DefaultVerifySuite(), 0);
  EXPECT_TRUE(manifest.ok());
  std::map<std::string, int> seen;
  for (const ConditionReport& r : manifest.reports) {
    ++seen[r.condition_name];
    EXPECT_GT(r.trials, 0) << r.condition_name;
    EXPECT_LE(r.failures, r.trials);
    if (r.zero_failures_required) EXPECT_EQ(r.failures, 0) << r.condition_name;
  }
  EXPECT_EQ(seen.size(), 10u);
  EXPECT_EQ(seen["k_majority"], 8);  // two slopes x four support fractions
}

TEST(Verify, InjectedRankDeficiencyFails) {
  Matrix W(3, 2);
  W << 1, 2, 2, 4, 3, 6;
  const nlohmann::json checks = {{{"check", "every_r_rows_full_rank"}, {"W", MatrixToJson(W)}, {"r", 2}}};
  const VerificationManifest manifest = RunChecks(checks, 0);
  ASSERT_EQ(manifest.reports.size(), 1u);
  EXPECT_GT(manifest.reports[0].failures, 0);
  EXPECT_FALSE(manifest.ok());
  EXPECT_FALSE(manifest.ToJson()["ok"].get<bool>());
}

TEST(Verify, EmptyCheckListIsOk) {
  const VerificationManifest manifest = RunChecks(nlohmann::json::array(), 0);
  EXPECT_TRUE(manifest.reports.empty());
  EXPECT_TRUE(manifest.ok());
}

TEST(Verify, UnknownCheckIsRejected) {
  EXPECT_THROW(RunChecks(nlohmann::json::array({{{"check", "nope"}}}), 0), std::invalid_argument);
}

TEST(Verify, WritesManifest) {
  ExperimentSpec spec;
  spec.output_dir = TempDir("verify");
  spec.checks = nlohmann::json::array({{{"check", "leaky_beta"}, {"trials", 100}}});
  const VerificationManifest manifest = RunVerify(spec);
  std::ifstream in(fs::path(spec.output_dir) / "manifest.json");
  const auto doc = nlohmann::json::parse(in);
  EXPECT_TRUE(doc["ok"].get<bool>());
  EXPECT_EQ(doc["reports"][0]["trials"].get<int>(), 100);
  EXPECT_TRUE(fs::exists(fs::path(spec.output_dir) / "run.json"));
  fs::remove_all(spec.output_dir);
}

TEST(ParallelFor, VisitsEveryIndexOnce) {
  std::vector<int> hits(100, 0);
  ParallelFor(100, 4, [&](int i) { ++hits[i]; });
  for (int h : hits) EXPECT_EQ(h, 1);
  EXPECT_THROW(ParallelFor(3, 2, [](int i) { if (i == 1) throw std::runtime_error("x"); }),
               std::runtime_error);
}

}  // namespace
}  // namespace genrec
