#ifndef GENREC_HARNESS_H_
#define GENREC_HARNESS_H_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "genrec/generator.h"
#include "genrec/measurement.h"
#include "genrec/solvers.h"
#include "genrec/theory.h"

namespace genrec {

struct NetSpec {
  std::vector<int> dims;
  Activation activation = Activation::Relu();
  uint64_t seed = 0;

  GeneratorNetwork Build() const { return RandomGaussianNet(dims, activation, seed); }
};

enum class SweepAxis { kMeasurements, kOutliers };

// One experiment as read from the JSON config. The sweep axis overrides
// measurement.m or measurement.outliers at every point; measurement.n is
// taken from the generator.
struct ExperimentSpec {
  std::string name = "experiment";
  NetSpec net;
  MeasurementModel measurement;
  SweepAxis axis = SweepAxis::kMeasurements;
  std::vector<int> sweep_values;
  std::vector<SolverConfig> solvers;
  int trials_per_point = 1;
  std::string output_dir;
  uint64_t seed = 0;
  int workers = 1;
  // Theory checks for `verify`. Null selects DefaultVerifySuite().
  nlohmann::json checks;

  void Validate() const;
};

ExperimentSpec ExperimentSpecFromJson(const nlohmann::json& j);
nlohmann::json ToJson(const ExperimentSpec& spec);

struct SweepRow {
  double sweep_value = 0.0;
  int trial = 0;
  std::string solver;
  double eps_m = 0.0;
  double eps_r = 0.0;
  double eps_r_per_pixel = 0.0;
  int iters = 0;
  int restart_index = 0;
  uint64_t seed = 0;
  double wall_ms = 0.0;
  // "ok" or "diverged"; diverged rows carry NaN errors.
  std::string status = "ok";
};

struct SummaryRow {
  double sweep_value = 0.0;
  std::string solver;
  int count = 0;
  double median_eps_m = 0.0;
  double median_eps_r = 0.0;
  double q1_eps_r = 0.0;
  double q3_eps_r = 0.0;
  double iqr_eps_r = 0.0;
  double median_eps_r_per_pixel = 0.0;
};

struct SweepTable {
  std::vector<SweepRow> rows;
  std::vector<SummaryRow> summary;
};

// Seed of the instance used at (point, trial).
uint64_t TrialSeed(uint64_t spec_seed, int point, int trial);

// Runs every (sweep point, trial, solver) combination. When output_dir is set,
// writes results.csv, summary.csv and run.json there.
SweepTable RunSweep(const ExperimentSpec& spec);

std::vector<SummaryRow> Summarize(const std::vector<SweepRow>& rows);

// Linear-interpolated quantile of `values` (q in [0, 1]); NaNs are ignored.
double Quantile(std::vector<double> values, double q);

void WriteSweepCsv(std::ostream& out, const std::vector<SweepRow>& rows,
                   bool include_timing = true);
std::vector<SweepRow> ReadSweepCsv(std::istream& in);
void WriteSummaryCsv(std::ostream& out, const std::vector<SummaryRow>& summary);
// Plot-ready long format: sweep_value,solver,metric,statistic,value.
void WriteReportCsv(std::ostream& out, const std::vector<SweepRow>& rows);

struct VerificationManifest {
  std::vector<ConditionReport> reports;

  // False when a report that requires zero failures has any.
  bool ok() const;
  nlohmann::json ToJson() const;
};

nlohmann::json DefaultVerifySuite();

// Runs the checks listed in `checks` (array of objects with a "check" name
// and optional parameters). Unknown names are rejected.
VerificationManifest RunChecks(const nlohmann::json& checks, uint64_t seed);

// RunChecks on spec.checks (or the default suite); writes manifest.json and
// run.json when output_dir is set.
VerificationManifest RunVerify(const ExperimentSpec& spec);

// Calls fn(i) for i in [0, count) on up to `workers` threads.
void ParallelFor(int count, int workers, const std::function<void(int)>& fn);

}  // namespace genrec

#endif  // GENREC_HARNESS_H_
