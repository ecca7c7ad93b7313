#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "twin/calibration.hpp"
#include "twin/config.hpp"

namespace twin {

enum class NoiseFamily { normal, uniform, truncexp, cauchy, ar1, zero };

struct NoiseModel {
  NoiseFamily family = NoiseFamily::normal;
  double phi = 0.0;                            // ar1 only
  NoiseFamily innovation = NoiseFamily::normal;  // ar1 only

  // "normal", "uniform", "exponential" (or "truncexp"), "cauchy", "zero",
  // "ar1:<phi>" or "ar1:<phi>:<innovation>". "zero" is the noiseless
  // stream used by the first-crossing oracles.
  static NoiseModel parse(std::string_view name);
  std::string name() const;
  void validate() const;

  // psi_2 Orlicz norm inf{t : E exp(X^2 / t^2) <= 2}. Cauchy has none; the
  // normal value sqrt(8/3) is returned as a proxy. AR(1) scales the
  // innovation norm by its stationary standard deviation.
  double orlicz_norm() const;
};

// Exp(1) conditioned on E <= 2.513, by numeric integration.
inline constexpr double kTruncExpCut = 2.513;
double truncexp_mean();
double truncexp_variance();

// Fills n draws of the noise process.
std::vector<double> draw_noise(const NoiseModel& noise, std::size_t n, std::uint64_t seed);

struct ChangeSpec {
  long k_star = 1;
  double delta = 0.0;
  std::optional<double> duration;  // epidemic length D (in units of n_train); none = permanent
};

// n_train + t_horizon values. With a change, 0-based positions
// j >= n_train + k_star are shifted by delta (permanent), or
// n_train + k_star <= j <= n_train + k_star + floor(D n_train) (epidemic).
std::vector<double> generate_stream(const NoiseModel& noise, const std::optional<ChangeSpec>& change,
                                    long n_train, long t_horizon, std::uint64_t seed);

enum class ExperimentKind { level, power, delay, epidemic };
std::string to_string(ExperimentKind kind);
ExperimentKind parse_experiment(std::string_view name);

struct ExperimentSpec {
  std::string id;
  ExperimentKind kind = ExperimentKind::level;
  long n_train = 100;
  long t_horizon = 2000;  // monitoring steps T
  std::optional<ChangeSpec> change;
  NoiseModel noise;
  std::vector<DetectorKind> detectors = standard_detectors();
  long replications = 1000;
  std::uint64_t seed = 1;
  double alpha = 0.05;
  DetectorParams params;
  // Scale for TC and the baselines; the simulation study treats Var = 1 as known.
  Scale scale{ScaleMode::known, 1.0, -1};

  void validate() const;
  nlohmann::json to_json() const;
};

struct DetectorResult {
  DetectorKind detector = DetectorKind::TC;
  long replications = 0;
  long rejections = 0;
  double rejection_rate = 0.0;
  double threshold = 0.0;
  std::vector<long> delays;  // sorted; detections at k_hat >= k_star only
  double delay_p25 = 0.0, delay_p50 = 0.0, delay_p75 = 0.0;  // NaN without delays
  long false_alarms = 0;  // detections before k_star
  long discarded = 0;     // runs without a delay: false alarms plus misses
};

struct ExperimentResult {
  ExperimentSpec spec;
  std::vector<DetectorResult> detectors;
  double runtime_seconds = 0.0;

  const DetectorResult& at(DetectorKind kind) const;
};

// Critical values by detector. RC always uses 1 (its value is a ratio to its bound).
class CriticalValues {
 public:
  CriticalValues() = default;
  // Tables named by table_file_name() inside dir.
  static CriticalValues from_directory(const std::string& dir);

  void set_table(DetectorKind kind, QuantileTable table);
  void set_value(DetectorKind kind, double value);
  // Throws Error(usage) for a missing table, Error(config_mismatch) for an
  // incompatible one.
  double threshold(const MonitorConfig& cfg) const;

 private:
  std::string dir_;
  mutable std::map<DetectorKind, QuantileTable> tables_;
  std::map<DetectorKind, double> values_;
};

// TWIN_TABLE_DIR if set, else the shipped data/tables directory.
std::string default_table_dir();

// Detector configuration used by the experiments.
MonitorConfig experiment_config(const ExperimentSpec& spec, DetectorKind kind);

ExperimentResult run_experiment(const ExperimentSpec& spec, const CriticalValues& cv, int threads = 0);
// Kind-checked wrappers.
ExperimentResult run_level_experiment(const ExperimentSpec& spec, const CriticalValues& cv, int threads = 0);
ExperimentResult run_power_experiment(const ExperimentSpec& spec, const CriticalValues& cv, int threads = 0);
ExperimentResult run_delay_experiment(const ExperimentSpec& spec, const CriticalValues& cv, int threads = 0);
// One result per duration; spec.change must be set (its duration is replaced).
std::vector<ExperimentResult> run_epidemic_experiment(const ExperimentSpec& spec, const std::vector<double>& durations,
                                                      const CriticalValues& cv, int threads = 0);

// CSV columns: experiment_id, detector, noise, n_train, t_horizon, k_star,
// delta, duration, replications, rejection_rate, delay_p25, delay_p50,
// delay_p75, false_alarms, discarded, seed.
std::string results_csv(const std::vector<ExperimentResult>& results);
nlohmann::json results_json(const std::vector<ExperimentResult>& results);
void emit_results(const std::vector<ExperimentResult>& results, const std::string& path, const std::string& format);

// Scenario files: a JSON object describing a grid of experiments.
struct ScenarioFile {
  std::string id;
  std::vector<ExperimentSpec> experiments;
};
// fast selects the reduced replication count ("fast_replications").
ScenarioFile load_scenario(const std::string& path, bool fast = false);
ScenarioFile parse_scenario(const nlohmann::json& j, bool fast = false);

}  // namespace twin
