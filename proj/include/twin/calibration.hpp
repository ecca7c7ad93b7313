#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "twin/config.hpp"

namespace twin {

enum class Law { L_TC, L_SN, L_F, NULL_SIM };

std::string to_string(Law law);
Law parse_law(std::string_view name);

// Time grid for the Brownian functionals: step fine_step on (0, 10],
// mid_step on (10, 100], coarse_step on (100, t_max].
struct GridSpec {
  double fine_step = 0.01;
  double mid_step = 0.1;
  double coarse_step = 1.0;
  double t_max = 1000.0;

  nlohmann::json to_json() const;
  static GridSpec from_json(const nlohmann::json& j);
};

// Finite-sample calibration size for L_F and the baseline null simulation.
struct SampleSpec {
  long n_cal = 200;
  long t_horizon = 50;  // horizon in units of n_cal
};

// 0.90, 0.91, ..., 0.99
const std::vector<double>& table_levels();

struct QuantileTable {
  static constexpr int kVersion = 1;

  int version = kVersion;
  Law law = Law::L_TC;
  DetectorKind kind = DetectorKind::TC;  // detector the table serves
  nlohmann::json params;                 // {beta, c0} or {eta, b, c0}
  nlohmann::json grid_spec;
  long draws = 0;
  std::uint64_t seed = 0;
  long redraws = 0;  // degenerate draws replaced (L_SN only)
  std::vector<std::pair<double, double>> quantiles;  // (level, value), level ascending
  std::string fingerprint;

  // Critical value at level; throws Error(usage) when the level is not tabulated.
  double quantile(double level) const;
  double critical_value(double alpha) const { return quantile(1.0 - alpha); }

  // Throws Error(config_mismatch) unless the table was built for cfg's
  // detector and weight parameters.
  void check_compatible(const MonitorConfig& cfg) const;

  nlohmann::json to_json() const;
  // Throws Error(data) on malformed input or a fingerprint that does not
  // match the table's own content.
  static QuantileTable from_json(const nlohmann::json& j);
};

// FNV-1a over the canonical dump of {law, kind, params, grid_spec}.
std::string table_fingerprint(Law law, DetectorKind kind, const nlohmann::json& params,
                              const nlohmann::json& grid_spec);

void store_table(const QuantileTable& table, const std::string& path);
// expected_fingerprint empty: only the self-consistency check.
QuantileTable load_table(const std::string& path, const std::string& expected_fingerprint = "");

// Type-7 (linear interpolation) quantile of a sorted sample.
double sample_quantile(const std::vector<double>& sorted, double level);

// Raw draws of the two Brownian laws, sharing one path per draw.
struct BrownianDraws {
  std::vector<double> tc;  // L(1)
  std::vector<double> sn;  // L_SN
  long redraws = 0;
};

// increment_scale multiplies every Brownian increment (pivotality checks).
BrownianDraws draw_brownian_laws(const DetectorParams& params, const GridSpec& grid, long draws,
                                 std::uint64_t seed, int threads = 0, double increment_scale = 1.0);

// Number of (t, t - s) grid pairs evaluated per draw.
std::size_t brownian_pair_count(const DetectorParams& params, const GridSpec& grid);

QuantileTable simulate_L_TC(const DetectorParams& params, const GridSpec& grid, long draws,
                            std::uint64_t seed, int threads = 0);
QuantileTable simulate_L_SN(const DetectorParams& params, const GridSpec& grid, long draws,
                            std::uint64_t seed, int threads = 0);
// Both tables from the same paths.
std::pair<QuantileTable, QuantileTable> simulate_L_TC_SN(const DetectorParams& params,
                                                         const GridSpec& grid, long draws,
                                                         std::uint64_t seed, int threads = 0);

enum class CalibrationInput { uniform, normal };

// Suprema of the exact NP-TWIN trace over n_cal * t_horizon monitoring steps.
std::vector<double> draw_L_F(const DetectorParams& params, const SampleSpec& spec, long draws,
                             std::uint64_t seed, int threads = 0,
                             CalibrationInput input = CalibrationInput::uniform);
// Throws Error(usage) when n_cal < 100.
QuantileTable simulate_L_F(const DetectorParams& params, const SampleSpec& spec, long draws,
                           std::uint64_t seed, int threads = 0);

// Suprema of a baseline detector on i.i.d. N(0, sd^2) data, scaled by the known sd.
std::vector<double> draw_null_sim(DetectorKind kind, const DetectorParams& params,
                                  const SampleSpec& spec, long draws, std::uint64_t seed,
                                  int threads = 0, double sd = 1.0);
// RC is rejected: its threshold is closed form.
QuantileTable null_sim_quantiles(DetectorKind kind, const DetectorParams& params,
                                 const SampleSpec& spec, long draws, std::uint64_t seed,
                                 int threads = 0);

// Default baseline calibration: n_cal 100, horizon 20.
SampleSpec default_null_spec();

// Law used to calibrate a detector.
Law law_for(DetectorKind kind) noexcept;

// Shipped table file name for a detector, e.g. "L_TC.json" or "NULL_SIM_PC.json".
std::string table_file_name(DetectorKind kind);

}  // namespace twin
