#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "twin/calibration.hpp"
#include "twin/config.hpp"
#include "twin/detectors.hpp"
#include "twin/stream_state.hpp"

namespace twin {

nlohmann::json config_to_json(const MonitorConfig& cfg);
// Fields absent from j keep the values of base.
MonitorConfig config_from_json(const nlohmann::json& j, MonitorConfig base = {});
std::string config_fingerprint(const MonitorConfig& cfg);

struct DetectorVerdict {
  bool detected = false;
  std::optional<long> k_hat;
  double statistic = 0.0;  // value at k_hat, or the running maximum when nothing was detected
  double threshold = 0.0;
  long ell_hat = 0;
  // 0-based position of the first post-change observation (see change_index);
  // n_train + k_hat - ell_hat for the TWIN detectors, none for C and MM.
  std::optional<long> change_estimate;

  nlohmann::json to_json() const;
};

struct DelayResult {
  long k_star = 0;
  std::optional<long> k_hat;
  long delay = 0;  // max(k_hat - k_star, 0)
  bool false_alarm = false;
};

DelayResult delay_result(long k_star, const DetectorVerdict& verdict);

struct TracePoint {
  long k = 0;
  double value = 0.0;
  long ell = 0;
};

struct MonitorOptions {
  long trace_every = 0;  // keep every trace_every-th step; 0 keeps none
  ScanGrid grid = ScanGrid::exact();
};

// One online monitoring session. Training values are buffered in the state;
// once n_train values have arrived each further value is one monitoring step.
class Monitor {
 public:
  // RC ignores threshold (its statistic is already a ratio to its own bound; 1 is used).
  Monitor(const MonitorConfig& cfg, double threshold, MonitorOptions opts = {});
  // Threshold from a compatible table at level 1 - alpha.
  Monitor(const MonitorConfig& cfg, const QuantileTable& table, MonitorOptions opts = {});

  // Returns the detector value for monitoring steps, nothing during training.
  // After an alarm further values are ignored.
  std::optional<ScanResult> push(double x);

  bool alarmed() const noexcept { return verdict_.detected; }
  bool trained() const noexcept { return state_.trained(); }
  long steps() const noexcept { return std::max(0L, state_.monitoring_index()); }
  const StreamState& state() const noexcept { return state_; }
  const MonitorConfig& config() const noexcept { return cfg_; }
  // Scale actually applied (lrv is resolved to a known variance after training).
  const Scale& resolved_scale() const noexcept { return resolved_.scale; }
  const DetectorVerdict& verdict() const noexcept { return verdict_; }
  const std::vector<TracePoint>& trace() const noexcept { return trace_; }

  nlohmann::json snapshot() const;
  // Throws Error(config_mismatch) when the snapshot was taken under another config.
  static Monitor restore(const nlohmann::json& doc, const MonitorConfig& cfg, MonitorOptions opts = {});

 private:
  void on_trained();

  MonitorConfig cfg_;
  MonitorConfig resolved_;
  MonitorOptions opts_;
  StreamState state_;
  DetectorVerdict verdict_;
  std::vector<TracePoint> trace_;
};

struct MonitorReport {
  MonitorConfig config;
  Scale scale_used;
  DetectorVerdict verdict;
  long steps = 0;  // monitoring steps evaluated
  std::vector<TracePoint> trace;
  std::string table_fingerprint;

  nlohmann::json to_json() const;
};

// Feeds stream until the first alarm, the end of the stream, or `horizon`
// monitoring steps. Throws Error(data) if the stream ends during training.
MonitorReport monitor(std::span<const double> stream, const MonitorConfig& cfg, const QuantileTable& table,
                      std::optional<long> horizon = std::nullopt, MonitorOptions opts = {});
MonitorReport monitor(std::span<const double> stream, const MonitorConfig& cfg, double threshold,
                      std::optional<long> horizon = std::nullopt, MonitorOptions opts = {});

}  // namespace twin
