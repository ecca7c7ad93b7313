#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace twin {

enum class DetectorKind { TC, SNTC, NPTC, C, PC, FC, WC, MM, RC };

// How a mean detector's raw statistic is put on the scale of its limit law.
enum class ScaleMode { known, train_variance, lrv, self_normalized, none };

std::string to_string(DetectorKind kind);
std::string to_string(ScaleMode mode);
DetectorKind parse_detector(std::string_view name);
ScaleMode parse_scale_mode(std::string_view name);

// The eight methods run by default, in report order.
const std::vector<DetectorKind>& standard_detectors();

bool is_baseline(DetectorKind kind) noexcept;

struct Scale {
  ScaleMode mode = ScaleMode::train_variance;
  double sigma2 = 1.0;  // used when mode == known
  int bandwidth = -1;   // lrv lag count; negative selects the automatic rule
};

// Tuning parameters shared by every detector. Defaults follow the simulation study.
struct DetectorParams {
  double beta = 0.6;
  double c0 = 20.0;
  double eta = 0.4;
  double b_mosum = 0.4;
  double c_rc = std::sqrt(2.0);  // RC union-bound constant
};

struct MonitorConfig {
  long n_train = 100;
  DetectorParams params{};
  double alpha = 0.05;
  DetectorKind detector = DetectorKind::TC;
  Scale scale{};
  double orlicz_norm = 0.0;  // RC only; must be > 0 when detector == RC

  // Throws Error(usage) when an invariant is violated.
  void validate() const;

  // Config with the scale mode that the detector kind requires.
  static MonitorConfig for_detector(DetectorKind kind, long n_train);
};

// Scale mode a detector uses unless the caller overrides it.
ScaleMode default_scale(DetectorKind kind) noexcept;

}  // namespace twin
