#include "twin/config.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <utility>

#include "twin/errors.hpp"

namespace twin {
namespace {

constexpr std::array<std::pair<DetectorKind, const char*>, 9> kDetectorNames{{
    {DetectorKind::TC, "TC"},
    {DetectorKind::SNTC, "SNTC"},
    {DetectorKind::NPTC, "NPTC"},
    {DetectorKind::C, "C"},
    {DetectorKind::PC, "PC"},
    {DetectorKind::FC, "FC"},
    {DetectorKind::WC, "WC"},
    {DetectorKind::MM, "MM"},
    {DetectorKind::RC, "RC"},
}};

constexpr std::array<std::pair<ScaleMode, const char*>, 5> kScaleNames{{
    {ScaleMode::known, "known"},
    {ScaleMode::train_variance, "train_variance"},
    {ScaleMode::lrv, "lrv"},
    {ScaleMode::self_normalized, "self_normalized"},
    {ScaleMode::none, "none"},
}};

std::string upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

}  // namespace

std::string to_string(DetectorKind kind) {
  for (const auto& [k, name] : kDetectorNames) {
    if (k == kind) return name;
  }
  return "?";
}

std::string to_string(ScaleMode mode) {
  for (const auto& [m, name] : kScaleNames) {
    if (m == mode) return name;
  }
  return "?";
}

DetectorKind parse_detector(std::string_view name) {
  const std::string key = upper(name);
  for (const auto& [k, n] : kDetectorNames) {
    if (key == n) return k;
  }
  throw Error(ErrorKind::usage, "unknown detector '" + std::string(name) + "'");
}

ScaleMode parse_scale_mode(std::string_view name) {
  for (const auto& [m, n] : kScaleNames) {
    if (name == n) return m;
  }
  throw Error(ErrorKind::usage, "unknown scale mode '" + std::string(name) + "'");
}

const std::vector<DetectorKind>& standard_detectors() {
  static const std::vector<DetectorKind> kinds{DetectorKind::NPTC, DetectorKind::TC, DetectorKind::C,
                                               DetectorKind::PC,   DetectorKind::FC, DetectorKind::WC,
                                               DetectorKind::MM,   DetectorKind::RC};
  return kinds;
}

bool is_baseline(DetectorKind kind) noexcept {
  switch (kind) {
    case DetectorKind::C:
    case DetectorKind::PC:
    case DetectorKind::FC:
    case DetectorKind::WC:
    case DetectorKind::MM:
      return true;
    default:
      return false;
  }
}

ScaleMode default_scale(DetectorKind kind) noexcept {
  switch (kind) {
    case DetectorKind::NPTC:
    case DetectorKind::RC:
      return ScaleMode::none;
    case DetectorKind::SNTC:
      return ScaleMode::self_normalized;
    default:
      return ScaleMode::train_variance;
  }
}

MonitorConfig MonitorConfig::for_detector(DetectorKind kind, long n_train) {
  MonitorConfig cfg;
  cfg.detector = kind;
  cfg.n_train = n_train;
  cfg.scale.mode = default_scale(kind);
  return cfg;
}

void MonitorConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::usage, msg); };
  if (n_train < 2) fail("n_train must be at least 2");
  if (!(params.beta > 0.5)) fail("beta must exceed 1/2");
  if (!(params.c0 > 1.0)) fail("c0 must exceed 1");
  if (!(params.eta >= 0.0 && params.eta < 0.5)) fail("eta must lie in [0, 1/2)");
  if (!(params.b_mosum > 0.0 && params.b_mosum < 1.0)) fail("b must lie in (0, 1)");
  if (!(alpha > 0.0 && alpha < 1.0)) fail("alpha must lie in (0, 1)");
  if (detector == DetectorKind::NPTC && scale.mode != ScaleMode::none)
    fail("NPTC requires scale mode 'none'");
  if (detector == DetectorKind::SNTC && scale.mode != ScaleMode::self_normalized)
    fail("SNTC requires scale mode 'self_normalized'");
  if (scale.mode == ScaleMode::known && !(scale.sigma2 > 0.0))
    fail("known variance must be positive");
  if (detector == DetectorKind::RC && !(orlicz_norm > 0.0))
    fail("RC requires a positive Orlicz norm");
}

}  // namespace twin
