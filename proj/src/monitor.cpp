#include "twin/monitor.hpp"

#include <cmath>
#include <cstdint>
#include <sstream>

#include "twin/errors.hpp"
#include "twin/variance.hpp"

namespace twin {

using nlohmann::json;

json config_to_json(const MonitorConfig& cfg) {
  json j = {{"n_train", cfg.n_train},
            {"beta", cfg.params.beta},
            {"c0", cfg.params.c0},
            {"eta", cfg.params.eta},
            {"b", cfg.params.b_mosum},
            {"c_rc", cfg.params.c_rc},
            {"alpha", cfg.alpha},
            {"detector", to_string(cfg.detector)},
            {"scale", to_string(cfg.scale.mode)}};
  if (cfg.scale.mode == ScaleMode::known) j["sigma2"] = cfg.scale.sigma2;
  if (cfg.scale.mode == ScaleMode::lrv) j["bandwidth"] = cfg.scale.bandwidth;
  if (cfg.detector == DetectorKind::RC) j["orlicz_norm"] = cfg.orlicz_norm;
  return j;
}

MonitorConfig config_from_json(const json& j, MonitorConfig base) {
  try {
    if (j.contains("detector")) {
      const DetectorKind kind = parse_detector(j.at("detector").get<std::string>());
      if (kind != base.detector) base.scale.mode = default_scale(kind);
      base.detector = kind;
    }
    base.n_train = j.value("n_train", base.n_train);
    base.params.beta = j.value("beta", base.params.beta);
    base.params.c0 = j.value("c0", base.params.c0);
    base.params.eta = j.value("eta", base.params.eta);
    base.params.b_mosum = j.value("b", base.params.b_mosum);
    base.params.c_rc = j.value("c_rc", base.params.c_rc);
    base.alpha = j.value("alpha", base.alpha);
    if (j.contains("scale")) base.scale.mode = parse_scale_mode(j.at("scale").get<std::string>());
    base.scale.sigma2 = j.value("sigma2", base.scale.sigma2);
    base.scale.bandwidth = j.value("bandwidth", base.scale.bandwidth);
    base.orlicz_norm = j.value("orlicz_norm", base.orlicz_norm);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::usage, std::string("bad configuration: ") + e.what());
  }
  return base;
}

std::string config_fingerprint(const MonitorConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config_to_json(cfg).dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

json DetectorVerdict::to_json() const {
  json j = {{"detected", detected}, {"statistic", statistic}, {"threshold", threshold}};
  j["k_hat"] = k_hat ? json(*k_hat) : json(nullptr);
  j["ell_hat"] = detected ? json(ell_hat) : json(nullptr);
  j["change_estimate"] = change_estimate ? json(*change_estimate) : json(nullptr);
  return j;
}

DelayResult delay_result(long k_star, const DetectorVerdict& v) {
  DelayResult r;
  r.k_star = k_star;
  r.k_hat = v.k_hat;
  if (v.k_hat) {
    r.false_alarm = *v.k_hat < k_star;
    r.delay = std::max(0L, *v.k_hat - k_star);
  }
  return r;
}

Monitor::Monitor(const MonitorConfig& cfg, double threshold, MonitorOptions opts)
    : cfg_(cfg),
      resolved_(cfg),
      opts_(opts),
      state_(cfg.n_train, cfg.detector == DetectorKind::NPTC || cfg.detector == DetectorKind::RC) {
  cfg_.validate();
  verdict_.threshold = cfg.detector == DetectorKind::RC ? 1.0 : threshold;
  if (std::isnan(verdict_.threshold)) throw Error(ErrorKind::usage, "threshold is NaN");
}

namespace {

double table_threshold(const MonitorConfig& cfg, const QuantileTable& table) {
  if (cfg.detector == DetectorKind::RC) return 1.0;
  table.check_compatible(cfg);
  return table.critical_value(cfg.alpha);
}

}  // namespace

Monitor::Monitor(const MonitorConfig& cfg, const QuantileTable& table, MonitorOptions opts)
    : Monitor(cfg, table_threshold(cfg, table), opts) {}

void Monitor::on_trained() {
  if (cfg_.scale.mode == ScaleMode::lrv) {
    const VarianceEstimate est = estimate_lrv(state_.training(), cfg_.scale.bandwidth);
    resolved_.scale.mode = ScaleMode::known;
    resolved_.scale.sigma2 = est.sigma2_lr;
    resolved_.scale.bandwidth = est.bandwidth;
  }
  // fail early on degenerate scales
  if (cfg_.detector != DetectorKind::NPTC && cfg_.detector != DetectorKind::RC) scale_divisor(state_, resolved_);
}

std::optional<ScanResult> Monitor::push(double x) {
  if (verdict_.detected) return std::nullopt;
  const bool was_trained = state_.trained();
  state_.ingest(x);
  if (!state_.trained()) return std::nullopt;
  if (!was_trained) {
    on_trained();
    return std::nullopt;
  }
  const long k = state_.monitoring_index();
  const ScanResult r = evaluate_detector(state_, k, resolved_, opts_.grid);
  if (opts_.trace_every > 0 && k % opts_.trace_every == 0) trace_.push_back({k, r.value, r.argmax_ell});
  if (r.value > verdict_.threshold) {
    verdict_.detected = true;
    verdict_.k_hat = k;
    verdict_.statistic = r.value;
    verdict_.ell_hat = r.argmax_ell;
    verdict_.change_estimate = change_index(cfg_.detector, cfg_.n_train, k, r.argmax_ell);
    if (opts_.trace_every > 0 && k % opts_.trace_every != 0) trace_.push_back({k, r.value, r.argmax_ell});
  } else {
    verdict_.statistic = std::max(verdict_.statistic, r.value);
  }
  return r;
}

json Monitor::snapshot() const {
  json trace = json::array();
  for (const auto& p : trace_) trace.push_back({p.k, p.value, p.ell});
  return {{"state", state_.snapshot(config_fingerprint(cfg_))},
          {"threshold", verdict_.threshold},
          {"max_statistic", verdict_.statistic},
          {"verdict", verdict_.to_json()},
          {"trace", trace}};
}

Monitor Monitor::restore(const json& doc, const MonitorConfig& cfg, MonitorOptions opts) {
  try {
    Monitor m(cfg, doc.at("threshold").get<double>(), opts);
    m.state_ = StreamState::restore(doc.at("state"), config_fingerprint(cfg));
    if (m.state_.trained()) m.on_trained();
    const json& v = doc.at("verdict");
    m.verdict_.detected = v.at("detected").get<bool>();
    m.verdict_.statistic = doc.at("max_statistic").get<double>();
    if (m.verdict_.detected) {
      m.verdict_.k_hat = v.at("k_hat").get<long>();
      m.verdict_.ell_hat = v.at("ell_hat").get<long>();
      if (!v.at("change_estimate").is_null()) m.verdict_.change_estimate = v.at("change_estimate").get<long>();
      m.verdict_.statistic = v.at("statistic").get<double>();
    }
    for (const auto& p : doc.at("trace")) m.trace_.push_back({p.at(0).get<long>(), p.at(1).get<double>(), p.at(2).get<long>()});
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::data, std::string("malformed monitor snapshot: ") + e.what());
  }
}

json MonitorReport::to_json() const {
  json sc = {{"mode", to_string(scale_used.mode)}};
  if (scale_used.mode == ScaleMode::known) sc["sigma2"] = scale_used.sigma2;
  if (config.scale.mode == ScaleMode::lrv) sc["bandwidth"] = scale_used.bandwidth;
  json tr = json::array();
  for (const auto& p : trace) tr.push_back({{"k", p.k}, {"statistic", p.value}, {"ell", p.ell}});
  return {{"config", config_to_json(config)},
          {"scale_used", sc},
          {"verdict", verdict.to_json()},
          {"steps", steps},
          {"table_fingerprint", table_fingerprint},
          {"trace", tr}};
}

namespace {

MonitorReport run(Monitor& m, std::span<const double> stream, std::optional<long> horizon) {
  const MonitorConfig& cfg = m.config();
  for (double x : stream) {
    if (m.alarmed() || (horizon && m.steps() >= *horizon)) break;
    m.push(x);
  }
  if (!m.trained())
    throw Error(ErrorKind::data, "stream ended after " + std::to_string(m.state().count()) +
                                     " values, before training (n_train=" + std::to_string(cfg.n_train) +
                                     ") completed");
  MonitorReport r;
  r.config = cfg;
  r.scale_used = m.resolved_scale();
  r.verdict = m.verdict();
  r.steps = m.steps();
  r.trace = m.trace();
  return r;
}

}  // namespace

MonitorReport monitor(std::span<const double> stream, const MonitorConfig& cfg, const QuantileTable& table,
                      std::optional<long> horizon, MonitorOptions opts) {
  Monitor m(cfg, table, opts);
  MonitorReport r = run(m, stream, horizon);
  if (cfg.detector != DetectorKind::RC) r.table_fingerprint = table.fingerprint;
  return r;
}

MonitorReport monitor(std::span<const double> stream, const MonitorConfig& cfg, double threshold,
                      std::optional<long> horizon, MonitorOptions opts) {
  Monitor m(cfg, threshold, opts);
  return run(m, stream, horizon);
}

}  // namespace twin
