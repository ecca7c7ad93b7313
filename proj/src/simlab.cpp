#include "twin/simlab.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "twin/batch.hpp"
#include "twin/errors.hpp"
#include "twin/parallel.hpp"

namespace twin {

using nlohmann::json;

namespace {

const char* family_name(NoiseFamily f) {
  switch (f) {
    case NoiseFamily::normal: return "normal";
    case NoiseFamily::uniform: return "uniform";
    case NoiseFamily::truncexp: return "exponential";
    case NoiseFamily::cauchy: return "cauchy";
    case NoiseFamily::ar1: return "ar1";
    case NoiseFamily::zero: return "zero";
  }
  return "?";
}

NoiseFamily parse_family(std::string_view s) {
  if (s == "normal") return NoiseFamily::normal;
  if (s == "uniform") return NoiseFamily::uniform;
  if (s == "exponential" || s == "truncexp") return NoiseFamily::truncexp;
  if (s == "cauchy") return NoiseFamily::cauchy;
  if (s == "ar1") return NoiseFamily::ar1;
  if (s == "zero") return NoiseFamily::zero;
  throw Error(ErrorKind::usage, "unknown noise family '" + std::string(s) + "'");
}

// Composite Simpson on [a, b] with an even number of panels.
template <class F>
double simpson(F f, double a, double b, int panels = 20000) {
  const double h = (b - a) / panels;
  double s = f(a) + f(b);
  for (int i = 1; i < panels; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

struct TruncExpMoments {
  double mass, mean, var;
};

const TruncExpMoments& truncexp_moments() {
  static const TruncExpMoments m = [] {
    const double c = kTruncExpCut;
    const double mass = simpson([](double x) { return std::exp(-x); }, 0.0, c);
    const double mean = simpson([](double x) { return x * std::exp(-x); }, 0.0, c) / mass;
    const double var = simpson([&](double x) { return (x - mean) * (x - mean) * std::exp(-x); }, 0.0, c) / mass;
    return TruncExpMoments{mass, mean, var};
  }();
  return m;
}

// Solve E exp(X^2 / t^2) = 2 for t; mgf(t) must decrease in t.
template <class F>
double solve_orlicz(F mgf) {
  double lo = 0.05, hi = 20.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mgf(mid) > 2.0)
      lo = mid;
    else
      hi = mid;
  }
  return hi;
}

double family_orlicz(NoiseFamily f) {
  switch (f) {
    case NoiseFamily::normal:
    case NoiseFamily::cauchy:
      return std::sqrt(8.0 / 3.0);
    case NoiseFamily::uniform: {
      const double r = std::sqrt(3.0);
      return solve_orlicz([r](double t) {
        return simpson([t](double x) { return std::exp(x * x / (t * t)); }, 0.0, r, 2000) / r;
      });
    }
    case NoiseFamily::truncexp: {
      const auto& m = truncexp_moments();
      return solve_orlicz([&m](double t) {
        return simpson([&](double x) { return std::exp((x - m.mean) * (x - m.mean) / (t * t) - x); }, 0.0,
                       kTruncExpCut, 2000) /
               m.mass;
      });
    }
    case NoiseFamily::ar1:
    case NoiseFamily::zero: break;
  }
  throw Error(ErrorKind::usage, "no Orlicz norm for this family");
}

class Sampler {
 public:
  Sampler(NoiseFamily f, std::uint64_t seed) : f_(f), rng_(seed) {}
  double operator()() {
    switch (f_) {
      case NoiseFamily::normal: return z_(rng_);
      case NoiseFamily::uniform: return std::sqrt(3.0) * (2.0 * u_(rng_) - 1.0);
      case NoiseFamily::truncexp: {
        for (;;) {
          const double e = e_(rng_);
          if (e <= kTruncExpCut) return e - truncexp_moments().mean;
        }
      }
      case NoiseFamily::cauchy: return c_(rng_);
      case NoiseFamily::zero: return 0.0;
      case NoiseFamily::ar1: break;
    }
    throw Error(ErrorKind::usage, "invalid innovation family");
  }

 private:
  NoiseFamily f_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> z_;
  std::uniform_real_distribution<double> u_;
  std::exponential_distribution<double> e_;
  std::cauchy_distribution<double> c_;
};

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

}  // namespace

double truncexp_mean() { return truncexp_moments().mean; }
double truncexp_variance() { return truncexp_moments().var; }

NoiseModel NoiseModel::parse(std::string_view name) {
  NoiseModel m;
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s.rfind("ar1", 0) == 0) {
    m.family = NoiseFamily::ar1;
    std::vector<std::string> parts;
    std::stringstream ss(s);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() < 2 || parts.size() > 3 || parts[0] != "ar1")
      throw Error(ErrorKind::usage, "AR(1) noise is written ar1:<phi>[:<innovation>]");
    try {
      m.phi = std::stod(parts[1]);
    } catch (const std::exception&) {
      throw Error(ErrorKind::usage, "bad AR(1) coefficient '" + parts[1] + "'");
    }
    if (parts.size() == 3) m.innovation = parse_family(parts[2]);
  } else {
    m.family = parse_family(s);
  }
  m.validate();
  return m;
}

std::string NoiseModel::name() const {
  if (family != NoiseFamily::ar1) return family_name(family);
  std::string s = "ar1:" + fmt(phi);
  if (innovation != NoiseFamily::normal) s += std::string(":") + family_name(innovation);
  return s;
}

void NoiseModel::validate() const {
  if (family == NoiseFamily::ar1) {
    if (!(std::abs(phi) < 1.0)) throw Error(ErrorKind::usage, "AR(1) needs |phi| < 1");
    if (innovation == NoiseFamily::ar1 || innovation == NoiseFamily::cauchy || innovation == NoiseFamily::zero)
      throw Error(ErrorKind::usage, "AR(1) innovations must be normal, uniform or exponential");
  }
}

double NoiseModel::orlicz_norm() const {
  if (family != NoiseFamily::ar1) return family_orlicz(family);
  return family_orlicz(innovation) / std::sqrt(1.0 - phi * phi);
}

std::vector<double> draw_noise(const NoiseModel& noise, std::size_t n, std::uint64_t seed) {
  noise.validate();
  std::vector<double> x(n);
  if (noise.family != NoiseFamily::ar1) {
    Sampler s(noise.family, seed);
    for (auto& v : x) v = s();
    return x;
  }
  Sampler s(noise.innovation, seed);
  double prev = 0.0;
  for (int i = 0; i < 1000; ++i) prev = noise.phi * prev + s();
  for (auto& v : x) v = prev = noise.phi * prev + s();
  return x;
}

std::vector<double> generate_stream(const NoiseModel& noise, const std::optional<ChangeSpec>& change, long n_train,
                                    long t_horizon, std::uint64_t seed) {
  if (n_train < 1 || t_horizon < 0) throw Error(ErrorKind::usage, "invalid stream length");
  std::vector<double> x = draw_noise(noise, static_cast<std::size_t>(n_train + t_horizon), seed);
  if (!change || change->delta == 0.0) return x;
  if (change->k_star < 1) throw Error(ErrorKind::usage, "k_star must be at least 1");
  const long first = n_train + change->k_star;
  long last = n_train + t_horizon - 1;
  if (change->duration) {
    if (!(*change->duration >= 0.0)) throw Error(ErrorKind::usage, "duration must be nonnegative");
    last = std::min(last, first + static_cast<long>(std::floor(*change->duration * n_train + 1e-9)));
  }
  for (long j = first; j <= last; ++j) x[j] += change->delta;
  return x;
}

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::level: return "level";
    case ExperimentKind::power: return "power";
    case ExperimentKind::delay: return "delay";
    case ExperimentKind::epidemic: return "epidemic";
  }
  return "?";
}

ExperimentKind parse_experiment(std::string_view name) {
  if (name == "level") return ExperimentKind::level;
  if (name == "power") return ExperimentKind::power;
  if (name == "delay") return ExperimentKind::delay;
  if (name == "epidemic") return ExperimentKind::epidemic;
  throw Error(ErrorKind::usage, "unknown experiment kind '" + std::string(name) + "'");
}

void ExperimentSpec::validate() const {
  if (n_train < 2 || t_horizon < 1) throw Error(ErrorKind::usage, "experiment needs n_train >= 2 and T >= 1");
  if (replications < 1) throw Error(ErrorKind::usage, "replications must be positive");
  if (detectors.empty()) throw Error(ErrorKind::usage, "no detectors selected");
  noise.validate();
  const bool needs_change = kind != ExperimentKind::level;
  if (needs_change && !change) throw Error(ErrorKind::usage, to_string(kind) + " experiment needs a change");
  if (!needs_change && change) throw Error(ErrorKind::usage, "level experiment must not have a change");
  if (change && change->k_star < 1) throw Error(ErrorKind::usage, "k_star must be at least 1");
  if (kind == ExperimentKind::epidemic && !change->duration)
    throw Error(ErrorKind::usage, "epidemic experiment needs a duration");
}

json ExperimentSpec::to_json() const {
  json d = json::array();
  for (auto k : detectors) d.push_back(to_string(k));
  json j = {{"id", id},
            {"experiment", to_string(kind)},
            {"n_train", n_train},
            {"t_horizon", t_horizon},
            {"noise", noise.name()},
            {"detectors", d},
            {"replications", replications},
            {"seed", seed},
            {"alpha", alpha},
            {"beta", params.beta},
            {"c0", params.c0},
            {"eta", params.eta},
            {"b", params.b_mosum},
            {"scale", to_string(scale.mode)}};
  if (change) {
    j["k_star"] = change->k_star;
    j["delta"] = change->delta;
    j["duration"] = change->duration ? json(*change->duration) : json(nullptr);
  }
  return j;
}

const DetectorResult& ExperimentResult::at(DetectorKind kind) const {
  for (const auto& d : detectors)
    if (d.detector == kind) return d;
  throw Error(ErrorKind::usage, "detector " + to_string(kind) + " was not run");
}

std::string default_table_dir() {
  if (const char* env = std::getenv("TWIN_TABLE_DIR"); env && *env) return env;
  return std::string(TWIN_DATA_DIR) + "/tables";
}

CriticalValues CriticalValues::from_directory(const std::string& dir) {
  CriticalValues cv;
  cv.dir_ = dir;
  return cv;
}

void CriticalValues::set_table(DetectorKind kind, QuantileTable table) { tables_[kind] = std::move(table); }

void CriticalValues::set_value(DetectorKind kind, double value) { values_[kind] = value; }

double CriticalValues::threshold(const MonitorConfig& cfg) const {
  if (cfg.detector == DetectorKind::RC) return 1.0;
  if (auto it = values_.find(cfg.detector); it != values_.end()) return it->second;
  auto it = tables_.find(cfg.detector);
  if (it == tables_.end()) {
    if (dir_.empty()) throw Error(ErrorKind::usage, "no critical value for " + to_string(cfg.detector));
    const std::string path = dir_ + "/" + table_file_name(cfg.detector);
    if (!std::filesystem::exists(path))
      throw Error(ErrorKind::usage, "missing quantile table " + path + " (run `twin calibrate`)");
    it = tables_.emplace(cfg.detector, load_table(path)).first;
  }
  it->second.check_compatible(cfg);
  return it->second.critical_value(cfg.alpha);
}

MonitorConfig experiment_config(const ExperimentSpec& spec, DetectorKind kind) {
  MonitorConfig cfg = MonitorConfig::for_detector(kind, spec.n_train);
  cfg.params = spec.params;
  cfg.alpha = spec.alpha;
  if (kind == DetectorKind::TC || is_baseline(kind)) cfg.scale = spec.scale;
  if (kind == DetectorKind::RC) cfg.orlicz_norm = spec.noise.orlicz_norm();
  cfg.validate();
  return cfg;
}

ExperimentResult run_experiment(const ExperimentSpec& spec, const CriticalValues& cv, int threads) {
  spec.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t nd = spec.detectors.size();
  std::vector<MonitorConfig> cfgs;
  std::vector<double> thr;
  for (auto kind : spec.detectors) {
    cfgs.push_back(experiment_config(spec, kind));
    thr.push_back(cv.threshold(cfgs.back()));
  }

  // k_hat per (replication, detector); 0 = no detection
  std::vector<long> hits(static_cast<std::size_t>(spec.replications) * nd, 0);
  parallel_for(static_cast<std::size_t>(spec.replications), threads, [&](std::size_t r) {
    const auto x = generate_stream(spec.noise, spec.change, spec.n_train, spec.t_horizon, derive_seed(spec.seed, r));
    SeriesScanner scan(x, spec.n_train);
    for (std::size_t d = 0; d < nd; ++d) {
      const SeriesOutcome o = scan.first_crossing(cfgs[d], thr[d]);
      hits[r * nd + d] = o.detected ? o.k_hat : 0;
    }
  });

  ExperimentResult res;
  res.spec = spec;
  for (std::size_t d = 0; d < nd; ++d) {
    DetectorResult dr;
    dr.detector = spec.detectors[d];
    dr.replications = spec.replications;
    dr.threshold = thr[d];
    for (long r = 0; r < spec.replications; ++r) {
      const long k = hits[static_cast<std::size_t>(r) * nd + d];
      if (k > 0) ++dr.rejections;
      if (!spec.change) {
        if (k > 0) ++dr.false_alarms;
        continue;
      }
      if (k == 0) {
        ++dr.discarded;
      } else if (k < spec.change->k_star) {
        ++dr.false_alarms;
        ++dr.discarded;
      } else {
        dr.delays.push_back(k - spec.change->k_star);
      }
    }
    dr.rejection_rate = static_cast<double>(dr.rejections) / static_cast<double>(dr.replications);
    std::sort(dr.delays.begin(), dr.delays.end());
    if (dr.delays.empty()) {
      dr.delay_p25 = dr.delay_p50 = dr.delay_p75 = std::numeric_limits<double>::quiet_NaN();
    } else {
      const std::vector<double> dd(dr.delays.begin(), dr.delays.end());
      dr.delay_p25 = sample_quantile(dd, 0.25);
      dr.delay_p50 = sample_quantile(dd, 0.50);
      dr.delay_p75 = sample_quantile(dd, 0.75);
    }
    res.detectors.push_back(std::move(dr));
  }
  res.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

namespace {

ExperimentResult run_kind(ExperimentKind want, const ExperimentSpec& spec, const CriticalValues& cv, int threads) {
  if (spec.kind != want)
    throw Error(ErrorKind::usage, "expected a " + to_string(want) + " experiment, got " + to_string(spec.kind));
  return run_experiment(spec, cv, threads);
}

}  // namespace

ExperimentResult run_level_experiment(const ExperimentSpec& spec, const CriticalValues& cv, int threads) {
  return run_kind(ExperimentKind::level, spec, cv, threads);
}

ExperimentResult run_power_experiment(const ExperimentSpec& spec, const CriticalValues& cv, int threads) {
  return run_kind(ExperimentKind::power, spec, cv, threads);
}

ExperimentResult run_delay_experiment(const ExperimentSpec& spec, const CriticalValues& cv, int threads) {
  return run_kind(ExperimentKind::delay, spec, cv, threads);
}

std::vector<ExperimentResult> run_epidemic_experiment(const ExperimentSpec& spec, const std::vector<double>& durations,
                                                      const CriticalValues& cv, int threads) {
  if (!spec.change) throw Error(ErrorKind::usage, "epidemic experiment needs a change");
  std::vector<ExperimentResult> out;
  for (double d : durations) {
    ExperimentSpec s = spec;
    s.kind = ExperimentKind::epidemic;
    s.change->duration = d;
    out.push_back(run_experiment(s, cv, threads));
  }
  return out;
}

std::string results_csv(const std::vector<ExperimentResult>& results) {
  std::ostringstream os;
  os << "experiment_id,detector,noise,n_train,t_horizon,k_star,delta,duration,replications,rejection_rate,"
        "delay_p25,delay_p50,delay_p75,false_alarms,discarded,seed\n";
  for (const auto& r : results) {
    const auto& s = r.spec;
    for (const auto& d : r.detectors) {
      os << s.id << ',' << to_string(d.detector) << ',' << s.noise.name() << ',' << s.n_train << ',' << s.t_horizon
         << ',';
      if (s.change) {
        os << s.change->k_star << ',' << fmt(s.change->delta) << ','
           << (s.change->duration ? fmt(*s.change->duration) : "") << ',';
      } else {
        os << ",,,";
      }
      os << d.replications << ',' << fmt(d.rejection_rate) << ',' << fmt(d.delay_p25) << ',' << fmt(d.delay_p50)
         << ',' << fmt(d.delay_p75) << ',' << d.false_alarms << ',' << d.discarded << ',' << s.seed << '\n';
    }
  }
  return os.str();
}

json results_json(const std::vector<ExperimentResult>& results) {
  json rows = json::array();
  double runtime = 0.0;
  for (const auto& r : results) {
    runtime += r.runtime_seconds;
    for (const auto& d : r.detectors) {
      auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
      json row = {{"experiment_id", r.spec.id},
                  {"detector", to_string(d.detector)},
                  {"noise", r.spec.noise.name()},
                  {"n_train", r.spec.n_train},
                  {"t_horizon", r.spec.t_horizon},
                  {"k_star", r.spec.change ? json(r.spec.change->k_star) : json(nullptr)},
                  {"delta", r.spec.change ? json(r.spec.change->delta) : json(nullptr)},
                  {"duration", r.spec.change && r.spec.change->duration ? json(*r.spec.change->duration)
                                                                        : json(nullptr)},
                  {"replications", d.replications},
                  {"rejection_rate", d.rejection_rate},
                  {"delay_p25", num(d.delay_p25)},
                  {"delay_p50", num(d.delay_p50)},
                  {"delay_p75", num(d.delay_p75)},
                  {"false_alarms", d.false_alarms},
                  {"discarded", d.discarded},
                  {"seed", r.spec.seed},
                  {"threshold", d.threshold}};
      rows.push_back(std::move(row));
    }
  }
  json specs = json::array();
  for (const auto& r : results) specs.push_back(r.spec.to_json());
  return {{"metadata", {{"format", "twin-simlab-results"}, {"version", 1}, {"runtime_seconds", runtime}, {"experiments", specs}}},
          {"results", rows}};
}

void emit_results(const std::vector<ExperimentResult>& results, const std::string& path, const std::string& format) {
  std::string body;
  if (format == "csv")
    body = results_csv(results);
  else if (format == "json")
    body = results_json(results).dump(2) + "\n";
  else
    throw Error(ErrorKind::usage, "format must be csv or json");
  if (path == "-") {
    std::fwrite(body.data(), 1, body.size(), stdout);
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path);
  out << body;
}

// ---------------------------------------------------------------------------
// scenario files

namespace {

template <class T>
std::vector<T> as_list(const json& j, const char* key, std::vector<T> fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (v.is_array()) return v.get<std::vector<T>>();
  return {v.get<T>()};
}

}  // namespace

ScenarioFile parse_scenario(const json& j, bool fast) {
  ScenarioFile sf;
  try {
    sf.id = j.value("id", std::string("scenario"));
    const ExperimentKind kind = parse_experiment(j.at("experiment").get<std::string>());
    const auto ns = as_list<long>(j, "n_train", {100});
    const auto noises = as_list<std::string>(j, "noise", {"normal"});
    const double hfac = j.value("horizon_factor", 20.0);
    const auto ks_factor = as_list<double>(j, "k_star_factor", {});
    const auto ks_abs = as_list<long>(j, "k_star", {});
    const auto deltas = as_list<double>(j, "delta", {0.0});
    const auto durations = as_list<double>(j, "duration", {});
    std::vector<DetectorKind> dets;
    for (const auto& d : as_list<std::string>(j, "detectors", {})) dets.push_back(parse_detector(d));
    if (dets.empty()) dets = standard_detectors();
    long reps = j.value("replications", 1000L);
    if (fast) reps = j.value("fast_replications", reps);
    const auto seed = j.value("seed", std::uint64_t{1});

    ExperimentSpec base;
    base.kind = kind;
    base.detectors = dets;
    base.replications = reps;
    base.seed = seed;
    base.alpha = j.value("alpha", 0.05);
    base.params.beta = j.value("beta", base.params.beta);
    base.params.c0 = j.value("c0", base.params.c0);
    base.params.eta = j.value("eta", base.params.eta);
    base.params.b_mosum = j.value("b", base.params.b_mosum);
    if (j.contains("scale")) base.scale.mode = parse_scale_mode(j.at("scale").get<std::string>());

    for (long n : ns) {
      std::vector<long> kstars = ks_abs;
      for (double f : ks_factor) kstars.push_back(std::max(1L, std::lround(f * static_cast<double>(n))));
      if (kind == ExperimentKind::level) kstars = {0};
      for (const auto& nz : noises) {
        for (long ks : kstars) {
          for (double delta : kind == ExperimentKind::level ? std::vector<double>{0.0} : deltas) {
            std::vector<std::optional<double>> durs;
            if (kind == ExperimentKind::epidemic)
              for (double d : durations) durs.emplace_back(d);
            else
              durs.emplace_back(std::nullopt);
            for (const auto& dur : durs) {
              ExperimentSpec s = base;
              s.n_train = n;
              s.t_horizon = std::lround(hfac * static_cast<double>(n));
              s.noise = NoiseModel::parse(nz);
              std::ostringstream id;
              id << sf.id << "/" << s.noise.name() << "/N" << n;
              if (kind != ExperimentKind::level) {
                s.change = ChangeSpec{ks, delta, dur};
                id << "/k" << ks << "/d" << fmt(delta);
                if (dur) id << "/D" << fmt(*dur);
              }
              s.id = id.str();
              s.validate();
              sf.experiments.push_back(std::move(s));
            }
          }
        }
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::usage, std::string("bad scenario file: ") + e.what());
  }
  return sf;
}

ScenarioFile load_scenario(const std::string& path, bool fast) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot read " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::usage, path + ": " + e.what());
  }
  return parse_scenario(j, fast);
}

}  // namespace twin
