#include "twin/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "twin/batch.hpp"
#include "twin/errors.hpp"
#include "twin/parallel.hpp"

namespace twin {

using nlohmann::json;

std::string to_string(Law law) {
  switch (law) {
    case Law::L_TC: return "L_TC";
    case Law::L_SN: return "L_SN";
    case Law::L_F: return "L_F";
    case Law::NULL_SIM: return "NULL_SIM";
  }
  return "?";
}

Law parse_law(std::string_view name) {
  if (name == "L_TC") return Law::L_TC;
  if (name == "L_SN") return Law::L_SN;
  if (name == "L_F") return Law::L_F;
  if (name == "NULL_SIM") return Law::NULL_SIM;
  throw Error(ErrorKind::usage, "unknown law '" + std::string(name) + "'");
}

json GridSpec::to_json() const {
  return {{"fine_step", fine_step}, {"mid_step", mid_step}, {"coarse_step", coarse_step}, {"t_max", t_max}};
}

GridSpec GridSpec::from_json(const json& j) {
  GridSpec g;
  g.fine_step = j.at("fine_step").get<double>();
  g.mid_step = j.at("mid_step").get<double>();
  g.coarse_step = j.at("coarse_step").get<double>();
  g.t_max = j.at("t_max").get<double>();
  return g;
}

const std::vector<double>& table_levels() {
  static const std::vector<double> levels = [] {
    std::vector<double> v;
    for (int p = 90; p <= 99; ++p) v.push_back(p / 100.0);
    return v;
  }();
  return levels;
}

Law law_for(DetectorKind kind) noexcept {
  switch (kind) {
    case DetectorKind::TC: return Law::L_TC;
    case DetectorKind::SNTC: return Law::L_SN;
    case DetectorKind::NPTC: return Law::L_F;
    default: return Law::NULL_SIM;
  }
}

std::string table_file_name(DetectorKind kind) {
  const Law law = law_for(kind);
  if (law == Law::NULL_SIM) return "NULL_SIM_" + to_string(kind) + ".json";
  return to_string(law) + ".json";
}

SampleSpec default_null_spec() { return {100, 20}; }

namespace {

json law_params(Law law, const DetectorParams& p) {
  if (law == Law::NULL_SIM) return {{"eta", p.eta}, {"b_mosum", p.b_mosum}, {"c0", p.c0}};
  return {{"beta", p.beta}, {"c0", p.c0}};
}

DetectorKind law_kind(Law law, DetectorKind null_kind) {
  switch (law) {
    case Law::L_TC: return DetectorKind::TC;
    case Law::L_SN: return DetectorKind::SNTC;
    case Law::L_F: return DetectorKind::NPTC;
    case Law::NULL_SIM: return null_kind;
  }
  return null_kind;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

QuantileTable make_table(Law law, DetectorKind kind, const DetectorParams& params, json grid_spec,
                         std::vector<double> sample, std::uint64_t seed) {
  QuantileTable t;
  t.law = law;
  t.kind = law_kind(law, kind);
  t.params = law_params(law, params);
  t.grid_spec = std::move(grid_spec);
  t.draws = static_cast<long>(sample.size());
  t.seed = seed;
  std::sort(sample.begin(), sample.end());
  for (double lv : table_levels()) t.quantiles.emplace_back(lv, sample_quantile(sample, lv));
  t.fingerprint = table_fingerprint(t.law, t.kind, t.params, t.grid_spec);
  return t;
}

void require_draws(long draws) {
  if (draws < 1) throw Error(ErrorKind::usage, "draws must be positive");
}

}  // namespace

std::string table_fingerprint(Law law, DetectorKind kind, const json& params, const json& grid_spec) {
  const json canon = {{"law", to_string(law)}, {"kind", to_string(kind)}, {"params", params}, {"grid_spec", grid_spec}};
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << fnv1a(canon.dump());
  return os.str();
}

double sample_quantile(const std::vector<double>& sorted, double level) {
  if (sorted.empty()) throw Error(ErrorKind::usage, "quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * level;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double QuantileTable::quantile(double level) const {
  for (const auto& [lv, v] : quantiles)
    if (std::abs(lv - level) < 1e-9) return v;
  throw Error(ErrorKind::usage, "level " + std::to_string(level) + " is not in the quantile table");
}

void QuantileTable::check_compatible(const MonitorConfig& cfg) const {
  const Law want = law_for(cfg.detector);
  if (want != law || (law == Law::NULL_SIM && kind != cfg.detector))
    throw Error(ErrorKind::config_mismatch, "table for " + to_string(kind) + " (" + to_string(law) +
                                                ") cannot calibrate " + to_string(cfg.detector));
  const json expect = law_params(law, cfg.params);
  for (auto it = expect.begin(); it != expect.end(); ++it) {
    if (!params.contains(it.key()))
      throw Error(ErrorKind::config_mismatch, "table lacks parameter " + it.key());
    const double a = params.at(it.key()).get<double>(), b = it.value().get<double>();
    if (std::abs(a - b) > 1e-12 * std::max(1.0, std::abs(b)))
      throw Error(ErrorKind::config_mismatch, "table " + it.key() + "=" + params.at(it.key()).dump() +
                                                  " but config has " + it.value().dump());
  }
  if (draws < 1000)
    throw Error(ErrorKind::config_mismatch, "table has " + std::to_string(draws) + " draws, at least 1000 needed");
}

json QuantileTable::to_json() const {
  json q = json::array();
  for (const auto& [lv, v] : quantiles) q.push_back({lv, v});
  return {{"version", version},   {"law", to_string(law)},     {"kind", to_string(kind)},
          {"params", params},     {"grid_spec", grid_spec},    {"draws", draws},
          {"seed", seed},         {"redraws", redraws},        {"quantiles", q},
          {"fingerprint", fingerprint}};
}

QuantileTable QuantileTable::from_json(const json& j) {
  QuantileTable t;
  try {
    t.version = j.at("version").get<int>();
    if (t.version > kVersion)
      throw Error(ErrorKind::data, "table version " + std::to_string(t.version) + " is newer than supported (" +
                                       std::to_string(kVersion) + ")");
    t.law = parse_law(j.at("law").get<std::string>());
    t.kind = parse_detector(j.at("kind").get<std::string>());
    t.params = j.at("params");
    t.grid_spec = j.at("grid_spec");
    t.draws = j.at("draws").get<long>();
    t.seed = j.at("seed").get<std::uint64_t>();
    t.redraws = j.value("redraws", 0L);
    for (const auto& row : j.at("quantiles")) t.quantiles.emplace_back(row.at(0).get<double>(), row.at(1).get<double>());
    t.fingerprint = j.at("fingerprint").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::data, std::string("malformed quantile table: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::usage) throw Error(ErrorKind::data, e.what());
    throw;
  }
  for (std::size_t i = 1; i < t.quantiles.size(); ++i)
    if (t.quantiles[i].first <= t.quantiles[i - 1].first || t.quantiles[i].second < t.quantiles[i - 1].second)
      throw Error(ErrorKind::data, "quantile table is not monotone");
  if (table_fingerprint(t.law, t.kind, t.params, t.grid_spec) != t.fingerprint)
    throw Error(ErrorKind::data, "quantile table fingerprint does not match its content");
  return t;
}

void store_table(const QuantileTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path);
  out << table.to_json().dump(2) << '\n';
  if (!out) throw Error(ErrorKind::io, "write failed: " + path);
}

QuantileTable load_table(const std::string& path, const std::string& expected_fingerprint) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot read " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::data, path + ": " + e.what());
  }
  QuantileTable t = QuantileTable::from_json(j);
  if (!expected_fingerprint.empty() && t.fingerprint != expected_fingerprint)
    throw Error(ErrorKind::config_mismatch,
                path + ": fingerprint " + t.fingerprint + " but expected " + expected_fingerprint);
  return t;
}

// ---------------------------------------------------------------------------
// Brownian functionals on the graded grid

namespace {

struct PairSet {
  std::vector<double> grid;  // grid[0] = 0
  std::size_t one = 0;       // index of t = 1
  struct Pair {
    std::uint32_t t, u, s;
    float coef;  // s when s < 1 (multiplies B(1)), else 1
    double w;
  };
  std::vector<Pair> pairs;
};

std::size_t grid_index(const std::vector<double>& g, double x) {
  auto it = std::lower_bound(g.begin(), g.end(), x - 1e-9);
  if (it == g.end() || std::abs(*it - x) > 1e-7)
    throw Error(ErrorKind::usage, "grid steps do not nest: " + std::to_string(x) + " is not a grid point");
  return static_cast<std::size_t>(it - g.begin());
}

PairSet build_pairs(const DetectorParams& p, const GridSpec& spec) {
  if (!(spec.fine_step > 0 && spec.mid_step > 0 && spec.coarse_step > 0) || spec.t_max <= 1.0)
    throw Error(ErrorKind::usage, "invalid grid spec");
  if (p.beta <= 0.5 || p.c0 <= 1.0) throw Error(ErrorKind::usage, "need beta > 1/2 and c0 > 1");
  PairSet ps;
  ps.grid.push_back(0.0);
  double at = 0.0;
  auto segment = [&](double step, double end) {
    end = std::min(end, spec.t_max);
    if (end <= at) return;
    const long n = std::lround((end - at) / step);
    if (std::abs(n * step - (end - at)) > 1e-7 * end)
      throw Error(ErrorKind::usage, "grid step does not divide its segment");
    const double base = at;
    for (long i = 1; i <= n; ++i) ps.grid.push_back(base + static_cast<double>(i) * step);
    at = end;
  };
  segment(spec.fine_step, 10.0);
  segment(spec.mid_step, 100.0);
  segment(spec.coarse_step, spec.t_max);

  const auto& g = ps.grid;
  ps.one = grid_index(g, 1.0);
  for (std::size_t it = ps.one + 1; it < g.size(); ++it) {
    const double t = g[it];
    const double tw = std::pow(std::log(p.c0 + t), -p.beta);
    for (std::size_t iu = ps.one; iu < it; ++iu) {
      const double u = g[iu];
      if (u < t / 2 - 1e-9) continue;
      const double s = t - u;
      PairSet::Pair pr{static_cast<std::uint32_t>(it), static_cast<std::uint32_t>(iu),
                       static_cast<std::uint32_t>(ps.one), 1.0f, 0.0};
      if (s >= 1.0 - 1e-9)
        pr.s = static_cast<std::uint32_t>(grid_index(g, s));
      else
        pr.coef = static_cast<float>(s);
      pr.w = tw / (std::sqrt(s) * std::pow(std::log(p.c0 + 1.0 / s), p.beta));
      ps.pairs.push_back(pr);
    }
  }
  return ps;
}

}  // namespace

std::size_t brownian_pair_count(const DetectorParams& params, const GridSpec& grid) {
  return build_pairs(params, grid).pairs.size();
}

BrownianDraws draw_brownian_laws(const DetectorParams& params, const GridSpec& grid, long draws,
                                 std::uint64_t seed, int threads, double increment_scale) {
  require_draws(draws);
  const PairSet ps = build_pairs(params, grid);
  const auto& g = ps.grid;
  std::vector<double> sd(g.size(), 0.0);
  for (std::size_t i = 1; i < g.size(); ++i) sd[i] = increment_scale * std::sqrt(g[i] - g[i - 1]);

  BrownianDraws out;
  out.tc.assign(draws, 0.0);
  out.sn.assign(draws, 0.0);
  std::vector<long> redo(draws, 0);

  parallel_for(static_cast<std::size_t>(draws), threads, [&](std::size_t d) {
    std::vector<double> b(g.size());
    for (std::uint64_t attempt = 0;; ++attempt) {
      std::mt19937_64 rng(derive_seed(seed, d, attempt));
      std::normal_distribution<double> z;
      b[0] = 0.0;
      for (std::size_t i = 1; i < g.size(); ++i) b[i] = b[i - 1] + sd[i] * z(rng);

      double m = 0.0;
      for (const auto& pr : ps.pairs) {
        const double v = std::abs(pr.coef * b[pr.s] - (b[pr.t] - b[pr.u])) * pr.w;
        m = std::max(m, v);
      }
      double v_int = 0.0;
      const double b1 = b[ps.one];
      for (std::size_t i = 1; i <= ps.one; ++i) {
        const double lo = std::abs(b[i - 1] - g[i - 1] * b1), hi = std::abs(b[i] - g[i] * b1);
        v_int += 0.5 * (lo + hi) * (g[i] - g[i - 1]);
      }
      if (v_int > 0.0 && std::isfinite(v_int)) {
        out.tc[d] = m;
        out.sn[d] = m / v_int;
        redo[d] = static_cast<long>(attempt);
        return;
      }
    }
  });
  for (long r : redo) out.redraws += r;
  return out;
}

std::pair<QuantileTable, QuantileTable> simulate_L_TC_SN(const DetectorParams& params, const GridSpec& grid,
                                                         long draws, std::uint64_t seed, int threads) {
  BrownianDraws d = draw_brownian_laws(params, grid, draws, seed, threads);
  QuantileTable tc = make_table(Law::L_TC, DetectorKind::TC, params, grid.to_json(), std::move(d.tc), seed);
  QuantileTable sn = make_table(Law::L_SN, DetectorKind::SNTC, params, grid.to_json(), std::move(d.sn), seed);
  sn.redraws = d.redraws;
  return {std::move(tc), std::move(sn)};
}

QuantileTable simulate_L_TC(const DetectorParams& params, const GridSpec& grid, long draws, std::uint64_t seed,
                            int threads) {
  return simulate_L_TC_SN(params, grid, draws, seed, threads).first;
}

QuantileTable simulate_L_SN(const DetectorParams& params, const GridSpec& grid, long draws, std::uint64_t seed,
                            int threads) {
  return simulate_L_TC_SN(params, grid, draws, seed, threads).second;
}

// ---------------------------------------------------------------------------
// Finite-sample laws

namespace {

void check_sample_spec(const SampleSpec& spec) {
  if (spec.n_cal < 2 || spec.t_horizon < 1) throw Error(ErrorKind::usage, "invalid calibration sample size");
}

json sample_grid(const SampleSpec& spec) { return {{"n_cal", spec.n_cal}, {"t_horizon", spec.t_horizon}}; }

}  // namespace

std::vector<double> draw_L_F(const DetectorParams& params, const SampleSpec& spec, long draws, std::uint64_t seed,
                             int threads, CalibrationInput input) {
  require_draws(draws);
  check_sample_spec(spec);
  MonitorConfig cfg = MonitorConfig::for_detector(DetectorKind::NPTC, spec.n_cal);
  cfg.params = params;
  cfg.validate();
  const std::size_t len = static_cast<std::size_t>(spec.n_cal * (1 + spec.t_horizon));
  std::vector<double> out(draws);
  parallel_for(static_cast<std::size_t>(draws), threads, [&](std::size_t d) {
    std::mt19937_64 rng(derive_seed(seed, d));
    std::vector<double> x(len);
    if (input == CalibrationInput::uniform) {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (auto& v : x) v = u(rng);
    } else {
      std::normal_distribution<double> z;
      for (auto& v : x) v = z(rng);
    }
    out[d] = SeriesScanner(x, spec.n_cal).supremum(cfg);
  });
  return out;
}

QuantileTable simulate_L_F(const DetectorParams& params, const SampleSpec& spec, long draws, std::uint64_t seed,
                           int threads) {
  if (spec.n_cal < 100) throw Error(ErrorKind::usage, "L_F calibration needs n_cal >= 100");
  return make_table(Law::L_F, DetectorKind::NPTC, params, sample_grid(spec),
                    draw_L_F(params, spec, draws, seed, threads), seed);
}

std::vector<double> draw_null_sim(DetectorKind kind, const DetectorParams& params, const SampleSpec& spec,
                                  long draws, std::uint64_t seed, int threads, double sd) {
  require_draws(draws);
  check_sample_spec(spec);
  if (!is_baseline(kind) || kind == DetectorKind::RC)
    throw Error(ErrorKind::usage, "null simulation covers C, PC, FC, WC and MM only");
  MonitorConfig cfg = MonitorConfig::for_detector(kind, spec.n_cal);
  cfg.params = params;
  cfg.scale = {ScaleMode::known, sd * sd, -1};
  cfg.validate();
  const std::size_t len = static_cast<std::size_t>(spec.n_cal * (1 + spec.t_horizon));
  std::vector<double> out(draws);
  parallel_for(static_cast<std::size_t>(draws), threads, [&](std::size_t d) {
    std::mt19937_64 rng(derive_seed(seed, d));
    std::normal_distribution<double> z(0.0, sd);
    std::vector<double> x(len);
    for (auto& v : x) v = z(rng);
    out[d] = SeriesScanner(x, spec.n_cal).supremum(cfg);
  });
  return out;
}

QuantileTable null_sim_quantiles(DetectorKind kind, const DetectorParams& params, const SampleSpec& spec,
                                 long draws, std::uint64_t seed, int threads) {
  json grid = sample_grid(spec);
  grid["noise"] = "normal";
  grid["scale"] = "known";
  return make_table(Law::NULL_SIM, kind, params, grid, draw_null_sim(kind, params, spec, draws, seed, threads),
                    seed);
}

}  // namespace twin
