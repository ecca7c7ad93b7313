#include "twin/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>

#include "twin/errors.hpp"

namespace twin {

using nlohmann::json;

namespace {

std::vector<std::string> split_csv_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      out.push_back(std::move(cell));
      cell.clear();
    } else {
      cell += c;
    }
  }
  out.push_back(std::move(cell));
  return out;
}

std::string trim(std::string s) {
  const auto ws = [](unsigned char c) { return std::isspace(c); };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
  return s;
}

std::optional<std::chrono::sys_days> parse_iso(const std::string& s) {
  int y = 0;
  unsigned m = 0, d = 0;
  char a = 0, b = 0;
  std::istringstream is(s);
  if (!(is >> y >> a >> m >> b >> d) || a != '-' || b != '-' || is.peek() != EOF) return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) return std::nullopt;
  return std::chrono::sys_days{ymd};
}

std::string iso(std::chrono::sys_days d) {
  const std::chrono::year_month_day ymd{d};
  std::ostringstream os;
  os << std::setfill('0') << std::setw(4) << int(ymd.year()) << '-' << std::setw(2) << unsigned(ymd.month()) << '-'
     << std::setw(2) << unsigned(ymd.day());
  return os.str();
}

}  // namespace

json IngestResult::skip_log() const {
  json rows_j = json::array();
  for (const auto& s : skipped) rows_j.push_back({{"line", s.line}, {"reason", s.reason}});
  return {{"rows", rows}, {"accepted", records.size()}, {"skipped", skipped.size()}, {"skipped_rows", rows_j}};
}

IngestResult ingest_csv(std::istream& in, const CsvSchema& schema, const std::string& name) {
  IngestResult res;
  std::string line;
  long lineno = 0;
  if (!std::getline(in, line)) throw Error(ErrorKind::data, name + ": empty file");
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line, schema.delimiter);
  auto column = [&](const std::string& want) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (trim(header[i]) == want) return i;
    throw Error(ErrorKind::data, name + ": no column named '" + want + "'");
  };
  const std::size_t dc = column(schema.date_col), vc = column(schema.value_col);

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    ++res.rows;
    const auto cells = split_csv_line(line, schema.delimiter);
    if (cells.size() <= std::max(dc, vc)) {
      res.skipped.push_back({lineno, "too few fields"});
      continue;
    }
    std::string date = trim(cells[dc]);
    const std::string raw = trim(cells[vc]);
    if (date.empty()) {
      res.skipped.push_back({lineno, "empty date"});
      continue;
    }
    if (!schema.date_format.empty()) {
      std::tm tm{};
      std::istringstream ds(date);
      ds >> std::get_time(&tm, schema.date_format.c_str());
      if (ds.fail()) {
        res.skipped.push_back({lineno, "date '" + date + "' does not match " + schema.date_format});
        continue;
      }
      const std::chrono::year_month_day ymd{std::chrono::year{tm.tm_year + 1900},
                                            std::chrono::month{unsigned(tm.tm_mon + 1)},
                                            std::chrono::day{unsigned(tm.tm_mday)}};
      if (!ymd.ok()) {
        res.skipped.push_back({lineno, "invalid date '" + date + "'"});
        continue;
      }
      date = iso(std::chrono::sys_days{ymd});
    }
    double v = 0.0;
    std::size_t used = 0;
    try {
      v = std::stod(raw, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (raw.empty() || used != raw.size() || !std::isfinite(v)) {
      res.skipped.push_back({lineno, "non-numeric value '" + raw + "'"});
      continue;
    }
    res.records.push_back({std::move(date), v});
  }
  if (res.records.empty()) throw Error(ErrorKind::data, name + ": no valid rows");
  return res;
}

IngestResult ingest_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot read " + path);
  return ingest_csv(in, schema, path);
}

double mid_median(std::vector<double> v) {
  if (v.empty()) throw Error(ErrorKind::data, "median of no values");
  const std::size_t h = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + h, v.end());
  const double upper = v[h];
  if (v.size() % 2) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + h);
  return 0.5 * (lower + upper);
}

DailySeries aggregate_daily(const std::vector<SeriesRecord>& records) {
  if (records.empty()) throw Error(ErrorKind::data, "no records to aggregate");
  std::map<std::string, std::vector<double>> by_day;
  for (const auto& r : records) by_day[r.date].push_back(r.value);
  DailySeries s;
  std::optional<std::chrono::sys_days> prev;
  std::string prev_date;
  for (auto& [date, vals] : by_day) {
    s.dates.push_back(date);
    s.counts.push_back(static_cast<long>(vals.size()));
    s.values.push_back(mid_median(std::move(vals)));
    const auto d = parse_iso(date);
    if (d && prev) {
      const long step = (*d - *prev).count();
      if (step > 1) s.gaps.push_back({prev_date, step - 1});
    }
    prev = d;
    prev_date = date;
  }
  return s;
}

std::string to_string(VarianceMode mode) { return mode == VarianceMode::monitoring ? "monitoring" : "train"; }

VarianceMode parse_variance_mode(std::string_view name) {
  if (name == "monitoring") return VarianceMode::monitoring;
  if (name == "train" || name == "train_variance") return VarianceMode::train;
  throw Error(ErrorKind::usage, "variance mode must be monitoring or train");
}

json AnalysisOptions::to_json() const {
  json d = json::array();
  for (auto k : detectors) d.push_back(to_string(k));
  return {{"n_train", n_train}, {"detectors", d},          {"beta", params.beta}, {"c0", params.c0},
          {"eta", params.eta},  {"b", params.b_mosum},     {"alpha", alpha},      {"variance_mode", to_string(variance)}};
}

Analysis::Analysis(const AnalysisOptions& opts, const CriticalValues& cv, std::optional<double> sigma2,
                   double rc_sigma2)
    : opts_(opts), sigma2_(sigma2), rc_sigma2_(rc_sigma2) {
  if (opts.n_train < 2) throw Error(ErrorKind::usage, "training window needs at least 2 values");
  if (opts.variance == VarianceMode::monitoring && !sigma2)
    throw Error(ErrorKind::usage, "monitoring variance mode needs the monitoring-period variance");
  MonitorOptions mo;
  mo.trace_every = 1;
  for (auto kind : opts.detectors) {
    Slot s;
    s.kind = kind;
    s.cfg = MonitorConfig::for_detector(kind, opts.n_train);
    s.cfg.params = opts.params;
    s.cfg.alpha = opts.alpha;
    try {
      if (kind == DetectorKind::TC || is_baseline(kind)) {
        if (opts.variance == VarianceMode::monitoring) {
          if (!(*sigma2 > 0.0)) throw Error(ErrorKind::zero_variance, "monitoring-period variance is zero");
          s.cfg.scale = {ScaleMode::known, *sigma2, -1};
        } else {
          s.cfg.scale = {ScaleMode::train_variance, 1.0, -1};
        }
      }
      if (kind == DetectorKind::RC) {
        if (!(rc_sigma2 > 0.0)) throw Error(ErrorKind::zero_variance, "zero variance leaves RC without a norm");
        s.cfg.orlicz_norm = std::sqrt(8.0 / 3.0 * rc_sigma2);
      }
      s.cfg.validate();
      s.threshold = cv.threshold(s.cfg);
      s.monitor.emplace(s.cfg, s.threshold, mo);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::zero_variance && e.kind() != ErrorKind::degenerate_normalizer) throw;
      s.error = e.what();
    }
    slots_.push_back(std::move(s));
  }
}

void Analysis::feed(const std::string& date, double value) {
  if (!dates_.empty() && date <= dates_.back())
    throw Error(ErrorKind::data, "dates must increase: " + date + " after " + dates_.back());
  dates_.push_back(date);
  for (auto& s : slots_) {
    if (s.error || !s.monitor) continue;
    try {
      s.monitor->push(value);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::zero_variance && e.kind() != ErrorKind::degenerate_normalizer) throw;
      s.error = e.what();
      s.monitor.reset();
    }
  }
}

AnalysisReport Analysis::report() const {
  AnalysisReport r;
  r.options = opts_;
  r.dates = dates_;
  r.sigma2 = sigma2_;
  r.rc_sigma2 = rc_sigma2_;
  for (const auto& s : slots_) {
    DetectorReport d;
    d.detector = s.kind;
    d.threshold = s.threshold;
    d.error = s.error;
    if (s.monitor) {
      const Scale& sc = s.monitor->resolved_scale();
      d.scale_mode = to_string(sc.mode);
      if (sc.mode == ScaleMode::known) d.sigma2 = sc.sigma2;
      if (sc.mode == ScaleMode::train_variance && s.monitor->trained()) d.sigma2 = s.monitor->state().train_var();
      d.verdict = s.monitor->verdict();
      d.trace = s.monitor->trace();
      if (d.verdict.detected) {
        d.detection_date = dates_.at(static_cast<std::size_t>(opts_.n_train + *d.verdict.k_hat - 1));
        if (d.verdict.change_estimate)
          d.change_date = dates_.at(static_cast<std::size_t>(*d.verdict.change_estimate));
      }
    } else {
      d.scale_mode = to_string(s.cfg.scale.mode);
    }
    r.detectors.push_back(std::move(d));
  }
  return r;
}

json Analysis::checkpoint() const {
  json slots = json::array();
  for (const auto& s : slots_) {
    json j = {{"detector", to_string(s.kind)}};
    if (s.error) j["error"] = *s.error;
    if (s.monitor) j["monitor"] = s.monitor->snapshot();
    slots.push_back(std::move(j));
  }
  return {{"format", "twin-analysis-checkpoint"},
          {"options", opts_.to_json()},
          {"sigma2", sigma2_ ? json(*sigma2_) : json(nullptr)},
          {"rc_sigma2", rc_sigma2_},
          {"dates", dates_},
          {"slots", slots}};
}

Analysis Analysis::resume(const json& doc, const AnalysisOptions& opts, const CriticalValues& cv) {
  try {
    if (doc.at("options") != opts.to_json())
      throw Error(ErrorKind::config_mismatch, "checkpoint was taken under different analysis options");
    std::optional<double> sigma2;
    if (!doc.at("sigma2").is_null()) sigma2 = doc.at("sigma2").get<double>();
    Analysis a(opts, cv, sigma2, doc.at("rc_sigma2").get<double>());
    a.dates_ = doc.at("dates").get<std::vector<std::string>>();
    const json& slots = doc.at("slots");
    if (slots.size() != a.slots_.size()) throw Error(ErrorKind::data, "checkpoint detector list differs");
    MonitorOptions mo;
    mo.trace_every = 1;
    for (std::size_t i = 0; i < slots.size(); ++i) {
      auto& s = a.slots_[i];
      if (slots[i].contains("error")) {
        s.error = slots[i].at("error").get<std::string>();
        s.monitor.reset();
      } else if (slots[i].contains("monitor")) {
        s.monitor.emplace(Monitor::restore(slots[i].at("monitor"), s.cfg, mo));
      }
    }
    return a;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::data, std::string("malformed analysis checkpoint: ") + e.what());
  }
}

namespace {

double sample_variance(const double* b, const double* e) {
  const double n = static_cast<double>(e - b);
  if (n < 2) return 0.0;
  double mean = 0.0;
  for (auto p = b; p != e; ++p) mean += *p;
  mean /= n;
  double ss = 0.0;
  for (auto p = b; p != e; ++p) ss += (*p - mean) * (*p - mean);
  return ss / (n - 1.0);
}

}  // namespace

AnalysisReport analyze(const DailySeries& series, const AnalysisOptions& opts, const CriticalValues& cv) {
  const auto n = static_cast<std::size_t>(opts.n_train);
  if (opts.n_train < 2 || series.size() <= n)
    throw Error(ErrorKind::data, "series has " + std::to_string(series.size()) +
                                     " days, more than the training window of " + std::to_string(opts.n_train) +
                                     " are needed");
  const double* v = series.values.data();
  const double mon = sample_variance(v + n, v + series.size());
  const double train = sample_variance(v, v + n);
  std::optional<double> sigma2;
  if (opts.variance == VarianceMode::monitoring) sigma2 = mon;
  Analysis a(opts, cv, sigma2, opts.variance == VarianceMode::monitoring ? mon : train);
  for (std::size_t i = 0; i < series.size(); ++i) a.feed(series.dates[i], series.values[i]);
  return a.report();
}

json AnalysisReport::to_json() const {
  json dets = json::array();
  for (const auto& d : detectors) {
    json j = {{"detector", to_string(d.detector)},
              {"scale_mode", d.scale_mode},
              {"sigma2", d.sigma2 ? json(*d.sigma2) : json(nullptr)},
              {"threshold", d.threshold},
              {"detected", d.verdict.detected},
              {"detection_date", d.detection_date ? json(*d.detection_date) : json("none")},
              {"change_date", d.change_date ? json(*d.change_date) : json("none")},
              {"k_hat", d.verdict.k_hat ? json(*d.verdict.k_hat) : json(nullptr)},
              {"ell_hat", d.verdict.detected ? json(d.verdict.ell_hat) : json(nullptr)},
              {"change_index", d.verdict.change_estimate ? json(*d.verdict.change_estimate) : json(nullptr)},
              {"statistic", d.verdict.statistic}};
    if (d.error) j["error"] = *d.error;
    dets.push_back(std::move(j));
  }
  json var = {{"mode", to_string(options.variance)}};
  if (sigma2) var["monitoring_sigma2"] = *sigma2;
  var["rc_orlicz_proxy"] = std::sqrt(8.0 / 3.0 * rc_sigma2);
  return {{"format", "twin-analysis-report"},
          {"version", 1},
          {"config", options.to_json()},
          {"series",
           {{"days", dates.size()},
            {"first_date", dates.empty() ? "" : dates.front()},
            {"training_end", dates.size() >= std::size_t(options.n_train) ? dates[options.n_train - 1] : ""},
            {"last_date", dates.empty() ? "" : dates.back()}}},
          {"variance", var},
          {"detectors", dets}};
}

std::string AnalysisReport::trace_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "detector,k,date,statistic,threshold\n";
  for (const auto& d : detectors)
    for (const auto& p : d.trace)
      os << to_string(d.detector) << ',' << p.k << ',' << dates.at(options.n_train + p.k - 1) << ',' << p.value
         << ',' << d.threshold << '\n';
  return os.str();
}

std::vector<SeriesRecord> demo_records(long days, long shift_day, double level, double shift, double sd,
                                       long per_day, std::uint64_t seed) {
  using namespace std::chrono;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, sd);
  const sys_days start{year{2020} / May / 1};
  std::vector<SeriesRecord> out;
  for (long d = 0; d < days; ++d) {
    const std::string date = iso(start + std::chrono::days{d});
    const double mu = level + (d >= shift_day ? shift : 0.0);
    for (long i = 0; i < per_day; ++i) out.push_back({date, mu + z(rng)});
  }
  return out;
}

DailySeries demo_series(long days, long shift_day, double level, double shift, double sd, long per_day,
                        std::uint64_t seed) {
  return aggregate_daily(demo_records(days, shift_day, level, shift, sd, per_day, seed));
}

void write_records_csv(const std::vector<SeriesRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path);
  out.precision(10);
  out << "date,value\n";
  for (const auto& r : records) out << r.date << ',' << r.value << '\n';
}

}  // namespace twin
