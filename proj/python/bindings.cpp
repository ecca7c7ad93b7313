#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "twin/batch.hpp"
#include "twin/calibration.hpp"
#include "twin/errors.hpp"
#include "twin/monitor.hpp"
#include "twin/pipeline.hpp"
#include "twin/simlab.hpp"

namespace py = pybind11;
using namespace twin;
using nlohmann::json;

namespace {

DetectorParams make_params(double beta, double c0, double eta, double b) {
  DetectorParams p;
  p.beta = beta;
  p.c0 = c0;
  p.eta = eta;
  p.b_mosum = b;
  return p;
}

MonitorConfig make_config(const std::string& detector, long n_train, double beta, double c0, double eta, double b,
                          double alpha, const std::optional<std::string>& scale, double sigma2, int bandwidth,
                          double orlicz) {
  MonitorConfig cfg = MonitorConfig::for_detector(parse_detector(detector), n_train);
  cfg.params = make_params(beta, c0, eta, b);
  cfg.alpha = alpha;
  if (scale) cfg.scale.mode = parse_scale_mode(*scale);
  cfg.scale.sigma2 = sigma2;
  cfg.scale.bandwidth = bandwidth;
  if (cfg.detector == DetectorKind::RC) cfg.orlicz_norm = orlicz;
  cfg.validate();
  return cfg;
}

#define TWIN_CONFIG_ARGS                                                                                   \
  py::arg("detector") = "TC", py::arg("n_train") = 100, py::arg("beta") = 0.6, py::arg("c0") = 20.0,       \
      py::arg("eta") = 0.4, py::arg("b") = 0.4, py::arg("alpha") = 0.05, py::arg("scale") = py::none(),   \
      py::arg("sigma2") = 1.0, py::arg("bandwidth") = -1, py::arg("orlicz") = std::sqrt(8.0 / 3.0)

class PyMonitor {
 public:
  PyMonitor(const std::string& detector, long n_train, double beta, double c0, double eta, double b, double alpha,
            const std::optional<std::string>& scale, double sigma2, int bandwidth, double orlicz,
            std::optional<double> threshold, std::optional<std::string> table, long trace_every)
      : cfg_(make_config(detector, n_train, beta, c0, eta, b, alpha, scale, sigma2, bandwidth, orlicz)) {
    opts_.trace_every = trace_every;
    if (threshold || cfg_.detector == DetectorKind::RC) {
      m_.emplace(cfg_, threshold.value_or(1.0), opts_);
    } else {
      const std::string path = table ? *table : default_table_dir() + "/" + table_file_name(cfg_.detector);
      m_.emplace(cfg_, load_table(path), opts_);
    }
  }

  std::optional<double> push(double x) {
    auto r = m_->push(x);
    if (!r) return std::nullopt;
    return r->value;
  }
  std::optional<long> extend(const std::vector<double>& xs) {
    for (double x : xs) {
      if (m_->alarmed()) break;
      m_->push(x);
    }
    return m_->verdict().k_hat;
  }
  bool alarmed() const { return m_->alarmed(); }
  long steps() const { return m_->steps(); }
  double threshold() const { return m_->verdict().threshold; }
  std::string verdict() const { return m_->verdict().to_json().dump(); }
  std::vector<std::tuple<long, double, long>> trace() const {
    std::vector<std::tuple<long, double, long>> out;
    for (const auto& p : m_->trace()) out.emplace_back(p.k, p.value, p.ell);
    return out;
  }
  std::string snapshot() const { return m_->snapshot().dump(); }
  void restore(const std::string& doc) { m_.emplace(Monitor::restore(json::parse(doc), cfg_, opts_)); }

 private:
  MonitorConfig cfg_;
  MonitorOptions opts_;
  std::optional<Monitor> m_;
};

std::vector<std::pair<double, long>> scan(const std::vector<double>& x, const std::string& detector, long n_train,
                                          double beta, double c0, double eta, double b, double alpha,
                                          const std::optional<std::string>& scale, double sigma2, int bandwidth,
                                          double orlicz) {
  const auto cfg = make_config(detector, n_train, beta, c0, eta, b, alpha, scale, sigma2, bandwidth, orlicz);
  SeriesScanner s(x, n_train);
  std::vector<std::pair<double, long>> out;
  for (const auto& r : s.trace(cfg)) out.emplace_back(r.value, r.argmax_ell);
  return out;
}

std::string calibrate(const std::string& law, long draws, std::uint64_t seed, double beta, double c0, double eta,
                      double b, std::optional<std::string> detector, std::optional<long> n_cal,
                      std::optional<long> t_horizon, std::optional<std::vector<double>> grid, int threads) {
  const DetectorParams p = make_params(beta, c0, eta, b);
  GridSpec g;
  if (grid) {
    if (grid->size() != 4) throw Error(ErrorKind::usage, "grid is (fine_step, mid_step, coarse_step, t_max)");
    g = GridSpec{(*grid)[0], (*grid)[1], (*grid)[2], (*grid)[3]};
  }
  switch (parse_law(law)) {
    case Law::L_TC: return simulate_L_TC(p, g, draws, seed, threads).to_json().dump();
    case Law::L_SN: return simulate_L_SN(p, g, draws, seed, threads).to_json().dump();
    case Law::L_F: {
      SampleSpec s;
      if (n_cal) s.n_cal = *n_cal;
      if (t_horizon) s.t_horizon = *t_horizon;
      return simulate_L_F(p, s, draws, seed, threads).to_json().dump();
    }
    case Law::NULL_SIM: {
      if (!detector) throw Error(ErrorKind::usage, "NULL_SIM needs a detector");
      SampleSpec s = default_null_spec();
      if (n_cal) s.n_cal = *n_cal;
      if (t_horizon) s.t_horizon = *t_horizon;
      return null_sim_quantiles(parse_detector(*detector), p, s, draws, seed, threads).to_json().dump();
    }
  }
  return "{}";
}

std::vector<double> py_generate_stream(const std::string& noise, long n_train, long t_horizon, std::uint64_t seed,
                                       std::optional<long> k_star, double delta, std::optional<double> duration) {
  std::optional<ChangeSpec> change;
  if (k_star) change = ChangeSpec{*k_star, delta, duration};
  return generate_stream(NoiseModel::parse(noise), change, n_train, t_horizon, seed);
}

std::string simulate(const std::string& scenario, bool fast, std::optional<std::string> table_dir,
                     std::optional<std::map<std::string, double>> thresholds, int threads) {
  const ScenarioFile sc = parse_scenario(json::parse(scenario), fast);
  CriticalValues cv = CriticalValues::from_directory(table_dir.value_or(default_table_dir()));
  if (thresholds)
    for (const auto& [k, v] : *thresholds) cv.set_value(parse_detector(k), v);
  std::vector<ExperimentResult> res;
  for (const auto& s : sc.experiments) res.push_back(run_experiment(s, cv, threads));
  return results_json(res).dump();
}

std::pair<std::string, std::string> analyze_csv(const std::string& path, long n_train, const std::string& variance,
                                                const std::string& date_col, const std::string& value_col,
                                                std::optional<std::vector<std::string>> detectors,
                                                std::optional<std::string> table_dir) {
  CsvSchema schema;
  schema.date_col = date_col;
  schema.value_col = value_col;
  const IngestResult ing = ingest_csv(path, schema);
  AnalysisOptions o;
  o.n_train = n_train;
  o.variance = parse_variance_mode(variance);
  if (detectors) {
    o.detectors.clear();
    for (const auto& d : *detectors) o.detectors.push_back(parse_detector(d));
  }
  const auto rep = analyze(aggregate_daily(ing.records), o,
                           CriticalValues::from_directory(table_dir.value_or(default_table_dir())));
  json j = rep.to_json();
  j["input"] = {{"path", path}, {"ingest", ing.skip_log()}};
  return {j.dump(), rep.trace_csv()};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "two-window online change-point detection";

  static py::exception<Error> twin_error(m, "TwinError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = twin_error;
      PyErr_SetObject(exc.ptr(), py::make_tuple(std::string(to_string(e.kind())), e.what()).ptr());
    }
  });

  m.def("default_table_dir", &default_table_dir);

  py::class_<PyMonitor>(m, "Monitor")
      .def(py::init<const std::string&, long, double, double, double, double, double, const std::optional<std::string>&,
                    double, int, double, std::optional<double>, std::optional<std::string>, long>(),
           TWIN_CONFIG_ARGS, py::arg("threshold") = py::none(), py::arg("table") = py::none(),
           py::arg("trace_every") = 0)
      .def("push", &PyMonitor::push, py::arg("x"))
      .def("extend", &PyMonitor::extend, py::arg("xs"))
      .def_property_readonly("alarmed", &PyMonitor::alarmed)
      .def_property_readonly("steps", &PyMonitor::steps)
      .def_property_readonly("threshold", &PyMonitor::threshold)
      .def("verdict_json", &PyMonitor::verdict)
      .def("trace", &PyMonitor::trace)
      .def("snapshot_json", &PyMonitor::snapshot)
      .def("restore_json", &PyMonitor::restore, py::arg("doc"));

  m.def("scan", &scan, py::arg("x"), TWIN_CONFIG_ARGS);
  m.def("calibrate_json", &calibrate, py::arg("law"), py::arg("draws"), py::arg("seed") = 20250601ULL,
        py::arg("beta") = 0.6, py::arg("c0") = 20.0, py::arg("eta") = 0.4, py::arg("b") = 0.4,
        py::arg("detector") = py::none(), py::arg("n_cal") = py::none(), py::arg("t_horizon") = py::none(),
        py::arg("grid") = py::none(), py::arg("threads") = 0, py::call_guard<py::gil_scoped_release>());
  m.def("load_table_json", [](const std::string& path) { return load_table(path).to_json().dump(); },
        py::arg("path"));
  m.def("generate_stream", &py_generate_stream, py::arg("noise"), py::arg("n_train"), py::arg("t_horizon"),
        py::arg("seed"), py::arg("k_star") = py::none(), py::arg("delta") = 0.0, py::arg("duration") = py::none());
  m.def("simulate_json", &simulate, py::arg("scenario"), py::arg("fast") = false, py::arg("table_dir") = py::none(),
        py::arg("thresholds") = py::none(), py::arg("threads") = 0, py::call_guard<py::gil_scoped_release>());
  m.def("analyze_csv_json", &analyze_csv, py::arg("path"), py::arg("n_train") = 31,
        py::arg("variance") = "monitoring", py::arg("date_col") = "date", py::arg("value_col") = "value",
        py::arg("detectors") = py::none(), py::arg("table_dir") = py::none());
}
