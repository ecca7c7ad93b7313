#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "twin/calibration.hpp"
#include "twin/errors.hpp"
#include "twin/monitor.hpp"
#include "twin/pipeline.hpp"
#include "twin/simlab.hpp"

using namespace twin;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kShippedSeed = 20250601;

struct ParamFlags {
  double beta = 0.6, c0 = 20.0, eta = 0.4, b = 0.4, alpha = 0.05;

  void add(CLI::App* app, bool with_alpha = true) {
    app->add_option("--beta", beta, "TWIN weight exponent")->envname("TWIN_BETA")->capture_default_str();
    app->add_option("--c0", c0, "TWIN weight offset C0")->envname("TWIN_C0")->capture_default_str();
    app->add_option("--eta", eta, "baseline weight exponent")->envname("TWIN_ETA")->capture_default_str();
    app->add_option("--b", b, "MOSUM bandwidth fraction")->envname("TWIN_B")->capture_default_str();
    if (with_alpha)
      app->add_option("--alpha", alpha, "nominal level")->envname("TWIN_ALPHA")->capture_default_str();
  }
  DetectorParams params() const {
    DetectorParams p;
    p.beta = beta;
    p.c0 = c0;
    p.eta = eta;
    p.b_mosum = b;
    return p;
  }
  // Range checks shared with the detectors.
  void validate(long n_train = 100) const {
    MonitorConfig cfg;
    cfg.n_train = n_train;
    cfg.params = params();
    cfg.alpha = alpha;
    cfg.validate();
  }
};

std::string fixed(double v, int prec = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

void log_config(const json& j) { std::cerr << json{{"event", "config"}, {"config", j}}.dump() << "\n"; }

void print_percentiles(const QuantileTable& t) {
  std::cout << to_string(t.law) << "  " << t.params.dump() << "  draws=" << t.draws << "  seed=" << t.seed << "\n";
  for (const auto& [lv, v] : t.quantiles) std::cout << std::setw(8) << (std::to_string(int(std::lround(lv * 100))) + "%");
  std::cout << "\n";
  for (const auto& [lv, v] : t.quantiles) std::cout << std::setw(8) << fixed(v);
  std::cout << "\n";
}

// ---------------------------------------------------------------- calibrate

struct CalibrateFlags {
  std::string law = "L_SN";
  std::string detector;
  long draws = 10000;
  std::uint64_t seed = kShippedSeed;
  std::string out;
  bool fast = false;
  GridSpec grid;
  long n_cal = 0;      // 0: law default
  long t_horizon = 0;  // 0: law default
};

SampleSpec sample_spec(const CalibrateFlags& f, SampleSpec base) {
  if (f.n_cal > 0) base.n_cal = f.n_cal;
  if (f.t_horizon > 0) base.t_horizon = f.t_horizon;
  return base;
}

int cmd_calibrate(const CalibrateFlags& f, const ParamFlags& pf, int threads) {
  pf.validate();
  const Law law = parse_law(f.law);
  if (f.draws < 1) throw Error(ErrorKind::usage, "--draws must be positive");
  GridSpec grid = f.grid;
  if (f.fast) grid = GridSpec{0.02, 0.2, 2.0, 500.0};
  json cfg = {{"law", f.law}, {"beta", pf.beta}, {"c0", pf.c0}, {"eta", pf.eta}, {"b", pf.b},
              {"draws", f.draws}, {"seed", f.seed}, {"threads", threads}, {"fast", f.fast}};
  QuantileTable t;
  switch (law) {
    case Law::L_TC:
    case Law::L_SN:
      cfg["grid"] = grid.to_json();
      log_config(cfg);
      t = law == Law::L_TC ? simulate_L_TC(pf.params(), grid, f.draws, f.seed, threads)
                           : simulate_L_SN(pf.params(), grid, f.draws, f.seed, threads);
      break;
    case Law::L_F: {
      const SampleSpec s = sample_spec(f, f.fast ? SampleSpec{100, 10} : SampleSpec{});
      cfg["n_cal"] = s.n_cal;
      cfg["t_horizon"] = s.t_horizon;
      log_config(cfg);
      t = simulate_L_F(pf.params(), s, f.draws, f.seed, threads);
      break;
    }
    case Law::NULL_SIM: {
      if (f.detector.empty()) throw Error(ErrorKind::usage, "--law NULL_SIM needs --detector");
      const DetectorKind kind = parse_detector(f.detector);
      const SampleSpec s = sample_spec(f, default_null_spec());
      cfg["detector"] = f.detector;
      cfg["n_cal"] = s.n_cal;
      cfg["t_horizon"] = s.t_horizon;
      log_config(cfg);
      t = null_sim_quantiles(kind, pf.params(), s, f.draws, f.seed, threads);
      break;
    }
  }
  const std::string out = f.out.empty() ? table_file_name(t.kind) : f.out;
  store_table(t, out);
  if (t.draws < 1000)
    std::cerr << "warning: " << t.draws << " draws; monitoring refuses tables with fewer than 1000\n";
  print_percentiles(t);
  std::cerr << "wrote " << out << " (fingerprint " << t.fingerprint << ")\n";
  return 0;
}

// ---------------------------------------------------------------- monitor

struct MonitorFlags {
  std::string detector = "TC";
  long n_train = 100;
  long horizon = 0;
  std::string table;
  std::string table_dir;
  double threshold = NAN;
  std::string scale;
  double sigma2 = 1.0;
  int bandwidth = -1;
  double orlicz = std::sqrt(8.0 / 3.0);
  bool trace = false;
  long trace_every = 1;
  std::string input = "-";
};

int cmd_monitor(const MonitorFlags& f, const ParamFlags& pf) {
  MonitorConfig cfg = MonitorConfig::for_detector(parse_detector(f.detector), f.n_train);
  cfg.params = pf.params();
  cfg.alpha = pf.alpha;
  if (!f.scale.empty()) cfg.scale.mode = parse_scale_mode(f.scale);
  cfg.scale.sigma2 = f.sigma2;
  cfg.scale.bandwidth = f.bandwidth;
  if (cfg.detector == DetectorKind::RC) cfg.orlicz_norm = f.orlicz;
  cfg.validate();

  MonitorOptions mo;
  mo.trace_every = f.trace ? std::max(1L, f.trace_every) : 0;
  std::optional<Monitor> m;
  std::string fingerprint;
  if (!std::isnan(f.threshold) || cfg.detector == DetectorKind::RC) {
    m.emplace(cfg, std::isnan(f.threshold) ? 1.0 : f.threshold, mo);
  } else {
    const std::string dir = f.table_dir.empty() ? default_table_dir() : f.table_dir;
    const std::string path = f.table.empty() ? dir + "/" + table_file_name(cfg.detector) : f.table;
    const QuantileTable t = load_table(path);
    fingerprint = t.fingerprint;
    m.emplace(cfg, t, mo);
  }
  auto emit = [](const json& j) { std::cout << j.dump() << "\n" << std::flush; };
  emit({{"event", "config"},
        {"config", config_to_json(cfg)},
        {"threshold", m->verdict().threshold},
        {"table_fingerprint", fingerprint},
        {"horizon", f.horizon}});

  std::ifstream file;
  std::istream* in = &std::cin;
  if (f.input != "-") {
    file.open(f.input);
    if (!file) throw Error(ErrorKind::io, "cannot read " + f.input);
    in = &file;
  }
  long line_no = 0, skipped = 0;
  std::size_t traced = 0;
  std::string line;
  while (!m->alarmed() && !(f.horizon > 0 && m->steps() >= f.horizon) && std::getline(*in, line)) {
    ++line_no;
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    const std::string tok = line.substr(b, e - b + 1);
    double x = 0.0;
    std::size_t used = 0;
    try {
      x = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size() || !std::isfinite(x)) {
      ++skipped;
      std::cerr << json{{"event", "warning"}, {"line", line_no}, {"message", "malformed value skipped"}}.dump() << "\n";
      continue;
    }
    m->push(x);
    for (; traced < m->trace().size(); ++traced) {
      const auto& p = m->trace()[traced];
      emit({{"event", "step"}, {"k", p.k}, {"statistic", p.value}, {"ell", p.ell}});
    }
  }
  const auto& v = m->verdict();
  json fin = v.to_json();
  fin["event"] = v.detected ? "alarm" : "end";
  fin["verdict"] = v.detected ? "change" : "none";
  fin["steps"] = m->steps();
  fin["trained"] = m->trained();
  fin["skipped_lines"] = skipped;
  emit(fin);
  return 0;
}

// ---------------------------------------------------------------- simulate

struct SimulateFlags {
  std::string spec;
  bool fast = false;
  std::string out = "-";
  std::string format = "csv";
  std::string table_dir;
  long seed = -1;
  long replications = 0;
};

int cmd_simulate(const SimulateFlags& f, int threads) {
  ScenarioFile sc = load_scenario(f.spec, f.fast);
  for (auto& s : sc.experiments) {
    if (f.seed >= 0) s.seed = static_cast<std::uint64_t>(f.seed);
    if (f.replications > 0) s.replications = f.replications;
  }
  const std::string dir = f.table_dir.empty() ? default_table_dir() : f.table_dir;
  log_config({{"spec", f.spec}, {"scenario", sc.id}, {"experiments", sc.experiments.size()}, {"fast", f.fast},
              {"table_dir", dir}, {"threads", threads}, {"seed", sc.experiments.empty() ? 0 : sc.experiments[0].seed}});
  const CriticalValues cv = CriticalValues::from_directory(dir);
  std::vector<ExperimentResult> results;
  for (const auto& s : sc.experiments) {
    results.push_back(run_experiment(s, cv, threads));
    std::cerr << json{{"event", "experiment"}, {"id", s.id}, {"seconds", results.back().runtime_seconds}}.dump()
              << "\n";
  }
  emit_results(results, f.out, f.format);
  return 0;
}

// ---------------------------------------------------------------- analyze

struct AnalyzeFlags {
  std::string input;
  bool demo = false;
  CsvSchema schema;
  long training_days = 31;
  std::string variance = "monitoring";
  std::vector<std::string> detectors;
  std::string table_dir;
  std::string out = "-";
  std::string trace_out;
  std::string write_demo;
};

int cmd_analyze(const AnalyzeFlags& f, const ParamFlags& pf) {
  if (!f.write_demo.empty()) {
    // 300 days from 2020-05-01, five measurements a day, level 28 dropping by 3 after 120 days
    write_records_csv(demo_records(300, 120, 28.0, -3.0, 3.0, 5, 2020), f.write_demo);
    std::cerr << "wrote " << f.write_demo << "\n";
    return 0;
  }
  pf.validate(f.training_days);
  std::string input = f.input;
  if (f.demo) input = std::string(TWIN_DATA_DIR) + "/demo/synthetic_ct.csv";
  if (input.empty()) throw Error(ErrorKind::usage, "give --input FILE or --demo");
  const IngestResult ing = ingest_csv(input, f.schema);
  if (!ing.skipped.empty()) std::cerr << json{{"event", "skip_log"}, {"log", ing.skip_log()}}.dump() << "\n";
  const DailySeries series = aggregate_daily(ing.records);

  AnalysisOptions o;
  o.n_train = f.training_days;
  o.params = pf.params();
  o.alpha = pf.alpha;
  o.variance = parse_variance_mode(f.variance);
  if (!f.detectors.empty()) {
    o.detectors.clear();
    for (const auto& d : f.detectors) o.detectors.push_back(parse_detector(d));
  }
  const std::string dir = f.table_dir.empty() ? default_table_dir() : f.table_dir;
  const auto report = analyze(series, o, CriticalValues::from_directory(dir));
  json j = report.to_json();
  j["input"] = {{"path", input}, {"ingest", ing.skip_log()}, {"gaps", series.gaps.size()}};
  j["table_dir"] = dir;
  const std::string body = j.dump(2) + "\n";
  if (f.out == "-") {
    std::cout << body;
  } else {
    std::ofstream out(f.out);
    if (!out) throw Error(ErrorKind::io, "cannot write " + f.out);
    out << body;
  }
  if (!f.trace_out.empty()) {
    std::ofstream tr(f.trace_out);
    if (!tr) throw Error(ErrorKind::io, "cannot write " + f.trace_out);
    tr << report.trace_csv();
  }
  return 0;
}

// ---------------------------------------------------------------- tables

int cmd_tables(const std::string& dir_flag, const std::string& format) {
  const std::string dir = dir_flag.empty() ? default_table_dir() : dir_flag;
  if (!fs::is_directory(dir)) throw Error(ErrorKind::io, "no table directory " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  json all = json::array();
  int bad = 0;
  for (const auto& p : files) {
    try {
      const QuantileTable t = load_table(p.string());
      all.push_back({{"file", p.filename().string()}, {"law", to_string(t.law)}, {"kind", to_string(t.kind)},
                     {"params", t.params}, {"grid_spec", t.grid_spec}, {"draws", t.draws}, {"seed", t.seed},
                     {"fingerprint", t.fingerprint}, {"q90", t.quantile(0.90)}, {"q95", t.quantile(0.95)},
                     {"q99", t.quantile(0.99)}});
    } catch (const Error& e) {
      ++bad;
      all.push_back({{"file", p.filename().string()}, {"error", e.what()}});
    }
  }
  if (format == "json") {
    std::cout << all.dump(2) << "\n";
  } else {
    std::cout << std::left << std::setw(20) << "file" << std::setw(9) << "law" << std::setw(6) << "kind"
              << std::setw(8) << "draws" << std::setw(9) << "q90" << std::setw(9) << "q95" << std::setw(9) << "q99"
              << "fingerprint\n";
    for (const auto& r : all) {
      if (r.contains("error")) {
        std::cout << std::setw(20) << r["file"].get<std::string>() << "INVALID: " << r["error"].get<std::string>()
                  << "\n";
        continue;
      }
      std::cout << std::setw(20) << r["file"].get<std::string>() << std::setw(9) << r["law"].get<std::string>()
                << std::setw(6) << r["kind"].get<std::string>() << std::setw(8) << r["draws"].get<long>()
                << std::setw(9) << fixed(r["q90"]) << std::setw(9) << fixed(r["q95"]) << std::setw(9)
                << fixed(r["q99"]) << r["fingerprint"].get<std::string>() << "\n";
    }
  }
  return bad ? 3 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"twin: two-window online change-point monitoring"};
  app.set_config("--config", "", "TOML/INI file with option values (flags take precedence)");
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (0 = all cores)")->envname("TWIN_THREADS");

  ParamFlags pf;

  CalibrateFlags cf;
  auto* cal = app.add_subcommand("calibrate", "simulate a critical-value table");
  pf.add(cal, false);
  cal->add_option("--law", cf.law, "L_TC, L_SN, L_F or NULL_SIM")->capture_default_str();
  cal->add_option("--detector", cf.detector, "baseline detector for NULL_SIM (C, PC, FC, WC, MM)");
  cal->add_option("--draws", cf.draws, "Monte Carlo draws")->envname("TWIN_DRAWS")->capture_default_str();
  cal->add_option("--seed", cf.seed, "master seed")->envname("TWIN_SEED")->capture_default_str();
  cal->add_option("--out", cf.out, "output file (default: <table name> in the working directory)");
  cal->add_flag("--fast", cf.fast, "coarse grid / short calibration series");
  cal->add_option("--fine-step", cf.grid.fine_step)->capture_default_str();
  cal->add_option("--mid-step", cf.grid.mid_step)->capture_default_str();
  cal->add_option("--coarse-step", cf.grid.coarse_step)->capture_default_str();
  cal->add_option("--t-max", cf.grid.t_max)->capture_default_str();
  cal->add_option("--n-cal", cf.n_cal, "training length of simulated series (L_F: 200, NULL_SIM: 100)");
  cal->add_option("--t-horizon", cf.t_horizon, "horizon in units of n-cal (L_F: 50, NULL_SIM: 20)");

  MonitorFlags mf;
  auto* mon = app.add_subcommand("monitor", "monitor a stream of numbers, one per line");
  pf.add(mon);
  mon->add_option("--detector", mf.detector, "TC, SNTC, NPTC, C, PC, FC, WC, MM or RC")->capture_default_str();
  mon->add_option("--n-train", mf.n_train, "training sample size")->capture_default_str();
  mon->add_option("--horizon", mf.horizon, "stop after this many monitoring steps (0: unbounded)");
  mon->add_option("--table", mf.table, "quantile table file");
  mon->add_option("--table-dir", mf.table_dir, "directory of quantile tables")->envname("TWIN_TABLE_DIR");
  mon->add_option("--threshold", mf.threshold, "critical value (overrides the table)");
  mon->add_option("--scale", mf.scale, "known, train_variance, lrv, self_normalized or none");
  mon->add_option("--sigma2", mf.sigma2, "variance for --scale known")->capture_default_str();
  mon->add_option("--bandwidth", mf.bandwidth, "lrv lag count (negative: automatic)");
  mon->add_option("--orlicz", mf.orlicz, "Orlicz norm for RC")->capture_default_str();
  mon->add_flag("--trace", mf.trace, "emit one event per monitoring step");
  mon->add_option("--trace-every", mf.trace_every, "keep every n-th step in the trace")->capture_default_str();
  mon->add_option("--input", mf.input, "input file, - for stdin")->capture_default_str();
  mon->add_option("--seed", cf.seed, "accepted for uniformity; monitoring is deterministic");

  SimulateFlags sf;
  auto* sim = app.add_subcommand("simulate", "run a simulation scenario file");
  sim->add_option("spec", sf.spec, "scenario file (JSON)")->required()->check(CLI::ExistingFile);
  sim->add_flag("--fast", sf.fast, "reduced replication counts");
  sim->add_option("--out", sf.out, "result file, - for stdout")->capture_default_str();
  sim->add_option("--format", sf.format, "csv or json")->capture_default_str();
  sim->add_option("--table-dir", sf.table_dir, "directory of quantile tables")->envname("TWIN_TABLE_DIR");
  sim->add_option("--seed", sf.seed, "override the scenario seed")->envname("TWIN_SEED");
  sim->add_option("--replications", sf.replications, "override replication counts");

  AnalyzeFlags af;
  auto* ana = app.add_subcommand("analyze", "analyze a dated CSV series");
  pf.add(ana);
  ana->add_option("--input", af.input, "CSV file");
  ana->add_flag("--demo", af.demo, "use the bundled synthetic series");
  ana->add_option("--date-col", af.schema.date_col)->capture_default_str();
  ana->add_option("--value-col", af.schema.value_col)->capture_default_str();
  ana->add_option("--date-format", af.schema.date_format, "strftime format of the date column");
  ana->add_option("--training-days,--n-train", af.training_days, "training window in days")->capture_default_str();
  ana->add_option("--variance", af.variance, "monitoring or train")->capture_default_str();
  ana->add_option("--detector", af.detectors, "detectors to run (default: all eight)")->delimiter(',');
  ana->add_option("--table-dir", af.table_dir, "directory of quantile tables")->envname("TWIN_TABLE_DIR");
  ana->add_option("--out", af.out, "report file, - for stdout")->capture_default_str();
  ana->add_option("--trace", af.trace_out, "write the statistic traces as CSV");
  ana->add_option("--write-demo", af.write_demo, "write the synthetic demo series to a CSV file and exit");
  ana->add_option("--seed", cf.seed, "accepted for uniformity; analysis is deterministic");

  std::string tables_dir, tables_format = "text";
  auto* tab = app.add_subcommand("tables", "list and verify quantile tables");
  tab->add_option("--table-dir", tables_dir, "directory of quantile tables")->envname("TWIN_TABLE_DIR");
  tab->add_option("--format", tables_format, "text or json")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*cal) return cmd_calibrate(cf, pf, threads);
    if (*mon) return cmd_monitor(mf, pf);
    if (*sim) return cmd_simulate(sf, threads);
    if (*ana) return cmd_analyze(af, pf);
    if (*tab) return cmd_tables(tables_dir, tables_format);
  } catch (const Error& e) {
    std::cerr << "twin: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "twin: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
