#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "twin/config.hpp"
#include "twin/monitor.hpp"
#include "twin/simlab.hpp"

namespace twin {

struct CsvSchema {
  std::string date_col = "date";
  std::string value_col = "value";
  // strftime-style format; empty keeps dates as opaque strings ordered lexically.
  // Parsed dates are rewritten as YYYY-MM-DD.
  std::string date_format;
  char delimiter = ',';
};

struct SeriesRecord {
  std::string date;
  double value = 0.0;
};

struct SkippedRow {
  long line = 0;  // 1-based, header is line 1
  std::string reason;
};

struct IngestResult {
  std::vector<SeriesRecord> records;
  std::vector<SkippedRow> skipped;
  long rows = 0;  // data rows seen

  nlohmann::json skip_log() const;
};

// Throws Error(io) when unreadable, Error(data) for a missing column or no valid row.
IngestResult ingest_csv(const std::string& path, const CsvSchema& schema = {});
IngestResult ingest_csv(std::istream& in, const CsvSchema& schema = {}, const std::string& name = "<input>");

// Median with the two central order statistics averaged for even counts.
double mid_median(std::vector<double> values);

struct DayGap {
  std::string after;  // last present date before the gap
  long missing_days = 0;
};

struct DailySeries {
  std::vector<std::string> dates;  // strictly increasing
  std::vector<double> values;      // per-date mid-median
  std::vector<long> counts;        // records per date
  std::vector<DayGap> gaps;        // only detected for YYYY-MM-DD dates

  std::size_t size() const noexcept { return dates.size(); }
};

// Throws Error(data) on an empty record list.
DailySeries aggregate_daily(const std::vector<SeriesRecord>& records);

// monitoring: sample variance of the monitoring period, treated as known.
// train: each detector estimates the variance from the training window.
enum class VarianceMode { monitoring, train };
std::string to_string(VarianceMode mode);
VarianceMode parse_variance_mode(std::string_view name);

struct AnalysisOptions {
  long n_train = 31;
  std::vector<DetectorKind> detectors = standard_detectors();
  DetectorParams params;
  double alpha = 0.05;
  VarianceMode variance = VarianceMode::monitoring;

  nlohmann::json to_json() const;
};

struct DetectorReport {
  DetectorKind detector = DetectorKind::TC;
  std::string scale_mode;
  std::optional<double> sigma2;  // variance applied, when the detector uses one
  double threshold = 0.0;
  DetectorVerdict verdict;
  std::optional<std::string> detection_date;
  std::optional<std::string> change_date;
  std::optional<std::string> error;  // detector could not run (e.g. zero variance)
  std::vector<TracePoint> trace;
};

struct AnalysisReport {
  AnalysisOptions options;
  std::vector<std::string> dates;
  std::optional<double> sigma2;  // monitoring-period variance (monitoring mode)
  double rc_sigma2 = 0.0;        // variance behind RC's normal Orlicz proxy
  std::vector<DetectorReport> detectors;

  nlohmann::json to_json() const;
  // detector,k,date,statistic,threshold
  std::string trace_csv() const;
};

// Incremental analysis over dated values; supports checkpoint and resume.
class Analysis {
 public:
  // sigma2: monitoring-period variance (monitoring mode). rc_sigma2 feeds the
  // RC Orlicz proxy sqrt(8/3) * sigma.
  Analysis(const AnalysisOptions& opts, const CriticalValues& cv, std::optional<double> sigma2, double rc_sigma2);

  void feed(const std::string& date, double value);
  std::size_t fed() const noexcept { return dates_.size(); }
  AnalysisReport report() const;

  nlohmann::json checkpoint() const;
  static Analysis resume(const nlohmann::json& doc, const AnalysisOptions& opts, const CriticalValues& cv);

 private:
  struct Slot {
    DetectorKind kind;
    MonitorConfig cfg;
    double threshold = 0.0;
    std::optional<Monitor> monitor;
    std::optional<std::string> error;
  };

  AnalysisOptions opts_;
  std::optional<double> sigma2_;
  double rc_sigma2_ = 0.0;
  std::vector<std::string> dates_;
  std::vector<Slot> slots_;
};

// Throws Error(data) unless the series is longer than the training window.
AnalysisReport analyze(const DailySeries& series, const AnalysisOptions& opts, const CriticalValues& cv);

// Synthetic series shaped like the application: daily medians of `per_day`
// normal draws around `level`, shifted by `shift` from day `shift_day` on.
DailySeries demo_series(long days, long shift_day, double level, double shift, double sd, long per_day,
                        std::uint64_t seed);
// Writes records as date,value CSV.
void write_records_csv(const std::vector<SeriesRecord>& records, const std::string& path);
std::vector<SeriesRecord> demo_records(long days, long shift_day, double level, double shift, double sd,
                                       long per_day, std::uint64_t seed);

}  // namespace twin
