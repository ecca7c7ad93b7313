#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "twin/compensated_sum.hpp"
#include "twin/rank_index.hpp"

namespace twin {

// Everything a monitoring session needs to evaluate any detector at the
// current time: compensated prefix sums S_0..S_{N+k}, optionally the raw
// observations with a rank index (NP-TWIN, RC), and training-sample moments
// frozen once the first n_train values have arrived.
class StreamState {
 public:
  static constexpr int kSnapshotVersion = 1;

  explicit StreamState(long n_train, bool retain_observations = true);

  // Appends x. Throws Error(data) on NaN or infinity.
  void ingest(double x);

  long n_train() const noexcept { return n_train_; }
  std::size_t count() const noexcept { return prefix_.size() - 1; }
  bool trained() const noexcept { return frozen_; }
  // k = count - n_train; zero or negative during training.
  long monitoring_index() const noexcept { return static_cast<long>(count()) - n_train_; }
  bool retains_observations() const noexcept { return retain_; }

  // S_j for j in [0, count].
  double prefix_sum(std::size_t j) const;
  std::span<const double> prefix_sums() const noexcept { return prefix_; }

  // Requires retain_observations.
  std::span<const double> observations() const;
  const RankIndex& ranks() const;
  // The first min(count, n_train) observations; always retained.
  std::span<const double> training() const noexcept;
  // Training values in ascending order; available once trained.
  std::span<const double> sorted_training() const;

  double v_n() const;
  double train_mean() const;
  // Unbiased sample variance of the training sample.
  double train_var() const;

  // Versioned snapshot bound to a configuration fingerprint.
  nlohmann::json snapshot(std::string_view config_fingerprint) const;
  // Throws Error(config_mismatch) if the fingerprint differs, Error(data) if malformed.
  static StreamState restore(const nlohmann::json& doc, std::string_view expected_fingerprint);

 private:
  void freeze_training();
  void require_trained(const char* what) const;

  long n_train_;
  bool retain_;
  bool frozen_ = false;
  CompensatedSum running_{};
  std::vector<double> prefix_{0.0};
  std::vector<double> obs_;
  RankIndex ranks_;
  std::vector<double> sorted_train_;
  double v_n_ = 0.0;
  double train_mean_ = 0.0;
  double train_var_ = 0.0;
};

}  // namespace twin
