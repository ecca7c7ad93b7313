#include "twin/stream_state.hpp"

#include <algorithm>
#include <cmath>

#include "twin/detectors.hpp"
#include "twin/errors.hpp"
#include "twin/variance.hpp"

namespace twin {

StreamState::StreamState(long n_train, bool retain_observations)
    : n_train_(n_train), retain_(retain_observations) {
  if (n_train < 2) throw Error(ErrorKind::usage, "n_train must be at least 2");
}

void StreamState::ingest(double x) {
  if (!std::isfinite(x)) throw Error(ErrorKind::data, "non-finite observation");
  running_.add(x);
  prefix_.push_back(running_.value());
  if (retain_) {
    obs_.push_back(x);
    ranks_.push_back(x);
  } else if (!frozen_) {
    obs_.push_back(x);
  }
  if (!frozen_ && static_cast<long>(count()) == n_train_) freeze_training();
}

void StreamState::freeze_training() {
  auto train = training();
  sorted_train_.assign(train.begin(), train.end());
  std::sort(sorted_train_.begin(), sorted_train_.end());
  v_n_ = self_normalizer(train);
  CompensatedSum s;
  for (double v : train) s.add(v);
  train_mean_ = s.value() / static_cast<double>(n_train_);
  CompensatedSum q;
  for (double v : train) q.add((v - train_mean_) * (v - train_mean_));
  train_var_ = q.value() / static_cast<double>(n_train_ - 1);
  frozen_ = true;
}

void StreamState::require_trained(const char* what) const {
  if (!frozen_) throw Error(ErrorKind::index_range, std::string(what) + " requires a complete training sample");
}

double StreamState::prefix_sum(std::size_t j) const {
  if (j >= prefix_.size()) throw Error(ErrorKind::index_range, "prefix index beyond observed data");
  return prefix_[j];
}

std::span<const double> StreamState::observations() const {
  if (!retain_) throw Error(ErrorKind::usage, "observations are not retained by this state");
  return obs_;
}

const RankIndex& StreamState::ranks() const {
  if (!retain_) throw Error(ErrorKind::usage, "observations are not retained by this state");
  return ranks_;
}

std::span<const double> StreamState::training() const noexcept {
  const std::size_t n = std::min<std::size_t>(obs_.size(), static_cast<std::size_t>(n_train_));
  return std::span<const double>(obs_).first(n);
}

std::span<const double> StreamState::sorted_training() const {
  require_trained("sorted training sample");
  return sorted_train_;
}

double StreamState::v_n() const {
  require_trained("V_N");
  return v_n_;
}

double StreamState::train_mean() const {
  require_trained("training mean");
  return train_mean_;
}

double StreamState::train_var() const {
  require_trained("training variance");
  return train_var_;
}

nlohmann::json StreamState::snapshot(std::string_view config_fingerprint) const {
  nlohmann::json doc;
  doc["version"] = kSnapshotVersion;
  doc["fingerprint"] = std::string(config_fingerprint);
  doc["n_train"] = n_train_;
  doc["retain_observations"] = retain_;
  doc["count"] = count();
  doc["running"] = {running_.raw_sum(), running_.compensation()};
  doc["observations"] = obs_;
  if (!retain_) doc["prefix_sums"] = prefix_;
  return doc;
}

StreamState StreamState::restore(const nlohmann::json& doc, std::string_view expected_fingerprint) {
  try {
    const int version = doc.at("version").get<int>();
    if (version > kSnapshotVersion)
      throw Error(ErrorKind::data, "snapshot version " + std::to_string(version) + " is newer than supported");
    if (doc.at("fingerprint").get<std::string>() != expected_fingerprint)
      throw Error(ErrorKind::config_mismatch, "snapshot was taken under a different configuration");
    StreamState st(doc.at("n_train").get<long>(), doc.at("retain_observations").get<bool>());
    const auto obs = doc.at("observations").get<std::vector<double>>();
    const auto count = doc.at("count").get<std::size_t>();
    if (st.retain_) {
      if (obs.size() != count) throw Error(ErrorKind::data, "snapshot observation count mismatch");
      for (double x : obs) st.ingest(x);
      return st;
    }
    auto prefix = doc.at("prefix_sums").get<std::vector<double>>();
    if (prefix.size() != count + 1 || obs.size() != std::min<std::size_t>(count, st.n_train_))
      throw Error(ErrorKind::data, "snapshot prefix sums are inconsistent");
    const auto running = doc.at("running").get<std::vector<double>>();
    if (running.size() != 2) throw Error(ErrorKind::data, "snapshot running sum malformed");
    st.obs_ = obs;
    st.prefix_ = std::move(prefix);
    st.running_ = CompensatedSum(running[0], running[1]);
    if (static_cast<long>(count) >= st.n_train_) st.freeze_training();
    return st;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::data, std::string("malformed snapshot: ") + e.what());
  }
}

}  // namespace twin
