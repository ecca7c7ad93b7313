#include "twin/variance.hpp"

#include <algorithm>
#include <cmath>

#include "twin/compensated_sum.hpp"
#include "twin/errors.hpp"

namespace twin {
namespace {

double mean_of(std::span<const double> x) {
  CompensatedSum s;
  for (double v : x) s.add(v);
  return s.value() / static_cast<double>(x.size());
}

double autocov(std::span<const double> x, double m, std::size_t h) {
  CompensatedSum s;
  for (std::size_t t = 0; t + h < x.size(); ++t) s.add((x[t] - m) * (x[t + h] - m));
  return s.value() / static_cast<double>(x.size() - 1);
}

}  // namespace

VarianceEstimate estimate_variance(std::span<const double> train) {
  if (train.size() < 2) throw Error(ErrorKind::usage, "variance needs at least two observations");
  const double m = mean_of(train);
  VarianceEstimate est;
  est.sigma2 = autocov(train, m, 0);
  if (!(est.sigma2 > 0.0)) throw Error(ErrorKind::zero_variance, "training sample has zero variance");
  est.sigma2_lr = est.sigma2;
  return est;
}

int bartlett_bandwidth(std::span<const double> train) {
  const std::size_t n = train.size();
  if (n < 4) return 0;
  const double m = mean_of(train);
  const double g0 = autocov(train, m, 0);
  if (!(g0 > 0.0)) return 0;
  double rho = autocov(train, m, 1) / g0;
  rho = std::clamp(rho, -0.97, 0.97);
  const double a = 4.0 * rho * rho / ((1.0 - rho) * (1.0 - rho) * (1.0 + rho) * (1.0 + rho));
  const double nd = static_cast<double>(n);
  const int raw = static_cast<int>(std::floor(1.1447 * std::cbrt(a * nd)));
  const int cap = static_cast<int>(std::floor(std::cbrt(nd) + 1e-9));
  return std::max(0, std::min(raw, cap));
}

VarianceEstimate estimate_lrv(std::span<const double> train, int bandwidth) {
  VarianceEstimate est = estimate_variance(train);
  const int bw = bandwidth < 0 ? bartlett_bandwidth(train) : bandwidth;
  if (static_cast<std::size_t>(4) * static_cast<std::size_t>(bw) > train.size())
    throw Error(ErrorKind::usage, "bandwidth too large for the training sample");
  const double m = mean_of(train);
  double lr = est.sigma2;
  for (int h = 1; h <= bw; ++h) {
    const double k = 1.0 - static_cast<double>(h) / (bw + 1.0);
    lr += 2.0 * k * autocov(train, m, static_cast<std::size_t>(h));
  }
  est.bandwidth = bw;
  if (!(lr > 0.0)) {
    est.warning = "long-run variance estimate not positive; floored at sample variance / 10";
    lr = est.sigma2 / 10.0;
  }
  est.sigma2_lr = lr;
  return est;
}

}  // namespace twin
