#pragma once

#include <span>
#include <string>

namespace twin {

struct VarianceEstimate {
  double sigma2 = 0.0;     // sample variance (unbiased)
  double sigma2_lr = 0.0;  // long-run variance; equals sigma2 when not estimated
  int bandwidth = 0;
  std::string warning;     // non-empty when the estimate was floored
};

// Unbiased sample variance. Throws Error(usage) for fewer than two values and
// Error(zero_variance) when the sample is constant.
VarianceEstimate estimate_variance(std::span<const double> train);

// Automatic Bartlett bandwidth: floor(1.1447 (a n)^{1/3}) with the AR(1)
// plug-in a = 4 rho^2 / ((1-rho)^2 (1+rho)^2), capped at floor(n^{1/3}).
int bartlett_bandwidth(std::span<const double> train);

// Bartlett lag-window estimate on demeaned data. bandwidth < 0 selects the
// automatic rule. Autocovariances use the 1/(n-1) normalization, so
// bandwidth 0 is the sample variance. Requires n >= 4 * bandwidth.
VarianceEstimate estimate_lrv(std::span<const double> train, int bandwidth = -1);

}  // namespace twin
