#pragma once

#include <vector>

namespace score {

double mean(const std::vector<double>& xs);
/// Linear-interpolation quantile (numpy default), q in [0, 1].
double quantile(std::vector<double> xs, double q);
double median(const std::vector<double>& xs);
/// 75th minus 25th percentile.
double iqr(const std::vector<double>& xs);

/// Ranks starting at 1; ties share their average rank.
std::vector<double> average_ranks(const std::vector<double>& xs);
double pearson(const std::vector<double>& x, const std::vector<double>& y);
/// Pearson correlation of average ranks.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Ordinary least squares y = slope * x + intercept.
LinearFit least_squares(const std::vector<double>& x, const std::vector<double>& y);
/// Fit of log(y) against log(x); all inputs must be positive.
LinearFit log_log_fit(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace score
