#pragma once

#include <span>
#include <vector>

namespace ploff {

double mean(std::span<const double> xs);
double stddev(std::span<const double> xs);  // population standard deviation

// Ranks starting at 1; tied values share their average rank.
std::vector<double> average_ranks(std::span<const double> xs);

double pearson(std::span<const double> xs, std::span<const double> ys);
double spearman(std::span<const double> xs, std::span<const double> ys);

// Linear-interpolated quantile, q in [0, 1].
double quantile(std::vector<double> xs, double q);

}  // namespace ploff
