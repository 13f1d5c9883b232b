#pragma once

#include <vector>

namespace rct {

double mean_of(const std::vector<double>& v);
double stddev_of(const std::vector<double>& v);  // sample stddev; 0 for n < 2

// Average ranks (ties share the mean of their rank positions), 1-based.
std::vector<double> average_ranks(const std::vector<double>& v);

// Spearman rank correlation with average ranks for ties.
// Returns 0 when either side is constant.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// One-sided sign test: P(X >= wins) for X ~ Binomial(n, 1/2). Ties must be
// dropped by the caller.
double sign_test_p(int wins, int n);

}  // namespace rct
