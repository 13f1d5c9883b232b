#pragma once

#include <vector>

#include "rct/tensor.hpp"

namespace rct {

class Network;

// Row-wise exp-normalize with max-subtraction stabilization. Input rank-2
// (batch x classes); rows of the output sum to 1.
Tensor softmax(const Tensor& logits);

// Mean over the batch of -log p[label], log floored at kLogFloor.
// `probs` rows are distributions (softmax output); labels in [0, classes).
Tensor cross_entropy(const Tensor& probs, const std::vector<int>& labels);

// Mean over the batch of sum_i p_i ln(p_i/q_i), with 0 ln(0/q) = 0 and q
// floored. Differentiable in both arguments.
Tensor kl_div(const Tensor& p, const Tensor& q);

// Mean over the batch of (KL(p||m) + KL(q||m))/2 with m = (p+q)/2.
// Symmetric, bounded by ln 2.
Tensor js_div(const Tensor& p, const Tensor& q);

// Mean total-variation distance between the two networks' predicted
// distributions over `data` (rows = samples). Diagnostic, not differentiable.
double total_variance(const Network& f1, const Network& f2, const Eigen::MatrixXd& data);

// Plain-matrix softmax for metric paths.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

// True when every row of m is a distribution within `tol`.
bool is_distribution_rows(const Eigen::MatrixXd& m, double tol = 1e-9);

}  // namespace rct
