#pragma once

#include <vector>

#include "rct/net.hpp"
#include "rct/rng.hpp"
#include "rct/tensor.hpp"

namespace rct {

// Perturbation region: L-inf ball of radius epsilon around each input,
// intersected with the valid box [clamp_lo, clamp_hi]^d.
struct AttackSpec {
    double epsilon = 0.031;
    double step_size = 0.007;
    int steps = 10;
    double clamp_lo = 0.0;
    double clamp_hi = 1.0;
    bool random_start = false;

    bool operator==(const AttackSpec&) const = default;
    void validate() const;
};

// Single signed-gradient step of size epsilon, clamped to the valid box.
// Rows of x are independent samples; y are their (true or pseudo) labels.
Eigen::MatrixXd fgsm(const Network& net, const Eigen::MatrixXd& x, const std::vector<int>& y,
                     const AttackSpec& spec);

// Iterated signed-gradient ascent on CE with projection onto the ball and the
// box after every step. `rng` is consumed only when spec.random_start is set.
Eigen::MatrixXd pgd(const Network& net, const Eigen::MatrixXd& x, const std::vector<int>& y,
                    const AttackSpec& spec, Rng* rng = nullptr);

// Adversarial batch against `target` given labels (true labels for labeled
// data). Dispatches to fgsm when spec.steps == 1 and no random start,
// otherwise pgd. The result carries no tape linkage: later parameter
// gradients treat generation as a constant.
Eigen::MatrixXd peer_adversarial_batch(const Network& target, const Eigen::MatrixXd& x,
                                       const std::vector<int>& y, const AttackSpec& spec,
                                       Rng* rng = nullptr);

// Unlabeled variant: pseudo labels are recomputed from `target`'s current
// predictions on every call.
Eigen::MatrixXd peer_adversarial_batch(const Network& target, const Eigen::MatrixXd& x,
                                       const AttackSpec& spec, Rng* rng = nullptr);

// Gradient of mean CE w.r.t. the input rows; shared machinery for attacks and
// made public for the inner maximization in TRADES-style objectives.
Eigen::MatrixXd input_ce_gradient(const Network& net, const Eigen::MatrixXd& x,
                                  const std::vector<int>& y);

}  // namespace rct
