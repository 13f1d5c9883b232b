#include "rct/attacks.hpp"

#include <cmath>
#include <limits>

#include "rct/objectives.hpp"

namespace rct {

void AttackSpec::validate() const {
    if (!(epsilon >= 0) || !std::isfinite(epsilon))
        throw ValidationError("AttackSpec: epsilon must be finite and >= 0");
    if (!(step_size > 0)) throw ValidationError("AttackSpec: step_size must be positive");
    if (steps < 1) throw ValidationError("AttackSpec: steps must be >= 1");
    if (!(clamp_lo < clamp_hi)) throw ValidationError("AttackSpec: clamp_lo must be < clamp_hi");
}

namespace {

inline Eigen::MatrixXd sign_of(const Eigen::MatrixXd& g) {
    return g.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

// Project onto B_inf(x0, eps) intersected with the box, elementwise.
inline void project(Eigen::MatrixXd& x, const Eigen::MatrixXd& x0, double eps, double lo,
                    double hi) {
    x = x.cwiseMax((x0.array() - eps).matrix()).cwiseMin((x0.array() + eps).matrix());
    x = x.cwiseMax(lo).cwiseMin(hi);
}

}  // namespace

Eigen::MatrixXd input_ce_gradient(const Network& net, const Eigen::MatrixXd& x,
                                  const std::vector<int>& y) {
    ParamFreeze freeze(net);
    TapeScope scope;
    Tensor xt = Tensor::from_matrix(x, /*requires_grad=*/true);
    Tensor loss = cross_entropy(softmax(net.forward(xt)), y);
    backward(loss);
    return Eigen::Map<const RowMat>(xt.grad().data(), x.rows(), x.cols());
}

Eigen::MatrixXd pgd(const Network& net, const Eigen::MatrixXd& x, const std::vector<int>& y,
                    const AttackSpec& spec, Rng* rng) {
    spec.validate();
    Eigen::MatrixXd adv = x;
    if (spec.random_start) {
        if (rng == nullptr) throw ContractError("pgd: random_start requires an Rng");
        for (Eigen::Index i = 0; i < adv.rows(); ++i)
            for (Eigen::Index j = 0; j < adv.cols(); ++j)
                adv(i, j) += rng->uniform(-spec.epsilon, spec.epsilon);
        project(adv, x, spec.epsilon, spec.clamp_lo, spec.clamp_hi);
    }
    for (int s = 0; s < spec.steps; ++s) {
        Eigen::MatrixXd g = input_ce_gradient(net, adv, y);
        adv += spec.step_size * sign_of(g);
        project(adv, x, spec.epsilon, spec.clamp_lo, spec.clamp_hi);
    }
    return adv;
}

Eigen::MatrixXd fgsm(const Network& net, const Eigen::MatrixXd& x, const std::vector<int>& y,
                     const AttackSpec& spec) {
    // Single step of size epsilon; shares the pgd path so the two are
    // interchangeable at steps = 1 by construction.
    AttackSpec single = spec;
    single.steps = 1;
    single.step_size = std::max(spec.epsilon, std::numeric_limits<double>::min());
    single.random_start = false;
    return pgd(net, x, y, single);
}

Eigen::MatrixXd peer_adversarial_batch(const Network& target, const Eigen::MatrixXd& x,
                                       const std::vector<int>& y, const AttackSpec& spec,
                                       Rng* rng) {
    if (spec.steps == 1 && !spec.random_start) return fgsm(target, x, y, spec);
    return pgd(target, x, y, spec, rng);
}

Eigen::MatrixXd peer_adversarial_batch(const Network& target, const Eigen::MatrixXd& x,
                                       const AttackSpec& spec, Rng* rng) {
    return peer_adversarial_batch(target, x, target.predict_labels(x), spec, rng);
}

}  // namespace rct
