#include <doctest.h>

#include "rct/attacks.hpp"

#include "rct/data.hpp"
#include "rct/objectives.hpp"
#include "rct/robustify.hpp"
#include "testutil.hpp"

using namespace rct;
using rct::testing::bit_equal;

namespace {

Eigen::MatrixXd random_box_points(int n, int d, Rng& rng) {
    Eigen::MatrixXd x(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) x(i, j) = rng.uniform();
    return x;
}

std::vector<int> random_labels(int n, int classes, Rng& rng) {
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) y[i] = static_cast<int>(rng.below(classes));
    return y;
}

Eigen::VectorXd per_sample_ce(const Network& net, const Eigen::MatrixXd& x,
                              const std::vector<int>& y) {
    Eigen::MatrixXd p = net.predict_probs(x);
    Eigen::VectorXd ce(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        ce[i] = -std::log(std::max(p(i, y[i]), kLogFloor));
    return ce;
}

MlpSpec mlp(std::vector<int> widths, std::uint64_t seed) {
    MlpSpec s;
    s.widths = std::move(widths);
    s.seed = seed;
    return s;
}

}  // namespace

TEST_CASE("attack spec validation") {
    AttackSpec bad;
    bad.epsilon = -1;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = AttackSpec{};
    bad.clamp_lo = 1.0;
    bad.clamp_hi = 0.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = AttackSpec{};
    bad.steps = 0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("fgsm identity at epsilon zero") {
    Network net = Network::init(mlp({2, 4, 2}, 3));
    Rng rng(1);
    Eigen::MatrixXd x = random_box_points(6, 2, rng);
    std::vector<int> y = random_labels(6, 2, rng);
    AttackSpec spec;
    spec.epsilon = 0.0;
    Eigen::MatrixXd adv = fgsm(net, x, y, spec);
    CHECK((adv - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fgsm stays inside the ball and the box") {
    Network net = Network::init(mlp({3, 5, 3}, 17));
    Rng rng(2);
    for (int t = 0; t < 50; ++t) {
        Eigen::MatrixXd x = random_box_points(4, 3, rng);
        std::vector<int> y = random_labels(4, 3, rng);
        AttackSpec spec;
        spec.epsilon = rng.uniform(0.0, 0.5);
        Eigen::MatrixXd adv = fgsm(net, x, y, spec);
        CHECK((adv - x).cwiseAbs().maxCoeff() <= spec.epsilon + 1e-12);
        CHECK(adv.minCoeff() >= 0.0);
        CHECK(adv.maxCoeff() <= 1.0);
    }
}

TEST_CASE("fgsm never lowers CE on a linear-softmax model") {
    Rng rng(3);
    Network net = Network::init(mlp({2, 2}, 11));  // no hidden layer: convex CE in x
    for (int t = 0; t < 30; ++t) {
        Eigen::MatrixXd x = random_box_points(8, 2, rng);
        std::vector<int> y = random_labels(8, 2, rng);
        AttackSpec spec;
        spec.epsilon = rng.uniform(0.0, 0.3);
        Eigen::MatrixXd adv = fgsm(net, x, y, spec);
        Eigen::VectorXd before = per_sample_ce(net, x, y);
        Eigen::VectorXd after = per_sample_ce(net, adv, y);
        CHECK((after.array() >= before.array() - 1e-12).all());
    }
}

TEST_CASE("pgd single step with step=epsilon equals fgsm bit-exactly") {
    Network net = Network::init(mlp({2, 6, 2}, 33));
    Rng rng(4);
    Eigen::MatrixXd x = random_box_points(10, 2, rng);
    std::vector<int> y = random_labels(10, 2, rng);
    AttackSpec spec;
    spec.epsilon = 0.07;
    spec.step_size = 0.07;
    spec.steps = 1;
    spec.random_start = false;
    Eigen::MatrixXd a = pgd(net, x, y, spec);
    Eigen::MatrixXd b = fgsm(net, x, y, spec);
    CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0);
}

TEST_CASE("pgd feasibility under random specs") {
    Network net = Network::init(mlp({2, 4, 2}, 5));
    Rng rng(6);
    for (int t = 0; t < 40; ++t) {
        Eigen::MatrixXd x = random_box_points(3, 2, rng);
        std::vector<int> y = random_labels(3, 2, rng);
        AttackSpec spec;
        spec.epsilon = rng.uniform(0.0, 0.4);
        spec.step_size = rng.uniform(0.001, 0.3);
        spec.steps = 1 + static_cast<int>(rng.below(8));
        spec.random_start = rng.uniform() < 0.5;
        Rng arng(t);
        Eigen::MatrixXd adv = pgd(net, x, y, spec, &arng);
        CHECK((adv - x).cwiseAbs().maxCoeff() <= spec.epsilon + 1e-12);
        CHECK(adv.minCoeff() >= 0.0);
        CHECK(adv.maxCoeff() <= 1.0);
    }
}

TEST_CASE("pgd determinism without random start") {
    Network net = Network::init(mlp({2, 4, 2}, 5));
    Rng rng(8);
    Eigen::MatrixXd x = random_box_points(5, 2, rng);
    std::vector<int> y = random_labels(5, 2, rng);
    AttackSpec spec;
    spec.epsilon = 0.1;
    spec.step_size = 0.02;
    spec.steps = 7;
    Eigen::MatrixXd a = pgd(net, x, y, spec);
    Eigen::MatrixXd b = pgd(net, x, y, spec);
    CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0);
}

TEST_CASE("pgd on a trained model lowers accuracy") {
    Dataset ds = two_gaussians(60, 4.0, 0.6, 21);
    TrainerConfig cfg;
    cfg.method = TrainMethod::standard;
    cfg.epochs = 60;
    cfg.batch = 16;
    cfg.schedule = default_schedule(60);
    TrainResult tr = standard_train(ds, cfg, mlp({2, 8, 2}, 0), 77);
    const double std_acc = eval_standard(tr.net, ds);
    AttackSpec spec;
    spec.epsilon = 0.25;
    spec.step_size = 0.05;
    spec.steps = 10;
    const double rob_acc = eval_robust(tr.net, ds, spec);
    CHECK(std_acc > 0.9);
    CHECK(rob_acc <= std_acc);
}

TEST_CASE("peer adversarial batch") {
    Network net = Network::init(mlp({2, 4, 2}, 13));
    Rng rng(9);
    Eigen::MatrixXd x = random_box_points(6, 2, rng);
    AttackSpec spec;
    spec.epsilon = 0.02;
    spec.step_size = 0.02;
    spec.steps = 1;

    SUBCASE("pseudo labels are recomputed from the target network") {
        Eigen::MatrixXd a = peer_adversarial_batch(net, x, spec);
        Eigen::MatrixXd b = peer_adversarial_batch(net, x, net.predict_labels(x), spec);
        CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0);
    }
    SUBCASE("zero-weight target gives zero gradient, x' = x") {
        for (Tensor& p : net.parameters()) p.mutable_values().setZero();
        Eigen::MatrixXd a = peer_adversarial_batch(net, x, spec);
        CHECK((a - x).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("multi-step spec dispatches to pgd") {
        spec.steps = 5;
        spec.step_size = 0.005;
        Eigen::MatrixXd a = peer_adversarial_batch(net, x, spec);
        Eigen::MatrixXd b = pgd(net, x, net.predict_labels(x), spec);
        CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0);
    }
}

TEST_CASE("attack generation leaves parameter grads untouched") {
    Network net = Network::init(mlp({2, 4, 2}, 19));
    Rng rng(10);
    Eigen::MatrixXd x = random_box_points(4, 2, rng);
    std::vector<int> y = random_labels(4, 2, rng);
    AttackSpec spec;
    spec.epsilon = 0.1;
    spec.step_size = 0.02;
    spec.steps = 3;
    pgd(net, x, y, spec);
    for (const Tensor& p : net.parameters()) CHECK_FALSE(p.has_grad());
}
