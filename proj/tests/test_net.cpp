#include <doctest.h>

#include "rct/net.hpp"

#include <filesystem>

#include "rct/objectives.hpp"
#include "testutil.hpp"

using namespace rct;
using rct::testing::bit_equal;
using rct::testing::networks_bit_equal;

namespace {

MlpSpec small_spec(std::uint64_t seed) {
    MlpSpec s;
    s.widths = {2, 4, 2};
    s.seed = seed;
    return s;
}

}  // namespace

TEST_CASE("spec validation") {
    MlpSpec s;
    s.widths = {3};
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s.widths = {3, 1};
    CHECK_THROWS_AS(s.validate(), ValidationError);  // class count >= 2
    s.widths = {3, 0, 2};
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s.widths = {3, 4, 2};
    CHECK_NOTHROW(s.validate());
}

TEST_CASE("init determinism and bias zeroing") {
    Network a = Network::init(small_spec(7));
    Network b = Network::init(small_spec(7));
    CHECK(networks_bit_equal(a, b));

    Network c = Network::init(small_spec(8));
    CHECK_FALSE(networks_bit_equal(a, c));

    CHECK(a.parameters()[1].values().abs().maxCoeff() == 0.0);  // b0
    CHECK(a.parameters()[3].values().abs().maxCoeff() == 0.0);  // b1
}

TEST_CASE("different seeds produce different predictions") {
    Network a = Network::init(small_spec(1));
    Network b = Network::init(small_spec(2));
    Rng rng(5);
    Eigen::MatrixXd x(8, 2);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 2; ++j) x(i, j) = rng.uniform();
    CHECK((a.predict_probs(x) - b.predict_probs(x)).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("forward linear cases") {
    Network net = Network::init(small_spec(3));
    for (Tensor& p : net.parameters()) p.mutable_values().setZero();
    Tensor x = Tensor::from_values({2, 2}, {0.1, 0.2, 0.3, 0.4});
    CHECK(net.forward(x).values().abs().maxCoeff() == 0.0);  // zero weights

    MlpSpec lin;
    lin.widths = {2, 2};
    Network l = Network::init(lin);
    l.parameters()[0].mutable_values() << 1.0, 2.0, 3.0, 4.0;  // W (in x out), row-major
    l.parameters()[1].mutable_values().setZero();
    Tensor out = l.forward(Tensor::from_values({1, 2}, {0.5, 0.25}));
    CHECK(out.values()[0] == doctest::Approx(0.5 * 1 + 0.25 * 3));
    CHECK(out.values()[1] == doctest::Approx(0.5 * 2 + 0.25 * 4));

    CHECK_THROWS_AS(l.forward(Tensor::from_values({1, 3}, {1, 2, 3})), DimensionError);
}

TEST_CASE("forward golden value for fixed seed") {
    Network net = Network::init(small_spec(42));
    Tensor out = net.forward(Tensor::from_values({1, 2}, {0.25, 0.75}));
    CHECK(out.values()[0] == doctest::Approx(0.85095307160373546).epsilon(1e-15));
    CHECK(out.values()[1] == doctest::Approx(0.90890118586795521).epsilon(1e-15));
}

TEST_CASE("sgd step semantics") {
    MlpSpec lin;
    lin.widths = {2, 2};
    Network net = Network::init(lin);
    SgdOptimizer opt(net);
    SgdSchedule sched;
    sched.lr0 = 0.1;
    sched.momentum = 0.0;

    CHECK_THROWS_AS(opt.step(sched, 0), ContractError);  // grads missing

    Eigen::ArrayXd w0 = net.parameters()[0].values();
    {
        TapeScope scope;
        Tensor x = Tensor::from_values({1, 2}, {1.0, 1.0});
        backward(sum(net.forward(x)));
    }
    Eigen::ArrayXd g = net.parameters()[0].grad();
    opt.step(sched, 0);
    CHECK(bit_equal(net.parameters()[0].values(), Eigen::ArrayXd(w0 - 0.1 * g)));

    // zero gradient: parameters unchanged
    Eigen::ArrayXd w1 = net.parameters()[0].values();
    for (Tensor& p : net.parameters()) {
        TapeScope scope;
        backward(scale(sum(p), 0.0));
    }
    opt.step(sched, 0);
    CHECK(bit_equal(net.parameters()[0].values(), w1));
}

TEST_CASE("schedule decay") {
    SgdSchedule s;
    s.lr0 = 0.1;
    s.decay_epochs = {10, 20};
    s.decay_factor = 0.1;
    CHECK(s.rate(0) == doctest::Approx(0.1));
    CHECK(s.rate(9) == doctest::Approx(0.1));
    CHECK(s.rate(10) == doctest::Approx(0.01));
    CHECK(s.rate(20) == doctest::Approx(0.001));
    for (int e = 1; e < 30; ++e) CHECK(s.rate(e) <= s.rate(e - 1));

    SgdSchedule bad = s;
    bad.decay_epochs = {20, 10};
    CHECK_THROWS_AS(bad.validate(), ValidationError);

    SgdSchedule d = default_schedule(100);
    CHECK(d.decay_epochs == std::vector<int>{50, 75});
}

TEST_CASE("save and load round-trip") {
    Network net = Network::init(small_spec(99));
    // perturb so the file is not just the init state
    net.parameters()[0].mutable_values() *= 1.5;
    const auto path = std::filesystem::temp_directory_path() / "rct_net_test.bin";
    net.save(path);
    Network back = Network::load(path);
    CHECK(back.spec().widths == net.spec().widths);
    CHECK(networks_bit_equal(net, back));
    std::filesystem::remove(path);

    CHECK_THROWS_AS(Network::load("/nonexistent/nope.bin"), ValidationError);
}

TEST_CASE("param freeze restores flags and blocks accumulation") {
    Network net = Network::init(small_spec(5));
    {
        ParamFreeze freeze(net);
        for (const Tensor& p : net.parameters()) CHECK_FALSE(p.requires_grad());
        TapeScope scope;
        Tensor x = Tensor::from_values({1, 2}, {0.5, 0.5}, true);
        backward(sum(net.forward(x)));
        for (const Tensor& p : net.parameters()) CHECK_FALSE(p.has_grad());
        CHECK(x.has_grad());
    }
    for (const Tensor& p : net.parameters()) CHECK(p.requires_grad());
}
