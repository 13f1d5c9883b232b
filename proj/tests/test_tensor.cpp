#include <doctest.h>

#include "rct/tensor.hpp"

#include "rct/objectives.hpp"
#include "testutil.hpp"

using namespace rct;
using rct::testing::bit_equal;
using rct::testing::max_rel_error;
using rct::testing::numeric_grad;
using rct::testing::random_tensor;

TEST_CASE("matmul basics") {
    Tensor I = Tensor::from_values({2, 2}, {1, 0, 0, 1});
    Tensor r = matmul(I, I);
    CHECK(bit_equal(r.values(), I.values()));

    Tensor a = Tensor::from_values({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from_values({2, 1}, {0, 1});
    Tensor ab = matmul(a, b);
    CHECK(ab.values()[0] == 2.0);
    CHECK(ab.values()[1] == 4.0);

    Tensor z = Tensor::zeros({2, 3});
    Rng rng(7);
    Tensor any = random_tensor({3, 4}, rng);
    CHECK(matmul(z, any).values().abs().maxCoeff() == 0.0);

    CHECK_THROWS_AS(matmul(a, Tensor::zeros({3, 2})), DimensionError);
    CHECK_THROWS_AS(matmul(a, Tensor::zeros({4})), DimensionError);
}

TEST_CASE("matmul backward rules") {
    Rng rng(11);
    Tensor a = random_tensor({3, 4}, rng, -1, 1, true);
    Tensor b = random_tensor({4, 2}, rng, -1, 1, true);
    TapeScope scope;
    Tensor loss = sum(matmul(a, b));
    backward(loss);

    auto f = [&]() {
        NoGradGuard ng;
        return sum(matmul(a, b)).item();
    };
    CHECK(max_rel_error(a.grad(), numeric_grad(f, a)) < 1e-6);
    CHECK(max_rel_error(b.grad(), numeric_grad(f, b)) < 1e-6);
}

TEST_CASE("backward linear and quadratic cases") {
    Tensor x = Tensor::from_values({3}, {1, 2, 3}, true);
    {
        TapeScope scope;
        backward(sum(x));
        CHECK(x.grad()[0] == 1.0);
        CHECK(x.grad()[1] == 1.0);
        CHECK(x.grad()[2] == 1.0);
    }
    x.zero_grad();
    {
        TapeScope scope;
        backward(sum(mul(x, x)));
        CHECK(x.grad()[0] == doctest::Approx(2.0));
        CHECK(x.grad()[1] == doctest::Approx(4.0));
        CHECK(x.grad()[2] == doctest::Approx(6.0));
    }
}

TEST_CASE("backward contract errors") {
    Tensor x = Tensor::from_values({2}, {1, 2}, true);
    CHECK_THROWS_AS(backward(x), ContractError);  // non-scalar root
    Tensor c = Tensor::scalar(1.0);               // not recorded
    CHECK_THROWS_AS(backward(c), ContractError);
}

TEST_CASE("two-layer MLP gradient matches finite differences") {
    Rng rng(23);
    Tensor w1 = random_tensor({3, 5}, rng, -1, 1, true);
    Tensor b1 = random_tensor({5}, rng, -0.1, 0.1, true);
    Tensor w2 = random_tensor({5, 2}, rng, -1, 1, true);
    Tensor x = random_tensor({4, 3}, rng);
    std::vector<int> y = {0, 1, 1, 0};

    auto loss_value = [&]() {
        NoGradGuard ng;
        Tensor h = relu(add(matmul(x, w1), b1));
        return cross_entropy(softmax(matmul(h, w2)), y).item();
    };

    TapeScope scope;
    Tensor h = relu(add(matmul(x, w1), b1));
    backward(cross_entropy(softmax(matmul(h, w2)), y));

    CHECK(max_rel_error(w1.grad(), numeric_grad(loss_value, w1)) < 1e-5);
    CHECK(max_rel_error(b1.grad(), numeric_grad(loss_value, b1)) < 1e-5);
    CHECK(max_rel_error(w2.grad(), numeric_grad(loss_value, w2)) < 1e-5);
}

TEST_CASE("elementwise op values") {
    Tensor a = Tensor::from_values({3}, {-1, 0, 2});
    CHECK(relu(a).values()[0] == 0.0);
    CHECK(relu(a).values()[1] == 0.0);
    CHECK(relu(a).values()[2] == 2.0);

    Tensor c = clamp(Tensor::from_values({3}, {-0.5, 0.3, 1.4}), 0.0, 1.0);
    CHECK(c.values()[0] == 0.0);
    CHECK(c.values()[1] == 0.3);
    CHECK(c.values()[2] == 1.0);

    Tensor s = sign(Tensor::from_values({3}, {-3, 0, 7}));
    CHECK(s.values()[0] == -1.0);
    CHECK(s.values()[1] == 0.0);
    CHECK(s.values()[2] == 1.0);
    CHECK_FALSE(s.requires_grad());

    CHECK(rct::log(Tensor::scalar(0.0)).values()[0] == doctest::Approx(std::log(1e-12)));
    CHECK(mean(Tensor::from_values({4}, {1, 2, 3, 4})).item() == 2.5);
}

TEST_CASE("trailing-dimension broadcast") {
    Tensor m = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6}, true);
    Tensor bias = Tensor::from_values({3}, {10, 20, 30}, true);
    TapeScope scope;
    Tensor r = add(m, bias);
    CHECK(r.values()[0] == 11.0);
    CHECK(r.values()[5] == 36.0);

    backward(sum(r));
    CHECK(bias.grad()[0] == 2.0);  // folded over the leading dim
    CHECK(m.grad()[0] == 1.0);

    CHECK_THROWS_AS(add(m, Tensor::zeros({2})), DimensionError);
    CHECK_THROWS_AS(add(bias, m), DimensionError);  // only the 2nd operand broadcasts
}

TEST_CASE("broadcast mul gradient") {
    Rng rng(5);
    Tensor m = random_tensor({4, 3}, rng, -2, 2, true);
    Tensor v = random_tensor({3}, rng, -2, 2, true);
    TapeScope scope;
    backward(sum(mul(m, v)));
    auto f = [&]() {
        NoGradGuard ng;
        return sum(mul(m, v)).item();
    };
    CHECK(max_rel_error(m.grad(), numeric_grad(f, m)) < 1e-6);
    CHECK(max_rel_error(v.grad(), numeric_grad(f, v)) < 1e-6);
}

TEST_CASE("non-finite values are rejected") {
    CHECK_THROWS_AS(Tensor::from_values({1}, {std::nan("")}), NonFiniteError);
    Tensor big = Tensor::full({2}, 1000.0);
    CHECK_THROWS_AS(rct::exp(big), NonFiniteError);
}

TEST_CASE("tape isolation: no-grad ops never touch grad buffers") {
    Tensor x = Tensor::from_values({3}, {1, 2, 3}, true);
    {
        TapeScope scope;
        backward(sum(mul(x, x)));
    }
    Eigen::ArrayXd before = x.grad();
    {
        NoGradGuard ng;
        Tensor r = mul(x, x);
        CHECK_FALSE(r.requires_grad());
        Tensor s = sum(r);
        CHECK_FALSE(s.requires_grad());
    }
    CHECK(bit_equal(x.grad(), before));
}

TEST_CASE("determinism: same construction, same bits") {
    Rng r1(99), r2(99);
    Tensor a = random_tensor({5, 5}, r1, -1, 1, true);
    Tensor b = random_tensor({5, 5}, r2, -1, 1, true);
    CHECK(bit_equal(a.values(), b.values()));

    TapeScope scope;
    Tensor la = sum(relu(matmul(a, a)));
    Tensor lb = sum(relu(matmul(b, b)));
    backward(la);
    backward(lb);
    CHECK(bit_equal(a.grad(), b.grad()));
}

TEST_CASE("gradient accumulates across shared consumers") {
    // diamond: y = sum(x*x) + sum(x): dy/dx = 2x + 1
    Tensor x = Tensor::from_values({2}, {3, -4}, true);
    TapeScope scope;
    backward(add(sum(mul(x, x)), sum(x)));
    CHECK(x.grad()[0] == doctest::Approx(7.0));
    CHECK(x.grad()[1] == doctest::Approx(-7.0));
}
