#include <ostream>

#include "doctest.h"

#include <cmath>

#include "revnmr/autograd.hpp"
#include "revnmr/gradcheck.hpp"
#include "revnmr/optim.hpp"
#include "revnmr/rng.hpp"

using namespace revnmr;
using DTensor = Tensor<double>;

TEST_CASE("tensor shape invariants") {
    Tensor<float> t(Shape{2, 3, 4});
    CHECK(t.size() == 24);
    CHECK(t.shape().str() == "[2,3,4]");
    CHECK_THROWS(Shape{-1});
    CHECK_THROWS(Tensor<float>::from(Shape{2, 2}, {1.0f, 2.0f, 3.0f}));
}

TEST_CASE("conv2d: zero input gives bias everywhere") {
    DTensor in(Shape{2, 4, 4});
    DTensor w(Shape{3, 2, 3, 3});
    RngStream rng(9);
    rng.fill_normal(w);
    DTensor b = DTensor::from(Shape{3}, {0.5, -1.0, 2.0});
    DTensor out = conv2d_value(in, w, b);
    for (int o = 0; o < 3; ++o)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) CHECK(out.at(o, y, x) == b[o]);
}

TEST_CASE("conv2d: centered one-hot identity kernel passes input through") {
    DTensor in(Shape{2, 4, 4});
    RngStream rng(10);
    rng.fill_normal(in);
    DTensor w(Shape{2, 2, 3, 3});
    w.at4(0, 0, 1, 1) = 1.0;
    w.at4(1, 1, 1, 1) = 1.0;
    DTensor b(Shape{2});
    CHECK(max_abs_diff(conv2d_value(in, w, b), in) == 0.0);
}

TEST_CASE("conv2d: hand-computed 2x2 all-ones window") {
    DTensor in = DTensor::from(Shape{1, 2, 2}, {1, 2, 3, 4});
    DTensor w(Shape{1, 1, 3, 3}, 1.0);
    DTensor b(Shape{1});
    DTensor out = conv2d_value(in, w, b);
    for (int64_t i = 0; i < 4; ++i) CHECK(out[i] == doctest::Approx(10.0));
}

namespace {
// independent sliding-window oracle
DTensor conv_oracle(const DTensor& in, const DTensor& w, const DTensor& b) {
    const int Cout = w.shape().dim(0), Cin = in.shape().dim(0);
    const int H = in.shape().dim(1), W = in.shape().dim(2);
    DTensor out(Shape{Cout, H, W});
    for (int o = 0; o < Cout; ++o)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                double acc = b[o];
                for (int c = 0; c < Cin; ++c)
                    for (int dy = 0; dy < 3; ++dy)
                        for (int dx = 0; dx < 3; ++dx) {
                            const int iy = y + dy - 1, ix = x + dx - 1;
                            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                            acc += in.at(c, iy, ix) * w.at4(o, c, dy, dx);
                        }
                out.at(o, y, x) = acc;
            }
    return out;
}
}  // namespace

TEST_CASE("conv2d matches the sliding-window oracle on random cases") {
    RngStream rng(77);
    for (auto [cin, cout, h, wd] : {std::tuple{1, 1, 1, 1}, {3, 2, 2, 2}, {2, 4, 5, 3}, {4, 4, 8, 8}}) {
        DTensor in(Shape{cin, h, wd}), w(Shape{cout, cin, 3, 3}), b(Shape{cout});
        rng.fill_normal(in);
        rng.fill_normal(w);
        rng.fill_normal(b);
        CHECK(max_abs_diff(conv2d_value(in, w, b), conv_oracle(in, w, b)) < 1e-12);
    }
}

TEST_CASE("conv2d rejects mismatched shapes") {
    DTensor in(Shape{2, 4, 4}), b(Shape{3});
    CHECK_THROWS_WITH_AS(conv2d_value(in, DTensor(Shape{3, 1, 3, 3}), b), doctest::Contains("C_in"),
                         std::invalid_argument);
    CHECK_THROWS(conv2d_value(in, DTensor(Shape{3, 2, 5, 5}), b));
    CHECK_THROWS(conv2d_value(in, DTensor(Shape{3, 2, 3, 3}), DTensor(Shape{4})));
}

TEST_CASE("elementwise op examples") {
    auto x = constant(DTensor::from(Shape{3}, {-1, 0, 2}));
    auto r = relu(x);
    CHECK(r->value[0] == 0.0);
    CHECK(r->value[1] == 0.0);
    CHECK(r->value[2] == 2.0);

    auto s = sigmoid(constant(DTensor::from(Shape{1}, {0.0})));
    CHECK(s->value[0] == doctest::Approx(0.5));

    auto c = clamp01_violation(constant(DTensor::from(Shape{3}, {-0.5, 0.3, 1.2})));
    CHECK(c->value[0] == doctest::Approx(0.5));
    CHECK(c->value[1] == 0.0);
    CHECK(c->value[2] == doctest::Approx(0.2));

    CHECK_THROWS(add(constant(DTensor(Shape{2})), constant(DTensor(Shape{3}))));
}

TEST_CASE("backward: linear functional gives all-ones gradient") {
    auto x = leaf(DTensor::from(Shape{4}, {1, -2, 3, 0.5}));
    backward(sum(x));
    for (int64_t i = 0; i < 4; ++i) CHECK(x->grad[i] == 1.0);
}

TEST_CASE("backward: relu subgradient convention") {
    auto x = leaf(DTensor::from(Shape{2}, {-1, 2}));
    backward(sum(relu(x)));
    CHECK(x->grad[0] == 0.0);
    CHECK(x->grad[1] == 1.0);
}

TEST_CASE("backward without a recorded forward pass is rejected") {
    auto c = constant(DTensor(Shape{2}, 1.0));
    CHECK_THROWS_AS(backward(c), std::runtime_error);
    NodePtr<double> under_guard;
    {
        NoGradGuard ng;
        under_guard = sum(leaf(DTensor(Shape{2}, 1.0)));
    }
    CHECK_THROWS_AS(backward(under_guard), std::runtime_error);
}

TEST_CASE("conv2d gradient matches central finite differences") {
    RngStream rng(5);
    DTensor in(Shape{2, 4, 4}), w(Shape{2, 2, 3, 3}), b(Shape{2});
    rng.fill_normal(in);
    rng.fill_normal(w, 0.5);
    rng.fill_normal(b, 0.5);
    DTensor g(Shape{2, 4, 4});
    rng.fill_normal(g);

    auto xn = leaf(in), wn = leaf(w), bn = leaf(b);
    backward(conv2d(xn, wn, bn), g);

    auto dot_out = [&](const DTensor& xi, const DTensor& wi, const DTensor& bi) {
        const DTensor out = conv2d_value(xi, wi, bi);
        double acc = 0;
        for (int64_t i = 0; i < out.size(); ++i) acc += out[i] * g[i];
        return acc;
    };
    const DTensor fd_in = finite_difference_gradient([&](const DTensor& t) { return dot_out(t, w, b); }, in);
    const DTensor fd_w = finite_difference_gradient([&](const DTensor& t) { return dot_out(in, t, b); }, w);
    const DTensor fd_b = finite_difference_gradient([&](const DTensor& t) { return dot_out(in, w, t); }, b);
    CHECK(max_relative_error(xn->grad, fd_in) <= 1e-4);
    CHECK(max_relative_error(wn->grad, fd_w) <= 1e-4);
    CHECK(max_relative_error(bn->grad, fd_b) <= 1e-4);
}

TEST_CASE("gradient checker flags a corrupted gradient") {
    RngStream rng(6);
    DTensor in(Shape{2, 3, 3});
    rng.fill_normal(in);
    auto x = leaf(in);
    backward(mean(square(x)));
    const DTensor fd = finite_difference_gradient(
        [&](const DTensor& t) {
            double acc = 0;
            for (int64_t i = 0; i < t.size(); ++i) acc += t[i] * t[i];
            return acc / static_cast<double>(t.size());
        },
        in);
    CHECK(max_relative_error(x->grad, fd) <= 1e-4);
    DTensor corrupted = x->grad;
    corrupted[4] *= 1.01;
    CHECK(max_relative_error(corrupted, fd) > 1e-4);
}

TEST_CASE("adam: zero gradient is a fixed point") {
    Parameter<double> p("p", DTensor::from(Shape{2}, {1.5, -0.5}));
    std::vector<Parameter<double>*> ps{&p};
    adam_step(ps);
    CHECK(p.value()[0] == 1.5);
    CHECK(p.value()[1] == -0.5);
    CHECK(p.steps == 1);
}

TEST_CASE("adam: closed-form first and second steps") {
    AdamConfig cfg;
    cfg.lr = 0.1;
    Parameter<double> p("p", DTensor::from(Shape{1}, {2.0}));
    std::vector<Parameter<double>*> ps{&p};

    p.grad()[0] = 1.0;
    adam_step(ps, cfg);
    // bias-corrected first step: lr * g / (|g| + eps)
    const double step1 = cfg.lr * 1.0 / (1.0 + cfg.eps);
    CHECK(p.value()[0] == doctest::Approx(2.0 - step1).epsilon(1e-12));
    CHECK(p.grad()[0] == 0.0);

    // second identical gradient, moments evaluated by the closed recursion
    p.grad()[0] = 1.0;
    adam_step(ps, cfg);
    const double m2 = cfg.beta1 * (1 - cfg.beta1) * 1.0 + (1 - cfg.beta1) * 1.0;
    const double v2 = cfg.beta2 * (1 - cfg.beta2) * 1.0 + (1 - cfg.beta2) * 1.0;
    const double mhat = m2 / (1 - cfg.beta1 * cfg.beta1);
    const double vhat = v2 / (1 - cfg.beta2 * cfg.beta2);
    const double step2 = cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    CHECK(p.value()[0] == doctest::Approx(2.0 - step1 - step2).epsilon(1e-12));
    CHECK(p.steps == 2);
}

TEST_CASE("adam rejects non-finite gradients") {
    Parameter<double> p("theta", DTensor(Shape{2}));
    p.grad()[1] = std::numeric_limits<double>::quiet_NaN();
    std::vector<Parameter<double>*> ps{&p};
    CHECK_THROWS_WITH_AS(adam_step(ps), doctest::Contains("theta"), std::runtime_error);
}

TEST_CASE("rng streams: equal state gives equal sequences") {
    RngStream a(42), b(42);
    for (int i = 0; i < 10000; ++i) CHECK(a.next_u64() == b.next_u64());

    RngStream c(42), d(43);
    int same = 0;
    for (int i = 0; i < 100; ++i) same += c.next_u64() == d.next_u64();
    CHECK(same == 0);
}

TEST_CASE("rng substreams resume from (seed, counter)") {
    RngStream a(7);
    a.next_u64();
    a.next_u64();
    RngStream b(7, 2);
    CHECK(a.next_u64() == b.next_u64());
    CHECK(a.substream(3).next_u64() == b.substream(3).next_u64());
}

TEST_CASE("ops are deterministic") {
    RngStream rng(11);
    DTensor in(Shape{3, 4, 4}), w(Shape{3, 3, 3, 3}), b(Shape{3});
    rng.fill_normal(in);
    rng.fill_normal(w);
    rng.fill_normal(b);
    CHECK(conv2d_value(in, w, b) == conv2d_value(in, w, b));
    CHECK(psi_forward_value(in) == psi_forward_value(in));
}
