#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "bfl/nn.hpp"
#include "bfl/rng.hpp"

using namespace bfl;

namespace {

MlpModel random_net(std::uint64_t seed, std::vector<std::size_t> dims, Activation hidden = Activation::tanh)
{
    Rng rng(seed);
    MlpModel m = make_mlp(dims, hidden, Activation::identity, rng);
    // Non-zero biases so their gradients are exercised too.
    for (auto& layer : m.layers) {
        for (auto& b : layer.bias) {
            b = rng.normal(0.0, 0.3);
        }
    }
    return m;
}

Tensor2 random_batch(Rng& rng, std::size_t rows, std::size_t cols)
{
    Tensor2 x(rows, cols);
    for (auto& v : x.values) {
        v = rng.normal();
    }
    return x;
}

// Triple-loop reference forward pass.
Tensor2 naive_forward(const MlpModel& m, const Tensor2& x)
{
    Tensor2 cur = x;
    for (const auto& layer : m.layers) {
        Tensor2 next(cur.rows, layer.out_dim());
        for (std::size_t r = 0; r < cur.rows; ++r) {
            for (std::size_t o = 0; o < layer.out_dim(); ++o) {
                double s = layer.bias[o];
                for (std::size_t i = 0; i < layer.in_dim(); ++i) {
                    s += layer.weight(o, i) * cur(r, i);
                }
                if (layer.activation == Activation::relu) {
                    s = s > 0.0 ? s : 0.0;
                } else if (layer.activation == Activation::tanh) {
                    s = std::tanh(s);
                }
                next(r, o) = s;
            }
        }
        cur = std::move(next);
    }
    return cur;
}

double loss_at(const MlpModel& m, const Tensor2& x, const std::vector<int>& y)
{
    return softmax_cross_entropy(forward(m, x), y).loss;
}

double rel_err(double a, double b)
{
    return std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b));
}

}  // namespace

TEST_CASE("forward: identity layer passes input through")
{
    MlpModel m;
    DenseLayer l;
    l.weight = Tensor2(2, 2);
    l.weight(0, 0) = 1.0;
    l.weight(1, 1) = 1.0;
    l.bias = {0.0, 0.0};
    m.layers.push_back(l);
    Tensor2 x(1, 2);
    x(0, 0) = 1.0;
    x(0, 1) = 2.0;
    const Tensor2 y = forward(m, x);
    CHECK(y(0, 0) == 1.0);
    CHECK(y(0, 1) == 2.0);
}

TEST_CASE("forward: zero weights return the bias on every row")
{
    MlpModel m;
    DenseLayer l;
    l.weight = Tensor2(3, 4);
    l.bias = {0.5, -1.0, 2.0};
    m.layers.push_back(l);
    Rng rng(3);
    const Tensor2 y = forward(m, random_batch(rng, 5, 4));
    for (std::size_t r = 0; r < 5; ++r) {
        CHECK(y(r, 0) == 0.5);
        CHECK(y(r, 1) == -1.0);
        CHECK(y(r, 2) == 2.0);
    }
}

TEST_CASE("forward matches a naive matmul reference")
{
    for (Activation act : {Activation::relu, Activation::tanh}) {
        const MlpModel m = random_net(11, {4, 7, 3}, act);
        Rng rng(12);
        const Tensor2 x = random_batch(rng, 9, 4);
        const Tensor2 got = forward(m, x);
        const Tensor2 want = naive_forward(m, x);
        REQUIRE(got.rows == want.rows);
        for (std::size_t i = 0; i < got.values.size(); ++i) {
            CHECK(std::abs(got.values[i] - want.values[i]) <= 1e-12);
        }
    }
}

TEST_CASE("forward rejects mismatched input width")
{
    const MlpModel m = random_net(1, {3, 2});
    CHECK_THROWS_AS(forward(m, Tensor2(1, 4)), DimensionError);
}

TEST_CASE("validate catches broken layer chains")
{
    MlpModel m = random_net(1, {3, 4, 2});
    CHECK_NOTHROW(validate(m));
    m.layers[1].weight = Tensor2(2, 5);
    CHECK_THROWS_AS(validate(m), DimensionError);
}

TEST_CASE("cross entropy: uniform and saturated logits")
{
    Tensor2 z(1, 2);
    const std::vector<int> y{0};
    CHECK(softmax_cross_entropy(z, y).loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    z(0, 0) = 20.0;
    z(0, 1) = -20.0;
    CHECK(softmax_cross_entropy(z, y).loss <= 1e-8);
    // Large logits must not overflow.
    z(0, 0) = 1000.0;
    z(0, 1) = -1000.0;
    const auto r = softmax_cross_entropy(z, std::vector<int>{1});
    CHECK(std::isfinite(r.loss));
    CHECK(r.loss == doctest::Approx(2000.0));
}

TEST_CASE("cross entropy rejects bad labels")
{
    Tensor2 z(2, 3);
    CHECK_THROWS(softmax_cross_entropy(z, std::vector<int>{0}));
    CHECK_THROWS(softmax_cross_entropy(z, std::vector<int>{0, 3}));
}

TEST_CASE("dlogits match central differences")
{
    Rng rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor2 z = random_batch(rng, 4, 5);
        std::vector<int> y(4);
        for (auto& v : y) {
            v = static_cast<int>(rng.below(5));
        }
        const auto r = softmax_cross_entropy(z, y);
        const double h = 1e-5;
        for (std::size_t i = 0; i < z.values.size(); ++i) {
            Tensor2 zp = z;
            Tensor2 zm = z;
            zp.values[i] += h;
            zm.values[i] -= h;
            const double fd = (softmax_cross_entropy(zp, y).loss - softmax_cross_entropy(zm, y).loss) / (2.0 * h);
            CHECK(rel_err(fd, r.dlogits.values[i]) < 1e-5);
        }
    }
}

TEST_CASE("backward: zero weights and zero inputs")
{
    MlpModel m;
    DenseLayer l;
    l.weight = Tensor2(3, 2);
    l.bias = {0.1, 0.2, -0.3};
    m.layers.push_back(l);
    const Tensor2 x(4, 2);
    const std::vector<int> y{0, 1, 2, 1};
    const auto br = backward(m, x, y);
    const auto ce = softmax_cross_entropy(forward(m, x), y);
    for (std::size_t c = 0; c < 3; ++c) {
        double col = 0.0;
        for (std::size_t r = 0; r < 4; ++r) {
            col += ce.dlogits(r, c);
        }
        CHECK(br.grads.biases[0][c] == doctest::Approx(col).epsilon(1e-14));
    }
    for (double g : br.grads.weights[0].values) {
        CHECK(g == 0.0);
    }
}

TEST_CASE("backward matches central differences on random networks")
{
    double worst = 0.0;
    for (std::uint64_t net = 0; net < 20; ++net) {
        Rng rng(100 + net);
        const std::size_t in = 2 + rng.below(4);
        const std::size_t hid = 3 + rng.below(5);
        const std::size_t out = 2 + rng.below(3);
        const MlpModel m = random_net(200 + net, {in, hid, out});
        const Tensor2 x = random_batch(rng, 6, in);
        std::vector<int> y(6);
        for (auto& v : y) {
            v = static_cast<int>(rng.below(out));
        }
        const ParamVector analytic = [&] {
            const auto br = backward(m, x, y);
            MlpModel g = m;
            for (std::size_t l = 0; l < g.layers.size(); ++l) {
                g.layers[l].weight = br.grads.weights[l];
                g.layers[l].bias = br.grads.biases[l];
            }
            return flatten(g);
        }();
        const ParamVector p = flatten(m);
        const double h = 1e-4;
        for (std::size_t i = 0; i < p.size(); ++i) {
            ParamVector pp = p;
            ParamVector pm = p;
            pp[i] += h;
            pm[i] -= h;
            const double fd = (loss_at(unflatten(m, pp), x, y) - loss_at(unflatten(m, pm), x, y)) / (2.0 * h);
            worst = std::max(worst, rel_err(fd, analytic[i]));
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("backward: duplicated rows give the single-row gradient")
{
    const MlpModel m = random_net(5, {3, 4, 2});
    Rng rng(6);
    const Tensor2 one = random_batch(rng, 1, 3);
    Tensor2 three(3, 3);
    for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t c = 0; c < 3; ++c) {
            three(r, c) = one(0, c);
        }
    }
    const auto a = backward(m, one, std::vector<int>{1});
    const auto b = backward(m, three, std::vector<int>{1, 1, 1});
    CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-14));
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        for (std::size_t i = 0; i < a.grads.weights[l].values.size(); ++i) {
            CHECK(a.grads.weights[l].values[i] == doctest::Approx(b.grads.weights[l].values[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("sgd: zero gradient without weight decay is a no-op")
{
    MlpModel m = random_net(8, {3, 3, 2});
    const MlpModel before = m;
    SgdState st;
    SgdConfig cfg;
    cfg.weight_decay = 0.0;
    sgd_step(m, Gradients::zeros_like(m), cfg, st);
    sgd_step(m, Gradients::zeros_like(m), cfg, st);
    CHECK(m == before);
}

TEST_CASE("sgd: plain step is w - lr * g")
{
    MlpModel m = random_net(9, {2, 2});
    const MlpModel before = m;
    Gradients g = Gradients::zeros_like(m);
    for (auto& v : g.weights[0].values) {
        v = 0.5;
    }
    g.biases[0] = {1.0, -2.0};
    SgdConfig cfg{0.1, 0.0, 0.0, false};
    SgdState st;
    sgd_step(m, g, cfg, st);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(m.layers[0].weight.values[i] == before.layers[0].weight.values[i] - 0.1 * 0.5);
    }
    CHECK(m.layers[0].bias[0] == before.layers[0].bias[0] - 0.1 * 1.0);
    CHECK(m.layers[0].bias[1] == before.layers[0].bias[1] - 0.1 * -2.0);
}

TEST_CASE("sgd: two momentum steps follow the scalar recurrence")
{
    // Scalar hand simulation of v <- mu v + g, step = g + mu v (Nesterov) or v.
    auto simulate = [](double w, double g, double lr, double mu, bool nesterov, int steps) {
        double v = 0.0;
        for (int s = 0; s < steps; ++s) {
            v = mu * v + g;
            w -= lr * (nesterov ? g + mu * v : v);
        }
        return w;
    };
    for (bool nesterov : {true, false}) {
        MlpModel m;
        DenseLayer l;
        l.weight = Tensor2(1, 1, 0.7);
        l.bias = {0.0};
        m.layers.push_back(l);
        Gradients g = Gradients::zeros_like(m);
        g.weights[0](0, 0) = 0.3;
        SgdConfig cfg{0.05, 0.9, 0.0, nesterov};
        SgdState st;
        sgd_step(m, g, cfg, st);
        sgd_step(m, g, cfg, st);
        CHECK(m.layers[0].weight(0, 0) == doctest::Approx(simulate(0.7, 0.3, 0.05, 0.9, nesterov, 2)).epsilon(1e-14));
    }
    // Nesterov: 1.9 g then 2.71 g, i.e. 4.61 lr g in total.
    CHECK(simulate(0.0, 1.0, 1.0, 0.9, true, 2) == doctest::Approx(-4.61));
}

TEST_CASE("sgd: weight decay skips biases")
{
    MlpModel m;
    DenseLayer l;
    l.weight = Tensor2(1, 1, 2.0);
    l.bias = {2.0};
    m.layers.push_back(l);
    SgdConfig cfg{0.1, 0.0, 0.5, false};
    SgdState st;
    sgd_step(m, Gradients::zeros_like(m), cfg, st);
    CHECK(m.layers[0].weight(0, 0) == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0));
    CHECK(m.layers[0].bias[0] == 2.0);
}

TEST_CASE("flatten/unflatten roundtrip and layout")
{
    const MlpModel m = random_net(13, {3, 5, 4});
    const ParamVector p = flatten(m);
    CHECK(p.size() == m.parameter_count());
    CHECK(p.size() == 3 * 5 + 5 + 5 * 4 + 4);
    CHECK(p[0] == m.layers[0].weight(0, 0));
    CHECK(p[1] == m.layers[0].weight(0, 1));
    CHECK(p[15] == m.layers[0].bias[0]);
    CHECK(unflatten(m, p) == m);
    CHECK_THROWS_AS(unflatten(m, ParamVector(p.size() + 1)), DimensionError);

    const MlpModel twin = unflatten(random_net(99, {3, 5, 4}), p);
    CHECK(flatten(twin) == p);
}

TEST_CASE("make_mlp is deterministic per seed")
{
    CHECK(random_net(4, {2, 8, 3}) == random_net(4, {2, 8, 3}));
    CHECK_FALSE(random_net(4, {2, 8, 3}) == random_net(5, {2, 8, 3}));
}

TEST_CASE("argmax ties go to the lowest index")
{
    Tensor2 z(2, 3);
    z(0, 1) = 1.0;
    z(0, 2) = 1.0;
    const auto a = argmax_rows(z);
    CHECK(a[0] == 1);
    CHECK(a[1] == 0);
}
