#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fedmtl/errors.hpp"
#include "fedmtl/nn.hpp"
#include "fedmtl/rng.hpp"

using namespace fedmtl;

namespace {

DenseLayer make_layer(Tensor2 weights, std::vector<double> bias, Activation act) {
    DenseLayer layer;
    layer.weights = std::move(weights);
    layer.bias = std::move(bias);
    layer.activation = act;
    return layer;
}

// Random test instance within the gradient-check envelope: <= 4 layers,
// widths <= 16, batch <= 8.
struct RandomCase {
    Network net;
    Tensor2 batch;
    Tensor2 targets;
    LossKind loss;
};

RandomCase random_case(Rng& rng) {
    const std::size_t layer_count = 1 + rng.index(4);
    const std::size_t input_width = 1 + rng.index(16);

    const int family = static_cast<int>(rng.index(3));
    std::vector<LayerSpec> specs;
    for (std::size_t l = 0; l + 1 < layer_count; ++l) {
        const Activation acts[] = {Activation::ReLU, Activation::Sigmoid, Activation::Identity};
        specs.push_back({1 + rng.index(16), acts[rng.index(3)]});
    }
    LossKind loss = LossKind::MeanSquaredError;
    Activation out_act = Activation::Identity;
    std::size_t out_width = 1 + rng.index(16);
    if (family == 1) {
        loss = LossKind::BinaryCrossEntropy;
        out_act = Activation::Sigmoid;
    } else if (family == 2) {
        loss = LossKind::CategoricalCrossEntropy;
        out_act = Activation::Softmax;
        out_width = 2 + rng.index(8);
    }
    specs.push_back({out_width, out_act});

    RandomCase c;
    c.loss = loss;
    c.net = init_weights(input_width, specs, rng.next_u64());
    // random biases keep pre-activations off the exact relu kink that zero
    // biases hit whenever an entire relu layer goes dead for a row
    for (DenseLayer& layer : c.net)
        for (double& b : layer.bias) b = 0.1 * rng.normal();

    const std::size_t batch_rows = 1 + rng.index(8);
    c.batch = Tensor2(batch_rows, input_width);
    for (double& v : c.batch.data()) v = rng.normal();

    c.targets = Tensor2(batch_rows, out_width);
    if (loss == LossKind::MeanSquaredError) {
        for (double& v : c.targets.data()) v = rng.normal();
    } else if (loss == LossKind::BinaryCrossEntropy) {
        for (double& v : c.targets.data()) v = rng.index(2) ? 1.0 : 0.0;
    } else {
        for (std::size_t r = 0; r < batch_rows; ++r) c.targets(r, rng.index(out_width)) = 1.0;
    }
    return c;
}

} // namespace

TEST_CASE("forward identity layer reproduces its input") {
    Network net{make_layer(Tensor2::from_rows({{1.0, 0.0}, {0.0, 1.0}}), {0.0, 0.0},
                           Activation::Identity)};
    const Tensor2 out = forward_values(net, Tensor2::from_rows({{3.0, -1.0}}));
    CHECK(out(0, 0) == 3.0);
    CHECK(out(0, 1) == -1.0);
}

TEST_CASE("forward sigmoid unit with zero parameters outputs one half") {
    Network net{make_layer(Tensor2(1, 3, 0.0), {0.0}, Activation::Sigmoid)};
    const Tensor2 out = forward_values(net, Tensor2::from_rows({{4.0, -2.0, 7.0}}));
    CHECK(out(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("forward matches a hand-evaluated two-layer network") {
    // relu(W1 x + b1), then sigmoid(W2 a + b2), evaluated by hand
    Network net{
        make_layer(Tensor2::from_rows({{0.5, -0.25}, {0.75, 0.5}}), {0.1, -0.2}, Activation::ReLU),
        make_layer(Tensor2::from_rows({{0.2, -0.4}}), {0.05}, Activation::Sigmoid),
    };
    // z1 = [0.35, 1.05], both positive; z2 = 0.2*0.35 - 0.4*1.05 + 0.05 = -0.30
    const double expected = 1.0 / (1.0 + std::exp(0.3));
    const Tensor2 out = forward_values(net, Tensor2::from_rows({{1.0, 1.0}}));
    CHECK(out(0, 0) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("forward rejects a batch of the wrong width, naming the layer") {
    Network net{make_layer(Tensor2(2, 3, 0.1), {0.0, 0.0}, Activation::Identity)};
    try {
        forward(net, Tensor2(1, 2, 0.0));
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("layer 0") != std::string::npos);
    }
}

TEST_CASE("softmax rows sum to one and sigmoid stays inside the open interval") {
    Rng rng(7);
    Network net = init_weights(6, {{8, Activation::Sigmoid}, {5, Activation::Softmax}}, 21);
    Tensor2 batch(16, 6);
    for (double& v : batch.data()) v = 8.0 * rng.normal(); // large inputs push saturation
    const ForwardCache cache = forward(net, batch);

    for (std::size_t r = 0; r < batch.rows(); ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < 5; ++c) sum += cache.post[1](r, c);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        for (std::size_t c = 0; c < 8; ++c) {
            CHECK(cache.post[0](r, c) > 0.0);
            CHECK(cache.post[0](r, c) < 1.0);
        }
    }
}

TEST_CASE("losses are non-negative and vanish at the target") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor2 out(3, 4);
        for (double& v : out.data()) v = rng.uniform(0.05, 0.95);
        Tensor2 y(3, 4);
        for (double& v : y.data()) v = rng.index(2) ? 1.0 : 0.0;
        CHECK(loss_value(out, y, LossKind::MeanSquaredError) >= 0.0);
        CHECK(loss_value(out, y, LossKind::BinaryCrossEntropy) >= 0.0);
        CHECK(loss_value(out, y, LossKind::CategoricalCrossEntropy) >= 0.0);
    }
    Tensor2 exact = Tensor2::from_rows({{0.25, 0.75}});
    CHECK(loss_value(exact, exact, LossKind::MeanSquaredError) == 0.0);
    // cross-entropy of a hard correct prediction is zero up to the clamp
    Tensor2 hard = Tensor2::from_rows({{1.0, 0.0}});
    CHECK(loss_value(hard, hard, LossKind::BinaryCrossEntropy) <
          2.0 * -std::log(1.0 - 1e-12) + 1e-15);
    CHECK(loss_value(hard, hard, LossKind::CategoricalCrossEntropy) < 1e-11);
}

TEST_CASE("backward is zero when a linear model already fits under mse") {
    Network net{make_layer(Tensor2::from_rows({{2.0, -1.0}}), {0.5}, Activation::Identity)};
    const Tensor2 batch = Tensor2::from_rows({{1.0, 2.0}, {-3.0, 0.5}});
    const ForwardCache cache = forward(net, batch);
    const GradientSet grads = backward(net, cache, cache.output(), LossKind::MeanSquaredError);
    for (double v : grads[0].dweights.data()) CHECK(v == 0.0);
    for (double v : grads[0].dbias) CHECK(v == 0.0);
}

TEST_CASE("bce-sigmoid pre-activation gradient is sigma(z) - y") {
    // one unit, zero parameters: z = 0, y = 1 -> dL/dz = -0.5 = bias gradient
    Network net{make_layer(Tensor2(1, 2, 0.0), {0.0}, Activation::Sigmoid)};
    const Tensor2 batch = Tensor2::from_rows({{0.7, -0.1}});
    const ForwardCache cache = forward(net, batch);
    const GradientSet grads =
        backward(net, cache, Tensor2::from_rows({{1.0}}), LossKind::BinaryCrossEntropy);
    CHECK(grads[0].dbias[0] == doctest::Approx(-0.5).epsilon(1e-15));
    CHECK(grads[0].dweights(0, 0) == doctest::Approx(-0.5 * 0.7).epsilon(1e-15));
    CHECK(grads[0].dweights(0, 1) == doctest::Approx(-0.5 * -0.1).epsilon(1e-15));
}

TEST_CASE("backward rejects an incompatible loss pairing") {
    Network net{make_layer(Tensor2(1, 2, 0.1), {0.0}, Activation::Identity)};
    const ForwardCache cache = forward(net, Tensor2(1, 2, 1.0));
    CHECK_THROWS_AS(backward(net, cache, Tensor2(1, 1, 1.0), LossKind::BinaryCrossEntropy),
                    ConfigError);
}

TEST_CASE("softmax is rejected off the final layer") {
    Network net{make_layer(Tensor2(3, 2, 0.1), {0.0, 0.0, 0.0}, Activation::Softmax),
                make_layer(Tensor2(1, 3, 0.1), {0.0}, Activation::Identity)};
    CHECK_THROWS_AS(forward(net, Tensor2(1, 2, 1.0)), ConfigError);
}

TEST_CASE("finite differences match a hand-differentiated quadratic") {
    // y = w x, mse against y* : dl/dw = 2 x (w x - y*) = 8 at w=1.5, x=2, y*=1
    Network net{make_layer(Tensor2::from_rows({{1.5}}), {0.0}, Activation::Identity)};
    const GradientSet fd =
        finite_diff_grad(net, Tensor2::from_rows({{2.0}}), Tensor2::from_rows({{1.0}}),
                         LossKind::MeanSquaredError, 1e-5);
    CHECK(fd[0].dweights(0, 0) == doctest::Approx(8.0).epsilon(1e-8));
}

TEST_CASE("finite differences require a positive epsilon") {
    Network net{make_layer(Tensor2(1, 1, 0.5), {0.0}, Activation::Identity)};
    CHECK_THROWS_AS(finite_diff_grad(net, Tensor2(1, 1, 1.0), Tensor2(1, 1, 1.0),
                                     LossKind::MeanSquaredError, 0.0),
                    ConfigError);
}

TEST_CASE("dead relu zone yields zero finite-difference gradients downstream") {
    // first layer is constant (weights 0, bias -1, relu), so the second
    // layer's weights see a zero input and the loss is locally flat in them
    Network net{make_layer(Tensor2(2, 2, 0.0), {-1.0, -1.0}, Activation::ReLU),
                make_layer(Tensor2::from_rows({{0.7, -0.3}}), {0.2}, Activation::Identity)};
    const GradientSet fd =
        finite_diff_grad(net, Tensor2::from_rows({{0.5, -0.25}}), Tensor2::from_rows({{1.0}}),
                         LossKind::MeanSquaredError, 1e-5);
    for (double v : fd[1].dweights.data()) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
    for (double v : fd[0].dweights.data()) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
    // the output bias still moves the loss
    CHECK(std::fabs(fd[1].dbias[0]) > 0.1);
}

TEST_CASE("backward agrees with central finite differences on random networks") {
    Rng rng(2024);
    for (int trial = 0; trial < 25; ++trial) {
        const RandomCase c = random_case(rng);
        const ForwardCache cache = forward(c.net, c.batch);
        const GradientSet analytic = backward(c.net, cache, c.targets, c.loss);
        const GradientSet fd = finite_diff_grad(c.net, c.batch, c.targets, c.loss, 1e-5);
        CHECK(max_relative_error(analytic, fd) <= 1e-4);
    }
}

TEST_CASE("sgd step applies w -= eta g") {
    Network net{make_layer(Tensor2(1, 1, 1.0), {0.25}, Activation::Identity)};
    GradientSet grads = zero_gradients(net);
    grads[0].dweights(0, 0) = 0.5;
    grads[0].dbias[0] = -1.0;
    sgd_step(net, grads, 0.1);
    CHECK(net[0].weights(0, 0) == doctest::Approx(0.95).epsilon(1e-15));
    CHECK(net[0].bias[0] == doctest::Approx(0.35).epsilon(1e-15));

    // zero gradient is a fixed point
    GradientSet zeros = zero_gradients(net);
    Network before = net;
    sgd_step(net, zeros, 0.1);
    CHECK(net[0].weights(0, 0) == before[0].weights(0, 0));
    CHECK(net[0].bias[0] == before[0].bias[0]);
}

TEST_CASE("sgd rejects mismatched shapes") {
    Network net{make_layer(Tensor2(1, 2, 1.0), {0.0}, Activation::Identity)};
    GradientSet grads(1);
    grads[0].dweights = Tensor2(2, 2, 0.0);
    grads[0].dbias = {0.0, 0.0};
    CHECK_THROWS_AS(sgd_step(net, grads, 0.1), ShapeError);
}

TEST_CASE("sgd drives least squares to the closed-form optimum") {
    // y = 2x over centered inputs: the minimizer is w = 2, b = 0, and the
    // weight/bias modes decouple so 50 steps reach it
    Network net{make_layer(Tensor2(1, 1, 0.0), {0.0}, Activation::Identity)};
    const Tensor2 x = Tensor2::from_rows({{-1.5}, {-0.5}, {0.5}, {1.5}});
    const Tensor2 y = Tensor2::from_rows({{-3.0}, {-1.0}, {1.0}, {3.0}});
    for (int step = 0; step < 50; ++step) {
        const ForwardCache cache = forward(net, x);
        sgd_step(net, backward(net, cache, y, LossKind::MeanSquaredError), 0.1);
    }
    CHECK(net[0].weights(0, 0) == doctest::Approx(2.0).epsilon(1e-3));
}

TEST_CASE("init_weights is deterministic per seed") {
    const std::vector<LayerSpec> specs{{8, Activation::ReLU}, {3, Activation::Sigmoid}};
    const Network a = init_weights(5, specs, 99);
    const Network b = init_weights(5, specs, 99);
    const Network c = init_weights(5, specs, 100);
    REQUIRE(a.size() == b.size());
    for (std::size_t l = 0; l < a.size(); ++l) {
        CHECK(a[l].weights == b[l].weights);
        CHECK(a[l].bias == b[l].bias);
    }
    CHECK_FALSE(a[0].weights == c[0].weights);
}

TEST_CASE("init_weights rejects zero widths") {
    CHECK_THROWS_AS(init_weights(0, {{4, Activation::ReLU}}, 1), ConfigError);
    CHECK_THROWS_AS(init_weights(4, {{0, Activation::ReLU}}, 1), ConfigError);
}

TEST_CASE("relu init is he-scaled, biases zero") {
    const Network net = init_weights(100, {{64, Activation::ReLU}}, 12345);
    double sum = 0.0, sq = 0.0;
    const std::size_t n = net[0].weights.size();
    for (double v : net[0].weights.data()) {
        sum += v;
        sq += v * v;
    }
    const double mean = sum / static_cast<double>(n);
    const double stddev = std::sqrt(sq / static_cast<double>(n) - mean * mean);
    const double expected = std::sqrt(2.0 / 100.0);
    CHECK(stddev > 0.8 * expected);
    CHECK(stddev < 1.2 * expected);
    for (double b : net[0].bias) CHECK(b == 0.0);
}

TEST_CASE("training is bit-identical for identical seeds") {
    auto train = [](std::uint64_t seed) {
        Network net = init_weights(4, {{6, Activation::ReLU}, {1, Activation::Sigmoid}}, seed);
        Rng rng(500);
        Tensor2 x(12, 4), y(12, 1);
        for (double& v : x.data()) v = rng.normal();
        for (double& v : y.data()) v = rng.index(2) ? 1.0 : 0.0;
        for (int step = 0; step < 20; ++step) {
            const ForwardCache cache = forward(net, x);
            sgd_step(net, backward(net, cache, y, LossKind::BinaryCrossEntropy), 0.2);
        }
        return net;
    };
    const Network a = train(77), b = train(77);
    for (std::size_t l = 0; l < a.size(); ++l) {
        CHECK(a[l].weights == b[l].weights);
        CHECK(a[l].bias == b[l].bias);
    }
}
