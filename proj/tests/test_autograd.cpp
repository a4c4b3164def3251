#include <doctest.h>

#include <cmath>
#include <functional>
#include <memory>

#include "dacnn/autograd.hpp"

using namespace dacnn;

namespace {

double central_diff(double* slot, double eps, const std::function<double()>& f) {
    const double orig = *slot;
    *slot = orig + eps;
    const double fp = f();
    *slot = orig - eps;
    const double fm = f();
    *slot = orig;
    return (fp - fm) / (2.0 * eps);
}

double rel_err(double a, double n) { return std::fabs(a - n) / std::max({std::fabs(a), std::fabs(n), 1e-8}); }

}  // namespace

TEST_CASE("single conv with sum loss gives window-sum weight gradients") {
    // 1x1 conv: d(sum y)/dw = sum of inputs
    ConvSpec spec{1, 1, 1, 1, 1, 0, 1, false};
    auto w = std::make_shared<Parameter>("w", Tensor({1, 1, 1, 1}, 2.0));
    Tensor x({1, 2, 2});
    x[0] = 1.0;
    x[1] = 2.0;
    x[2] = 3.0;
    x[3] = 4.0;
    Graph g;
    const auto xid = g.input(x);
    const auto y = g.conv(xid, spec, w, nullptr);
    const auto loss = g.reduce_sum_node(y);
    g.backward(loss);
    CHECK(w->grad[0] == 10.0);
    CHECK(g.scalar(loss) == 20.0);
}

TEST_CASE("shared parameter accumulates both paths") {
    ConvSpec spec{1, 1, 1, 1, 1, 0, 1, false};
    auto w = std::make_shared<Parameter>("w", Tensor({1, 1, 1, 1}, 3.0));
    const Tensor x({1, 1, 1}, 2.0);
    Graph g;
    const auto xid = g.input(x);
    const auto a = g.conv(xid, spec, w, nullptr);   // 6
    const auto b = g.conv(a, spec, w, nullptr);     // 18 = w*w*x
    const auto c = g.add(b, a);                     // w*w*x + w*x
    const auto loss = g.reduce_sum_node(c);
    g.backward(loss);
    // d/dw (w^2 x + w x) = 2 w x + x = 14
    CHECK(w->grad[0] == doctest::Approx(14.0).epsilon(1e-12));
    CHECK(g.scalar(loss) == doctest::Approx(24.0).epsilon(1e-12));
}

TEST_CASE("zero_grad resets and backward reproduces gradients") {
    ConvSpec spec{1, 1, 1, 1, 1, 0, 1, false};
    auto w = std::make_shared<Parameter>("w", Tensor({1, 1, 1, 1}, 1.5));
    const Tensor x({1, 1, 1}, 2.0);
    Graph g;
    const auto loss = g.reduce_sum_node(g.conv(g.input(x), spec, w, nullptr));
    g.backward(loss);
    const double g1 = w->grad[0];
    CHECK(g1 == 2.0);

    zero_grad({w});
    CHECK(w->grad[0] == 0.0);
    zero_grad({w});  // idempotent
    CHECK(w->grad[0] == 0.0);

    g.backward(loss);
    CHECK(w->grad[0] == g1);

    // without zero_grad gradients accumulate
    g.backward(loss);
    CHECK(w->grad[0] == 2.0 * g1);
}

TEST_CASE("replay determinism") {
    Rng rng(71);
    ConvSpec spec{2, 3, 3, 3, 1, 1, 1, true};
    auto run = [&](uint64_t seed) {
        Rng r(seed);
        auto w = std::make_shared<Parameter>("w", tensor_rand_uniform(r, {3, 2, 3, 3}, -0.5, 0.5));
        auto b = std::make_shared<Parameter>("b", tensor_rand_uniform(r, {3}, -0.5, 0.5));
        const Tensor x = tensor_rand_uniform(r, {2, 5, 5}, -1.0, 1.0);
        Graph g;
        const auto loss = g.reduce_sum_node(g.relu(g.conv(g.input(x), spec, w, b)));
        g.backward(loss);
        return std::pair<Tensor, Tensor>(w->grad, b->grad);
    };
    const auto [gw1, gb1] = run(123);
    const auto [gw2, gb2] = run(123);
    for (int64_t i = 0; i < gw1.size(); ++i) CHECK(gw1[i] == gw2[i]);
    for (int64_t i = 0; i < gb1.size(); ++i) CHECK(gb1[i] == gb2[i]);
    (void)rng;
}

TEST_CASE("two-layer graph matches central differences on every parameter") {
    Rng rng(73);
    ConvSpec spec1{1, 2, 3, 3, 1, 1, 1, true};
    ConvSpec spec2{2, 2, 3, 3, 1, 1, 1, true};
    auto w1 = std::make_shared<Parameter>("w1", tensor_rand_uniform(rng, {2, 1, 3, 3}, -0.5, 0.5));
    auto b1 = std::make_shared<Parameter>("b1", tensor_rand_uniform(rng, {2}, -0.2, 0.2));
    auto w2 = std::make_shared<Parameter>("w2", tensor_rand_uniform(rng, {2, 2, 3, 3}, -0.5, 0.5));
    auto b2 = std::make_shared<Parameter>("b2", tensor_rand_uniform(rng, {2}, -0.2, 0.2));
    const Tensor x = tensor_rand_uniform(rng, {1, 5, 5}, -1.0, 1.0);
    auto depth = std::make_shared<DepthMap>(5, 5);
    for (int64_t i = 0; i < 25; ++i) depth->values[static_cast<size_t>(i)] = rng.uniform(0.5, 3.0);
    const SimilaritySpec sim = SimilaritySpec::exponential(8.3);
    LabelMap labels(5, 5);
    for (size_t i = 0; i < labels.ids.size(); ++i) labels.ids[i] = static_cast<int32_t>(rng.next_u64() % 2);

    auto loss_value = [&]() {
        Graph g;
        auto h1 = g.relu(g.depth_conv(g.input(x), spec1, w1, b1, depth, sim));
        auto h2 = g.conv(h1, spec2, w2, b2);
        return g.scalar(g.softmax_ce(h2, labels));
    };

    zero_grad({w1, b1, w2, b2});
    {
        Graph g;
        auto h1 = g.relu(g.depth_conv(g.input(x), spec1, w1, b1, depth, sim));
        auto h2 = g.conv(h1, spec2, w2, b2);
        g.backward(g.softmax_ce(h2, labels));
    }

    double max_err = 0.0;
    for (const auto& p : {w1, b1, w2, b2}) {
        for (int64_t i = 0; i < p->value.size(); ++i) {
            max_err = std::max(max_err, rel_err(p->grad[i], central_diff(&p->value[i], 1e-5, loss_value)));
        }
    }
    CHECK(max_err < 1e-5);
}

TEST_CASE("graph error handling") {
    Graph g;
    CHECK_THROWS_AS(g.backward(0), StateError);  // empty graph

    const auto xid = g.input(Tensor({1, 2, 2}, 1.0));
    CHECK_THROWS_AS(g.backward(xid), GraphError);  // non-scalar loss
    CHECK_THROWS_AS(g.relu(5), GraphError);        // forward reference
    CHECK_THROWS_AS(g.relu(-1), GraphError);
    CHECK_THROWS_AS(g.value(3), GraphError);

    const auto loss = g.reduce_sum_node(xid);
    CHECK_THROWS_AS(g.grad(loss), StateError);  // grad before backward
    g.backward(loss);
    CHECK(g.grad(xid).size() == 4);
    for (int64_t i = 0; i < 4; ++i) CHECK(g.grad(xid)[i] == 1.0);
}

TEST_CASE("input gradients flow through pooling stacks") {
    Rng rng(79);
    const Tensor x = tensor_rand_uniform(rng, {2, 4, 4}, -1.0, 1.0);
    Graph g;
    const auto xid = g.input(x);
    const auto pooled = g.max_pool(xid, PoolSpec{2, 2, 2, 0, PoolMode::Max});
    const auto up = g.upsample(pooled, 4, 4);
    const auto cat = g.global_concat(up);
    const auto loss = g.reduce_sum_node(cat);
    g.backward(loss);
    const Tensor& gx = g.grad(xid);
    CHECK(gx.same_shape(x));
    double total = 0.0;
    for (int64_t i = 0; i < gx.size(); ++i) total += gx[i];
    // sum-loss over pass-through + broadcast-mean channels doubles the mass
    CHECK(total == doctest::Approx(2.0 * 32.0).epsilon(1e-9));
}
