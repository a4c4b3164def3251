#include <doctest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "dacnn/train.hpp"

using namespace dacnn;
namespace fs = std::filesystem;

namespace {

std::vector<Scene> tiny_dataset(int images = 4, int64_t size = 16, uint64_t seed = 42) {
    DatasetSpec spec;
    spec.num_images = images;
    spec.height = spec.width = size;
    spec.seed = seed;
    return generate(spec);
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (int64_t i = 0; i < a.size(); ++i) {
        if (a[i] != b[i]) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("poly learning rate schedule") {
    CHECK(poly_lr(0.001, 0, 1000) == 0.001);
    CHECK(poly_lr(0.001, 1000, 1000) == 0.0);
    CHECK(poly_lr(0.001, 500, 1000) == doctest::Approx(0.000535887).epsilon(1e-6));
    CHECK(poly_lr(0.001, 500, 1000) == doctest::Approx(0.001 * std::pow(0.5, 0.9)).epsilon(1e-12));

    // within one period the lr holds steady
    CHECK(poly_lr(0.001, 3, 1000) == 0.001);
    CHECK(poly_lr(0.001, 9, 1000) == 0.001);
    CHECK(poly_lr(0.001, 10, 1000) < 0.001);

    // non-increasing across the whole range
    double prev = 1e9;
    for (int64_t it = 0; it <= 200; ++it) {
        const double lr = poly_lr(0.001, it, 200);
        CHECK(lr <= prev + 1e-18);
        prev = lr;
    }

    CHECK_THROWS_AS(poly_lr(0.001, 0, 0), ArgumentError);
    CHECK_THROWS_AS(poly_lr(0.001, -1, 10), ArgumentError);
    CHECK_THROWS_AS(poly_lr(0.001, 11, 10), ArgumentError);
}

TEST_CASE("compound schedule decays faster than poly") {
    CHECK(compound_lr(0.001, 0, 100) == 0.001);
    CHECK(compound_lr(0.001, 9, 100) == 0.001);
    // one boundary: multiplied once by (1 - 10/100)^0.9
    CHECK(compound_lr(0.001, 10, 100) == doctest::Approx(0.001 * std::pow(0.9, 0.9)).epsilon(1e-12));
    for (int64_t it : {20, 50, 90}) {
        CHECK(compound_lr(0.001, it, 100) < poly_lr(0.001, it, 100));
    }
}

TEST_CASE("sgd update rule") {
    auto p = std::make_shared<Parameter>("p", Tensor({2}, 1.0));
    SgdState state;

    // momentum 0, lr 1: p decreases by g
    p->grad = Tensor({2}, 0.25);
    sgd_step({p}, 1.0, 0.0, state);
    CHECK(p->value[0] == 0.75);

    // zero gradient and zero velocity leave parameters unchanged
    auto q = std::make_shared<Parameter>("q", Tensor({2}, 3.0));
    SgdState qstate;
    q->grad = Tensor({2}, 0.0);
    sgd_step({q}, 0.5, 0.9, qstate);
    CHECK(q->value[0] == 3.0);

    // two steps with constant gradient g, momentum 0.9, lr 1:
    // total decrease g + 1.9 g
    auto r = std::make_shared<Parameter>("r", Tensor({1}, 10.0));
    SgdState rstate;
    const double g = 0.5;
    r->grad = Tensor({1}, g);
    sgd_step({r}, 1.0, 0.9, rstate);
    r->grad = Tensor({1}, g);
    sgd_step({r}, 1.0, 0.9, rstate);
    CHECK(r->value[0] == doctest::Approx(10.0 - g - 1.9 * g).epsilon(1e-12));

    // lr 0 never moves parameters
    auto s = std::make_shared<Parameter>("s", Tensor({1}, 2.0));
    SgdState sstate;
    s->grad = Tensor({1}, 123.0);
    sgd_step({s}, 0.0, 0.9, sstate);
    CHECK(s->value[0] == 2.0);
}

TEST_CASE("training is deterministic by seed") {
    const auto data = tiny_dataset();
    TrainConfig cfg;
    cfg.max_iter = 6;
    cfg.seed = 11;

    auto run = [&]() {
        Rng rng(11);
        Model model = build(ModelSpec::dcnn_mini(4), rng);
        const TrainResult res = train(model, data, cfg);
        return std::make_pair(model.parameters(), res.curve);
    };
    const auto [p1, c1] = run();
    const auto [p2, c2] = run();
    REQUIRE(p1.size() == p2.size());
    for (size_t i = 0; i < p1.size(); ++i) CHECK(bitwise_equal(p1[i]->value, p2[i]->value));
    REQUIRE(c1.size() == c2.size());
    for (size_t i = 0; i < c1.size(); ++i) {
        CHECK(c1[i].loss == c2[i].loss);
        CHECK(c1[i].lr == c2[i].lr);
    }
}

TEST_CASE("constant-one dcnn trains exactly like the baseline") {
    const auto data = tiny_dataset(3);
    TrainConfig cfg;
    cfg.max_iter = 5;
    cfg.seed = 21;
    cfg.sim = SimilaritySpec::constant_one();

    Rng ra(21), rb(21);
    Model baseline = build(ModelSpec::baseline_mini(4), ra);
    Model dcnn = build(ModelSpec::dcnn_mini(4, SimilaritySpec::constant_one()), rb);
    const TrainResult rb_res = train(baseline, data, cfg);
    const TrainResult rd_res = train(dcnn, data, cfg);
    REQUIRE(rb_res.curve.size() == rd_res.curve.size());
    for (size_t i = 0; i < rb_res.curve.size(); ++i) {
        CHECK(rb_res.curve[i].loss == rd_res.curve[i].loss);
    }
    const auto pa = baseline.parameters();
    const auto pb = dcnn.parameters();
    for (size_t i = 0; i < pa.size(); ++i) CHECK(bitwise_equal(pa[i]->value, pb[i]->value));
}

TEST_CASE("train writes curve and checkpoint") {
    const auto data = tiny_dataset(2);
    TrainConfig cfg;
    cfg.max_iter = 4;
    cfg.checkpoint_every = 2;
    const std::string out = (fs::temp_directory_path() / "dacnn_train_out").string();
    fs::remove_all(out);
    Rng rng(1);
    Model model = build(ModelSpec::dcnn_mini(4), rng);
    const TrainResult res = train(model, data, cfg, out);
    CHECK(res.curve.size() == 4);
    CHECK(fs::exists(fs::path(out) / "checkpoint.dcnn"));
    CHECK(fs::exists(fs::path(out) / "checkpoint_2.dcnn"));
    CHECK(fs::exists(fs::path(out) / "loss_curve.csv"));

    std::ifstream csv(fs::path(out) / "loss_curve.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == "iter,loss,lr");
    fs::remove_all(out);

    CHECK_THROWS_AS(train(model, {}, cfg), DataError);
    TrainConfig bad = cfg;
    bad.base_lr = 0.0;
    CHECK_THROWS_AS(train(model, data, bad), ArgumentError);
}

TEST_CASE("augmentation keeps training deterministic") {
    const auto data = tiny_dataset(3);
    TrainConfig cfg;
    cfg.max_iter = 5;
    cfg.seed = 31;
    cfg.aug_scale = true;
    cfg.aug_crop = true;
    cfg.aug_jitter = true;

    auto run = [&]() {
        Rng rng(31);
        Model model = build(ModelSpec::dcnn_mini(4), rng);
        return train(model, data, cfg).curve;
    };
    const auto c1 = run();
    const auto c2 = run();
    for (size_t i = 0; i < c1.size(); ++i) CHECK(c1[i].loss == c2[i].loss);

    TrainConfig plain = cfg;
    plain.aug_scale = plain.aug_crop = plain.aug_jitter = false;
    Rng rng(31);
    Model model = build(ModelSpec::dcnn_mini(4), rng);
    const auto c3 = train(model, data, plain).curve;
    bool any_diff = false;
    for (size_t i = 0; i < c1.size(); ++i) any_diff = any_diff || (c1[i].loss != c3[i].loss);
    CHECK(any_diff);
}

TEST_CASE("evaluate matches the metrics module directly") {
    const auto data = tiny_dataset(4);
    Rng rng(17);
    const Model model = build(ModelSpec::dcnn_mini(4), rng);
    const EvalResult res = evaluate(model, data);

    ConfusionMatrix cm(4);
    for (const Scene& scene : data) {
        const Tensor logits = predict_logits(model, scene.rgb, build_pyramid(scene.depth, 2));
        const int64_t hw = logits.dim(1) * logits.dim(2);
        LabelMap pred(logits.dim(1), logits.dim(2));
        for (int64_t p = 0; p < hw; ++p) {
            int32_t best_c = 0;
            double best = logits[p];
            for (int64_t c = 1; c < 4; ++c) {
                if (logits[c * hw + p] > best) {
                    best = logits[c * hw + p];
                    best_c = static_cast<int32_t>(c);
                }
            }
            pred.ids[static_cast<size_t>(p)] = best_c;
        }
        cm.accumulate(pred, scene.labels);
    }
    const MetricsReport direct = compute_metrics(cm);
    CHECK(res.metrics.acc == direct.acc);
    CHECK(res.metrics.macc == direct.macc);
    CHECK(res.metrics.miou == direct.miou);
    CHECK(res.metrics.fwiou == direct.fwiou);

    CHECK_THROWS_AS(evaluate(model, {}), DataError);
}

TEST_CASE("zero-parameter model predicts class 0 everywhere") {
    Rng rng(3);
    Model model = build(ModelSpec::baseline_mini(2), rng);
    for (const auto& p : model.parameters()) p->value = Tensor(p->value.shape(), 0.0);

    // balanced 2-class labels: constant predictor scores Acc 0.5
    Scene s;
    s.rgb = Tensor({3, 8, 8}, 0.5);
    s.depth = DepthMap(8, 8, 1.0);
    s.labels = LabelMap(8, 8, 0);
    for (int64_t y = 4; y < 8; ++y) {
        for (int64_t x = 0; x < 8; ++x) s.labels.set(y, x, 1);
    }
    const EvalResult res = evaluate(model, {s});
    CHECK(res.metrics.acc == doctest::Approx(0.5).epsilon(1e-12));

    // single-class truth: the constant predictor is the oracle, all metrics 1
    Scene t = s;
    t.labels = LabelMap(8, 8, 0);
    const EvalResult res2 = evaluate(model, {t});
    CHECK(res2.metrics.miou == 1.0);
    CHECK(res2.metrics.acc == 1.0);
}

TEST_CASE("gradcheck harness") {
    CHECK(gradcheck_rel_err(1.0, 1.0) == 0.0);
    CHECK(gradcheck_rel_err(0.0, 0.0) == 0.0);
    CHECK(gradcheck_rel_err(1.0, 1.1) == doctest::Approx(0.1 / 1.1).epsilon(1e-12));

    const GradCheckReport ops = gradcheck_ops(1, 4);
    CHECK(ops.entries.size() >= 9);
    for (const auto& e : ops.entries) {
        INFO(e.name);
        CHECK(e.checks > 0);
        CHECK(e.max_rel_err < 1e-6);
    }
    CHECK(ops.passed(1e-6));
    CHECK(ops.to_csv().find("target,max_rel_err") == 0);

    const GradCheckReport model = gradcheck_model(1, 2);
    CHECK(model.entries.size() == 1);
    CHECK(model.entries[0].checks > 0);
    CHECK(model.max_rel_err() < 1e-5);
}

TEST_CASE("bench is stable against itself") {
    // identical work measured twice: median-of-21 ratios stay inside the
    // noise bound
    using clock = std::chrono::steady_clock;
    Rng rng(2);
    ConvSpec spec{16, 16, 3, 3, 1, 1, 1, true};
    ConvKernel k = ConvKernel::zeros(spec);
    k.weights = tensor_rand_uniform(rng, k.weights.shape(), -0.5, 0.5);
    *k.bias = tensor_rand_uniform(rng, {16}, -0.5, 0.5);
    const Tensor x = tensor_rand_uniform(rng, {16, 32, 32}, -1.0, 1.0);

    auto median_time = [&]() {
        std::vector<double> times;
        for (int i = 0; i < 3; ++i) (void)conv_forward(spec, k, x);
        for (int i = 0; i < 21; ++i) {
            const auto t0 = clock::now();
            (void)conv_forward(spec, k, x);
            const auto t1 = clock::now();
            times.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
        }
        std::sort(times.begin(), times.end());
        return times[10];
    };
    const double a = median_time();
    const double b = median_time();
    const double ratio = a / b;
    CHECK(ratio > 0.8);
    CHECK(ratio < 1.25);

    CHECK_THROWS_AS(bench({BenchConfig{}}, 0), ArgumentError);
}

TEST_CASE("bench report emits configs and ratios") {
    BenchConfig cfg;
    cfg.in_channels = cfg.out_channels = 8;
    cfg.height = cfg.width = 16;
    const BenchReport report = bench({cfg}, 5, 1);
    REQUIRE(report.rows.size() == 1);
    CHECK(report.rows[0].standard_ns > 0.0);
    CHECK(report.rows[0].depth_aware_ns > 0.0);
    CHECK(report.rows[0].ratio > 0.0);
    CHECK(report.to_csv().find("config,standard_ns,depth_aware_ns,ratio") == 0);
    CHECK(report.to_csv().find("c8-8_16x16_k3d1") != std::string::npos);
}
