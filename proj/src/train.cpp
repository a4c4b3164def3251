#include "dacnn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <utility>

namespace fs = std::filesystem;

namespace dacnn {

void TrainConfig::validate() const {
    if (!(base_lr > 0.0)) throw ArgumentError("base_lr must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ArgumentError("momentum must be in [0,1)");
    if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
    if (max_iter < 1) throw ArgumentError("max_iter must be >= 1");
    if (lr_update_period < 1) throw ArgumentError("lr_update_period must be >= 1");
    if (checkpoint_every < 0) throw ArgumentError("checkpoint_every must be >= 0");
    sim.validate();
}

double poly_lr(double base_lr, int64_t iter, int64_t max_iter, double power, int64_t period) {
    if (max_iter < 1) throw ArgumentError("poly_lr requires max_iter >= 1");
    if (period < 1) throw ArgumentError("poly_lr requires period >= 1");
    if (iter < 0 || iter > max_iter) throw ArgumentError("poly_lr requires 0 <= iter <= max_iter");
    const double stepped = static_cast<double>((iter / period) * period);
    return base_lr * std::pow(1.0 - stepped / static_cast<double>(max_iter), power);
}

double compound_lr(double base_lr, int64_t iter, int64_t max_iter, double power, int64_t period) {
    if (max_iter < 1) throw ArgumentError("compound_lr requires max_iter >= 1");
    if (period < 1) throw ArgumentError("compound_lr requires period >= 1");
    if (iter < 0 || iter > max_iter) throw ArgumentError("compound_lr requires 0 <= iter <= max_iter");
    double lr = base_lr;
    for (int64_t k = period; k <= iter; k += period) {
        lr *= std::pow(1.0 - static_cast<double>(k) / static_cast<double>(max_iter), power);
    }
    return lr;
}

void sgd_step(const std::vector<ParamPtr>& params, double lr, double momentum, SgdState& state) {
    if (state.velocity.empty()) {
        state.velocity.reserve(params.size());
        for (const auto& p : params) state.velocity.emplace_back(p->value.shape());
    }
    if (state.velocity.size() != params.size()) throw StateError("sgd velocity count does not match parameters");
    for (size_t i = 0; i < params.size(); ++i) {
        Parameter& p = *params[i];
        if (!p.trainable) continue;
        Tensor& v = state.velocity[i];
        if (!v.same_shape(p.grad)) throw StateError("sgd velocity shape does not match parameter " + p.name);
        for (int64_t k = 0; k < v.size(); ++k) {
            v[k] = momentum * v[k] + p.grad[k];
            p.value[k] -= lr * v[k];
        }
    }
}

namespace {

int pyramid_levels_needed(const ModelSpec& spec) {
    int max_level = 0;
    for (const LayerSpec& l : spec.layers) {
        if (l.kind == LayerKind::DConv || l.kind == LayerKind::DAvgPool) {
            max_level = std::max(max_level, l.depth_level);
        }
    }
    return max_level;
}

Tensor resize_nearest_2d(const Tensor& x, int64_t out_h, int64_t out_w) {
    return upsample_nearest(x, out_h, out_w);
}

// Random scale in [0.75, 1.25] (nearest for every plane; depth values divided
// by the factor to stay metrically consistent), random crop back to the
// original size (short sides padded with zeros / missing depth / ignore
// labels), color jitter on RGB only.
Scene augment_scene(const Scene& in, const TrainConfig& cfg, Rng& rng) {
    Scene out = in;
    const int64_t th = in.rgb.dim(1), tw = in.rgb.dim(2);

    if (cfg.aug_scale) {
        const double s = rng.uniform(0.75, 1.25);
        const int64_t nh = std::max<int64_t>(1, static_cast<int64_t>(std::lround(th * s)));
        const int64_t nw = std::max<int64_t>(1, static_cast<int64_t>(std::lround(tw * s)));
        Tensor rgb = resize_nearest_2d(out.rgb, nh, nw);
        DepthMap depth(nh, nw);
        LabelMap labels(nh, nw);
        for (int64_t y = 0; y < nh; ++y) {
            const int64_t sy = y * th / nh;
            for (int64_t x = 0; x < nw; ++x) {
                const int64_t sx = x * tw / nw;
                depth.set(y, x, out.depth.depth_at(sy, sx) / s, out.depth.valid_at(sy, sx));
                labels.set(y, x, out.labels.at(sy, sx));
            }
        }
        out.rgb = std::move(rgb);
        out.depth = std::move(depth);
        out.labels = std::move(labels);
    }

    if (cfg.aug_crop && (out.rgb.dim(1) != th || out.rgb.dim(2) != tw)) {
        const int64_t sh = out.rgb.dim(1), sw = out.rgb.dim(2);
        Tensor rgb({3, th, tw});
        DepthMap depth(th, tw);
        LabelMap labels(th, tw, kIgnoreLabel);
        for (int64_t i = 0; i < th * tw; ++i) depth.valid[static_cast<size_t>(i)] = 0;
        const int64_t oy = sh > th ? static_cast<int64_t>(rng.uniform(0.0, static_cast<double>(sh - th + 1))) : 0;
        const int64_t ox = sw > tw ? static_cast<int64_t>(rng.uniform(0.0, static_cast<double>(sw - tw + 1))) : 0;
        const int64_t copy_h = std::min(th, sh), copy_w = std::min(tw, sw);
        const int64_t shw = sh * sw, thw = th * tw;
        for (int64_t y = 0; y < copy_h; ++y) {
            for (int64_t x = 0; x < copy_w; ++x) {
                for (int64_t c = 0; c < 3; ++c) {
                    rgb[c * thw + y * tw + x] = out.rgb[c * shw + (y + oy) * sw + (x + ox)];
                }
                depth.set(y, x, out.depth.depth_at(y + oy, x + ox), out.depth.valid_at(y + oy, x + ox));
                labels.set(y, x, out.labels.at(y + oy, x + ox));
            }
        }
        out.rgb = std::move(rgb);
        out.depth = std::move(depth);
        out.labels = std::move(labels);
    }

    if (cfg.aug_jitter) {
        const int64_t hw = out.rgb.dim(1) * out.rgb.dim(2);
        for (int64_t c = 0; c < 3; ++c) {
            const double gain = rng.uniform(0.9, 1.1);
            const double offset = rng.uniform(-0.05, 0.05);
            for (int64_t i = 0; i < hw; ++i) {
                out.rgb[c * hw + i] = std::clamp(out.rgb[c * hw + i] * gain + offset, 0.0, 1.0);
            }
        }
    }
    return out;
}

std::vector<size_t> epoch_order(size_t n, uint64_t seed, int64_t epoch) {
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(Rng(seed ^ (0xD1B54A32D192ED03ULL * static_cast<uint64_t>(epoch + 1))).next_u64());
    for (size_t i = n; i > 1; --i) {  // Fisher-Yates
        const size_t j = static_cast<size_t>(rng.next_u64() % i);
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

}  // namespace

void write_loss_curve_csv(const std::string& path, const std::vector<LossPoint>& curve) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write loss curve: " + path);
    out << "iter,loss,lr\n";
    out.precision(12);
    for (const LossPoint& p : curve) out << p.iter << "," << p.loss << "," << p.lr << "\n";
    if (!out) throw IoError("failed writing loss curve: " + path);
}

TrainResult train(Model& model, const std::vector<Scene>& dataset, const TrainConfig& config,
                  const std::string& out_dir) {
    config.validate();
    if (dataset.empty()) throw DataError("training dataset is empty");
    if (!out_dir.empty()) {
        std::error_code ec;
        fs::create_directories(out_dir, ec);
        if (ec) throw IoError("cannot create output directory " + out_dir + ": " + ec.message());
    }

    const std::vector<ParamPtr> params = model.parameters();
    const int levels = pyramid_levels_needed(model.spec);
    SgdState sgd;
    TrainResult result;
    result.curve.reserve(static_cast<size_t>(config.max_iter));

    const size_t n = dataset.size();
    std::vector<size_t> order;
    int64_t epoch = -1;
    size_t cursor = 0;

    for (int64_t iter = 0; iter < config.max_iter; ++iter) {
        const double lr = config.lr_mode == TrainConfig::LrMode::Poly
                              ? poly_lr(config.base_lr, iter, config.max_iter, config.power, config.lr_update_period)
                              : compound_lr(config.base_lr, iter, config.max_iter, config.power,
                                            config.lr_update_period);
        zero_grad(params);
        double batch_loss = 0.0;
        for (int b = 0; b < config.batch_size; ++b) {
            const int64_t sample_counter = iter * config.batch_size + b;
            const int64_t this_epoch = sample_counter / static_cast<int64_t>(n);
            if (this_epoch != epoch) {
                epoch = this_epoch;
                order = epoch_order(n, config.seed, epoch);
                cursor = 0;
            }
            const Scene* scene = &dataset[order[cursor++]];
            Scene augmented;
            if (config.aug_scale || config.aug_crop || config.aug_jitter) {
                Rng aug_rng(Rng(config.seed ^ (0xA24BAED4963EE407ULL *
                                               static_cast<uint64_t>(sample_counter + 1))).next_u64());
                augmented = augment_scene(*scene, config, aug_rng);
                scene = &augmented;
            }
            const DepthPyramid pyramid = build_pyramid(scene->depth, levels);
            Graph graph;
            const Graph::NodeId logits = forward_segmentation(model, graph, scene->rgb, pyramid);
            const Graph::NodeId loss = graph.softmax_ce(logits, scene->labels);
            graph.backward(loss);
            batch_loss += graph.scalar(loss);
        }
        if (config.batch_size > 1) {
            const double inv = 1.0 / config.batch_size;
            for (const auto& p : params) {
                for (int64_t k = 0; k < p->grad.size(); ++k) p->grad[k] *= inv;
            }
            batch_loss *= inv;
        }
        sgd_step(params, lr, config.momentum, sgd);
        result.curve.push_back(LossPoint{iter, batch_loss, lr});

        if (!out_dir.empty() && config.checkpoint_every > 0 && (iter + 1) % config.checkpoint_every == 0 &&
            iter + 1 < config.max_iter) {
            save_checkpoint(model, (fs::path(out_dir) / ("checkpoint_" + std::to_string(iter + 1) + ".dcnn")).string());
        }
    }

    if (!out_dir.empty()) {
        save_checkpoint(model, (fs::path(out_dir) / "checkpoint.dcnn").string());
        write_loss_curve_csv((fs::path(out_dir) / "loss_curve.csv").string(), result.curve);
    }
    return result;
}

EvalResult evaluate(const Model& model, const std::vector<Scene>& dataset) {
    if (dataset.empty()) throw DataError("evaluation dataset is empty");
    const int levels = pyramid_levels_needed(model.spec);
    EvalResult result;
    result.cm = ConfusionMatrix(model.spec.num_classes);
    for (const Scene& scene : dataset) {
        const DepthPyramid pyramid = build_pyramid(scene.depth, levels);
        const Tensor logits = predict_logits(model, scene.rgb, pyramid);
        const int64_t nc = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
        const int64_t hw = h * w;
        LabelMap pred(h, w);
        for (int64_t p = 0; p < hw; ++p) {
            int32_t best_c = 0;
            double best = logits[p];
            for (int64_t c = 1; c < nc; ++c) {
                if (logits[c * hw + p] > best) {
                    best = logits[c * hw + p];
                    best_c = static_cast<int32_t>(c);
                }
            }
            pred.ids[static_cast<size_t>(p)] = best_c;
        }
        result.cm.accumulate(pred, scene.labels);
    }
    result.metrics = compute_metrics(result.cm);
    return result;
}

double gradcheck_rel_err(double analytic, double numeric) {
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
    return std::fabs(analytic - numeric) / denom;
}

namespace {

struct CheckAccum {
    double max_err = 0.0;
    double err_sum = 0.0;
    int64_t n = 0;

    void add(double analytic, double numeric) {
        const double e = gradcheck_rel_err(analytic, numeric);
        max_err = std::max(max_err, e);
        err_sum += e;
        ++n;
    }
};

double central_diff(double* slot, double eps, const std::function<double()>& f) {
    const double orig = *slot;
    *slot = orig + eps;
    const double fp = f();
    *slot = orig - eps;
    const double fm = f();
    *slot = orig;
    return (fp - fm) / (2.0 * eps);
}

// Scalar proxy: f = sum(u * op(...)) so the analytic gradient is the op's
// backward evaluated at grad_y = u.
Tensor random_cotangent(Rng& rng, const std::vector<int64_t>& shape) {
    return tensor_rand_uniform(rng, shape, 0.5, 1.5);
}

double dot_all(const Tensor& u, const Tensor& y) {
    double s = 0.0;
    for (int64_t i = 0; i < y.size(); ++i) s += u[i] * y[i];
    return s;
}

Tensor away_from_zero(Rng& rng, const std::vector<int64_t>& shape, double margin = 0.05) {
    Tensor t = tensor_rand_uniform(rng, shape, -1.0, 1.0);
    for (int64_t i = 0; i < t.size(); ++i) {
        if (std::fabs(t[i]) < margin) t[i] = t[i] < 0.0 ? t[i] - margin : t[i] + margin;
    }
    return t;
}

// Depth spread for exponential-similarity checks is kept moderate: with
// alpha = 8.3 a multi-meter gap drives F_D (and with it the true gradient)
// below the rounding noise of a 1e-5 central difference, so the comparison
// would measure noise instead of the operator. F_D still spans [~0.1, 1].
DepthMap random_depth(Rng& rng, int64_t h, int64_t w, double missing_prob = 0.1, double lo = 1.0,
                      double hi = 1.25) {
    DepthMap d(h, w);
    for (int64_t i = 0; i < h * w; ++i) {
        d.values[static_cast<size_t>(i)] = rng.uniform(lo, hi);
        if (rng.next_double() < missing_prob) d.valid[static_cast<size_t>(i)] = 0;
    }
    return d;
}

void check_tensor_grad(CheckAccum& acc, Tensor& storage, const Tensor& analytic, double eps,
                       const std::function<double()>& f) {
    for (int64_t i = 0; i < storage.size(); ++i) {
        acc.add(analytic[i], central_diff(&storage[i], eps, f));
    }
}

void check_conv_family(GradCheckReport& report, bool depth_aware, const SimilaritySpec& sim, const std::string& name,
                       uint64_t seed, int instances, double eps) {
    Rng rng(seed);
    CheckAccum acc;
    for (int inst = 0; inst < instances; ++inst) {
        ConvSpec spec;
        spec.in_channels = 2;
        spec.out_channels = 3;
        spec.kernel_h = spec.kernel_w = (inst % 3 == 0) ? 1 : (inst % 3 == 1 ? 3 : 5);
        spec.dilation = (inst % 2) + 1;
        spec.stride = (inst % 4 < 2) ? 1 : 2;
        spec.padding = inst % 3;
        spec.has_bias = inst % 2 == 0;
        const int64_t h = 8, w = 8;
        if (spec.out_size(h, spec.kernel_h) < 1 || spec.out_size(w, spec.kernel_w) < 1) continue;

        Tensor x = tensor_rand_uniform(rng, {spec.in_channels, h, w}, -1.0, 1.0);
        ConvKernel kernel = ConvKernel::zeros(spec);
        kernel.weights = tensor_rand_uniform(rng, kernel.weights.shape(), -0.5, 0.5);
        if (kernel.bias) *kernel.bias = tensor_rand_uniform(rng, {spec.out_channels}, -0.5, 0.5);
        // the clip variant needs gaps on both sides of its threshold; its
        // zeroed taps drop out of both sides of the comparison exactly
        DepthMap depth = sim.kind == SimilarityKind::Clip ? random_depth(rng, h, w, 0.1, 0.5, 3.0)
                                                          : random_depth(rng, h, w);

        auto run = [&]() {
            return depth_aware ? depth_conv_forward(spec, kernel, x, depth, sim) : conv_forward(spec, kernel, x);
        };
        const Tensor y0 = run();
        Rng urng(rng.next_u64());
        const Tensor u = random_cotangent(urng, y0.shape());
        const ConvGrads grads = depth_aware ? depth_conv_backward(spec, kernel, x, depth, sim, u)
                                            : conv_backward(spec, kernel, x, u);
        auto f = [&]() { return dot_all(u, run()); };
        check_tensor_grad(acc, x, grads.grad_x, eps, f);
        check_tensor_grad(acc, kernel.weights, grads.grad_w, eps, f);
        if (kernel.bias) check_tensor_grad(acc, *kernel.bias, *grads.grad_bias, eps, f);
    }
    report.entries.push_back({name, acc.max_err, acc.n ? acc.err_sum / acc.n : 0.0, acc.n});
}

void check_pool_family(GradCheckReport& report, bool depth_aware, const std::string& name, uint64_t seed,
                       int instances, double eps) {
    Rng rng(seed);
    const SimilaritySpec sim = SimilaritySpec::exponential();
    CheckAccum acc;
    for (int inst = 0; inst < instances; ++inst) {
        PoolSpec spec;
        if (inst % 2 == 0) {
            spec = PoolSpec{2, 2, 2, 0, depth_aware ? PoolMode::DepthAvg : PoolMode::Avg};
        } else {
            spec = PoolSpec{3, 3, 1, 1, depth_aware ? PoolMode::DepthAvg : PoolMode::Avg};
        }
        const int64_t h = 6, w = 6;
        Tensor x = tensor_rand_uniform(rng, {2, h, w}, -1.0, 1.0);
        DepthMap depth = random_depth(rng, h, w);
        auto run = [&]() {
            return depth_aware ? depth_avg_pool_forward(spec, x, depth, sim) : avg_pool_forward(spec, x);
        };
        const Tensor y0 = run();
        Rng urng(rng.next_u64());
        const Tensor u = random_cotangent(urng, y0.shape());
        const Tensor gx = depth_aware ? depth_avg_pool_backward(spec, x, depth, sim, u)
                                      : avg_pool_backward(spec, x, u);
        auto f = [&]() { return dot_all(u, run()); };
        check_tensor_grad(acc, x, gx, eps, f);
    }
    report.entries.push_back({name, acc.max_err, acc.n ? acc.err_sum / acc.n : 0.0, acc.n});
}

}  // namespace

double GradCheckReport::max_rel_err() const {
    double m = 0.0;
    for (const GradCheckEntry& e : entries) m = std::max(m, e.max_rel_err);
    return m;
}

std::string GradCheckReport::to_csv() const {
    std::ostringstream os;
    os.precision(6);
    os << std::scientific;
    os << "target,max_rel_err,mean_rel_err,checks\n";
    for (const GradCheckEntry& e : entries) {
        os << e.name << "," << e.max_rel_err << "," << e.mean_rel_err << "," << e.checks << "\n";
    }
    return os.str();
}

GradCheckReport gradcheck_ops(uint64_t seed, int instances, double eps) {
    GradCheckReport report;
    check_conv_family(report, false, SimilaritySpec::constant_one(), "conv", seed + 1, instances, eps);
    check_conv_family(report, true, SimilaritySpec::exponential(8.3), "depth_conv_exp", seed + 2, instances, eps);
    check_conv_family(report, true, SimilaritySpec::clip(1.0), "depth_conv_clip", seed + 3, instances, eps);
    check_pool_family(report, false, "avg_pool", seed + 4, instances, eps);
    check_pool_family(report, true, "depth_avg_pool", seed + 5, instances, eps);

    {  // max pool: gradient flows only through each window's argmax
        Rng rng(seed + 6);
        CheckAccum acc;
        for (int inst = 0; inst < instances; ++inst) {
            const PoolSpec spec{2, 2, 2, 0, PoolMode::Max};
            Tensor x = tensor_rand_uniform(rng, {2, 6, 6}, -1.0, 1.0);
            MaxPoolResult res = max_pool_forward(spec, x);
            Rng urng(rng.next_u64());
            const Tensor u = random_cotangent(urng, res.y.shape());
            const Tensor gx = max_pool_backward(spec, x, res.argmax, u);
            auto f = [&]() { return dot_all(u, max_pool_forward(spec, x).y); };
            check_tensor_grad(acc, x, gx, eps, f);
        }
        report.entries.push_back({"max_pool", acc.max_err, acc.n ? acc.err_sum / acc.n : 0.0, acc.n});
    }
    {  // relu, sampled away from the kink
        Rng rng(seed + 7);
        CheckAccum acc;
        for (int inst = 0; inst < instances; ++inst) {
            Tensor x = away_from_zero(rng, {2, 5, 5});
            Rng urng(rng.next_u64());
            const Tensor u = random_cotangent(urng, x.shape());
            const Tensor gx = relu_backward(x, u);
            auto f = [&]() { return dot_all(u, relu_forward(x)); };
            check_tensor_grad(acc, x, gx, eps, f);
        }
        report.entries.push_back({"relu", acc.max_err, acc.n ? acc.err_sum / acc.n : 0.0, acc.n});
    }
    {  // global pool + concat
        Rng rng(seed + 8);
        CheckAccum acc;
        for (int inst = 0; inst < instances; ++inst) {
            Tensor x = tensor_rand_uniform(rng, {3, 4, 4}, -1.0, 1.0);
            Rng urng(rng.next_u64());
            const Tensor u = random_cotangent(urng, {6, 4, 4});
            const Tensor gx = global_pool_concat_backward(x, u);
            auto f = [&]() { return dot_all(u, global_pool_concat(x)); };
            check_tensor_grad(acc, x, gx, eps, f);
        }
        report.entries.push_back({"global_pool_concat", acc.max_err, acc.n ? acc.err_sum / acc.n : 0.0, acc.n});
    }
    {  // nearest upsample
        Rng rng(seed + 9);
        CheckAccum acc;
        for (int inst = 0; inst < instances; ++inst) {
            Tensor x = tensor_rand_uniform(rng, {2, 3, 3}, -1.0, 1.0);
            Rng urng(rng.next_u64());
            const Tensor u = random_cotangent(urng, {2, 6, 6});
            const Tensor gx = upsample_nearest_backward(x, u);
            auto f = [&]() { return dot_all(u, upsample_nearest(x, 6, 6)); };
            check_tensor_grad(acc, x, gx, eps, f);
        }
        report.entries.push_back({"upsample_nearest", acc.max_err, acc.n ? acc.err_sum / acc.n : 0.0, acc.n});
    }
    {  // softmax cross-entropy: the loss itself is the scalar
        Rng rng(seed + 10);
        CheckAccum acc;
        for (int inst = 0; inst < instances; ++inst) {
            Tensor logits = tensor_rand_uniform(rng, {4, 5, 5}, -2.0, 2.0);
            LabelMap labels(5, 5);
            for (auto& v : labels.ids) {
                const double r = rng.next_double();
                v = r < 0.15 ? kIgnoreLabel : static_cast<int32_t>(rng.next_u64() % 4);
            }
            const LossResult res = softmax_cross_entropy(logits, labels);
            auto f = [&]() { return softmax_cross_entropy(logits, labels).loss; };
            check_tensor_grad(acc, logits, res.grad_logits, eps, f);
        }
        report.entries.push_back({"softmax_cross_entropy", acc.max_err, acc.n ? acc.err_sum / acc.n : 0.0, acc.n});
    }
    return report;
}

GradCheckReport gradcheck_model(uint64_t seed, int instances, double eps, int coords_per_instance) {
    GradCheckReport report;
    CheckAccum acc;
    for (int inst = 0; inst < instances; ++inst) {
        Rng rng(seed + 100 + static_cast<uint64_t>(inst));
        const ModelSpec spec = ModelSpec::dcnn_mini(4, SimilaritySpec::exponential(8.3));
        Model model = build(spec, rng);
        const std::vector<ParamPtr> params = model.parameters();

        const int64_t h = 8, w = 8;
        Tensor rgb = tensor_rand_uniform(rng, {3, h, w}, 0.0, 1.0);
        DepthMap depth = random_depth(rng, h, w, 0.05);
        const DepthPyramid pyramid = build_pyramid(depth, 2);
        LabelMap labels(h, w);
        for (auto& v : labels.ids) {
            const double r = rng.next_double();
            v = r < 0.1 ? kIgnoreLabel : static_cast<int32_t>(rng.next_u64() % 4);
        }

        auto loss_of = [&]() {
            Graph graph;
            const Graph::NodeId logits = forward_segmentation(model, graph, rgb, pyramid);
            return graph.scalar(graph.softmax_ce(logits, labels));
        };

        zero_grad(params);
        {
            Graph graph;
            const Graph::NodeId logits = forward_segmentation(model, graph, rgb, pyramid);
            graph.backward(graph.softmax_ce(logits, labels));
        }

        // Deterministic coordinate sample touching every parameter block,
        // preferring coordinates with non-negligible gradients. A coordinate
        // where analytic and numeric values BOTH sit under the central
        // difference noise floor (|f| * ulp / eps) carries no signal and is
        // skipped; a wrong analytic value cannot hide there because the
        // numeric side would be large.
        constexpr double kNoiseFloor = 2e-5;
        const int per_block = std::max(1, coords_per_instance / static_cast<int>(params.size()));
        for (const auto& p : params) {
            std::vector<int64_t> pool(static_cast<size_t>(4 * per_block));
            for (auto& idx : pool) idx = static_cast<int64_t>(rng.next_u64() % static_cast<uint64_t>(p->value.size()));
            std::sort(pool.begin(), pool.end(), [&](int64_t a, int64_t b) {
                return std::fabs(p->grad[a]) > std::fabs(p->grad[b]);
            });
            for (int k = 0; k < per_block; ++k) {
                const int64_t idx = pool[static_cast<size_t>(k)];
                const double numeric = central_diff(&p->value[idx], eps, loss_of);
                if (std::fabs(p->grad[idx]) < kNoiseFloor && std::fabs(numeric) < kNoiseFloor) continue;
                acc.add(p->grad[idx], numeric);
            }
        }
    }
    report.entries.push_back({"dcnn-mini", acc.max_err, acc.n ? acc.err_sum / acc.n : 0.0, acc.n});
    return report;
}

std::string BenchConfig::name() const {
    std::ostringstream os;
    os << "c" << in_channels << "-" << out_channels << "_" << height << "x" << width << "_k" << kernel << "d"
       << dilation;
    return os.str();
}

std::string BenchReport::to_csv() const {
    std::ostringstream os;
    os << "config,standard_ns,depth_aware_ns,ratio\n";
    os.precision(6);
    for (const BenchRow& r : rows) {
        os << r.config.name() << "," << static_cast<int64_t>(r.standard_ns) << ","
           << static_cast<int64_t>(r.depth_aware_ns) << "," << r.ratio << "\n";
    }
    return os.str();
}

BenchReport bench(const std::vector<BenchConfig>& configs, int repetitions, int warmup, uint64_t seed) {
    if (repetitions < 1) throw ArgumentError("bench repetitions must be >= 1");
    if (warmup < 0) throw ArgumentError("bench warmup must be >= 0");
    using clock = std::chrono::steady_clock;

    BenchReport report;
    Rng rng(seed);
    for (const BenchConfig& cfg : configs) {
        ConvSpec spec;
        spec.in_channels = cfg.in_channels;
        spec.out_channels = cfg.out_channels;
        spec.kernel_h = spec.kernel_w = cfg.kernel;
        spec.dilation = cfg.dilation;
        spec.padding = cfg.dilation * (cfg.kernel - 1) / 2;
        Tensor x = tensor_rand_uniform(rng, {cfg.in_channels, cfg.height, cfg.width}, -1.0, 1.0);
        ConvKernel kernel = ConvKernel::zeros(spec);
        kernel.weights = tensor_rand_uniform(rng, kernel.weights.shape(), -0.5, 0.5);
        *kernel.bias = tensor_rand_uniform(rng, {cfg.out_channels}, -0.5, 0.5);
        DepthMap depth = random_depth(rng, cfg.height, cfg.width, 0.0);
        const SimilaritySpec sim = SimilaritySpec::exponential(8.3);

        auto time_one = [&](auto&& fn) {
            std::vector<double> times;
            times.reserve(static_cast<size_t>(repetitions));
            for (int i = 0; i < warmup; ++i) fn();
            for (int i = 0; i < repetitions; ++i) {
                const auto t0 = clock::now();
                fn();
                const auto t1 = clock::now();
                times.push_back(static_cast<double>(
                    std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()));
            }
            std::sort(times.begin(), times.end());
            const size_t m = times.size() / 2;
            return times.size() % 2 == 1 ? times[m] : 0.5 * (times[m - 1] + times[m]);
        };

        volatile double sink = 0.0;
        BenchRow row;
        row.config = cfg;
        row.standard_ns = time_one([&]() { sink = conv_forward(spec, kernel, x)[0]; });
        row.depth_aware_ns = time_one([&]() { sink = depth_conv_forward(spec, kernel, x, depth, sim)[0]; });
        (void)sink;
        row.ratio = row.depth_aware_ns / row.standard_ns;
        report.rows.push_back(row);
    }
    return report;
}

}  // namespace dacnn
