#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dacnn/data.hpp"
#include "dacnn/metrics.hpp"
#include "dacnn/model.hpp"

namespace dacnn {

struct TrainConfig {
    double base_lr = 0.001;
    double momentum = 0.9;
    int batch_size = 1;
    int max_iter = 1;
    int lr_update_period = 10;
    double power = 0.9;
    uint64_t seed = 0;
    SimilaritySpec sim = SimilaritySpec::exponential();

    enum class LrMode { Poly, Compound };
    LrMode lr_mode = LrMode::Poly;

    bool aug_scale = false;
    bool aug_crop = false;
    bool aug_jitter = false;

    int checkpoint_every = 0;  // 0 = final checkpoint only

    void validate() const;
};

// lr = base_lr * (1 - floor(iter/period)*period / max_iter)^power. The decay
// factor is re-evaluated from base_lr at each period boundary, so the
// schedule is non-increasing and reaches 0 at iter == max_iter.
double poly_lr(double base_lr, int64_t iter, int64_t max_iter, double power = 0.9, int64_t period = 10);

// Alternative reading of the same schedule where the factor compounds
// multiplicatively at every period boundary.
double compound_lr(double base_lr, int64_t iter, int64_t max_iter, double power = 0.9, int64_t period = 10);

struct SgdState {
    std::vector<Tensor> velocity;  // aligned with the parameter list
};

// v <- momentum*v + grad; p <- p - lr*v
void sgd_step(const std::vector<ParamPtr>& params, double lr, double momentum, SgdState& state);

struct LossPoint {
    int64_t iter = 0;
    double loss = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    std::vector<LossPoint> curve;
};

// Deterministic given (seed, config, dataset). When `out_dir` is non-empty,
// writes loss_curve.csv, checkpoint.dcnn and any periodic checkpoints there.
TrainResult train(Model& model, const std::vector<Scene>& dataset, const TrainConfig& config,
                  const std::string& out_dir = "");

void write_loss_curve_csv(const std::string& path, const std::vector<LossPoint>& curve);

struct EvalResult {
    MetricsReport metrics;
    ConfusionMatrix cm{1};
};

EvalResult evaluate(const Model& model, const std::vector<Scene>& dataset);

// relative error convention shared by every gradient check:
// |a - n| / max(|a|, |n|, 1e-8)
double gradcheck_rel_err(double analytic, double numeric);

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    double mean_rel_err = 0.0;
    int64_t checks = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;

    double max_rel_err() const;
    bool passed(double tolerance) const { return max_rel_err() < tolerance; }
    std::string to_csv() const;
};

// Central-difference checks, eps defaulting to 1e-5, over `instances` random
// instances per operator.
GradCheckReport gradcheck_ops(uint64_t seed = 1, int instances = 20, double eps = 1e-5);

// End-to-end check of the full dcnn-mini model: per instance, random
// parameters and input, comparing analytic parameter gradients against
// central differences on a deterministic sample of coordinates from every
// parameter block.
GradCheckReport gradcheck_model(uint64_t seed = 1, int instances = 20, double eps = 1e-5,
                                int coords_per_instance = 48);

struct BenchConfig {
    int64_t in_channels = 64;
    int64_t out_channels = 64;
    int64_t height = 128;
    int64_t width = 128;
    int64_t kernel = 3;
    int64_t dilation = 1;

    std::string name() const;
};

struct BenchRow {
    BenchConfig config;
    double standard_ns = 0.0;
    double depth_aware_ns = 0.0;
    double ratio = 0.0;
};

struct BenchReport {
    std::vector<BenchRow> rows;
    std::string to_csv() const;
};

// Median-of-`repetitions` forward timings for standard vs depth-aware
// convolution; `warmup` untimed runs precede each measurement.
BenchReport bench(const std::vector<BenchConfig>& configs, int repetitions = 20, int warmup = 3,
                  uint64_t seed = 7);

}  // namespace dacnn
