#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dacnn/data.hpp"
#include "dacnn/metrics.hpp"
#include "dacnn/model.hpp"
#include "dacnn/trace.hpp"
#include "dacnn/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

dacnn::SimilaritySpec make_sim(const std::string& kind, double alpha, double clip_threshold) {
    if (kind == "exp") return dacnn::SimilaritySpec::exponential(alpha);
    if (kind == "clip") return dacnn::SimilaritySpec::clip(clip_threshold);
    if (kind == "one") return dacnn::SimilaritySpec::constant_one();
    throw dacnn::ArgumentError("unknown similarity '" + kind + "', expected exp, clip or one");
}

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        if (!text.empty() && text.back() != '\n') std::cout << "\n";
        return;
    }
    std::ofstream out(out_path);
    if (!out) throw dacnn::IoError("cannot write " + out_path);
    out << text;
    if (!out) throw dacnn::IoError("failed writing " + out_path);
}

void maybe_dump_config(bool dump, const json& cfg) {
    if (dump) std::cout << cfg.dump(2) << "\n";
}

struct GenDataArgs {
    std::string out;
    int images = 200;
    int size = 64;
    int classes = 4;
    int shapes = 6;
    bool ambiguous = true;
    double noise = 0.02;
    double depth_noise = 0.0;
    double hole_prob = 0.0;
    uint64_t seed = 42;
    bool dump_config = false;
};

int run_gen_data(const GenDataArgs& a) {
    dacnn::DatasetSpec spec;
    spec.num_images = a.images;
    spec.height = spec.width = a.size;
    spec.num_classes = a.classes;
    spec.shapes_per_image = a.shapes;
    spec.color_ambiguity = a.ambiguous;
    spec.noise_sigma = a.noise;
    spec.depth_noise_sigma = a.depth_noise;
    spec.hole_prob = a.hole_prob;
    spec.seed = a.seed;
    maybe_dump_config(a.dump_config, json{{"command", "gen-data"},
                                          {"out", a.out},
                                          {"images", a.images},
                                          {"size", a.size},
                                          {"classes", a.classes},
                                          {"shapes", a.shapes},
                                          {"ambiguous", a.ambiguous},
                                          {"noise", a.noise},
                                          {"depth_noise", a.depth_noise},
                                          {"hole_prob", a.hole_prob},
                                          {"seed", a.seed}});
    const auto scenes = dacnn::generate(spec);
    dacnn::write_dataset(a.out, scenes);
    std::cout << "wrote " << scenes.size() << " scenes to " << a.out << "\n";
    return kExitOk;
}

struct TrainArgs {
    std::string data;
    std::string out;
    std::string preset = "dcnn-mini";
    std::string sim = "exp";
    double alpha = 8.3;
    double clip_threshold = 1.0;
    int iters = 0;
    double lr = 0.001;
    double momentum = 0.9;
    int batch = 1;
    int lr_period = 10;
    double power = 0.9;
    std::string lr_mode = "poly";
    uint64_t seed = 0;
    int classes = 4;
    bool aug_scale = false;
    bool aug_crop = false;
    bool aug_jitter = false;
    int checkpoint_every = 0;
    bool dump_config = false;
};

int run_train(const TrainArgs& a) {
    maybe_dump_config(a.dump_config, json{{"command", "train"},
                                          {"data", a.data},
                                          {"out", a.out},
                                          {"preset", a.preset},
                                          {"sim", a.sim},
                                          {"alpha", a.alpha},
                                          {"clip_threshold", a.clip_threshold},
                                          {"iters", a.iters},
                                          {"lr", a.lr},
                                          {"momentum", a.momentum},
                                          {"batch", a.batch},
                                          {"lr_period", a.lr_period},
                                          {"power", a.power},
                                          {"lr_mode", a.lr_mode},
                                          {"seed", a.seed},
                                          {"classes", a.classes},
                                          {"aug_scale", a.aug_scale},
                                          {"aug_crop", a.aug_crop},
                                          {"aug_jitter", a.aug_jitter},
                                          {"checkpoint_every", a.checkpoint_every}});
    const dacnn::SimilaritySpec sim = make_sim(a.sim, a.alpha, a.clip_threshold);
    const auto scenes = dacnn::load_dataset(a.data);
    dacnn::TrainConfig cfg;
    cfg.base_lr = a.lr;
    cfg.momentum = a.momentum;
    cfg.batch_size = a.batch;
    cfg.max_iter = a.iters;
    cfg.lr_update_period = a.lr_period;
    cfg.power = a.power;
    cfg.seed = a.seed;
    cfg.sim = sim;
    cfg.aug_scale = a.aug_scale;
    cfg.aug_crop = a.aug_crop;
    cfg.aug_jitter = a.aug_jitter;
    cfg.checkpoint_every = a.checkpoint_every;
    if (a.lr_mode == "poly") {
        cfg.lr_mode = dacnn::TrainConfig::LrMode::Poly;
    } else if (a.lr_mode == "compound") {
        cfg.lr_mode = dacnn::TrainConfig::LrMode::Compound;
    } else {
        throw dacnn::ArgumentError("unknown lr mode '" + a.lr_mode + "'");
    }

    dacnn::Rng rng(a.seed);
    dacnn::Model model = dacnn::build(dacnn::ModelSpec::preset(a.preset, a.classes, sim), rng);
    const dacnn::TrainResult result = dacnn::train(model, scenes, cfg, a.out);
    const double final_loss = result.curve.empty() ? 0.0 : result.curve.back().loss;
    std::cout << "trained " << a.preset << " for " << a.iters << " iterations, final loss " << final_loss << "\n";
    std::cout << "checkpoint: " << (fs::path(a.out) / "checkpoint.dcnn").string() << "\n";
    return kExitOk;
}

struct EvalArgs {
    std::string data;
    std::string checkpoint;
    std::string preset = "dcnn-mini";
    std::string sim = "exp";
    double alpha = 8.3;
    double clip_threshold = 1.0;
    int classes = 4;
    std::string format = "json";
    std::string out;
    bool dump_config = false;
};

int run_eval(const EvalArgs& a) {
    maybe_dump_config(a.dump_config, json{{"command", "eval"},
                                          {"data", a.data},
                                          {"checkpoint", a.checkpoint},
                                          {"preset", a.preset},
                                          {"sim", a.sim},
                                          {"alpha", a.alpha},
                                          {"classes", a.classes},
                                          {"format", a.format}});
    const dacnn::SimilaritySpec sim = make_sim(a.sim, a.alpha, a.clip_threshold);
    const auto scenes = dacnn::load_dataset(a.data);
    dacnn::Rng rng(0);
    dacnn::Model model = dacnn::build(dacnn::ModelSpec::preset(a.preset, a.classes, sim), rng);
    dacnn::load_checkpoint(model, a.checkpoint);
    const dacnn::EvalResult result = dacnn::evaluate(model, scenes);
    emit(a.format == "csv" ? result.metrics.to_csv() : result.metrics.to_json(), a.out);
    return kExitOk;
}

struct GradcheckArgs {
    std::string target = "all";
    int instances = 20;
    double eps = 1e-5;
    uint64_t seed = 1;
    double tol_ops = 1e-6;
    double tol_model = 1e-5;
    std::string out;
    bool dump_config = false;
};

int run_gradcheck(const GradcheckArgs& a) {
    maybe_dump_config(a.dump_config, json{{"command", "gradcheck"},
                                          {"target", a.target},
                                          {"instances", a.instances},
                                          {"eps", a.eps},
                                          {"seed", a.seed},
                                          {"tolerance_ops", a.tol_ops},
                                          {"tolerance_model", a.tol_model}});
    if (a.target != "all" && a.target != "ops" && a.target != "model") {
        throw dacnn::ArgumentError("unknown gradcheck target '" + a.target + "', expected all, ops or model");
    }
    bool ok = true;
    std::string csv;
    if (a.target == "all" || a.target == "ops") {
        const dacnn::GradCheckReport ops = dacnn::gradcheck_ops(a.seed, a.instances, a.eps);
        csv += ops.to_csv();
        ok = ok && ops.passed(a.tol_ops);
    }
    if (a.target == "all" || a.target == "model") {
        const dacnn::GradCheckReport model = dacnn::gradcheck_model(a.seed, a.instances, a.eps);
        csv += model.to_csv();
        ok = ok && model.passed(a.tol_model);
    }
    emit(csv, a.out);
    if (!ok) {
        std::cerr << "gradcheck exceeded tolerance\n";
        return kExitNumerical;
    }
    return kExitOk;
}

struct BenchArgs {
    std::string sizes = "64:64:128:128:3:1";
    int reps = 20;
    int warmup = 3;
    uint64_t seed = 7;
    std::string out;
    bool dump_config = false;
};

std::vector<dacnn::BenchConfig> parse_bench_sizes(const std::string& sizes) {
    std::vector<dacnn::BenchConfig> configs;
    std::stringstream list(sizes);
    std::string item;
    while (std::getline(list, item, ',')) {
        if (item.empty()) continue;
        dacnn::BenchConfig cfg;
        int64_t vals[6];
        int n = 0;
        std::stringstream fields(item);
        std::string f;
        while (std::getline(fields, f, ':')) {
            if (n >= 6) throw dacnn::ArgumentError("bench config '" + item + "' has too many fields");
            try {
                vals[n++] = std::stoll(f);
            } catch (const std::exception&) {
                throw dacnn::ArgumentError("bench config field '" + f + "' is not an integer");
            }
        }
        if (n < 5) {
            throw dacnn::ArgumentError("bench config '" + item + "' needs ci:co:h:w:k[:dilation]");
        }
        cfg.in_channels = vals[0];
        cfg.out_channels = vals[1];
        cfg.height = vals[2];
        cfg.width = vals[3];
        cfg.kernel = vals[4];
        cfg.dilation = n == 6 ? vals[5] : 1;
        configs.push_back(cfg);
    }
    if (configs.empty()) throw dacnn::ArgumentError("no bench configs given");
    return configs;
}

int run_bench(const BenchArgs& a) {
    maybe_dump_config(a.dump_config, json{{"command", "bench"},
                                          {"sizes", a.sizes},
                                          {"reps", a.reps},
                                          {"warmup", a.warmup},
                                          {"seed", a.seed}});
    const auto configs = parse_bench_sizes(a.sizes);
    const dacnn::BenchReport report = dacnn::bench(configs, a.reps, a.warmup, a.seed);
    emit(report.to_csv(), a.out);
    return kExitOk;
}

struct RfTraceArgs {
    std::string depth_file;
    std::string pixel;
    int levels = 3;
    std::string sim = "exp";
    double alpha = 8.3;
    double clip_threshold = 1.0;
    std::string checkpoint;
    bool fresh = false;
    std::string out;
    bool dump_config = false;
};

int run_rf_trace(const RfTraceArgs& a) {
    maybe_dump_config(a.dump_config, json{{"command", "rf-trace"},
                                          {"depth_file", a.depth_file},
                                          {"pixel", a.pixel},
                                          {"levels", a.levels},
                                          {"sim", a.sim},
                                          {"alpha", a.alpha},
                                          {"checkpoint", a.checkpoint},
                                          {"fresh", a.fresh},
                                          {"out", a.out}});
    int64_t py = 0, px = 0;
    if (std::sscanf(a.pixel.c_str(), "%ld,%ld", &py, &px) != 2) {
        throw dacnn::ArgumentError("--pixel expects 'y,x'");
    }
    const dacnn::SimilaritySpec sim = make_sim(a.sim, a.alpha, a.clip_threshold);
    const dacnn::DepthMap depth = dacnn::read_pgm16_depth(a.depth_file);

    std::optional<dacnn::Tensor> profile;
    if (!a.checkpoint.empty()) {
        // spatial |w| profile of the first 3x3 conv kernel in the checkpoint,
        // used at every level in place of the all-ones kernel
        const auto tensors = dacnn::read_tensor_file(a.checkpoint);
        for (const auto& [name, t] : tensors) {
            if (t.ndim() == 4 && t.dim(2) == 3 && t.dim(3) == 3) {
                dacnn::Tensor p({3, 3});
                const int64_t planes = t.dim(0) * t.dim(1);
                for (int64_t q = 0; q < planes; ++q) {
                    for (int64_t k = 0; k < 9; ++k) p[k] += std::fabs(t[q * 9 + k]);
                }
                for (int64_t k = 0; k < 9; ++k) p[k] /= static_cast<double>(planes);
                profile = std::move(p);
                break;
            }
        }
        if (!profile) throw dacnn::DataError("checkpoint has no 3x3 conv kernel to trace with");
    }

    const dacnn::Tensor trace =
        dacnn::rf_trace(depth, a.levels, py, px, sim, profile ? &*profile : nullptr);

    // normalize to max = 255 and store as an 8-bit PGM heatmap
    double maxv = 0.0;
    for (int64_t i = 0; i < trace.size(); ++i) maxv = std::max(maxv, trace[i]);
    dacnn::LabelMap heat(trace.dim(0), trace.dim(1));
    for (int64_t i = 0; i < trace.size(); ++i) {
        heat.ids[static_cast<size_t>(i)] =
            maxv > 0.0 ? static_cast<int32_t>(std::lround(trace[i] / maxv * 255.0)) : 0;
    }
    dacnn::write_pgm8_labels(a.out, heat);
    std::cout << "wrote trace heatmap to " << a.out << "\n";
    return kExitOk;
}

struct DepthVarArgs {
    std::string data;
    int classes = 4;
    bool sample_variance = false;
    std::string format = "json";
    std::string out;
    bool dump_config = false;
};

int run_depth_variance(const DepthVarArgs& a) {
    maybe_dump_config(a.dump_config, json{{"command", "depth-variance"},
                                          {"data", a.data},
                                          {"classes", a.classes},
                                          {"sample_variance", a.sample_variance},
                                          {"format", a.format}});
    const auto scenes = dacnn::load_dataset(a.data);
    const dacnn::DepthVarianceReport rep = dacnn::depth_variance_report(scenes, a.classes, a.sample_variance);
    emit(a.format == "csv" ? rep.to_csv() : rep.to_json(), a.out);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"depth-aware convolution / pooling toolbox"};
    app.require_subcommand(1);

    GenDataArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic RGB-D segmentation dataset");
    gen_cmd->add_option("--out", gen.out, "output dataset directory")->required();
    gen_cmd->add_option("--images", gen.images, "number of images");
    gen_cmd->add_option("--size", gen.size, "square image size in pixels");
    gen_cmd->add_option("--classes", gen.classes, "number of classes including background");
    gen_cmd->add_option("--shapes", gen.shapes, "shapes per image");
    gen_cmd->add_option("--ambiguous", gen.ambiguous, "share the background palette with one object class");
    gen_cmd->add_option("--noise", gen.noise, "RGB noise sigma");
    gen_cmd->add_option("--depth-noise", gen.depth_noise, "depth noise sigma in meters");
    gen_cmd->add_option("--hole-prob", gen.hole_prob, "per-pixel probability of a depth hole");
    gen_cmd->add_option("--seed", gen.seed, "generator seed");
    gen_cmd->add_flag("--dump-config", gen.dump_config, "print resolved settings as JSON");

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "train a segmentation preset");
    train_cmd->add_option("--data", tr.data, "dataset directory")->required();
    train_cmd->add_option("--out", tr.out, "output directory for checkpoint and loss curve")->required();
    train_cmd->add_option("--preset", tr.preset, "baseline-mini or dcnn-mini");
    train_cmd->add_option("--sim", tr.sim, "similarity: exp, clip or one");
    train_cmd->add_option("--alpha", tr.alpha, "exponential similarity alpha (1/m)");
    train_cmd->add_option("--clip-threshold", tr.clip_threshold, "clip similarity threshold (m)");
    train_cmd->add_option("--iters", tr.iters, "training iterations")->required();
    train_cmd->add_option("--lr", tr.lr, "base learning rate");
    train_cmd->add_option("--momentum", tr.momentum, "SGD momentum");
    train_cmd->add_option("--batch", tr.batch, "batch size");
    train_cmd->add_option("--lr-period", tr.lr_period, "iterations between LR updates");
    train_cmd->add_option("--power", tr.power, "poly decay power");
    train_cmd->add_option("--lr-mode", tr.lr_mode, "poly or compound");
    train_cmd->add_option("--seed", tr.seed, "training seed");
    train_cmd->add_option("--classes", tr.classes, "number of classes");
    train_cmd->add_flag("--aug-scale", tr.aug_scale, "random scale augmentation");
    train_cmd->add_flag("--aug-crop", tr.aug_crop, "random crop augmentation");
    train_cmd->add_flag("--aug-jitter", tr.aug_jitter, "color jitter augmentation");
    train_cmd->add_option("--checkpoint-every", tr.checkpoint_every, "periodic checkpoint interval (0 = off)");
    train_cmd->add_flag("--dump-config", tr.dump_config, "print resolved settings as JSON");

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    eval_cmd->add_option("--data", ev.data, "dataset directory")->required();
    eval_cmd->add_option("--checkpoint", ev.checkpoint, "checkpoint file")->required();
    eval_cmd->add_option("--preset", ev.preset, "baseline-mini or dcnn-mini");
    eval_cmd->add_option("--sim", ev.sim, "similarity: exp, clip or one");
    eval_cmd->add_option("--alpha", ev.alpha, "exponential similarity alpha (1/m)");
    eval_cmd->add_option("--clip-threshold", ev.clip_threshold, "clip similarity threshold (m)");
    eval_cmd->add_option("--classes", ev.classes, "number of classes");
    eval_cmd->add_option("--format", ev.format, "json or csv");
    eval_cmd->add_option("--out", ev.out, "write metrics here instead of stdout");
    eval_cmd->add_flag("--dump-config", ev.dump_config, "print resolved settings as JSON");

    GradcheckArgs gc;
    auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    gc_cmd->add_option("--target", gc.target, "all, ops or model");
    gc_cmd->add_option("--instances", gc.instances, "random instances per operator");
    gc_cmd->add_option("--eps", gc.eps, "central difference step");
    gc_cmd->add_option("--seed", gc.seed, "seed");
    gc_cmd->add_option("--tolerance-ops", gc.tol_ops, "max relative error for per-op checks");
    gc_cmd->add_option("--tolerance-model", gc.tol_model, "max relative error for the end-to-end check");
    gc_cmd->add_option("--out", gc.out, "write the CSV report here instead of stdout");
    gc_cmd->add_flag("--dump-config", gc.dump_config, "print resolved settings as JSON");

    BenchArgs bn;
    auto* bench_cmd = app.add_subcommand("bench", "standard vs depth-aware conv forward timing");
    bench_cmd->add_option("--sizes", bn.sizes, "comma list of ci:co:h:w:k[:dilation]");
    bench_cmd->add_option("--reps", bn.reps, "timed repetitions (median reported)");
    bench_cmd->add_option("--warmup", bn.warmup, "untimed warmup runs");
    bench_cmd->add_option("--seed", bn.seed, "seed");
    bench_cmd->add_option("--out", bn.out, "write the CSV report here instead of stdout");
    bench_cmd->add_flag("--dump-config", bn.dump_config, "print resolved settings as JSON");

    RfTraceArgs rf;
    auto* rf_cmd = app.add_subcommand("rf-trace", "receptive-field contribution trace over a depth map");
    rf_cmd->add_option("--depth-file", rf.depth_file, "16-bit PGM depth map")->required();
    rf_cmd->add_option("--pixel", rf.pixel, "output unit as 'y,x'")->required();
    rf_cmd->add_option("--levels", rf.levels, "stacked 3x3 depth-aware conv levels");
    rf_cmd->add_option("--sim", rf.sim, "similarity: exp, clip or one");
    rf_cmd->add_option("--alpha", rf.alpha, "exponential similarity alpha (1/m)");
    rf_cmd->add_option("--clip-threshold", rf.clip_threshold, "clip similarity threshold (m)");
    rf_cmd->add_option("--checkpoint", rf.checkpoint,
                       "trace with the spatial |w| profile of this checkpoint's first 3x3 kernel");
    rf_cmd->add_flag("--fresh", rf.fresh, "trace with all-ones kernels (default)");
    rf_cmd->add_option("--out", rf.out, "output 8-bit PGM heatmap")->required();
    rf_cmd->add_flag("--dump-config", rf.dump_config, "print resolved settings as JSON");

    DepthVarArgs dv;
    auto* dv_cmd = app.add_subcommand("depth-variance", "per-class depth variance report");
    dv_cmd->add_option("--data", dv.data, "dataset directory")->required();
    dv_cmd->add_option("--classes", dv.classes, "number of classes");
    dv_cmd->add_flag("--sample-variance", dv.sample_variance, "divide by N-1 instead of N");
    dv_cmd->add_option("--format", dv.format, "json or csv");
    dv_cmd->add_option("--out", dv.out, "write the report here instead of stdout");
    dv_cmd->add_flag("--dump-config", dv.dump_config, "print resolved settings as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (gen_cmd->parsed()) return run_gen_data(gen);
        if (train_cmd->parsed()) return run_train(tr);
        if (eval_cmd->parsed()) return run_eval(ev);
        if (gc_cmd->parsed()) return run_gradcheck(gc);
        if (bench_cmd->parsed()) return run_bench(bn);
        if (rf_cmd->parsed()) return run_rf_trace(rf);
        if (dv_cmd->parsed()) return run_depth_variance(dv);
    } catch (const dacnn::ArgumentError& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    } catch (const dacnn::NumericalError& e) {
        std::cerr << e.what() << "\n";
        return kExitNumerical;
    } catch (const dacnn::Error& e) {
        std::cerr << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
