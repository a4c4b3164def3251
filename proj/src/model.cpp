#include "dacnn/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <utility>

namespace dacnn {

namespace {

LayerSpec conv_layer(LayerKind kind, int64_t in_ch, int64_t out_ch, int64_t pad, int64_t dilation, int depth_level,
                     const SimilaritySpec& sim) {
    LayerSpec l;
    l.kind = kind;
    l.conv = ConvSpec{in_ch, out_ch, 3, 3, 1, pad, dilation, true};
    l.sim = sim;
    l.depth_level = depth_level;
    return l;
}

LayerSpec pool_layer(LayerKind kind, const PoolSpec& pool, int depth_level, const SimilaritySpec& sim) {
    LayerSpec l;
    l.kind = kind;
    l.pool = pool;
    l.sim = sim;
    l.depth_level = depth_level;
    return l;
}

LayerSpec relu_layer() {
    LayerSpec l;
    l.kind = LayerKind::Relu;
    return l;
}

// The Table-2-style stack at desk scale: three {3x3 conv, relu} x2 blocks at
// 16/32/64 channels with 2x2 maxpools between them, the last block dilated by
// 2, a stride-1 3x3 average pool, global pool+concat, and a 1x1 classifier.
// When `depth_aware` is set the first conv of each block becomes depth-aware
// and the average pool becomes depth-aware; nothing else changes, so both
// variants hold identical parameters.
ModelSpec mini_spec(bool depth_aware, int num_classes, const SimilaritySpec& sim) {
    if (num_classes < 1) throw SpecError("model needs at least one class");
    const LayerKind block_conv = depth_aware ? LayerKind::DConv : LayerKind::Conv;
    const LayerKind pool_kind = depth_aware ? LayerKind::DAvgPool : LayerKind::AvgPool;

    ModelSpec spec;
    spec.name = depth_aware ? "dcnn-mini" : "baseline-mini";
    spec.num_classes = num_classes;

    spec.layers.push_back(conv_layer(block_conv, 3, 16, 1, 1, 0, sim));
    spec.layers.push_back(relu_layer());
    spec.layers.push_back(conv_layer(LayerKind::Conv, 16, 16, 1, 1, 0, sim));
    spec.layers.push_back(relu_layer());
    spec.layers.push_back(pool_layer(LayerKind::MaxPool, PoolSpec{2, 2, 2, 0, PoolMode::Max}, 0, sim));

    spec.layers.push_back(conv_layer(block_conv, 16, 32, 1, 1, 1, sim));
    spec.layers.push_back(relu_layer());
    spec.layers.push_back(conv_layer(LayerKind::Conv, 32, 32, 1, 1, 1, sim));
    spec.layers.push_back(relu_layer());
    spec.layers.push_back(pool_layer(LayerKind::MaxPool, PoolSpec{2, 2, 2, 0, PoolMode::Max}, 1, sim));

    spec.layers.push_back(conv_layer(block_conv, 32, 64, 2, 2, 2, sim));
    spec.layers.push_back(relu_layer());
    spec.layers.push_back(conv_layer(LayerKind::Conv, 64, 64, 2, 2, 2, sim));
    spec.layers.push_back(relu_layer());

    const PoolMode avg_mode = depth_aware ? PoolMode::DepthAvg : PoolMode::Avg;
    spec.layers.push_back(pool_layer(pool_kind, PoolSpec{3, 3, 1, 1, avg_mode}, 2, sim));
    LayerSpec gc;
    gc.kind = LayerKind::GlobalConcat;
    spec.layers.push_back(gc);

    LayerSpec cls;
    cls.kind = LayerKind::Classifier1x1;
    cls.conv = ConvSpec{128, num_classes, 1, 1, 1, 0, 1, true};
    spec.layers.push_back(cls);
    return spec;
}

}  // namespace

ModelSpec ModelSpec::baseline_mini(int num_classes) {
    return mini_spec(false, num_classes, SimilaritySpec::exponential());
}

ModelSpec ModelSpec::dcnn_mini(int num_classes, const SimilaritySpec& sim) {
    return mini_spec(true, num_classes, sim);
}

ModelSpec ModelSpec::preset(const std::string& name, int num_classes, const SimilaritySpec& sim) {
    if (name == "baseline-mini") return baseline_mini(num_classes);
    if (name == "dcnn-mini") return dcnn_mini(num_classes, sim);
    throw ArgumentError("unknown preset '" + name + "', expected baseline-mini or dcnn-mini");
}

std::vector<ParamPtr> Model::parameters() const {
    std::vector<ParamPtr> out;
    for (size_t i = 0; i < weights.size(); ++i) {
        if (weights[i]) out.push_back(weights[i]);
        if (biases[i]) out.push_back(biases[i]);
    }
    return out;
}

Model build(const ModelSpec& spec, Rng& rng) {
    Model model;
    model.spec = spec;
    model.weights.assign(spec.layers.size(), nullptr);
    model.biases.assign(spec.layers.size(), nullptr);

    int64_t channels = 3;
    for (size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& layer = spec.layers[i];
        switch (layer.kind) {
            case LayerKind::Conv:
            case LayerKind::DConv:
            case LayerKind::Classifier1x1: {
                layer.conv.validate();
                if (layer.conv.in_channels != channels) {
                    throw SpecError("layer " + std::to_string(i) + " expects " +
                                    std::to_string(layer.conv.in_channels) + " input channels but the stack carries " +
                                    std::to_string(channels));
                }
                const double fan_in =
                    static_cast<double>(layer.conv.in_channels * layer.conv.kernel_h * layer.conv.kernel_w);
                const double bound = std::sqrt(6.0 / fan_in);
                const std::string base = "layer" + std::to_string(i);
                Tensor w = tensor_rand_uniform(
                    rng, {layer.conv.out_channels, layer.conv.in_channels, layer.conv.kernel_h, layer.conv.kernel_w},
                    -bound, bound);
                model.weights[i] = std::make_shared<Parameter>(base + ".weight", std::move(w));
                if (layer.conv.has_bias) {
                    model.biases[i] = std::make_shared<Parameter>(base + ".bias", Tensor({layer.conv.out_channels}));
                }
                channels = layer.conv.out_channels;
                break;
            }
            case LayerKind::GlobalConcat:
                channels *= 2;
                break;
            case LayerKind::Relu:
            case LayerKind::MaxPool:
                break;
            case LayerKind::AvgPool:
            case LayerKind::DAvgPool:
                spec.layers[i].pool.validate();
                break;
        }
    }
    return model;
}

int64_t parameter_count(const Model& model) {
    int64_t n = 0;
    for (const auto& p : model.parameters()) n += p->value.size();
    return n;
}

Graph::NodeId forward_segmentation(const Model& model, Graph& graph, Tensor rgb, const DepthPyramid& pyramid) {
    if (rgb.ndim() != 3 || rgb.dim(0) != 3) throw ShapeError("segmentation input must be [3,h,w]");
    const int64_t in_h = rgb.dim(1), in_w = rgb.dim(2);

    auto depth_level = [&](const LayerSpec& layer, int64_t feat_h, int64_t feat_w) {
        if (layer.depth_level < 0 || layer.depth_level >= pyramid.levels()) {
            throw SpecError("depth pyramid has no level " + std::to_string(layer.depth_level));
        }
        auto level = pyramid.level_ptr(layer.depth_level);
        if (level->height != feat_h || level->width != feat_w) {
            throw SpecError("depth level " + std::to_string(layer.depth_level) + " is " +
                            std::to_string(level->height) + "x" + std::to_string(level->width) +
                            " but the layer input is " + std::to_string(feat_h) + "x" + std::to_string(feat_w));
        }
        return level;
    };

    Graph::NodeId cur = graph.input(std::move(rgb));
    for (size_t i = 0; i < model.spec.layers.size(); ++i) {
        const LayerSpec& layer = model.spec.layers[i];
        const Tensor& feat = graph.value(cur);
        const int64_t fh = feat.dim(1), fw = feat.dim(2);
        switch (layer.kind) {
            case LayerKind::Conv:
            case LayerKind::Classifier1x1:
                cur = graph.conv(cur, layer.conv, model.weights[i], model.biases[i]);
                break;
            case LayerKind::DConv:
                cur = graph.depth_conv(cur, layer.conv, model.weights[i], model.biases[i],
                                       depth_level(layer, fh, fw), layer.sim);
                break;
            case LayerKind::Relu:
                cur = graph.relu(cur);
                break;
            case LayerKind::MaxPool:
                cur = graph.max_pool(cur, layer.pool);
                break;
            case LayerKind::AvgPool:
                cur = graph.avg_pool(cur, layer.pool);
                break;
            case LayerKind::DAvgPool:
                cur = graph.depth_avg_pool(cur, layer.pool, depth_level(layer, fh, fw), layer.sim);
                break;
            case LayerKind::GlobalConcat:
                cur = graph.global_concat(cur);
                break;
        }
    }
    const Tensor& logits = graph.value(cur);
    if (logits.dim(1) != in_h || logits.dim(2) != in_w) {
        cur = graph.upsample(cur, in_h, in_w);
    }
    return cur;
}

Tensor predict_logits(const Model& model, Tensor rgb, const DepthPyramid& pyramid) {
    Graph graph;
    Graph::NodeId logits = forward_segmentation(model, graph, std::move(rgb), pyramid);
    return graph.value(logits);
}

namespace {

void put_u32(std::ofstream& out, uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 4);
}

void put_u64(std::ofstream& out, uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 8);
}

void put_f64(std::ofstream& out, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

uint32_t take_u32(std::ifstream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError("truncated checkpoint: " + path);
    return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 | static_cast<uint32_t>(b[2]) << 16 |
           static_cast<uint32_t>(b[3]) << 24;
}

uint64_t take_u64(std::ifstream& in, const std::string& path) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw FormatError("truncated checkpoint: " + path);
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

}  // namespace

void write_tensor_file(const std::string& path, const std::vector<std::pair<std::string, Tensor>>& tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out.write("DCNN", 4);
    put_u32(out, 1);
    put_u32(out, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        put_u32(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(out, static_cast<uint32_t>(t.ndim()));
        for (int i = 0; i < t.ndim(); ++i) put_u64(out, static_cast<uint64_t>(t.dim(i)));
        for (int64_t i = 0; i < t.size(); ++i) put_f64(out, t[i]);
    }
    if (!out) throw IoError("failed writing checkpoint: " + path);
}

std::vector<std::pair<std::string, Tensor>> read_tensor_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "DCNN", 4) != 0) {
        throw FormatError("bad checkpoint magic in " + path);
    }
    const uint32_t version = take_u32(in, path);
    if (version != 1) throw FormatError("unsupported checkpoint version " + std::to_string(version));
    const uint32_t count = take_u32(in, path);
    std::vector<std::pair<std::string, Tensor>> tensors;
    tensors.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = take_u32(in, path);
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) throw FormatError("truncated checkpoint name in " + path);
        const uint32_t ndim = take_u32(in, path);
        std::vector<int64_t> dims(ndim);
        for (uint32_t d = 0; d < ndim; ++d) dims[d] = static_cast<int64_t>(take_u64(in, path));
        Tensor t(dims);
        for (int64_t k = 0; k < t.size(); ++k) {
            uint64_t bits = take_u64(in, path);
            double v;
            std::memcpy(&v, &bits, 8);
            t[k] = v;
        }
        tensors.emplace_back(std::move(name), std::move(t));
    }
    return tensors;
}

void save_checkpoint(const Model& model, const std::string& path) {
    std::vector<std::pair<std::string, Tensor>> tensors;
    for (const auto& p : model.parameters()) tensors.emplace_back(p->name, p->value);
    write_tensor_file(path, tensors);
}

void load_checkpoint(Model& model, const std::string& path) {
    auto tensors = read_tensor_file(path);
    std::map<std::string, Tensor*> by_name;
    for (auto& [name, t] : tensors) by_name[name] = &t;
    for (const auto& p : model.parameters()) {
        auto it = by_name.find(p->name);
        if (it == by_name.end()) throw DataError("checkpoint is missing tensor " + p->name);
        if (it->second->shape() != p->value.shape()) {
            throw DataError("checkpoint tensor " + p->name + " has a different shape");
        }
        p->value = std::move(*it->second);
        p->zero_grad();
    }
}

}  // namespace dacnn
