#pragma once

#include <string>
#include <vector>

#include "dacnn/autograd.hpp"
#include "dacnn/data.hpp"
#include "dacnn/nnops.hpp"

namespace dacnn {

enum class LayerKind { Conv, DConv, Relu, MaxPool, AvgPool, DAvgPool, GlobalConcat, Classifier1x1 };

struct LayerSpec {
    LayerKind kind;
    ConvSpec conv;         // Conv / DConv / Classifier1x1
    PoolSpec pool;         // MaxPool / AvgPool / DAvgPool
    SimilaritySpec sim;    // DConv / DAvgPool
    int depth_level = 0;   // pyramid level read by depth-aware layers
};

// Declarative convolution/pooling stack. The two mini presets share one
// constructor and differ only in conv<->dconv and avgpool<->davgpool layer
// kinds, so their parameter counts are equal by construction.
struct ModelSpec {
    std::string name;
    std::vector<LayerSpec> layers;
    int num_classes = 4;

    static ModelSpec baseline_mini(int num_classes = 4);
    static ModelSpec dcnn_mini(int num_classes = 4, const SimilaritySpec& sim = SimilaritySpec::exponential());
    static ModelSpec preset(const std::string& name, int num_classes = 4,
                            const SimilaritySpec& sim = SimilaritySpec::exponential());
};

struct Model {
    ModelSpec spec;
    // aligned with spec.layers; null entries for layers without parameters
    std::vector<ParamPtr> weights;
    std::vector<ParamPtr> biases;

    std::vector<ParamPtr> parameters() const;
};

// Initializes conv weights ~ uniform(-b, b), b = sqrt(6 / fan_in), biases 0.
Model build(const ModelSpec& spec, Rng& rng);

int64_t parameter_count(const Model& model);

// Appends the model's layers to `graph` and returns the logits node,
// upsampled (nearest) back to the input resolution when the stack
// downsampled. Depth-aware layers read the pyramid level recorded in their
// LayerSpec; a missing or mis-sized level is a spec error.
Graph::NodeId forward_segmentation(const Model& model, Graph& graph, Tensor rgb, const DepthPyramid& pyramid);

// Inference-only convenience wrapper.
Tensor predict_logits(const Model& model, Tensor rgb, const DepthPyramid& pyramid);

// Checkpoint format (bit-exact): magic "DCNN", u32 version=1, u32 tensor
// count; per tensor: u32 name length, UTF-8 name, u32 ndim, u64 dims, raw
// 64-bit floats. All integers and floats little-endian.
void save_checkpoint(const Model& model, const std::string& path);
void load_checkpoint(Model& model, const std::string& path);

void write_tensor_file(const std::string& path, const std::vector<std::pair<std::string, Tensor>>& tensors);
std::vector<std::pair<std::string, Tensor>> read_tensor_file(const std::string& path);

}  // namespace dacnn
