#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dacnn/nnops.hpp"

namespace dacnn {

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;

    Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

    void zero_grad() { grad = Tensor(value.shape()); }
};

using ParamPtr = std::shared_ptr<Parameter>;

void zero_grad(const std::vector<ParamPtr>& params);

// Reverse-mode tape over nnops. Nodes execute eagerly as they are appended
// (building the graph is the forward pass; the graph is rebuilt per batch),
// so the structure is a DAG by construction: every node may only reference
// earlier nodes. backward() walks ids in reverse creation order, which is a
// reverse topological order, and visits each node exactly once. Parameter
// gradients accumulate (+=) across nodes sharing a parameter; call
// zero_grad() between batches.
class Graph {
  public:
    using NodeId = int;

    NodeId input(Tensor x);
    NodeId conv(NodeId x, const ConvSpec& spec, ParamPtr w, ParamPtr b);
    NodeId depth_conv(NodeId x, const ConvSpec& spec, ParamPtr w, ParamPtr b,
                      std::shared_ptr<const DepthMap> depth, const SimilaritySpec& sim);
    NodeId relu(NodeId x);
    NodeId max_pool(NodeId x, const PoolSpec& spec);
    NodeId avg_pool(NodeId x, const PoolSpec& spec);
    NodeId depth_avg_pool(NodeId x, const PoolSpec& spec, std::shared_ptr<const DepthMap> depth,
                          const SimilaritySpec& sim);
    NodeId global_concat(NodeId x);
    NodeId upsample(NodeId x, int64_t out_h, int64_t out_w);
    NodeId add(NodeId a, NodeId b);
    NodeId reduce_sum_node(NodeId x);  // -> scalar [1]
    NodeId softmax_ce(NodeId logits, LabelMap labels, int ignore_label = kIgnoreLabel);  // -> scalar [1]

    const Tensor& value(NodeId id) const;
    double scalar(NodeId id) const;

    // Populates Parameter::grad and per-node input gradients from a scalar
    // loss node.
    void backward(NodeId loss);

    // Gradient w.r.t. a node's output from the last backward() call. Nodes
    // the loss does not depend on report an empty tensor.
    const Tensor& grad(NodeId id) const;

    int size() const { return static_cast<int>(nodes_.size()); }

  private:
    enum class Kind {
        Input,
        Conv,
        DepthConv,
        Relu,
        MaxPool,
        AvgPool,
        DepthAvgPool,
        GlobalConcat,
        Upsample,
        Add,
        ReduceSum,
        SoftmaxCE,
    };

    struct Node {
        Kind kind;
        std::vector<NodeId> inputs;
        Tensor out;
        // saved context for backward
        ConvSpec conv_spec;
        PoolSpec pool_spec;
        ParamPtr w;
        ParamPtr b;
        std::shared_ptr<const DepthMap> depth;
        SimilaritySpec sim;
        std::vector<int64_t> argmax;
        LabelMap labels;
        int ignore_label = kIgnoreLabel;
        Tensor saved_grad_logits;
    };

    NodeId push(Node&& n);
    NodeId check_id(NodeId id, const char* what) const;
    ConvKernel kernel_of(const Node& n) const;
    void accumulate(NodeId id, const Tensor& g);

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
};

}  // namespace dacnn
