#include "dacnn/autograd.hpp"

#include <string>
#include <utility>

namespace dacnn {

void zero_grad(const std::vector<ParamPtr>& params) {
    for (const auto& p : params) p->zero_grad();
}

Graph::NodeId Graph::push(Node&& n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
}

Graph::NodeId Graph::check_id(NodeId id, const char* what) const {
    if (id < 0 || id >= size()) {
        throw GraphError(std::string(what) + ": node id " + std::to_string(id) +
                         " must reference an earlier node");
    }
    return id;
}

ConvKernel Graph::kernel_of(const Node& n) const {
    ConvKernel k;
    k.weights = n.w->value;
    if (n.b) k.bias = n.b->value;
    return k;
}

Graph::NodeId Graph::input(Tensor x) {
    Node n;
    n.kind = Kind::Input;
    n.out = std::move(x);
    return push(std::move(n));
}

Graph::NodeId Graph::conv(NodeId x, const ConvSpec& spec, ParamPtr w, ParamPtr b) {
    check_id(x, "conv");
    if (!w) throw GraphError("conv requires a weight parameter");
    if (spec.has_bias != static_cast<bool>(b)) throw GraphError("conv bias parameter does not match spec");
    Node n;
    n.kind = Kind::Conv;
    n.inputs = {x};
    n.conv_spec = spec;
    n.w = std::move(w);
    n.b = std::move(b);
    n.out = conv_forward(spec, kernel_of(n), nodes_[static_cast<size_t>(x)].out);
    return push(std::move(n));
}

Graph::NodeId Graph::depth_conv(NodeId x, const ConvSpec& spec, ParamPtr w, ParamPtr b,
                                std::shared_ptr<const DepthMap> depth, const SimilaritySpec& sim) {
    check_id(x, "depth_conv");
    if (!w) throw GraphError("depth_conv requires a weight parameter");
    if (!depth) throw GraphError("depth_conv requires a depth map");
    if (spec.has_bias != static_cast<bool>(b)) throw GraphError("depth_conv bias parameter does not match spec");
    Node n;
    n.kind = Kind::DepthConv;
    n.inputs = {x};
    n.conv_spec = spec;
    n.w = std::move(w);
    n.b = std::move(b);
    n.depth = std::move(depth);
    n.sim = sim;
    n.out = depth_conv_forward(spec, kernel_of(n), nodes_[static_cast<size_t>(x)].out, *n.depth, sim);
    return push(std::move(n));
}

Graph::NodeId Graph::relu(NodeId x) {
    check_id(x, "relu");
    Node n;
    n.kind = Kind::Relu;
    n.inputs = {x};
    n.out = relu_forward(nodes_[static_cast<size_t>(x)].out);
    return push(std::move(n));
}

Graph::NodeId Graph::max_pool(NodeId x, const PoolSpec& spec) {
    check_id(x, "max_pool");
    Node n;
    n.kind = Kind::MaxPool;
    n.inputs = {x};
    n.pool_spec = spec;
    MaxPoolResult res = max_pool_forward(spec, nodes_[static_cast<size_t>(x)].out);
    n.out = std::move(res.y);
    n.argmax = std::move(res.argmax);
    return push(std::move(n));
}

Graph::NodeId Graph::avg_pool(NodeId x, const PoolSpec& spec) {
    check_id(x, "avg_pool");
    Node n;
    n.kind = Kind::AvgPool;
    n.inputs = {x};
    n.pool_spec = spec;
    n.out = avg_pool_forward(spec, nodes_[static_cast<size_t>(x)].out);
    return push(std::move(n));
}

Graph::NodeId Graph::depth_avg_pool(NodeId x, const PoolSpec& spec, std::shared_ptr<const DepthMap> depth,
                                    const SimilaritySpec& sim) {
    check_id(x, "depth_avg_pool");
    if (!depth) throw GraphError("depth_avg_pool requires a depth map");
    Node n;
    n.kind = Kind::DepthAvgPool;
    n.inputs = {x};
    n.pool_spec = spec;
    n.depth = std::move(depth);
    n.sim = sim;
    n.out = depth_avg_pool_forward(spec, nodes_[static_cast<size_t>(x)].out, *n.depth, sim);
    return push(std::move(n));
}

Graph::NodeId Graph::global_concat(NodeId x) {
    check_id(x, "global_concat");
    Node n;
    n.kind = Kind::GlobalConcat;
    n.inputs = {x};
    n.out = global_pool_concat(nodes_[static_cast<size_t>(x)].out);
    return push(std::move(n));
}

Graph::NodeId Graph::upsample(NodeId x, int64_t out_h, int64_t out_w) {
    check_id(x, "upsample");
    Node n;
    n.kind = Kind::Upsample;
    n.inputs = {x};
    n.out = upsample_nearest(nodes_[static_cast<size_t>(x)].out, out_h, out_w);
    return push(std::move(n));
}

Graph::NodeId Graph::add(NodeId a, NodeId b) {
    check_id(a, "add");
    check_id(b, "add");
    Node n;
    n.kind = Kind::Add;
    n.inputs = {a, b};
    n.out = dacnn::add(nodes_[static_cast<size_t>(a)].out, nodes_[static_cast<size_t>(b)].out);
    return push(std::move(n));
}

Graph::NodeId Graph::reduce_sum_node(NodeId x) {
    check_id(x, "reduce_sum");
    Node n;
    n.kind = Kind::ReduceSum;
    n.inputs = {x};
    n.out = Tensor({1}, reduce_sum(nodes_[static_cast<size_t>(x)].out));
    return push(std::move(n));
}

Graph::NodeId Graph::softmax_ce(NodeId logits, LabelMap labels, int ignore_label) {
    check_id(logits, "softmax_ce");
    Node n;
    n.kind = Kind::SoftmaxCE;
    n.inputs = {logits};
    n.labels = std::move(labels);
    n.ignore_label = ignore_label;
    LossResult res = softmax_cross_entropy(nodes_[static_cast<size_t>(logits)].out, n.labels, ignore_label);
    n.out = Tensor({1}, res.loss);
    n.saved_grad_logits = std::move(res.grad_logits);
    return push(std::move(n));
}

const Tensor& Graph::value(NodeId id) const {
    check_id(id, "value");
    return nodes_[static_cast<size_t>(id)].out;
}

double Graph::scalar(NodeId id) const {
    const Tensor& t = value(id);
    if (t.size() != 1) throw GraphError("scalar() on a non-scalar node");
    return t[0];
}

void Graph::accumulate(NodeId id, const Tensor& g) {
    Tensor& slot = grads_[static_cast<size_t>(id)];
    if (slot.size() == 0) {
        slot = g;
        return;
    }
    for (int64_t i = 0; i < slot.size(); ++i) slot[i] += g[i];
}

void Graph::backward(NodeId loss) {
    if (nodes_.empty()) throw StateError("backward on an empty graph; run a forward pass first");
    check_id(loss, "backward");
    if (nodes_[static_cast<size_t>(loss)].out.size() != 1) {
        throw GraphError("backward requires a scalar loss node");
    }

    grads_.assign(nodes_.size(), Tensor{});
    grads_[static_cast<size_t>(loss)] = Tensor({1}, 1.0);

    for (NodeId id = loss; id >= 0; --id) {
        const Tensor& g = grads_[static_cast<size_t>(id)];
        if (g.size() == 0) continue;
        Node& n = nodes_[static_cast<size_t>(id)];
        switch (n.kind) {
            case Kind::Input:
                break;
            case Kind::Conv:
            case Kind::DepthConv: {
                const Tensor& x = nodes_[static_cast<size_t>(n.inputs[0])].out;
                ConvKernel k = kernel_of(n);
                ConvGrads cg = n.kind == Kind::Conv
                                   ? conv_backward(n.conv_spec, k, x, g)
                                   : depth_conv_backward(n.conv_spec, k, x, *n.depth, n.sim, g);
                if (n.w->trainable) {
                    for (int64_t i = 0; i < cg.grad_w.size(); ++i) n.w->grad[i] += cg.grad_w[i];
                }
                if (n.b && cg.grad_bias && n.b->trainable) {
                    for (int64_t i = 0; i < cg.grad_bias->size(); ++i) n.b->grad[i] += (*cg.grad_bias)[i];
                }
                accumulate(n.inputs[0], cg.grad_x);
                break;
            }
            case Kind::Relu:
                accumulate(n.inputs[0], relu_backward(nodes_[static_cast<size_t>(n.inputs[0])].out, g));
                break;
            case Kind::MaxPool:
                accumulate(n.inputs[0],
                           max_pool_backward(n.pool_spec, nodes_[static_cast<size_t>(n.inputs[0])].out, n.argmax, g));
                break;
            case Kind::AvgPool:
                accumulate(n.inputs[0], avg_pool_backward(n.pool_spec, nodes_[static_cast<size_t>(n.inputs[0])].out, g));
                break;
            case Kind::DepthAvgPool:
                accumulate(n.inputs[0],
                           depth_avg_pool_backward(n.pool_spec, nodes_[static_cast<size_t>(n.inputs[0])].out,
                                                   *n.depth, n.sim, g));
                break;
            case Kind::GlobalConcat:
                accumulate(n.inputs[0],
                           global_pool_concat_backward(nodes_[static_cast<size_t>(n.inputs[0])].out, g));
                break;
            case Kind::Upsample:
                accumulate(n.inputs[0],
                           upsample_nearest_backward(nodes_[static_cast<size_t>(n.inputs[0])].out, g));
                break;
            case Kind::Add:
                accumulate(n.inputs[0], g);
                accumulate(n.inputs[1], g);
                break;
            case Kind::ReduceSum: {
                const Tensor& x = nodes_[static_cast<size_t>(n.inputs[0])].out;
                accumulate(n.inputs[0], Tensor(x.shape(), g[0]));
                break;
            }
            case Kind::SoftmaxCE: {
                Tensor gx(n.saved_grad_logits.shape());
                for (int64_t i = 0; i < gx.size(); ++i) gx[i] = n.saved_grad_logits[i] * g[0];
                accumulate(n.inputs[0], gx);
                break;
            }
        }
    }
}

const Tensor& Graph::grad(NodeId id) const {
    check_id(id, "grad");
    if (grads_.size() != nodes_.size()) throw StateError("grad() before backward()");
    return grads_[static_cast<size_t>(id)];
}

}  // namespace dacnn
