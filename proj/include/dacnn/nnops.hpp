#pragma once

#include <optional>
#include <vector>

#include "dacnn/labels.hpp"
#include "dacnn/similarity.hpp"
#include "dacnn/tensor.hpp"

namespace dacnn {

// Geometry of a 2D convolution over [c_i, h, w with zero padding.
struct ConvSpec {
    int64_t in_channels = 1;
    int64_t out_channels = 1;
    int64_t kernel_h = 3;
    int64_t kernel_w = 3;
    int64_t stride = 1;
    int64_t padding = 0;
    int64_t dilation = 1;
    bool has_bias = true;

    int64_t out_size(int64_t in, int64_t kernel) const {
        return (in + 2 * padding - dilation * (kernel - 1) - 1) / stride + 1;
    }
    void validate() const;
    void validate_input(const Tensor& x) const;
};

// Learnable state of one convolution layer. A depth-aware layer and a
// standard layer with equal ConvSpec hold identical parameter counts.
struct ConvKernel {
    Tensor weights;  // [out_channels, in_channels, kernel_h, kernel_w]
    std::optional<Tensor> bias;  // [out_channels]

    static ConvKernel zeros(const ConvSpec& spec);
    void validate(const ConvSpec& spec) const;
};

enum class PoolMode { Max, Avg, DepthAvg, GlobalAvg };

struct PoolSpec {
    int64_t kernel_h = 2;
    int64_t kernel_w = 2;
    int64_t stride = 2;
    int64_t padding = 0;
    PoolMode mode = PoolMode::Avg;

    int64_t out_size(int64_t in, int64_t kernel) const { return (in + 2 * padding - kernel) / stride + 1; }
    void validate() const;
};

struct ConvGrads {
    Tensor grad_x;
    Tensor grad_w;
    std::optional<Tensor> grad_bias;
};

// Standard cross-correlation, Tensor[c_i,h,w] -> Tensor[c_o,h',w'].
Tensor conv_forward(const ConvSpec& spec, const ConvKernel& kernel, const Tensor& x);
ConvGrads conv_backward(const ConvSpec& spec, const ConvKernel& kernel, const Tensor& x, const Tensor& grad_y);

// Depth-aware convolution: each tap is scaled by the depth similarity between
// the (dilated) window center and the sampling location, measured on a depth
// map at the feature resolution. Out-of-bounds taps read a zero-padded
// feature and a "matching" depth (F_D = 1, inert). With ConstantOne
// similarity or spatially constant depth the result is bitwise equal to
// conv_forward: both run the same engine with the same summation order
// (channel-major, then kernel row, then kernel column).
Tensor depth_conv_forward(const ConvSpec& spec, const ConvKernel& kernel, const Tensor& x, const DepthMap& depth,
                          const SimilaritySpec& sim);
// Gradients for x and w carry the same F_D factor as the forward pass; depth
// receives no gradient.
ConvGrads depth_conv_backward(const ConvSpec& spec, const ConvKernel& kernel, const Tensor& x, const DepthMap& depth,
                              const SimilaritySpec& sim, const Tensor& grad_y);

// Average pooling with count-exclude-pad: padded positions join neither the
// numerator nor the denominator.
Tensor avg_pool_forward(const PoolSpec& spec, const Tensor& x);
Tensor avg_pool_backward(const PoolSpec& spec, const Tensor& x, const Tensor& grad_y);

// Depth-aware average pooling: window mean weighted by F_D against the window
// center and normalized by the in-bounds F_D sum. The denominator is always
// positive: the center contributes F_D = 1 when in bounds, and a padded
// center makes every in-bounds weight 1.
Tensor depth_avg_pool_forward(const PoolSpec& spec, const Tensor& x, const DepthMap& depth,
                              const SimilaritySpec& sim);
Tensor depth_avg_pool_backward(const PoolSpec& spec, const Tensor& x, const DepthMap& depth,
                               const SimilaritySpec& sim, const Tensor& grad_y);

struct MaxPoolResult {
    Tensor y;
    std::vector<int64_t> argmax;  // flat index into x per output element; first occurrence on ties
};
MaxPoolResult max_pool_forward(const PoolSpec& spec, const Tensor& x);
Tensor max_pool_backward(const PoolSpec& spec, const Tensor& x, const std::vector<int64_t>& argmax,
                         const Tensor& grad_y);

Tensor relu_forward(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& grad_y);

// [C,h,w] -> [2C,h,w]: channels 0..C pass through, channels C..2C broadcast
// the per-channel spatial mean to every position.
Tensor global_pool_concat(const Tensor& x);
Tensor global_pool_concat_backward(const Tensor& x, const Tensor& grad_y);

// Nearest-neighbor resize with top-left anchoring: source index is
// floor(target * in / out) per axis.
Tensor upsample_nearest(const Tensor& x, int64_t out_h, int64_t out_w);
Tensor upsample_nearest_backward(const Tensor& x, const Tensor& grad_y);

struct LossResult {
    double loss = 0.0;
    Tensor grad_logits;
};

// Mean negative log-likelihood over non-ignored pixels. Ignored pixels
// contribute zero loss and zero gradient; an all-ignored image yields loss 0
// and zero gradients.
LossResult softmax_cross_entropy(const Tensor& logits, const LabelMap& labels, int ignore_label = kIgnoreLabel);

}  // namespace dacnn
