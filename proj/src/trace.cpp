#include "dacnn/trace.hpp"

#include <string>

#include "dacnn/nnops.hpp"

namespace dacnn {

Tensor rf_trace(const DepthMap& depth, int levels, int64_t y, int64_t x, const SimilaritySpec& sim,
                const Tensor* kernel_profile) {
    if (levels < 1) throw ArgumentError("rf_trace needs at least one level");
    const int64_t h = depth.height, w = depth.width;
    if (y < 0 || y >= h || x < 0 || x >= w) {
        throw ArgumentError("trace pixel (" + std::to_string(y) + "," + std::to_string(x) + ") out of bounds for " +
                            std::to_string(h) + "x" + std::to_string(w));
    }

    ConvSpec spec;
    spec.in_channels = 1;
    spec.out_channels = 1;
    spec.kernel_h = 3;
    spec.kernel_w = 3;
    spec.padding = 1;
    spec.has_bias = false;

    ConvKernel kernel = ConvKernel::zeros(spec);
    if (kernel_profile) {
        if (kernel_profile->shape() != std::vector<int64_t>{3, 3}) {
            throw ArgumentError("kernel profile must be a [3,3] tensor");
        }
        for (int64_t i = 0; i < 9; ++i) {
            if ((*kernel_profile)[i] < 0.0) throw ArgumentError("kernel profile weights must be non-negative");
            kernel.weights[i] = (*kernel_profile)[i];
        }
    } else {
        for (int64_t i = 0; i < 9; ++i) kernel.weights[i] = 1.0;
    }

    // stride-1 pad-1 3x3 keeps the resolution, so every hop sees the same
    // depth map; the features only matter for their shape
    const Tensor ones({1, h, w}, 1.0);
    Tensor grad({1, h, w});
    grad.at({0, y, x}) = 1.0;
    for (int level = 0; level < levels; ++level) {
        grad = depth_conv_backward(spec, kernel, ones, depth, sim, grad).grad_x;
    }

    Tensor out({h, w});
    for (int64_t i = 0; i < out.size(); ++i) out[i] = grad[i];
    return out;
}

}  // namespace dacnn
