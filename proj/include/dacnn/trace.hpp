#pragma once

#include "dacnn/similarity.hpp"
#include "dacnn/tensor.hpp"

namespace dacnn {

// Cumulative contribution of every input pixel to one output unit after
// `levels` stacked 3x3 stride-1 depth-aware convolutions over `depth`:
// a one-hot gradient at (y, x) is back-propagated through the stack, giving
// sum-over-paths of the product of per-hop F_D weights. `kernel_profile`,
// when given, is a [3,3] non-negative spatial weighting applied at every
// level in place of the default all-ones kernel. Returns an [h, w] map.
Tensor rf_trace(const DepthMap& depth, int levels, int64_t y, int64_t x, const SimilaritySpec& sim,
                const Tensor* kernel_profile = nullptr);

}  // namespace dacnn
