#pragma once

#include <cstdint>
#include <vector>

#include "dacnn/errors.hpp"

namespace dacnn {

// Label value excluded from loss and metrics.
constexpr int kIgnoreLabel = 255;

// Per-pixel class ids in 0..n_C-1 plus kIgnoreLabel.
struct LabelMap {
    int64_t height = 0;
    int64_t width = 0;
    std::vector<int32_t> ids;

    LabelMap() = default;
    LabelMap(int64_t h, int64_t w, int32_t fill = 0)
        : height(h), width(w), ids(static_cast<size_t>(h * w), fill) {
        if (h < 1 || w < 1) throw ShapeError("label map dimensions must be >= 1");
    }

    int32_t at(int64_t y, int64_t x) const { return ids[static_cast<size_t>(y * width + x)]; }
    void set(int64_t y, int64_t x, int32_t v) { ids[static_cast<size_t>(y * width + x)] = v; }
};

}  // namespace dacnn
