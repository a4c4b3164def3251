#pragma once

#include <cstdint>
#include <vector>

#include "dacnn/errors.hpp"

namespace dacnn {

enum class SimilarityKind { Exponential, Clip, ConstantOne };

// Depth similarity F_D applied by the depth-aware operators. Exponential is
// exp(-alpha*|d_i - d_j|) with alpha in 1/meter; Clip is 0 when
// |d_i - d_j| >= threshold (meters) and 1 otherwise; ConstantOne makes every
// depth-aware operator collapse to its standard counterpart.
struct SimilaritySpec {
    SimilarityKind kind = SimilarityKind::Exponential;
    double alpha = 8.3;
    double threshold = 1.0;

    static SimilaritySpec exponential(double alpha = 8.3) {
        return SimilaritySpec{SimilarityKind::Exponential, alpha, 1.0};
    }
    static SimilaritySpec clip(double threshold = 1.0) {
        return SimilaritySpec{SimilarityKind::Clip, 8.3, threshold};
    }
    static SimilaritySpec constant_one() { return SimilaritySpec{SimilarityKind::ConstantOne, 8.3, 1.0}; }

    void validate() const {
        if (kind == SimilarityKind::Exponential && !(alpha > 0.0)) {
            throw ArgumentError("similarity alpha must be > 0");
        }
        if (kind == SimilarityKind::Clip && !(threshold > 0.0)) {
            throw ArgumentError("similarity clip threshold must be > 0");
        }
    }
};

// Per-pixel scene depth in meters. valid[i] == 0 marks a sensor hole; a pair
// involving a missing depth gets F_D = 1 so the operator degrades locally to
// its standard counterpart.
struct DepthMap {
    int64_t height = 0;
    int64_t width = 0;
    std::vector<double> values;
    std::vector<uint8_t> valid;

    DepthMap() = default;
    DepthMap(int64_t h, int64_t w, double depth = 0.0)
        : height(h), width(w), values(static_cast<size_t>(h * w), depth), valid(static_cast<size_t>(h * w), 1) {
        if (h < 1 || w < 1) throw ShapeError("depth map dimensions must be >= 1");
    }

    double depth_at(int64_t y, int64_t x) const { return values[static_cast<size_t>(y * width + x)]; }
    bool valid_at(int64_t y, int64_t x) const { return valid[static_cast<size_t>(y * width + x)] != 0; }
    void set(int64_t y, int64_t x, double d, bool is_valid = true) {
        values[static_cast<size_t>(y * width + x)] = d;
        valid[static_cast<size_t>(y * width + x)] = is_valid ? 1 : 0;
    }
};

// F_D between two depth samples. `valid_*` == false means missing depth and
// yields the neutral value 1.
double similarity(const SimilaritySpec& spec, double d_i, bool valid_i, double d_j, bool valid_j);

inline double similarity(const SimilaritySpec& spec, double d_i, double d_j) {
    return similarity(spec, d_i, true, d_j, true);
}

}  // namespace dacnn
