#include "dacnn/similarity.hpp"

#include <cmath>

namespace dacnn {

double similarity(const SimilaritySpec& spec, double d_i, bool valid_i, double d_j, bool valid_j) {
    spec.validate();
    if (spec.kind == SimilarityKind::ConstantOne) return 1.0;
    if (!valid_i || !valid_j) return 1.0;
    double diff = std::fabs(d_i - d_j);
    switch (spec.kind) {
        case SimilarityKind::Exponential:
            return std::exp(-spec.alpha * diff);
        case SimilarityKind::Clip:
            return diff >= spec.threshold ? 0.0 : 1.0;
        case SimilarityKind::ConstantOne:
            break;
    }
    return 1.0;
}

}  // namespace dacnn
