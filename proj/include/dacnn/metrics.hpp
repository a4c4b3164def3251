#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dacnn/data.hpp"
#include "dacnn/labels.hpp"

namespace dacnn {

// n_C x n_C counts; counts[i*n_C + j] is pixels with ground truth i predicted
// as j. Ignored pixels are never counted. Instances accumulated separately
// may be merged by elementwise addition.
struct ConfusionMatrix {
    int num_classes = 0;
    std::vector<int64_t> counts;

    explicit ConfusionMatrix(int n_C)
        : num_classes(n_C), counts(static_cast<size_t>(n_C) * static_cast<size_t>(n_C), 0) {
        if (n_C < 1) throw ArgumentError("confusion matrix needs at least one class");
    }

    int64_t at(int truth, int predicted) const {
        return counts[static_cast<size_t>(truth) * static_cast<size_t>(num_classes) + static_cast<size_t>(predicted)];
    }
    int64_t& at(int truth, int predicted) {
        return counts[static_cast<size_t>(truth) * static_cast<size_t>(num_classes) + static_cast<size_t>(predicted)];
    }

    void accumulate(const LabelMap& predicted, const LabelMap& truth, int ignore_label = kIgnoreLabel);
    void merge(const ConfusionMatrix& other);
    int64_t total() const;
};

struct MetricsReport {
    double acc = 0.0;
    double macc = 0.0;
    double miou = 0.0;
    double fwiou = 0.0;
    std::vector<double> per_class_iou;   // meaningful where class_present
    std::vector<bool> class_present;     // s_i > 0

    std::string to_json() const;
    std::string to_csv() const;
};

// The four segmentation metrics. Classes absent from the ground truth are
// excluded from the mAcc and mIoU averages (their denominator shrinks
// accordingly). An empty matrix is an undefined-metric error.
MetricsReport compute_metrics(const ConfusionMatrix& cm);

struct DepthVarianceReport {
    // mean over images (where the class is present) of the per-image
    // population variance of that class's valid depths
    std::vector<double> per_class;
    std::vector<bool> present;
    double all = 0.0;  // same statistic over all valid labeled pixels

    std::string to_json() const;
    std::string to_csv() const;
};

// `sample_variance` switches the per-image variance from the population
// (divide by N) convention to the sample (divide by N-1) convention.
DepthVarianceReport depth_variance_report(const std::vector<Scene>& scenes, int num_classes,
                                          bool sample_variance = false);

}  // namespace dacnn
