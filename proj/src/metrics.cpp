#include "dacnn/metrics.hpp"

#include <cmath>
#include <sstream>

namespace dacnn {

void ConfusionMatrix::accumulate(const LabelMap& predicted, const LabelMap& truth, int ignore_label) {
    if (predicted.height != truth.height || predicted.width != truth.width) {
        throw ShapeError("prediction and truth label maps differ in size");
    }
    for (size_t i = 0; i < truth.ids.size(); ++i) {
        const int32_t t = truth.ids[i];
        if (t == ignore_label) continue;
        const int32_t p = predicted.ids[i];
        if (t < 0 || t >= num_classes) throw DataError("truth class " + std::to_string(t) + " out of range");
        if (p < 0 || p >= num_classes) throw DataError("predicted class " + std::to_string(p) + " out of range");
        ++at(t, p);
    }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.num_classes != num_classes) throw ShapeError("confusion matrix class counts differ");
    for (size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
}

int64_t ConfusionMatrix::total() const {
    int64_t s = 0;
    for (int64_t c : counts) s += c;
    return s;
}

MetricsReport compute_metrics(const ConfusionMatrix& cm) {
    const int n = cm.num_classes;
    const int64_t s = cm.total();
    if (s == 0) throw MetricError("confusion matrix is empty, metrics are undefined");

    MetricsReport rep;
    rep.per_class_iou.assign(static_cast<size_t>(n), 0.0);
    rep.class_present.assign(static_cast<size_t>(n), false);

    int64_t diag = 0;
    double macc_sum = 0.0, miou_sum = 0.0, fwiou_sum = 0.0;
    int present = 0;
    for (int i = 0; i < n; ++i) {
        int64_t s_i = 0, col_i = 0;
        for (int j = 0; j < n; ++j) {
            s_i += cm.at(i, j);
            col_i += cm.at(j, i);
        }
        diag += cm.at(i, i);
        if (s_i == 0) continue;  // absent classes drop out of the averages
        rep.class_present[static_cast<size_t>(i)] = true;
        ++present;
        const double n_ii = static_cast<double>(cm.at(i, i));
        const double iou = n_ii / static_cast<double>(s_i + col_i - cm.at(i, i));
        rep.per_class_iou[static_cast<size_t>(i)] = iou;
        macc_sum += n_ii / static_cast<double>(s_i);
        miou_sum += iou;
        fwiou_sum += static_cast<double>(s_i) * iou;
    }
    rep.acc = static_cast<double>(diag) / static_cast<double>(s);
    rep.macc = macc_sum / present;
    rep.miou = miou_sum / present;
    rep.fwiou = fwiou_sum / static_cast<double>(s);
    return rep;
}

std::string MetricsReport::to_json() const {
    std::ostringstream os;
    os.precision(10);
    os << "{\"acc\":" << acc << ",\"macc\":" << macc << ",\"miou\":" << miou << ",\"fwiou\":" << fwiou
       << ",\"per_class_iou\":[";
    for (size_t i = 0; i < per_class_iou.size(); ++i) {
        if (i) os << ",";
        if (class_present[i]) {
            os << per_class_iou[i];
        } else {
            os << "null";
        }
    }
    os << "]}";
    return os.str();
}

std::string MetricsReport::to_csv() const {
    std::ostringstream os;
    os.precision(10);
    os << "metric,value\n";
    os << "acc," << acc << "\n";
    os << "macc," << macc << "\n";
    os << "miou," << miou << "\n";
    os << "fwiou," << fwiou << "\n";
    for (size_t i = 0; i < per_class_iou.size(); ++i) {
        os << "iou_class_" << i << ",";
        if (class_present[i]) {
            os << per_class_iou[i];
        } else {
            os << "absent";
        }
        os << "\n";
    }
    return os.str();
}

DepthVarianceReport depth_variance_report(const std::vector<Scene>& scenes, int num_classes, bool sample_variance) {
    if (scenes.empty()) throw DataError("depth variance report needs at least one scene");
    if (num_classes < 1) throw ArgumentError("depth variance report needs at least one class");

    DepthVarianceReport rep;
    rep.per_class.assign(static_cast<size_t>(num_classes), 0.0);
    rep.present.assign(static_cast<size_t>(num_classes), false);
    std::vector<double> class_var_sum(static_cast<size_t>(num_classes), 0.0);
    std::vector<int64_t> class_images(static_cast<size_t>(num_classes), 0);
    double all_var_sum = 0.0;
    int64_t all_images = 0;

    // Welford accumulators: exactly zero variance on constant depths
    struct Welford {
        int64_t n = 0;
        double mean = 0.0;
        double m2 = 0.0;

        void add(double x) {
            ++n;
            const double delta = x - mean;
            mean += delta / static_cast<double>(n);
            m2 += delta * (x - mean);
        }
    };

    auto finish_var = [&](const Welford& w) {
        if (sample_variance) return w.n > 1 ? w.m2 / static_cast<double>(w.n - 1) : 0.0;
        return w.m2 / static_cast<double>(w.n);
    };

    std::vector<Welford> per_class(static_cast<size_t>(num_classes));

    bool any_pixel = false;
    for (const Scene& scene : scenes) {
        std::fill(per_class.begin(), per_class.end(), Welford{});
        Welford all;
        for (size_t i = 0; i < scene.labels.ids.size(); ++i) {
            const int32_t label = scene.labels.ids[i];
            if (label == kIgnoreLabel) continue;
            if (label < 0 || label >= num_classes) {
                throw DataError("label " + std::to_string(label) + " out of range");
            }
            if (!scene.depth.valid[i]) continue;
            const double d = scene.depth.values[i];
            per_class[static_cast<size_t>(label)].add(d);
            all.add(d);
        }
        for (int c = 0; c < num_classes; ++c) {
            const Welford& w = per_class[static_cast<size_t>(c)];
            if (w.n == 0) continue;
            class_var_sum[static_cast<size_t>(c)] += finish_var(w);
            ++class_images[static_cast<size_t>(c)];
        }
        if (all.n > 0) {
            all_var_sum += finish_var(all);
            ++all_images;
            any_pixel = true;
        }
    }
    if (!any_pixel) throw DataError("no valid labeled pixels in any scene");

    for (int c = 0; c < num_classes; ++c) {
        if (class_images[static_cast<size_t>(c)] > 0) {
            rep.present[static_cast<size_t>(c)] = true;
            rep.per_class[static_cast<size_t>(c)] =
                class_var_sum[static_cast<size_t>(c)] / static_cast<double>(class_images[static_cast<size_t>(c)]);
        }
    }
    rep.all = all_var_sum / static_cast<double>(all_images);
    return rep;
}

std::string DepthVarianceReport::to_json() const {
    std::ostringstream os;
    os.precision(10);
    os << "{\"per_class\":[";
    for (size_t i = 0; i < per_class.size(); ++i) {
        if (i) os << ",";
        if (present[i]) {
            os << per_class[i];
        } else {
            os << "null";
        }
    }
    os << "],\"all\":" << all << "}";
    return os.str();
}

std::string DepthVarianceReport::to_csv() const {
    std::ostringstream os;
    os.precision(10);
    os << "class,mean_variance\n";
    for (size_t i = 0; i < per_class.size(); ++i) {
        os << i << ",";
        if (present[i]) {
            os << per_class[i];
        } else {
            os << "absent";
        }
        os << "\n";
    }
    os << "all," << all << "\n";
    return os.str();
}

}  // namespace dacnn
