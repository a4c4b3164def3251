#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "dacnn/data.hpp"
#include "dacnn/metrics.hpp"
#include "dacnn/nnops.hpp"
#include "dacnn/trace.hpp"
#include "dacnn/train.hpp"

namespace py = pybind11;
using namespace dacnn;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor tensor_from(const DoubleArray& a) {
    std::vector<int64_t> shape(a.ndim());
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<size_t>(i)] = a.shape(i);
    Tensor t(shape);
    std::copy(a.data(), a.data() + a.size(), t.data());
    return t;
}

py::array_t<double> array_from(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> a(shape);
    std::copy(t.data(), t.data() + t.size(), a.mutable_data());
    return a;
}

DepthMap depth_from(const DoubleArray& depth, const std::optional<py::array_t<bool>>& valid) {
    if (depth.ndim() != 2) throw ShapeError("depth must be a 2-d array");
    DepthMap d(depth.shape(0), depth.shape(1));
    std::copy(depth.data(), depth.data() + depth.size(), d.values.data());
    if (valid) {
        if (valid->ndim() != 2 || valid->shape(0) != depth.shape(0) || valid->shape(1) != depth.shape(1)) {
            throw ShapeError("valid mask must match the depth array");
        }
        auto v = valid->unchecked<2>();
        for (int64_t y = 0; y < d.height; ++y) {
            for (int64_t x = 0; x < d.width; ++x) d.valid[static_cast<size_t>(y * d.width + x)] = v(y, x) ? 1 : 0;
        }
    }
    return d;
}

LabelMap labels_from(const py::array_t<int32_t, py::array::c_style | py::array::forcecast>& labels) {
    if (labels.ndim() != 2) throw ShapeError("labels must be a 2-d array");
    LabelMap m(labels.shape(0), labels.shape(1));
    std::copy(labels.data(), labels.data() + labels.size(), m.ids.data());
    return m;
}

ConvSpec conv_spec_for(const Tensor& w, bool has_bias, int64_t stride, int64_t padding, int64_t dilation) {
    if (w.ndim() != 4) throw ShapeError("conv weights must be [co,ci,kh,kw]");
    ConvSpec spec;
    spec.out_channels = w.dim(0);
    spec.in_channels = w.dim(1);
    spec.kernel_h = w.dim(2);
    spec.kernel_w = w.dim(3);
    spec.stride = stride;
    spec.padding = padding;
    spec.dilation = dilation;
    spec.has_bias = has_bias;
    return spec;
}

ConvKernel kernel_for(const Tensor& w, const std::optional<DoubleArray>& bias) {
    ConvKernel k;
    k.weights = w;
    if (bias) k.bias = tensor_from(*bias);
    return k;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "depth-aware convolution and pooling operators";

    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);

    py::class_<SimilaritySpec>(m, "SimilaritySpec")
        .def_static("exponential", &SimilaritySpec::exponential, py::arg("alpha") = 8.3)
        .def_static("clip", &SimilaritySpec::clip, py::arg("threshold") = 1.0)
        .def_static("constant_one", &SimilaritySpec::constant_one)
        .def_readonly("alpha", &SimilaritySpec::alpha)
        .def_readonly("threshold", &SimilaritySpec::threshold);

    m.def(
        "similarity",
        [](const SimilaritySpec& spec, double d_i, double d_j, bool valid_i, bool valid_j) {
            return similarity(spec, d_i, valid_i, d_j, valid_j);
        },
        py::arg("spec"), py::arg("d_i"), py::arg("d_j"), py::arg("valid_i") = true, py::arg("valid_j") = true);

    m.def(
        "conv_forward",
        [](const DoubleArray& w, const std::optional<DoubleArray>& bias, const DoubleArray& x, int64_t stride,
           int64_t padding, int64_t dilation) {
            const Tensor wt = tensor_from(w);
            const ConvSpec spec = conv_spec_for(wt, bias.has_value(), stride, padding, dilation);
            return array_from(conv_forward(spec, kernel_for(wt, bias), tensor_from(x)));
        },
        py::arg("weights"), py::arg("bias"), py::arg("x"), py::arg("stride") = 1, py::arg("padding") = 0,
        py::arg("dilation") = 1);

    m.def(
        "depth_conv_forward",
        [](const DoubleArray& w, const std::optional<DoubleArray>& bias, const DoubleArray& x,
           const DoubleArray& depth, const std::optional<py::array_t<bool>>& valid, const SimilaritySpec& sim,
           int64_t stride, int64_t padding, int64_t dilation) {
            const Tensor wt = tensor_from(w);
            const ConvSpec spec = conv_spec_for(wt, bias.has_value(), stride, padding, dilation);
            return array_from(
                depth_conv_forward(spec, kernel_for(wt, bias), tensor_from(x), depth_from(depth, valid), sim));
        },
        py::arg("weights"), py::arg("bias"), py::arg("x"), py::arg("depth"), py::arg("valid") = std::nullopt,
        py::arg("sim") = SimilaritySpec::exponential(), py::arg("stride") = 1, py::arg("padding") = 0,
        py::arg("dilation") = 1);

    m.def(
        "depth_conv_backward",
        [](const DoubleArray& w, const std::optional<DoubleArray>& bias, const DoubleArray& x,
           const DoubleArray& depth, const std::optional<py::array_t<bool>>& valid, const SimilaritySpec& sim,
           const DoubleArray& grad_y, int64_t stride, int64_t padding, int64_t dilation) {
            const Tensor wt = tensor_from(w);
            const ConvSpec spec = conv_spec_for(wt, bias.has_value(), stride, padding, dilation);
            const ConvGrads grads = depth_conv_backward(spec, kernel_for(wt, bias), tensor_from(x),
                                                        depth_from(depth, valid), sim, tensor_from(grad_y));
            py::object gb = grads.grad_bias ? py::object(array_from(*grads.grad_bias)) : py::none();
            return py::make_tuple(array_from(grads.grad_x), array_from(grads.grad_w), gb);
        },
        py::arg("weights"), py::arg("bias"), py::arg("x"), py::arg("depth"), py::arg("valid") = std::nullopt,
        py::arg("sim") = SimilaritySpec::exponential(), py::arg("grad_y") = DoubleArray(), py::arg("stride") = 1,
        py::arg("padding") = 0, py::arg("dilation") = 1);

    m.def(
        "avg_pool_forward",
        [](const DoubleArray& x, int64_t kernel_h, int64_t kernel_w, int64_t stride, int64_t padding) {
            const PoolSpec spec{kernel_h, kernel_w, stride, padding, PoolMode::Avg};
            return array_from(avg_pool_forward(spec, tensor_from(x)));
        },
        py::arg("x"), py::arg("kernel_h"), py::arg("kernel_w"), py::arg("stride") = 1, py::arg("padding") = 0);

    m.def(
        "depth_avg_pool_forward",
        [](const DoubleArray& x, const DoubleArray& depth, const std::optional<py::array_t<bool>>& valid,
           const SimilaritySpec& sim, int64_t kernel_h, int64_t kernel_w, int64_t stride, int64_t padding) {
            const PoolSpec spec{kernel_h, kernel_w, stride, padding, PoolMode::DepthAvg};
            return array_from(depth_avg_pool_forward(spec, tensor_from(x), depth_from(depth, valid), sim));
        },
        py::arg("x"), py::arg("depth"), py::arg("valid") = std::nullopt,
        py::arg("sim") = SimilaritySpec::exponential(), py::arg("kernel_h") = 2, py::arg("kernel_w") = 2,
        py::arg("stride") = 2, py::arg("padding") = 0);

    m.def(
        "depth_avg_pool_backward",
        [](const DoubleArray& x, const DoubleArray& depth, const std::optional<py::array_t<bool>>& valid,
           const SimilaritySpec& sim, const DoubleArray& grad_y, int64_t kernel_h, int64_t kernel_w,
           int64_t stride, int64_t padding) {
            const PoolSpec spec{kernel_h, kernel_w, stride, padding, PoolMode::DepthAvg};
            return array_from(
                depth_avg_pool_backward(spec, tensor_from(x), depth_from(depth, valid), sim, tensor_from(grad_y)));
        },
        py::arg("x"), py::arg("depth"), py::arg("valid") = std::nullopt,
        py::arg("sim") = SimilaritySpec::exponential(), py::arg("grad_y") = DoubleArray(), py::arg("kernel_h") = 2,
        py::arg("kernel_w") = 2, py::arg("stride") = 2, py::arg("padding") = 0);

    m.def(
        "global_pool_concat",
        [](const DoubleArray& x) { return array_from(global_pool_concat(tensor_from(x))); }, py::arg("x"));

    m.def(
        "relu", [](const DoubleArray& x) { return array_from(relu_forward(tensor_from(x))); }, py::arg("x"));

    m.def(
        "softmax_cross_entropy",
        [](const DoubleArray& logits, const py::array_t<int32_t, py::array::c_style | py::array::forcecast>& labels,
           int ignore_label) {
            const LossResult res = softmax_cross_entropy(tensor_from(logits), labels_from(labels), ignore_label);
            return py::make_tuple(res.loss, array_from(res.grad_logits));
        },
        py::arg("logits"), py::arg("labels"), py::arg("ignore_label") = kIgnoreLabel);

    m.def("poly_lr", &poly_lr, py::arg("base_lr"), py::arg("iter"), py::arg("max_iter"), py::arg("power") = 0.9,
          py::arg("period") = 10);
    m.def("compound_lr", &compound_lr, py::arg("base_lr"), py::arg("iter"), py::arg("max_iter"),
          py::arg("power") = 0.9, py::arg("period") = 10);

    m.def(
        "compute_metrics",
        [](const py::array_t<int64_t, py::array::c_style | py::array::forcecast>& counts) {
            if (counts.ndim() != 2 || counts.shape(0) != counts.shape(1)) {
                throw ShapeError("confusion matrix must be square");
            }
            ConfusionMatrix cm(static_cast<int>(counts.shape(0)));
            std::copy(counts.data(), counts.data() + counts.size(), cm.counts.data());
            const MetricsReport rep = compute_metrics(cm);
            py::dict d;
            d["acc"] = rep.acc;
            d["macc"] = rep.macc;
            d["miou"] = rep.miou;
            d["fwiou"] = rep.fwiou;
            py::list ious;
            for (size_t i = 0; i < rep.per_class_iou.size(); ++i) {
                if (rep.class_present[i]) {
                    ious.append(rep.per_class_iou[i]);
                } else {
                    ious.append(py::none());
                }
            }
            d["per_class_iou"] = ious;
            return d;
        },
        py::arg("counts"));

    m.def(
        "rf_trace",
        [](const DoubleArray& depth, const std::optional<py::array_t<bool>>& valid, int levels, int64_t y, int64_t x,
           const SimilaritySpec& sim) {
            return array_from(rf_trace(depth_from(depth, valid), levels, y, x, sim));
        },
        py::arg("depth"), py::arg("valid") = std::nullopt, py::arg("levels") = 3, py::arg("y") = 0, py::arg("x") = 0,
        py::arg("sim") = SimilaritySpec::exponential());

    m.def(
        "generate_dataset",
        [](const std::string& out_dir, int images, int size, int classes, int shapes, bool ambiguous, double noise,
           double depth_noise, double hole_prob, uint64_t seed) {
            DatasetSpec spec;
            spec.num_images = images;
            spec.height = spec.width = size;
            spec.num_classes = classes;
            spec.shapes_per_image = shapes;
            spec.color_ambiguity = ambiguous;
            spec.noise_sigma = noise;
            spec.depth_noise_sigma = depth_noise;
            spec.hole_prob = hole_prob;
            spec.seed = seed;
            write_dataset(out_dir, generate(spec));
        },
        py::arg("out_dir"), py::arg("images") = 200, py::arg("size") = 64, py::arg("classes") = 4,
        py::arg("shapes") = 6, py::arg("ambiguous") = true, py::arg("noise") = 0.02, py::arg("depth_noise") = 0.0,
        py::arg("hole_prob") = 0.0, py::arg("seed") = 42);
}
