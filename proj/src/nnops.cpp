#include "dacnn/nnops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace dacnn {

void ConvSpec::validate() const {
    if (in_channels < 1 || out_channels < 1) throw ShapeError("conv channels must be >= 1");
    if (kernel_h < 1 || kernel_w < 1) throw ShapeError("conv kernel dims must be >= 1");
    if (stride < 1) throw ShapeError("conv stride must be >= 1");
    if (padding < 0) throw ShapeError("conv padding must be >= 0");
    if (dilation < 1) throw ShapeError("conv dilation must be >= 1");
}

void ConvSpec::validate_input(const Tensor& x) const {
    if (x.ndim() != 3) throw ShapeError("conv input must be rank 3 [c,h,w]");
    if (x.dim(0) != in_channels) {
        throw ShapeError("conv input has " + std::to_string(x.dim(0)) + " channels, spec expects " +
                         std::to_string(in_channels));
    }
    if (out_size(x.dim(1), kernel_h) < 1 || out_size(x.dim(2), kernel_w) < 1) {
        throw ShapeError("conv output size would be < 1");
    }
}

ConvKernel ConvKernel::zeros(const ConvSpec& spec) {
    ConvKernel k;
    k.weights = Tensor({spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w});
    if (spec.has_bias) k.bias = Tensor({spec.out_channels});
    return k;
}

void ConvKernel::validate(const ConvSpec& spec) const {
    const std::vector<int64_t> want{spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w};
    if (weights.shape() != want) throw ShapeError("conv kernel weights do not match spec");
    if (spec.has_bias != bias.has_value()) throw ShapeError("conv kernel bias presence does not match spec");
    if (bias && bias->shape() != std::vector<int64_t>{spec.out_channels}) {
        throw ShapeError("conv bias shape must be [out_channels]");
    }
}

void PoolSpec::validate() const {
    if (kernel_h < 1 || kernel_w < 1) throw ShapeError("pool kernel dims must be >= 1");
    if (stride < 1) throw ShapeError("pool stride must be >= 1");
    if (padding < 0) throw ShapeError("pool padding must be >= 0");
    if (padding >= kernel_h || padding >= kernel_w) {
        // keeps every window at least partially in bounds
        throw ShapeError("pool padding must be < kernel size");
    }
}

namespace {

// Similarity without per-call spec validation; depths assumed valid.
inline double fd_eval(const SimilaritySpec& sim, double d0, double d1) {
    double diff = std::fabs(d0 - d1);
    if (sim.kind == SimilarityKind::Exponential) return std::exp(-sim.alpha * diff);
    return diff >= sim.threshold ? 0.0 : 1.0;  // Clip
}

// Per-tap F_D for one window. Out-of-bounds or missing samples pair as
// "matching" (F_D = 1); a missing/out-of-bounds center makes the whole
// window neutral.
inline void fill_fd_window(const DepthMap& depth, const SimilaritySpec& sim, int64_t y0, int64_t x0, int64_t kh,
                           int64_t kw, int64_t dil, double* fd) {
    const int64_t h = depth.height;
    const int64_t w = depth.width;
    const int64_t cy = y0 + dil * ((kh - 1) / 2);
    const int64_t cx = x0 + dil * ((kw - 1) / 2);
    const int64_t taps = kh * kw;
    if (cy < 0 || cy >= h || cx < 0 || cx >= w || !depth.valid_at(cy, cx)) {
        for (int64_t t = 0; t < taps; ++t) fd[t] = 1.0;
        return;
    }
    const double d0 = depth.depth_at(cy, cx);
    int64_t t = 0;
    for (int64_t r = 0; r < kh; ++r) {
        const int64_t iy = y0 + dil * r;
        for (int64_t c = 0; c < kw; ++c, ++t) {
            const int64_t ix = x0 + dil * c;
            if (iy < 0 || iy >= h || ix < 0 || ix >= w || !depth.valid_at(iy, ix)) {
                fd[t] = 1.0;
            } else {
                fd[t] = fd_eval(sim, d0, depth.depth_at(iy, ix));
            }
        }
    }
}

void check_depth_matches(const DepthMap& depth, const Tensor& x) {
    if (depth.height != x.dim(1) || depth.width != x.dim(2)) {
        throw ShapeError("depth map " + std::to_string(depth.height) + "x" + std::to_string(depth.width) +
                         " does not match feature resolution " + std::to_string(x.dim(1)) + "x" +
                         std::to_string(x.dim(2)));
    }
}

void check_grad_y(const Tensor& grad_y, int64_t co, int64_t oh, int64_t ow) {
    if (grad_y.shape() != std::vector<int64_t>{co, oh, ow}) {
        throw ShapeError("grad_y does not match forward output shape");
    }
}

// Inner product with a fixed, documented summation order: four running sums
// over k = 0,4,8,... / 1,5,9,... / 2,... / 3,..., combined as
// (s0+s1)+(s2+s3). The order is identical for the standard and depth-aware
// paths, which share this engine.
inline double dot_k(const double* a, const double* b, int64_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    int64_t k = 0;
    for (; k + 4 <= n; k += 4) {
        s0 += a[k] * b[k];
        s1 += a[k + 1] * b[k + 1];
        s2 += a[k + 2] * b[k + 2];
        s3 += a[k + 3] * b[k + 3];
    }
    for (; k < n; ++k) s0 += a[k] * b[k];
    return (s0 + s1) + (s2 + s3);
}

// Fills one output row of the patch matrix: col[ox*K + k] with
// k = (ci*kh + r)*kw + c, scaled by F_D when `fd_row` is non-null.
// `fd_row` must hold kh*kw entries per output position.
void fill_col_row(const Tensor& x, const ConvSpec& s, int64_t oy, int64_t ow, const double* fd_row, double* col) {
    const int64_t ci = s.in_channels, kh = s.kernel_h, kw = s.kernel_w, dil = s.dilation;
    const int64_t h = x.dim(1), w = x.dim(2);
    const int64_t K = ci * kh * kw;
    const int64_t y0 = oy * s.stride - s.padding;
    const double* xd = x.data();
    for (int64_t ox = 0; ox < ow; ++ox) {
        const int64_t x0 = ox * s.stride - s.padding;
        double* dst = col + ox * K;
        const double* fd = fd_row ? fd_row + ox * kh * kw : nullptr;
        int64_t k = 0;
        for (int64_t c_in = 0; c_in < ci; ++c_in) {
            const double* xc = xd + c_in * h * w;
            for (int64_t r = 0; r < kh; ++r) {
                const int64_t iy = y0 + dil * r;
                const bool row_in = iy >= 0 && iy < h;
                for (int64_t c = 0; c < kw; ++c, ++k) {
                    const int64_t ix = x0 + dil * c;
                    if (!row_in || ix < 0 || ix >= w) {
                        dst[k] = 0.0;  // zero padding
                    } else if (fd) {
                        dst[k] = xc[iy * w + ix] * fd[r * kw + c];
                    } else {
                        dst[k] = xc[iy * w + ix];
                    }
                }
            }
        }
    }
}

Tensor conv_engine_forward(const ConvSpec& s, const ConvKernel& kernel, const Tensor& x, const DepthMap* depth,
                           const SimilaritySpec& sim) {
    s.validate();
    s.validate_input(x);
    kernel.validate(s);
    sim.validate();
    if (depth) check_depth_matches(*depth, x);

    const int64_t h = x.dim(1), w = x.dim(2);
    const int64_t oh = s.out_size(h, s.kernel_h), ow = s.out_size(w, s.kernel_w);
    const int64_t co = s.out_channels;
    const int64_t K = s.in_channels * s.kernel_h * s.kernel_w;
    const bool use_fd = depth != nullptr && sim.kind != SimilarityKind::ConstantOne;

    Tensor y({co, oh, ow});
    double* yd = y.data();
    const double* W = kernel.weights.data();
    const double* bias = kernel.bias ? kernel.bias->data() : nullptr;

    std::vector<double> col(static_cast<size_t>(ow * K));
    std::vector<double> fd_row;
    if (use_fd) fd_row.resize(static_cast<size_t>(ow * s.kernel_h * s.kernel_w));

    for (int64_t oy = 0; oy < oh; ++oy) {
        if (use_fd) {
            const int64_t y0 = oy * s.stride - s.padding;
            for (int64_t ox = 0; ox < ow; ++ox) {
                fill_fd_window(*depth, sim, y0, ox * s.stride - s.padding, s.kernel_h, s.kernel_w, s.dilation,
                               fd_row.data() + ox * s.kernel_h * s.kernel_w);
            }
        }
        fill_col_row(x, s, oy, ow, use_fd ? fd_row.data() : nullptr, col.data());
        for (int64_t ox = 0; ox < ow; ++ox) {
            const double* patch = col.data() + ox * K;
            for (int64_t o = 0; o < co; ++o) {
                double acc = dot_k(W + o * K, patch, K);
                if (bias) acc += bias[o];
                yd[(o * oh + oy) * ow + ox] = acc;
            }
        }
    }
    return y;
}

ConvGrads conv_engine_backward(const ConvSpec& s, const ConvKernel& kernel, const Tensor& x, const DepthMap* depth,
                               const SimilaritySpec& sim, const Tensor& grad_y) {
    s.validate();
    s.validate_input(x);
    kernel.validate(s);
    sim.validate();
    if (depth) check_depth_matches(*depth, x);

    const int64_t h = x.dim(1), w = x.dim(2);
    const int64_t oh = s.out_size(h, s.kernel_h), ow = s.out_size(w, s.kernel_w);
    const int64_t co = s.out_channels;
    const int64_t kh = s.kernel_h, kw = s.kernel_w, dil = s.dilation;
    const int64_t K = s.in_channels * kh * kw;
    check_grad_y(grad_y, co, oh, ow);
    const bool use_fd = depth != nullptr && sim.kind != SimilarityKind::ConstantOne;

    ConvGrads grads;
    grads.grad_x = Tensor(x.shape());
    grads.grad_w = Tensor(kernel.weights.shape());
    if (kernel.bias) grads.grad_bias = Tensor({co});

    double* gx = grads.grad_x.data();
    double* gw = grads.grad_w.data();
    double* gb = grads.grad_bias ? grads.grad_bias->data() : nullptr;
    const double* gy = grad_y.data();
    const double* W = kernel.weights.data();

    std::vector<double> col(static_cast<size_t>(ow * K));
    std::vector<double> fd_row;
    if (use_fd) fd_row.resize(static_cast<size_t>(ow * kh * kw));
    std::vector<double> gcol(static_cast<size_t>(K));

    for (int64_t oy = 0; oy < oh; ++oy) {
        const int64_t y0 = oy * s.stride - s.padding;
        if (use_fd) {
            for (int64_t ox = 0; ox < ow; ++ox) {
                fill_fd_window(*depth, sim, y0, ox * s.stride - s.padding, kh, kw, dil,
                               fd_row.data() + ox * kh * kw);
            }
        }
        fill_col_row(x, s, oy, ow, use_fd ? fd_row.data() : nullptr, col.data());

        // grad_w[o][k] += gy[o][p] * (F_D-scaled patch)[p][k], p ordered (oy, ox)
        for (int64_t o = 0; o < co; ++o) {
            const double* grow = gy + (o * oh + oy) * ow;
            double* gwrow = gw + o * K;
            for (int64_t ox = 0; ox < ow; ++ox) {
                const double g = grow[ox];
                if (g == 0.0) continue;
                const double* patch = col.data() + ox * K;
                for (int64_t k = 0; k < K; ++k) gwrow[k] += g * patch[k];
            }
            if (gb) {
                double acc = gb[o];
                for (int64_t ox = 0; ox < ow; ++ox) acc += grow[ox];
                gb[o] = acc;
            }
        }

        // grad_x(q) += w(p_n) * F_D(p_0, q) * gy(p_0)
        for (int64_t ox = 0; ox < ow; ++ox) {
            std::fill(gcol.begin(), gcol.end(), 0.0);
            bool any = false;
            for (int64_t o = 0; o < co; ++o) {
                const double g = gy[(o * oh + oy) * ow + ox];
                if (g == 0.0) continue;
                any = true;
                const double* wrow = W + o * K;
                for (int64_t k = 0; k < K; ++k) gcol[k] += wrow[k] * g;
            }
            if (!any) continue;
            const int64_t x0 = ox * s.stride - s.padding;
            const double* fd = use_fd ? fd_row.data() + ox * kh * kw : nullptr;
            int64_t k = 0;
            for (int64_t c_in = 0; c_in < s.in_channels; ++c_in) {
                double* gxc = gx + c_in * h * w;
                for (int64_t r = 0; r < kh; ++r) {
                    const int64_t iy = y0 + dil * r;
                    const bool row_in = iy >= 0 && iy < h;
                    for (int64_t c = 0; c < kw; ++c, ++k) {
                        const int64_t ix = x0 + dil * c;
                        if (!row_in || ix < 0 || ix >= w) continue;
                        const double f = fd ? fd[r * kw + c] : 1.0;
                        gxc[iy * w + ix] += gcol[k] * f;
                    }
                }
            }
        }
    }
    return grads;
}

void validate_pool_input(const PoolSpec& s, const Tensor& x) {
    s.validate();
    if (x.ndim() != 3) throw ShapeError("pool input must be rank 3 [c,h,w]");
    if (s.out_size(x.dim(1), s.kernel_h) < 1 || s.out_size(x.dim(2), s.kernel_w) < 1) {
        throw ShapeError("pool output size would be < 1");
    }
}

Tensor avg_engine_forward(const PoolSpec& s, const Tensor& x, const DepthMap* depth, const SimilaritySpec& sim) {
    validate_pool_input(s, x);
    sim.validate();
    if (depth) check_depth_matches(*depth, x);
    const int64_t ch = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int64_t kh = s.kernel_h, kw = s.kernel_w;
    const int64_t oh = s.out_size(h, kh), ow = s.out_size(w, kw);
    const bool use_fd = depth != nullptr && sim.kind != SimilarityKind::ConstantOne;

    Tensor y({ch, oh, ow});
    double* yd = y.data();
    std::vector<double> fd(static_cast<size_t>(kh * kw), 1.0);

    for (int64_t oy = 0; oy < oh; ++oy) {
        const int64_t y0 = oy * s.stride - s.padding;
        for (int64_t ox = 0; ox < ow; ++ox) {
            const int64_t x0 = ox * s.stride - s.padding;
            if (use_fd) fill_fd_window(*depth, sim, y0, x0, kh, kw, 1, fd.data());
            for (int64_t c_in = 0; c_in < ch; ++c_in) {
                const double* xc = x.data() + c_in * h * w;
                double num = 0.0, den = 0.0;
                for (int64_t r = 0; r < kh; ++r) {
                    const int64_t iy = y0 + r;
                    if (iy < 0 || iy >= h) continue;  // count-exclude-pad
                    for (int64_t c = 0; c < kw; ++c) {
                        const int64_t ix = x0 + c;
                        if (ix < 0 || ix >= w) continue;
                        const double f = fd[r * kw + c];
                        num += f * xc[iy * w + ix];
                        den += f;
                    }
                }
                yd[(c_in * oh + oy) * ow + ox] = num / den;
            }
        }
    }
    return y;
}

Tensor avg_engine_backward(const PoolSpec& s, const Tensor& x, const DepthMap* depth, const SimilaritySpec& sim,
                           const Tensor& grad_y) {
    validate_pool_input(s, x);
    sim.validate();
    if (depth) check_depth_matches(*depth, x);
    const int64_t ch = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int64_t kh = s.kernel_h, kw = s.kernel_w;
    const int64_t oh = s.out_size(h, kh), ow = s.out_size(w, kw);
    check_grad_y(grad_y, ch, oh, ow);
    const bool use_fd = depth != nullptr && sim.kind != SimilarityKind::ConstantOne;

    Tensor grad_x(x.shape());
    double* gx = grad_x.data();
    const double* gy = grad_y.data();
    std::vector<double> fd(static_cast<size_t>(kh * kw), 1.0);

    for (int64_t oy = 0; oy < oh; ++oy) {
        const int64_t y0 = oy * s.stride - s.padding;
        for (int64_t ox = 0; ox < ow; ++ox) {
            const int64_t x0 = ox * s.stride - s.padding;
            if (use_fd) fill_fd_window(*depth, sim, y0, x0, kh, kw, 1, fd.data());
            double den = 0.0;
            for (int64_t r = 0; r < kh; ++r) {
                const int64_t iy = y0 + r;
                if (iy < 0 || iy >= h) continue;
                for (int64_t c = 0; c < kw; ++c) {
                    const int64_t ix = x0 + c;
                    if (ix < 0 || ix >= w) continue;
                    den += fd[r * kw + c];
                }
            }
            for (int64_t c_in = 0; c_in < ch; ++c_in) {
                const double g = gy[(c_in * oh + oy) * ow + ox];
                if (g == 0.0) continue;
                double* gxc = gx + c_in * h * w;
                for (int64_t r = 0; r < kh; ++r) {
                    const int64_t iy = y0 + r;
                    if (iy < 0 || iy >= h) continue;
                    for (int64_t c = 0; c < kw; ++c) {
                        const int64_t ix = x0 + c;
                        if (ix < 0 || ix >= w) continue;
                        gxc[iy * w + ix] += g * fd[r * kw + c] / den;
                    }
                }
            }
        }
    }
    return grad_x;
}

}  // namespace

Tensor conv_forward(const ConvSpec& spec, const ConvKernel& kernel, const Tensor& x) {
    return conv_engine_forward(spec, kernel, x, nullptr, SimilaritySpec::constant_one());
}

ConvGrads conv_backward(const ConvSpec& spec, const ConvKernel& kernel, const Tensor& x, const Tensor& grad_y) {
    return conv_engine_backward(spec, kernel, x, nullptr, SimilaritySpec::constant_one(), grad_y);
}

Tensor depth_conv_forward(const ConvSpec& spec, const ConvKernel& kernel, const Tensor& x, const DepthMap& depth,
                          const SimilaritySpec& sim) {
    return conv_engine_forward(spec, kernel, x, &depth, sim);
}

ConvGrads depth_conv_backward(const ConvSpec& spec, const ConvKernel& kernel, const Tensor& x, const DepthMap& depth,
                              const SimilaritySpec& sim, const Tensor& grad_y) {
    return conv_engine_backward(spec, kernel, x, &depth, sim, grad_y);
}

Tensor avg_pool_forward(const PoolSpec& spec, const Tensor& x) {
    if (spec.mode == PoolMode::GlobalAvg) {
        PoolSpec g = spec;
        g.kernel_h = x.dim(1);
        g.kernel_w = x.dim(2);
        g.stride = 1;
        g.padding = 0;
        return avg_engine_forward(g, x, nullptr, SimilaritySpec::constant_one());
    }
    return avg_engine_forward(spec, x, nullptr, SimilaritySpec::constant_one());
}

Tensor avg_pool_backward(const PoolSpec& spec, const Tensor& x, const Tensor& grad_y) {
    if (spec.mode == PoolMode::GlobalAvg) {
        PoolSpec g = spec;
        g.kernel_h = x.dim(1);
        g.kernel_w = x.dim(2);
        g.stride = 1;
        g.padding = 0;
        return avg_engine_backward(g, x, nullptr, SimilaritySpec::constant_one(), grad_y);
    }
    return avg_engine_backward(spec, x, nullptr, SimilaritySpec::constant_one(), grad_y);
}

Tensor depth_avg_pool_forward(const PoolSpec& spec, const Tensor& x, const DepthMap& depth,
                              const SimilaritySpec& sim) {
    return avg_engine_forward(spec, x, &depth, sim);
}

Tensor depth_avg_pool_backward(const PoolSpec& spec, const Tensor& x, const DepthMap& depth,
                               const SimilaritySpec& sim, const Tensor& grad_y) {
    return avg_engine_backward(spec, x, &depth, sim, grad_y);
}

MaxPoolResult max_pool_forward(const PoolSpec& spec, const Tensor& x) {
    validate_pool_input(spec, x);
    const int64_t ch = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int64_t kh = spec.kernel_h, kw = spec.kernel_w;
    const int64_t oh = spec.out_size(h, kh), ow = spec.out_size(w, kw);

    MaxPoolResult res;
    res.y = Tensor({ch, oh, ow});
    res.argmax.assign(static_cast<size_t>(ch * oh * ow), -1);
    double* yd = res.y.data();

    for (int64_t c_in = 0; c_in < ch; ++c_in) {
        const double* xc = x.data() + c_in * h * w;
        for (int64_t oy = 0; oy < oh; ++oy) {
            const int64_t y0 = oy * spec.stride - spec.padding;
            for (int64_t ox = 0; ox < ow; ++ox) {
                const int64_t x0 = ox * spec.stride - spec.padding;
                double best = -std::numeric_limits<double>::infinity();
                int64_t best_idx = -1;
                for (int64_t r = 0; r < kh; ++r) {
                    const int64_t iy = y0 + r;
                    if (iy < 0 || iy >= h) continue;
                    for (int64_t c = 0; c < kw; ++c) {
                        const int64_t ix = x0 + c;
                        if (ix < 0 || ix >= w) continue;
                        const double v = xc[iy * w + ix];
                        if (v > best) {  // strict: first occurrence wins ties
                            best = v;
                            best_idx = c_in * h * w + iy * w + ix;
                        }
                    }
                }
                yd[(c_in * oh + oy) * ow + ox] = best;
                res.argmax[static_cast<size_t>((c_in * oh + oy) * ow + ox)] = best_idx;
            }
        }
    }
    return res;
}

Tensor max_pool_backward(const PoolSpec& spec, const Tensor& x, const std::vector<int64_t>& argmax,
                         const Tensor& grad_y) {
    validate_pool_input(spec, x);
    const int64_t ch = x.dim(0);
    const int64_t oh = spec.out_size(x.dim(1), spec.kernel_h), ow = spec.out_size(x.dim(2), spec.kernel_w);
    check_grad_y(grad_y, ch, oh, ow);
    if (static_cast<int64_t>(argmax.size()) != grad_y.size()) {
        throw ShapeError("argmax index count does not match grad_y");
    }
    Tensor grad_x(x.shape());
    for (int64_t i = 0; i < grad_y.size(); ++i) {
        grad_x[argmax[static_cast<size_t>(i)]] += grad_y[i];
    }
    return grad_x;
}

Tensor relu_forward(const Tensor& x) {
    Tensor y(x.shape());
    for (int64_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& grad_y) {
    if (!x.same_shape(grad_y)) throw ShapeError("relu grad_y shape mismatch");
    Tensor gx(x.shape());
    for (int64_t i = 0; i < x.size(); ++i) gx[i] = x[i] > 0.0 ? grad_y[i] : 0.0;
    return gx;
}

Tensor global_pool_concat(const Tensor& x) {
    if (x.ndim() != 3) throw ShapeError("global_pool_concat input must be rank 3 [c,h,w]");
    const int64_t ch = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int64_t hw = h * w;
    Tensor y({2 * ch, h, w});
    double* yd = y.data();
    const double* xd = x.data();
    std::copy(xd, xd + ch * hw, yd);
    for (int64_t c = 0; c < ch; ++c) {
        double sum = 0.0;
        const double* xc = xd + c * hw;
        for (int64_t i = 0; i < hw; ++i) sum += xc[i];
        const double mean = sum / static_cast<double>(hw);
        double* dst = yd + (ch + c) * hw;
        for (int64_t i = 0; i < hw; ++i) dst[i] = mean;
    }
    return y;
}

Tensor global_pool_concat_backward(const Tensor& x, const Tensor& grad_y) {
    const int64_t ch = x.dim(0), h = x.dim(1), w = x.dim(2);
    check_grad_y(grad_y, 2 * ch, h, w);
    const int64_t hw = h * w;
    Tensor gx(x.shape());
    double* gxd = gx.data();
    const double* gyd = grad_y.data();
    std::copy(gyd, gyd + ch * hw, gxd);
    for (int64_t c = 0; c < ch; ++c) {
        double sum = 0.0;
        const double* gtop = gyd + (ch + c) * hw;
        for (int64_t i = 0; i < hw; ++i) sum += gtop[i];
        const double share = sum / static_cast<double>(hw);
        double* dst = gxd + c * hw;
        for (int64_t i = 0; i < hw; ++i) dst[i] += share;
    }
    return gx;
}

Tensor upsample_nearest(const Tensor& x, int64_t out_h, int64_t out_w) {
    if (x.ndim() != 3) throw ShapeError("upsample input must be rank 3 [c,h,w]");
    if (out_h < 1 || out_w < 1) throw ShapeError("upsample target size must be >= 1");
    const int64_t ch = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor y({ch, out_h, out_w});
    for (int64_t c = 0; c < ch; ++c) {
        const double* xc = x.data() + c * h * w;
        double* yc = y.data() + c * out_h * out_w;
        for (int64_t oy = 0; oy < out_h; ++oy) {
            const int64_t iy = oy * h / out_h;
            for (int64_t ox = 0; ox < out_w; ++ox) {
                yc[oy * out_w + ox] = xc[iy * w + ox * w / out_w];
            }
        }
    }
    return y;
}

Tensor upsample_nearest_backward(const Tensor& x, const Tensor& grad_y) {
    if (x.ndim() != 3 || grad_y.ndim() != 3 || grad_y.dim(0) != x.dim(0)) {
        throw ShapeError("upsample backward shape mismatch");
    }
    const int64_t ch = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int64_t out_h = grad_y.dim(1), out_w = grad_y.dim(2);
    Tensor gx(x.shape());
    for (int64_t c = 0; c < ch; ++c) {
        const double* gyc = grad_y.data() + c * out_h * out_w;
        double* gxc = gx.data() + c * h * w;
        for (int64_t oy = 0; oy < out_h; ++oy) {
            const int64_t iy = oy * h / out_h;
            for (int64_t ox = 0; ox < out_w; ++ox) {
                gxc[iy * w + ox * w / out_w] += gyc[oy * out_w + ox];
            }
        }
    }
    return gx;
}

LossResult softmax_cross_entropy(const Tensor& logits, const LabelMap& labels, int ignore_label) {
    if (logits.ndim() != 3) throw ShapeError("logits must be rank 3 [n_C,h,w]");
    const int64_t nc = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
    if (labels.height != h || labels.width != w) throw ShapeError("label map does not match logits resolution");

    LossResult res;
    res.grad_logits = Tensor(logits.shape());
    double* grad = res.grad_logits.data();
    const double* ld = logits.data();
    const int64_t hw = h * w;

    double loss = 0.0;
    int64_t n_valid = 0;
    for (int64_t p = 0; p < hw; ++p) {
        const int32_t label = labels.ids[static_cast<size_t>(p)];
        if (label == ignore_label) continue;
        if (label < 0 || label >= nc) {
            throw DataError("label " + std::to_string(label) + " out of range for " + std::to_string(nc) +
                            " classes");
        }
        double maxv = ld[p];
        for (int64_t c = 1; c < nc; ++c) maxv = std::max(maxv, ld[c * hw + p]);
        double denom = 0.0;
        for (int64_t c = 0; c < nc; ++c) {
            const double e = std::exp(ld[c * hw + p] - maxv);
            grad[c * hw + p] = e;
            denom += e;
        }
        loss -= ld[label * hw + p] - maxv - std::log(denom);
        for (int64_t c = 0; c < nc; ++c) grad[c * hw + p] /= denom;
        grad[label * hw + p] -= 1.0;
        ++n_valid;
    }
    if (n_valid == 0) {
        // grads were never written for ignored pixels, already zero
        res.loss = 0.0;
        return res;
    }
    const double inv = 1.0 / static_cast<double>(n_valid);
    for (int64_t p = 0; p < hw; ++p) {
        if (labels.ids[static_cast<size_t>(p)] == ignore_label) continue;
        for (int64_t c = 0; c < nc; ++c) grad[c * hw + p] *= inv;
    }
    res.loss = loss * inv;
    return res;
}

}  // namespace dacnn
