#include "dacnn/tensor.hpp"

#include <cmath>
#include <string>

namespace dacnn {

namespace {

int64_t checked_size(const std::vector<int64_t>& shape) {
    if (shape.empty()) {
        throw ShapeError("tensor shape must be nonempty");
    }
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d < 1) {
            throw ShapeError("tensor dimension must be >= 1, got " + std::to_string(d));
        }
        n *= d;
    }
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<int64_t> shape, double fill) {
    int64_t n = checked_size(shape);
    shape_ = std::move(shape);
    data_.assign(static_cast<size_t>(n), fill);
}

Tensor Tensor::full(std::vector<int64_t> shape, double value) {
    return Tensor(std::move(shape), value);
}

int64_t Tensor::index(std::initializer_list<int64_t> idx) const {
    if (static_cast<int>(idx.size()) != ndim()) {
        throw ShapeError("index rank " + std::to_string(idx.size()) + " does not match tensor rank " +
                         std::to_string(ndim()));
    }
    int64_t flat = 0;
    int i = 0;
    for (int64_t v : idx) {
        int64_t d = shape_[static_cast<size_t>(i)];
        if (v < 0 || v >= d) {
            throw ShapeError("index " + std::to_string(v) + " out of range for dim " + std::to_string(i) +
                             " of size " + std::to_string(d));
        }
        flat = flat * d + v;
        ++i;
    }
    return flat;
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

uint64_t Rng::next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double Rng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    if (!(lo < hi)) {
        throw ArgumentError("uniform bounds require lo < hi");
    }
    double v = lo + next_double() * (hi - lo);
    if (v >= hi) v = std::nextafter(hi, lo);  // rounding can push v onto hi
    return v;
}

double Rng::normal(double mean, double sigma) {
    // Box-Muller; u1 in (0,1] to keep the log finite.
    double u1 = 1.0 - next_double();
    double u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + sigma * r * std::cos(2.0 * M_PI * u2);
}

Tensor tensor_fill(const std::vector<int64_t>& shape, double value) {
    return Tensor(shape, value);
}

Tensor tensor_rand_uniform(Rng& rng, const std::vector<int64_t>& shape, double lo, double hi) {
    if (!(lo < hi)) {
        throw ArgumentError("tensor_rand_uniform requires lo < hi");
    }
    Tensor t(shape);
    double* p = t.data();
    for (int64_t i = 0; i < t.size(); ++i) {
        p[i] = rng.uniform(lo, hi);
    }
    return t;
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": operand shapes differ");
    }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

double reduce_sum(const Tensor& a) {
    double s = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) s += a[i];
    return s;
}

}  // namespace dacnn
