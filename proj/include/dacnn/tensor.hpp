#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include "dacnn/errors.hpp"

namespace dacnn {

// Dense n-dimensional array of doubles, strictly row-major:
// index(i0,...,ik) = ((i0*d1 + i1)*d2 + ...) + ik.
// Tensors returned from library operations are treated as immutable; mutation
// happens only while an operation constructs its output.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape, double fill = 0.0);

    static Tensor full(std::vector<int64_t> shape, double value);

    int ndim() const { return static_cast<int>(shape_.size()); }
    int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    int64_t index(std::initializer_list<int64_t> idx) const;
    double at(std::initializer_list<int64_t> idx) const { return data_[static_cast<size_t>(index(idx))]; }
    double& at(std::initializer_list<int64_t> idx) { return data_[static_cast<size_t>(index(idx))]; }

    double operator[](int64_t flat) const { return data_[static_cast<size_t>(flat)]; }
    double& operator[](int64_t flat) { return data_[static_cast<size_t>(flat)]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

  private:
    std::vector<int64_t> shape_;
    std::vector<double> data_;
};

// splitmix64: 64-bit state, documented in Vigna's "Further scramblings of
// Marsaglia's xorshift generators". Identical seed gives a bit-identical
// sequence within one build.
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64();
    // Uniform in [0, 1), 53-bit resolution.
    double next_double();
    // Uniform in [lo, hi); the upper bound is enforced even under rounding.
    double uniform(double lo, double hi);
    // Standard normal via Box-Muller.
    double normal(double mean, double sigma);

    uint64_t seed_state() const { return state_; }

  private:
    uint64_t state_ = 0;
};

Tensor tensor_fill(const std::vector<int64_t>& shape, double value);
Tensor tensor_rand_uniform(Rng& rng, const std::vector<int64_t>& shape, double lo, double hi);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
double reduce_sum(const Tensor& a);

}  // namespace dacnn
