#include <doctest.h>

#include <cmath>

#include "dacnn/tensor.hpp"

using namespace dacnn;

TEST_CASE("tensor_fill basics") {
    const Tensor zeros = tensor_fill({2, 2}, 0.0);
    for (int64_t i = 0; i < zeros.size(); ++i) CHECK(zeros[i] == 0.0);

    const Tensor single = tensor_fill({1}, 3.5);
    CHECK(single.size() == 1);
    CHECK(single[0] == 3.5);

    const Tensor ones = tensor_fill({2, 3}, 1.0);
    CHECK(ones.size() == 6);
    for (int64_t i = 0; i < 6; ++i) CHECK(ones[i] == 1.0);

    CHECK_THROWS_AS(tensor_fill({0}, 1.0), ShapeError);
    CHECK_THROWS_AS(tensor_fill({2, -1}, 1.0), ShapeError);
    CHECK_THROWS_AS(tensor_fill({}, 1.0), ShapeError);
}

TEST_CASE("rand uniform determinism and range") {
    Rng a(1), b(1);
    const Tensor ta = tensor_rand_uniform(a, {4}, 0.0, 1.0);
    const Tensor tb = tensor_rand_uniform(b, {4}, 0.0, 1.0);
    for (int64_t i = 0; i < 4; ++i) CHECK(ta[i] == tb[i]);

    Rng c(1);
    const Tensor big = tensor_rand_uniform(c, {1000}, 0.0, 1.0);
    double mean = 0.0;
    for (int64_t i = 0; i < big.size(); ++i) {
        CHECK(big[i] >= 0.0);
        CHECK(big[i] < 1.0);
        mean += big[i];
    }
    mean /= 1000.0;
    CHECK(std::fabs(mean - 0.5) < 0.05);

    Rng d(2);
    const Tensor narrow = tensor_rand_uniform(d, {4}, 2.0, 2.0001);
    for (int64_t i = 0; i < 4; ++i) {
        CHECK(narrow[i] >= 2.0);
        CHECK(narrow[i] < 2.0001);
    }

    Rng e(3);
    CHECK_THROWS_AS(tensor_rand_uniform(e, {4}, 1.0, 1.0), ArgumentError);
    CHECK_THROWS_AS(tensor_rand_uniform(e, {4}, 2.0, 1.0), ArgumentError);
}

TEST_CASE("elementwise ops and reduce_sum") {
    Tensor a({2});
    a[0] = 1.0;
    a[1] = 2.0;
    Tensor b({2});
    b[0] = 3.0;
    b[1] = 4.0;

    const Tensor sum = add(a, b);
    CHECK(sum[0] == 4.0);
    CHECK(sum[1] == 6.0);

    const Tensor diff = sub(b, a);
    CHECK(diff[0] == 2.0);
    CHECK(diff[1] == 2.0);

    Tensor z({2});
    const Tensor prod = mul(a, z);
    CHECK(prod[0] == 0.0);
    CHECK(prod[1] == 0.0);

    Tensor m({2, 2});
    m[0] = 1.0;
    m[1] = 2.0;
    m[2] = 3.0;
    m[3] = 4.0;
    CHECK(reduce_sum(m) == 10.0);

    Tensor wrong({3});
    CHECK_THROWS_AS(add(a, wrong), ShapeError);
    CHECK_THROWS_AS(mul(a, wrong), ShapeError);
}

TEST_CASE("row-major round trip over random shapes") {
    Rng rng(99);
    for (int trial = 0; trial < 40; ++trial) {
        const int ndim = 1 + static_cast<int>(rng.next_u64() % 4);
        std::vector<int64_t> shape;
        for (int d = 0; d < ndim; ++d) shape.push_back(1 + static_cast<int64_t>(rng.next_u64() % 5));
        Tensor t(shape);

        // fill by multi-index, verify row-major flat order
        std::vector<int64_t> idx(static_cast<size_t>(ndim), 0);
        int64_t flat = 0;
        while (true) {
            const double v = rng.next_double();
            switch (ndim) {
                case 1: t.at({idx[0]}) = v; break;
                case 2: t.at({idx[0], idx[1]}) = v; break;
                case 3: t.at({idx[0], idx[1], idx[2]}) = v; break;
                default: t.at({idx[0], idx[1], idx[2], idx[3]}) = v; break;
            }
            CHECK(t[flat] == v);
            ++flat;
            int d = ndim - 1;
            while (d >= 0 && ++idx[static_cast<size_t>(d)] == shape[static_cast<size_t>(d)]) {
                idx[static_cast<size_t>(d)] = 0;
                --d;
            }
            if (d < 0) break;
        }
        CHECK(flat == t.size());
    }
}

TEST_CASE("rng reproducibility across value types") {
    Rng a(1234), b(1234);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }
    Rng c(1234), d(4321);
    bool any_diff = false;
    for (int i = 0; i < 10; ++i) any_diff = any_diff || (c.next_u64() != d.next_u64());
    CHECK(any_diff);
}

TEST_CASE("index validation") {
    Tensor t({2, 3});
    CHECK_THROWS_AS(t.at({2, 0}), ShapeError);
    CHECK_THROWS_AS(t.at({0, 3}), ShapeError);
    CHECK_THROWS_AS(t.at({0}), ShapeError);
    CHECK(t.index({1, 2}) == 5);
}
