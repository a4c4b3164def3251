#include <doctest.h>

#include <cmath>

#include "dacnn/trace.hpp"

using namespace dacnn;

TEST_CASE("constant depth, one level: uniform 3x3 neighborhood") {
    DepthMap depth(7, 7, 2.0);
    const Tensor trace = rf_trace(depth, 1, 3, 3, SimilaritySpec::exponential(8.3));
    REQUIRE(trace.shape() == std::vector<int64_t>{7, 7});
    for (int64_t y = 0; y < 7; ++y) {
        for (int64_t x = 0; x < 7; ++x) {
            const bool inside = std::abs(y - 3) <= 1 && std::abs(x - 3) <= 1;
            CHECK(trace.at({y, x}) == (inside ? 1.0 : 0.0));
        }
    }
}

TEST_CASE("constant depth, two levels: path-count pattern") {
    // independent oracle: enumerate all two-hop offset paths on the grid
    int64_t counts[5][5] = {};
    for (int dy1 = -1; dy1 <= 1; ++dy1) {
        for (int dx1 = -1; dx1 <= 1; ++dx1) {
            for (int dy2 = -1; dy2 <= 1; ++dy2) {
                for (int dx2 = -1; dx2 <= 1; ++dx2) {
                    ++counts[2 + dy1 + dy2][2 + dx1 + dx2];
                }
            }
        }
    }
    CHECK(counts[2][2] == 9);  // the center collects nine two-hop paths

    DepthMap depth(11, 11, 1.0);
    const Tensor trace = rf_trace(depth, 2, 5, 5, SimilaritySpec::exponential(8.3));
    for (int64_t y = 0; y < 11; ++y) {
        for (int64_t x = 0; x < 11; ++x) {
            const int64_t dy = y - 5, dx = x - 5;
            const double expected =
                (std::abs(dy) <= 2 && std::abs(dx) <= 2) ? static_cast<double>(counts[2 + dy][2 + dx]) : 0.0;
            CHECK(trace.at({y, x}) == doctest::Approx(expected).epsilon(1e-12));
        }
    }
}

TEST_CASE("depth step: across-edge pixels get strictly lower weight") {
    DepthMap depth(9, 9);
    for (int64_t y = 0; y < 9; ++y) {
        for (int64_t x = 0; x < 9; ++x) depth.set(y, x, x < 5 ? 1.0 : 2.0);
    }
    const Tensor trace = rf_trace(depth, 1, 4, 4, SimilaritySpec::exponential(8.3));
    // (4,3) sits in the center's own region, (4,5) across the step, both at
    // grid distance 1
    CHECK(trace.at({4, 3}) == 1.0);
    CHECK(trace.at({4, 5}) < trace.at({4, 3}));
    CHECK(trace.at({4, 5}) == doctest::Approx(std::exp(-8.3)).epsilon(1e-12));

    // monotone in stack depth: three levels keep the asymmetry
    const Tensor deep = rf_trace(depth, 3, 4, 4, SimilaritySpec::exponential(8.3));
    double own = 0.0, far = 0.0;
    for (int64_t y = 0; y < 9; ++y) {
        for (int64_t x = 0; x < 5; ++x) own += deep.at({y, x});
        for (int64_t x = 5; x < 9; ++x) far += deep.at({y, x});
    }
    CHECK(far < own);
}

TEST_CASE("trace argument validation") {
    DepthMap depth(5, 5, 1.0);
    CHECK_THROWS_AS(rf_trace(depth, 0, 2, 2, SimilaritySpec::exponential(8.3)), ArgumentError);
    CHECK_THROWS_AS(rf_trace(depth, 1, 5, 2, SimilaritySpec::exponential(8.3)), ArgumentError);
    CHECK_THROWS_AS(rf_trace(depth, 1, 2, -1, SimilaritySpec::exponential(8.3)), ArgumentError);

    Tensor bad_profile({3, 3}, -1.0);
    CHECK_THROWS_AS(rf_trace(depth, 1, 2, 2, SimilaritySpec::exponential(8.3), &bad_profile), ArgumentError);
    Tensor wrong_shape({2, 2}, 1.0);
    CHECK_THROWS_AS(rf_trace(depth, 1, 2, 2, SimilaritySpec::exponential(8.3), &wrong_shape), ArgumentError);
}

TEST_CASE("kernel profile reweights the trace") {
    DepthMap depth(7, 7, 1.0);
    Tensor profile({3, 3}, 0.0);
    profile.at({1, 1}) = 2.0;  // only the center tap
    const Tensor trace = rf_trace(depth, 2, 3, 3, SimilaritySpec::exponential(8.3), &profile);
    CHECK(trace.at({3, 3}) == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(trace.at({3, 4}) == 0.0);
}
