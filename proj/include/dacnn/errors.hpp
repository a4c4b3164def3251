#pragma once

#include <stdexcept>
#include <string>

namespace dacnn {

// Error taxonomy used across the library. The CLI maps categories to exit
// codes: usage/argument -> 2, data/format/shape/spec/state/graph -> 3,
// numerical-check failures -> 4.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error("shape error: " + msg) {}
};

struct ArgumentError : Error {
    explicit ArgumentError(const std::string& msg) : Error("argument error: " + msg) {}
};

struct DataError : Error {
    explicit DataError(const std::string& msg) : Error("data error: " + msg) {}
};

struct FormatError : Error {
    explicit FormatError(const std::string& msg) : Error("format error: " + msg) {}
};

struct SpecError : Error {
    explicit SpecError(const std::string& msg) : Error("spec error: " + msg) {}
};

struct StateError : Error {
    explicit StateError(const std::string& msg) : Error("state error: " + msg) {}
};

struct GraphError : Error {
    explicit GraphError(const std::string& msg) : Error("graph error: " + msg) {}
};

struct MetricError : Error {
    explicit MetricError(const std::string& msg) : Error("undefined-metric error: " + msg) {}
};

struct NumericalError : Error {
    explicit NumericalError(const std::string& msg) : Error("numerical-check failure: " + msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error("io error: " + msg) {}
};

}  // namespace dacnn
