#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dbdt {

// Bad input: schema, CSV content, flags, model files. CLI maps to exit code 2.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite loss or gradient during training. CLI maps to exit code 1.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Dense row-major matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

// Features plus {-1,+1} labels for one mini-batch or evaluation set.
struct Batch {
    Matrix features;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
};

inline double logistic(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

}  // namespace dbdt
