#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "tanklab/errors.hpp"

namespace tanklab::nn {

/// Dense 2-D tensor of doubles, row-major. Vectors are 1xN or Nx1, scalars
/// 1x1. All learners in this project operate on (batch x feature) matrices,
/// so two axes are enough.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Tensor scalar(double v) {
        Tensor t(1, 1);
        t.data_[0] = v;
        return t;
    }

    static Tensor row(std::initializer_list<double> vals) {
        Tensor t(1, vals.size());
        std::size_t i = 0;
        for (double v : vals) t.data_[i++] = v;
        return t;
    }

    static Tensor from_rows(std::size_t rows, std::size_t cols, std::vector<double> vals) {
        if (vals.size() != rows * cols)
            throw ShapeError("Tensor::from_rows: value count " + std::to_string(vals.size()) +
                             " != " + std::to_string(rows) + "x" + std::to_string(cols));
        Tensor t;
        t.rows_ = rows;
        t.cols_ = cols;
        t.data_ = std::move(vals);
        return t;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    std::array<std::size_t, 2> shape() const { return {rows_, cols_}; }
    std::string shape_str() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    const std::vector<double>& values() const { return data_; }

    bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    bool empty() const { return data_.empty(); }

    void fill(double v) {
        for (double& x : data_) x = v;
    }

    bool all_finite() const {
        for (double x : data_)
            if (!std::isfinite(x)) return false;
        return true;
    }

    double item() const {
        if (size() != 1) throw ShapeError("Tensor::item on non-scalar " + shape_str());
        return data_[0];
    }

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

}  // namespace tanklab::nn
