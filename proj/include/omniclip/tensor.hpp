#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "omniclip/common.hpp"

namespace omniclip {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& s);
std::string shape_str(const Shape& s);
std::vector<std::size_t> row_major_strides(const Shape& s);

// Dense row-major tensor of doubles. A default-constructed tensor is
// "undefined" (no storage); a rank-0 tensor holds exactly one value.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), data(numel(shape), 0.0) {}
    Tensor(Shape s, std::vector<double> values);

    static Tensor scalar(double v);
    static Tensor full(Shape s, double v);

    bool defined() const { return !data.empty(); }
    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t extent(std::size_t axis) const;

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    // Multi-index access, for tests and small kernels.
    double at(std::initializer_list<std::size_t> idx) const;
    double& at(std::initializer_list<std::size_t> idx);

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    void fill(double v);
};

// Throws NumericError if any element is NaN/Inf; `op` names the offender.
void check_finite(const Tensor& t, const char* op);

bool bitwise_equal(const Tensor& a, const Tensor& b);

} // namespace omniclip
