#include "omniclip/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace omniclip {

std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ']';
    return os.str();
}

std::vector<std::size_t> row_major_strides(const Shape& s) {
    std::vector<std::size_t> st(s.size(), 1);
    for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
    return st;
}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
    if (numel(shape) != data.size())
        throw ShapeError("tensor: " + shape_str(shape) + " cannot hold " + std::to_string(data.size()) + " values");
}

Tensor Tensor::scalar(double v) {
    Tensor t;
    t.data = {v};
    return t;
}

Tensor Tensor::full(Shape s, double v) {
    Tensor t(std::move(s));
    t.fill(v);
    return t;
}

std::size_t Tensor::extent(std::size_t axis) const {
    if (axis >= shape.size()) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
    return shape[axis];
}

static std::size_t flat_offset(const Shape& shape, std::initializer_list<std::size_t> idx) {
    if (idx.size() != shape.size()) throw ShapeError("index rank mismatch for " + shape_str(shape));
    std::size_t off = 0, d = 0;
    auto st = row_major_strides(shape);
    for (std::size_t i : idx) {
        if (i >= shape[d]) throw ShapeError("index out of range for " + shape_str(shape));
        off += i * st[d++];
    }
    return off;
}

double Tensor::at(std::initializer_list<std::size_t> idx) const {
    return data[flat_offset(shape, idx)];
}

double& Tensor::at(std::initializer_list<std::size_t> idx) {
    return data[flat_offset(shape, idx)];
}

void Tensor::fill(double v) {
    for (double& x : data) x = v;
}

void check_finite(const Tensor& t, const char* op) {
    for (double x : t.data) {
        if (!std::isfinite(x)) throw NumericError(std::string(op) + ": non-finite value produced");
    }
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) return false;
    if (a.data.empty()) return b.data.empty();
    return std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

} // namespace omniclip
