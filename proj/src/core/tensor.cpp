#include "tensor.hpp"

#include <cstring>
#include <sstream>

#include "common.hpp"

namespace xreid {

long shape_size(const std::vector<long>& shape) {
    long n = 1;
    for (long d : shape) {
        if (d < 0) fail(Errc::invalid_argument, "negative tensor dimension");
        n *= d;
    }
    return n;
}

std::string shape_str(const std::vector<long>& shape) {
    std::ostringstream ss;
    ss << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) ss << ",";
        ss << shape[i];
    }
    ss << ")";
    return ss.str();
}

Tensor::Tensor(std::vector<long> shape) : shape_(std::move(shape)) {
    size_ = shape_size(shape_);
    data_ = std::shared_ptr<double[]>(new double[static_cast<std::size_t>(size_)]());
}

Tensor Tensor::full(std::vector<long> shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

Tensor Tensor::from(std::vector<long> shape, std::vector<double> values) {
    Tensor t(std::move(shape));
    if (static_cast<long>(values.size()) != t.size_)
        fail(Errc::invalid_argument, "Tensor::from: value count does not match shape");
    std::memcpy(t.data(), values.data(), values.size() * sizeof(double));
    return t;
}

Tensor Tensor::clone() const {
    Tensor t(shape_);
    std::memcpy(t.data(), data(), static_cast<std::size_t>(size_) * sizeof(double));
    return t;
}

Tensor Tensor::reshaped(std::vector<long> new_shape) const {
    if (shape_size(new_shape) != size_)
        fail(Errc::invalid_argument,
             "reshape " + shape_str(shape_) + " -> " + shape_str(new_shape) + " changes size");
    Tensor t;
    t.shape_ = std::move(new_shape);
    t.size_ = size_;
    t.data_ = data_;
    return t;
}

double Tensor::item() const {
    if (size_ != 1) fail(Errc::invalid_argument, "item() on tensor of size " + std::to_string(size_));
    return data_.get()[0];
}

void Tensor::fill(double v) {
    for (long i = 0; i < size_; ++i) data_.get()[i] = v;
}

void Tensor::add_inplace(const Tensor& other) {
    if (!same_shape(other)) fail(Errc::invalid_argument, "add_inplace shape mismatch");
    const double* o = other.data();
    double* d = data();
    for (long i = 0; i < size_; ++i) d[i] += o[i];
}

void Tensor::axpy_inplace(double a, const Tensor& x) {
    if (!same_shape(x)) fail(Errc::invalid_argument, "axpy_inplace shape mismatch");
    const double* o = x.data();
    double* d = data();
    for (long i = 0; i < size_; ++i) d[i] += a * o[i];
}

void Tensor::scale_inplace(double a) {
    double* d = data();
    for (long i = 0; i < size_; ++i) d[i] *= a;
}

}  // namespace xreid
