#pragma once

#include <cstdint>
#include <memory>
#include <vector>

namespace xreid {

// Dense double tensor, row-major, shared storage (clone() for a deep copy).
// Rank is anything up to 4 in practice: (N,C,H,W) images, (N,D) matrices,
// (D) vectors, (1) scalars.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<long> shape);

    static Tensor zeros(std::vector<long> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<long> shape, double v);
    static Tensor from(std::vector<long> shape, std::vector<double> values);
    static Tensor scalar(double v) { return full({1}, v); }

    bool defined() const { return static_cast<bool>(data_); }
    long size() const { return size_; }
    const std::vector<long>& shape() const { return shape_; }
    long dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    int rank() const { return static_cast<int>(shape_.size()); }

    double* data() { return data_.get(); }
    const double* data() const { return data_.get(); }

    double& operator[](long i) { return data_.get()[i]; }
    double operator[](long i) const { return data_.get()[i]; }

    // (n,c,h,w) accessor for rank-4 tensors; no bounds checks beyond debug use
    double& at4(long n, long c, long h, long w) {
        return data_.get()[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    double at4(long n, long c, long h, long w) const {
        return data_.get()[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    double& at2(long r, long c) { return data_.get()[r * shape_[1] + c]; }
    double at2(long r, long c) const { return data_.get()[r * shape_[1] + c]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    Tensor clone() const;
    Tensor reshaped(std::vector<long> new_shape) const;  // shares storage

    double item() const;  // value of a 1-element tensor

    void fill(double v);
    void add_inplace(const Tensor& other);        // this += other
    void axpy_inplace(double a, const Tensor& x); // this += a*x
    void scale_inplace(double a);

private:
    std::vector<long> shape_;
    long size_ = 0;
    std::shared_ptr<double[]> data_;
};

long shape_size(const std::vector<long>& shape);
std::string shape_str(const std::vector<long>& shape);

}  // namespace xreid
