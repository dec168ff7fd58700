#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace revnmr {

/// Dense tensor shape, rank 0..4. Rank-3 data uses (channels, height, width)
/// ordering; rank-4 kernels use (out, in, kh, kw).
class Shape {
public:
    Shape() = default;

    Shape(std::initializer_list<int> dims) {
        if (dims.size() > 4) throw std::invalid_argument("Shape: rank > 4 not supported");
        for (int d : dims) {
            if (d <= 0) throw std::invalid_argument("Shape: non-positive extent");
            dims_[rank_++] = d;
        }
    }

    explicit Shape(const std::vector<int>& dims) {
        if (dims.size() > 4) throw std::invalid_argument("Shape: rank > 4 not supported");
        for (int d : dims) {
            if (d <= 0) throw std::invalid_argument("Shape: non-positive extent");
            dims_[rank_++] = d;
        }
    }

    int rank() const { return rank_; }

    int dim(int i) const {
        if (i < 0 || i >= rank_) throw std::out_of_range("Shape: axis out of range");
        return dims_[i];
    }

    int64_t numel() const {
        int64_t n = 1;
        for (int i = 0; i < rank_; ++i) n *= dims_[i];
        return n;
    }

    bool operator==(const Shape& o) const {
        if (rank_ != o.rank_) return false;
        for (int i = 0; i < rank_; ++i)
            if (dims_[i] != o.dims_[i]) return false;
        return true;
    }
    bool operator!=(const Shape& o) const { return !(*this == o); }

    std::string str() const {
        std::string s = "[";
        for (int i = 0; i < rank_; ++i) {
            if (i) s += ",";
            s += std::to_string(dims_[i]);
        }
        return s + "]";
    }

private:
    std::array<int, 4> dims_{1, 1, 1, 1};
    int rank_ = 0;
};

/// Row-major dense tensor over T (float for the engine, double for gradient
/// checks). Value semantics; data length always equals shape().numel().
template <class T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T(0))
        : shape_(shape), data_(static_cast<size_t>(shape.numel()), fill) {}

    static Tensor from(Shape shape, std::vector<T> data) {
        if (static_cast<int64_t>(data.size()) != shape.numel())
            throw std::invalid_argument("Tensor: data length " + std::to_string(data.size()) +
                                        " does not match shape " + shape.str());
        Tensor t;
        t.shape_ = shape;
        t.data_ = std::move(data);
        return t;
    }

    const Shape& shape() const { return shape_; }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // rank-3 (c,h,w) access
    T& at(int c, int h, int w) { return data_[static_cast<size_t>((c * shape_.dim(1) + h) * shape_.dim(2) + w)]; }
    const T& at(int c, int h, int w) const {
        return data_[static_cast<size_t>((c * shape_.dim(1) + h) * shape_.dim(2) + w)];
    }

    // rank-4 (o,c,kh,kw) access
    T& at4(int o, int c, int kh, int kw) {
        return data_[static_cast<size_t>(((o * shape_.dim(1) + c) * shape_.dim(2) + kh) * shape_.dim(3) + kw)];
    }
    const T& at4(int o, int c, int kh, int kw) const {
        return data_[static_cast<size_t>(((o * shape_.dim(1) + c) * shape_.dim(2) + kh) * shape_.dim(3) + kw)];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        for (T v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    T max_abs() const {
        T m = T(0);
        for (T v : data_) m = std::max(m, static_cast<T>(std::abs(static_cast<double>(v))));
        return m;
    }

    double sum() const {
        double s = 0;
        for (T v : data_) s += static_cast<double>(v);
        return s;
    }

    double l1() const {
        double s = 0;
        for (T v : data_) s += std::abs(static_cast<double>(v));
        return s;
    }

    bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

    template <class U>
    Tensor<U> cast() const {
        std::vector<U> d(data_.size());
        for (size_t i = 0; i < data_.size(); ++i) d[i] = static_cast<U>(data_[i]);
        return Tensor<U>::from(shape_, std::move(d));
    }

private:
    Shape shape_;
    std::vector<T> data_;
};

template <class T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("max_abs_diff: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    double m = 0;
    for (int64_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

template <class T>
double mean_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("mean_abs_diff: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    if (a.size() == 0) return 0;
    double s = 0;
    for (int64_t i = 0; i < a.size(); ++i) s += std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
    return s / static_cast<double>(a.size());
}

}  // namespace revnmr
