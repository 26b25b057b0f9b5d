#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace icnas {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) {
            throw std::invalid_argument("tensor dimensions must be positive");
        }
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// Dense row-major n-dimensional array.
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;
    explicit BasicTensor(Shape shape, T fill = T(0))
        : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}
    BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (shape_numel(shape_) != data_.size()) {
            throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                        " does not match shape " + shape_str(shape_));
        }
    }

    const Shape& shape() const { return shape_; }
    int dim(std::size_t i) const { return shape_.at(i); }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    // NCHW accessor.
    T& at(int n, int c, int h, int w) {
        return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    const T& at(int n, int c, int h, int w) const {
        return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    BasicTensor reshaped(Shape shape) const {
        BasicTensor t;
        if (shape_numel(shape) != data_.size()) {
            throw std::invalid_argument("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
        }
        t.shape_ = std::move(shape);
        t.data_ = data_;
        return t;
    }

    template <typename U>
    BasicTensor<U> cast() const {
        return BasicTensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
    }

    BasicTensor& operator+=(const BasicTensor& o) {
        require_same_shape(o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    bool all_finite() const {
        for (T v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    bool operator==(const BasicTensor& o) const = default;

    void require_same_shape(const BasicTensor& o, const char* what) const {
        if (shape_ != o.shape_) {
            throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_str(shape_) + " vs " +
                                        shape_str(o.shape_));
        }
    }

private:
    Shape shape_;
    std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

}  // namespace icnas
