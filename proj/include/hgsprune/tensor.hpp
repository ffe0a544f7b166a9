#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hgsprune/error.hpp"

namespace hgsp {

/// Dense row-major tensor with value semantics.
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;

    explicit BasicTensor(std::vector<std::size_t> shape, T fill = T{})
        : shape_(std::move(shape)), data_(count(shape_), fill) {}

    BasicTensor(std::vector<std::size_t> shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != count(shape_)) {
            throw StructuralError("tensor data size " + std::to_string(data_.size()) +
                                  " does not match shape " + shape_string());
        }
    }

    static std::size_t count(const std::vector<std::size_t>& shape) {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
    }

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    T& at(std::size_t a, std::size_t b) { return data_[a * shape_[1] + b]; }
    const T& at(std::size_t a, std::size_t b) const { return data_[a * shape_[1] + b]; }

    T& at(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
        return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
    }
    const T& at(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const {
        return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    std::string shape_string() const {
        std::ostringstream os;
        os << '(';
        for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
        os << ')';
        return os.str();
    }

    friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

private:
    std::vector<std::size_t> shape_;
    std::vector<T> data_;
};

using Tensor = BasicTensor<double>;

}  // namespace hgsp
