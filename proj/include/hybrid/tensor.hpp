// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hybrid {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised when a NaN or Inf shows up in a value or gradient.
class NonFiniteValue : public std::runtime_error {
public:
    explicit NonFiniteValue(const std::string& where)
        : std::runtime_error("non-finite value produced by " + where) {}
};

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Dense row-major float32 array.
///
/// Every construction or copy that allocates storage is reported to the
/// thread-local allocation counter so callers can verify that a code path
/// does not create parameter-sized scratch buffers.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0F);
    Tensor(Shape shape, std::vector<float> data);
    Tensor(const Tensor& other);
    Tensor(Tensor&& other) noexcept = default;
    Tensor& operator=(const Tensor& other);
    Tensor& operator=(Tensor&& other) noexcept = default;
    ~Tensor() = default;

    static Tensor scalar(float value) { return Tensor(Shape{1}, value); }

    const Shape& shape() const { return shape_; }
    int64_t dim(size_t axis) const { return shape_.at(axis); }
    size_t rank() const { return shape_.size(); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    std::span<float> data() { return data_; }
    std::span<const float> data() const { return data_; }
    float* ptr() { return data_.data(); }
    const float* ptr() const { return data_.data(); }

    float& operator[](size_t i) { return data_[i]; }
    float operator[](size_t i) const { return data_[i]; }

    float item() const;
    bool all_finite() const;
    /// Throws NonFiniteValue naming `where` if any element is NaN/Inf.
    void check_finite(const std::string& where) const;

    Tensor reshaped(Shape shape) const;
    void fill(float value);

    bool operator==(const Tensor& other) const {
        return shape_ == other.shape_ && data_ == other.data_;
    }

private:
    Shape shape_;
    std::vector<float> data_;
};

/// Counts Tensor storage allocations made on this thread while alive.
class AllocationCounter {
public:
    AllocationCounter();
    int64_t allocations() const;
    int64_t elements() const;

private:
    int64_t start_count_;
    int64_t start_elements_;
};

namespace detail {
void note_allocation(int64_t elements);
}

}  // namespace hybrid
