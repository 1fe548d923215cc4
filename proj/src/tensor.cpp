// SPDX-License-Identifier: Apache-2.0
#include "hybrid/tensor.hpp"

#include <cmath>
#include <sstream>

namespace hybrid {

namespace {
thread_local int64_t g_alloc_count = 0;
thread_local int64_t g_alloc_elements = 0;
}  // namespace

namespace detail {
void note_allocation(int64_t elements) {
    if (elements <= 0) return;
    ++g_alloc_count;
    g_alloc_elements += elements;
}
}  // namespace detail

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t extent : shape) {
        if (extent <= 0) throw ShapeError("non-positive extent in shape " + shape_str(shape));
        n *= extent;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(shape_numel(shape_)), fill);
    detail::note_allocation(numel());
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != static_cast<int64_t>(data_.size())) {
        throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_str(shape_));
    }
    detail::note_allocation(numel());
}

Tensor::Tensor(const Tensor& other) : shape_(other.shape_), data_(other.data_) {
    detail::note_allocation(numel());
}

Tensor& Tensor::operator=(const Tensor& other) {
    if (this != &other) {
        if (data_.size() != other.data_.size()) detail::note_allocation(other.numel());
        shape_ = other.shape_;
        data_ = other.data_;
    }
    return *this;
}

float Tensor::item() const {
    if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
    return data_[0];
}

bool Tensor::all_finite() const {
    for (float v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::check_finite(const std::string& where) const {
    if (!all_finite()) throw NonFiniteValue(where);
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != numel()) {
        throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
}

void Tensor::fill(float value) { std::fill(data_.begin(), data_.end(), value); }

AllocationCounter::AllocationCounter() : start_count_(g_alloc_count), start_elements_(g_alloc_elements) {}

int64_t AllocationCounter::allocations() const { return g_alloc_count - start_count_; }

int64_t AllocationCounter::elements() const { return g_alloc_elements - start_elements_; }

}  // namespace hybrid
