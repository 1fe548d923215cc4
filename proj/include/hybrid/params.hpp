// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hybrid/tensor.hpp"

namespace hybrid {

/// Named tensors with a trainable flag each. Insertion order is the
/// canonical flattening order used by perturbation replay and checkpoints.
///
/// Tensor addresses are stable as long as no entry is added, which is what
/// Graph relies on when it binds parameters by reference.
class ParameterSet {
public:
    struct Entry {
        std::string name;
        Tensor value;
        bool trainable = false;
    };

    void add(std::string name, Tensor value, bool trainable = true);
    bool contains(const std::string& name) const { return index_.contains(name); }

    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool trainable(const std::string& name) const;
    void set_trainable(const std::string& name, bool trainable);
    void set_all_trainable(bool trainable);

    size_t size() const { return entries_.size(); }
    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<Entry>& entries() { return entries_; }

    int64_t numel() const;
    int64_t trainable_numel() const;
    int64_t trainable_tensor_count() const;

    /// Calls f(span) for each trainable tensor in canonical order.
    template <typename F>
    void for_each_trainable(F&& f) {
        for (auto& e : entries_) {
            if (e.trainable) f(e.value.data());
        }
    }
    template <typename F>
    void for_each_trainable(F&& f) const {
        for (const auto& e : entries_) {
            if (e.trainable) f(e.value.data());
        }
    }

    std::vector<float> flatten_trainable() const;
    void assign_trainable(std::span<const float> flat);

    /// Same names, shapes, flags and bits.
    bool operator==(const ParameterSet& other) const;

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, size_t> index_;
};

/// Checkpoint file: "HYBOPT01", a manifest of (name, shape, byte offset),
/// then little-endian float32 payloads. Saving a loaded file reproduces it
/// byte for byte. Trainable flags are not stored.
void save_checkpoint(const ParameterSet& params, const std::string& path);
ParameterSet load_checkpoint(const std::string& path);
std::vector<uint8_t> encode_checkpoint(const ParameterSet& params);
ParameterSet decode_checkpoint(std::span<const uint8_t> bytes);

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace hybrid
