// SPDX-License-Identifier: Apache-2.0
#include "hybrid/params.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace hybrid {

void ParameterSet::add(std::string name, Tensor value, bool trainable) {
    if (contains(name)) throw std::invalid_argument("duplicate parameter " + name);
    index_.emplace(name, entries_.size());
    entries_.push_back(Entry{std::move(name), std::move(value), trainable});
}

Tensor& ParameterSet::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
    return entries_[it->second].value;
}

const Tensor& ParameterSet::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
    return entries_[it->second].value;
}

bool ParameterSet::trainable(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
    return entries_[it->second].trainable;
}

void ParameterSet::set_trainable(const std::string& name, bool trainable) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
    entries_[it->second].trainable = trainable;
}

void ParameterSet::set_all_trainable(bool trainable) {
    for (auto& e : entries_) e.trainable = trainable;
}

int64_t ParameterSet::numel() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.value.numel();
    return n;
}

int64_t ParameterSet::trainable_numel() const {
    int64_t n = 0;
    for (const auto& e : entries_) {
        if (e.trainable) n += e.value.numel();
    }
    return n;
}

int64_t ParameterSet::trainable_tensor_count() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.trainable ? 1 : 0;
    return n;
}

std::vector<float> ParameterSet::flatten_trainable() const {
    std::vector<float> flat;
    flat.reserve(static_cast<size_t>(trainable_numel()));
    for_each_trainable([&](std::span<const float> d) { flat.insert(flat.end(), d.begin(), d.end()); });
    return flat;
}

void ParameterSet::assign_trainable(std::span<const float> flat) {
    if (static_cast<int64_t>(flat.size()) != trainable_numel()) {
        throw std::invalid_argument("flat trainable vector has wrong length");
    }
    size_t off = 0;
    for_each_trainable([&](std::span<float> d) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), d.size(), d.begin());
        off += d.size();
    });
}

bool ParameterSet::operator==(const ParameterSet& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (size_t i = 0; i < entries_.size(); ++i) {
        const auto& a = entries_[i];
        const auto& b = other.entries_[i];
        if (a.name != b.name || a.trainable != b.trainable || a.value.shape() != b.value.shape()) return false;
        if (std::memcmp(a.value.ptr(), b.value.ptr(), static_cast<size_t>(a.value.numel()) * sizeof(float)) != 0) {
            return false;
        }
    }
    return true;
}

namespace {

constexpr char kMagic[8] = {'H', 'Y', 'B', 'O', 'P', 'T', '0', '1'};

template <typename T>
void put_le(std::vector<uint8_t>& out, T value) {
    static_assert(std::is_unsigned_v<T>);
    for (size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<uint8_t>(value >> (8 * i)));
}

class Reader {
public:
    explicit Reader(std::span<const uint8_t> bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v = 0;
        for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(bytes_[pos_ + i]) << (8 * i));
        pos_ += sizeof(T);
        return v;
    }
    std::string get_string(size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    size_t pos() const { return pos_; }
    size_t size() const { return bytes_.size(); }
    const uint8_t* at(size_t p) const { return bytes_.data() + p; }

private:
    void need(size_t n) const {
        if (pos_ + n > bytes_.size()) throw CheckpointError("checkpoint truncated");
    }
    std::span<const uint8_t> bytes_;
    size_t pos_ = 0;
};

}  // namespace

std::vector<uint8_t> encode_checkpoint(const ParameterSet& params) {
    std::vector<uint8_t> out(std::begin(kMagic), std::end(kMagic));
    put_le<uint32_t>(out, static_cast<uint32_t>(params.size()));
    uint64_t offset = 0;
    for (const auto& e : params.entries()) {
        put_le<uint32_t>(out, static_cast<uint32_t>(e.name.size()));
        out.insert(out.end(), e.name.begin(), e.name.end());
        put_le<uint32_t>(out, static_cast<uint32_t>(e.value.rank()));
        for (int64_t extent : e.value.shape()) put_le<uint64_t>(out, static_cast<uint64_t>(extent));
        put_le<uint64_t>(out, offset);
        offset += static_cast<uint64_t>(e.value.numel()) * 4;
    }
    for (const auto& e : params.entries()) {
        for (float v : e.value.data()) put_le<uint32_t>(out, std::bit_cast<uint32_t>(v));
    }
    return out;
}

ParameterSet decode_checkpoint(std::span<const uint8_t> bytes) {
    Reader r(bytes);
    if (r.get_string(8) != std::string(kMagic, 8)) throw CheckpointError("bad checkpoint magic");
    const auto count = r.get<uint32_t>();
    struct Item {
        std::string name;
        Shape shape;
        uint64_t offset;
    };
    std::vector<Item> items;
    for (uint32_t i = 0; i < count; ++i) {
        Item it;
        it.name = r.get_string(r.get<uint32_t>());
        const auto rank = r.get<uint32_t>();
        if (rank > 16) throw CheckpointError("implausible rank for " + it.name);
        for (uint32_t d = 0; d < rank; ++d) it.shape.push_back(static_cast<int64_t>(r.get<uint64_t>()));
        it.offset = r.get<uint64_t>();
        items.push_back(std::move(it));
    }
    const size_t data_start = r.pos();
    ParameterSet params;
    for (auto& it : items) {
        const int64_t n = shape_numel(it.shape);
        const size_t begin = data_start + it.offset;
        if (begin + static_cast<size_t>(n) * 4 > r.size()) throw CheckpointError("payload of " + it.name + " out of bounds");
        std::vector<float> data(static_cast<size_t>(n));
        for (int64_t k = 0; k < n; ++k) {
            const uint8_t* p = r.at(begin + static_cast<size_t>(k) * 4);
            const uint32_t bits = uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
            data[static_cast<size_t>(k)] = std::bit_cast<float>(bits);
        }
        params.add(it.name, Tensor(it.shape, std::move(data)), false);
    }
    return params;
}

void save_checkpoint(const ParameterSet& params, const std::string& path) {
    const auto bytes = encode_checkpoint(params);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("cannot open " + path + " for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw CheckpointError("write failed for " + path);
}

ParameterSet load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("missing checkpoint " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace hybrid
