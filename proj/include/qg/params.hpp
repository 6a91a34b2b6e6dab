#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "qg/tensor.hpp"

namespace qg {

// Named trainable tensors plus their gradient buffers. Entry order is
// creation order and defines the serialization order.
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor value;
        Tensor grad;
    };

    int add(const std::string& name, Tensor init);

    Entry& entry(int i) { return entries_[static_cast<size_t>(i)]; }
    const Entry& entry(int i) const { return entries_[static_cast<size_t>(i)]; }
    int count() const { return static_cast<int>(entries_.size()); }

    int find(const std::string& name) const;  // -1 when absent

    void zero_grads();
    void scale_grads(double c);
    int64_t scalar_count() const;

    // Frozen stores reject mutation through mutable_value / optimizer steps.
    bool frozen() const { return frozen_; }
    void set_frozen(bool f) { frozen_ = f; }
    Tensor& mutable_value(int i);

private:
    std::vector<Entry> entries_;
    std::map<std::string, int> index_;
    bool frozen_ = false;
};

// Checkpoint format "QGF1": magic, u32 entry count, then per entry
// u32 name length, name bytes, u32 rank, u32 dims, float32 data.
// All integers and floats little-endian.
std::vector<uint8_t> serialize_params(const ParamStore& store);
void deserialize_params(ParamStore& store, const std::vector<uint8_t>& bytes);

void save_params(const ParamStore& store, const std::string& path);
// Entries must already be registered; names and shapes are validated.
void load_params(ParamStore& store, const std::string& path);

// FNV-1a over the serialized bytes; stable across save/load cycles because
// values are hashed at float32 precision.
std::string param_hash(const ParamStore& store);

}  // namespace qg
