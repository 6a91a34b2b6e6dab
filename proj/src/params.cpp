#include "qg/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "qg/common.hpp"

namespace qg {

int ParamStore::add(const std::string& name, Tensor init) {
    if (index_.count(name)) throw ContractError("duplicate parameter name: " + name);
    if (frozen_) throw ContractError("cannot add parameter to frozen store: " + name);
    Entry e;
    e.name = name;
    e.grad = Tensor::zeros_like(init);
    e.value = std::move(init);
    entries_.push_back(std::move(e));
    int id = static_cast<int>(entries_.size()) - 1;
    index_[name] = id;
    return id;
}

int ParamStore::find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? -1 : it->second;
}

void ParamStore::zero_grads() {
    for (auto& e : entries_) e.grad.fill(0.0);
}

void ParamStore::scale_grads(double c) {
    for (auto& e : entries_) e.grad = scale(e.grad, c);
}

int64_t ParamStore::scalar_count() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
}

Tensor& ParamStore::mutable_value(int i) {
    if (frozen_) {
        throw ContractError("parameter store is frozen: " + entries_[static_cast<size_t>(i)].name);
    }
    return entries_[static_cast<size_t>(i)].value;
}

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xff));
    out.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<uint8_t>((v >> 24) & 0xff));
}

void put_f32(std::vector<uint8_t>& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

struct Reader {
    const std::vector<uint8_t>& buf;
    size_t pos = 0;

    void need(size_t n) const {
        if (pos + n > buf.size()) throw InputError("checkpoint truncated");
    }
    uint32_t u32() {
        need(4);
        uint32_t v = static_cast<uint32_t>(buf[pos]) | (static_cast<uint32_t>(buf[pos + 1]) << 8) |
                     (static_cast<uint32_t>(buf[pos + 2]) << 16) |
                     (static_cast<uint32_t>(buf[pos + 3]) << 24);
        pos += 4;
        return v;
    }
    float f32() {
        uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string str(size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
        pos += n;
        return s;
    }
};

constexpr char kMagic[4] = {'Q', 'G', 'F', '1'};

}  // namespace

std::vector<uint8_t> serialize_params(const ParamStore& store) {
    std::vector<uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, static_cast<uint32_t>(store.count()));
    for (int i = 0; i < store.count(); ++i) {
        const auto& e = store.entry(i);
        put_u32(out, static_cast<uint32_t>(e.name.size()));
        out.insert(out.end(), e.name.begin(), e.name.end());
        put_u32(out, static_cast<uint32_t>(e.value.rank()));
        for (int d = 0; d < e.value.rank(); ++d) {
            put_u32(out, static_cast<uint32_t>(e.value.dim(d)));
        }
        for (int64_t k = 0; k < e.value.size(); ++k) {
            put_f32(out, static_cast<float>(e.value[k]));
        }
    }
    return out;
}

void deserialize_params(ParamStore& store, const std::vector<uint8_t>& bytes) {
    Reader r{bytes};
    std::string magic = r.str(4);
    if (magic != std::string(kMagic, 4)) throw InputError("bad checkpoint magic, expected QGF1");
    uint32_t count = r.u32();
    if (static_cast<int>(count) != store.count()) {
        throw InputError("checkpoint entry count " + std::to_string(count) +
                         " does not match model (" + std::to_string(store.count()) + ")");
    }
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t name_len = r.u32();
        std::string name = r.str(name_len);
        uint32_t rank = r.u32();
        std::vector<int> dims;
        int64_t n = 1;
        for (uint32_t d = 0; d < rank; ++d) {
            dims.push_back(static_cast<int>(r.u32()));
            n *= dims.back();
        }
        int idx = store.find(name);
        if (idx < 0) throw InputError("checkpoint has unknown parameter: " + name);
        auto& e = store.entry(idx);
        if (e.value.shape() != dims) {
            throw InputError("checkpoint shape mismatch for " + name);
        }
        for (int64_t k = 0; k < n; ++k) {
            double v = static_cast<double>(r.f32());
            if (!std::isfinite(v)) throw InputError("non-finite value in checkpoint: " + name);
            e.value[k] = v;
        }
    }
    if (r.pos != bytes.size()) throw InputError("trailing bytes in checkpoint");
}

void save_params(const ParamStore& store, const std::string& path) {
    auto bytes = serialize_params(store);
    atomic_write_file(path,
                      std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

void load_params(ParamStore& store, const std::string& path) {
    std::string text = read_text_file(path);
    std::vector<uint8_t> bytes(text.begin(), text.end());
    bool was_frozen = store.frozen();
    store.set_frozen(false);
    deserialize_params(store, bytes);
    store.set_frozen(was_frozen);
}

std::string param_hash(const ParamStore& store) {
    auto bytes = serialize_params(store);
    return hex64(fnv1a64(bytes.data(), bytes.size()));
}

}  // namespace qg
