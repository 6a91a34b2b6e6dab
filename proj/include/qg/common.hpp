#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace qg {

// Error taxonomy. The CLI maps these onto exit codes: UsageError -> 2,
// InputError -> 3, ContractError -> 4.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Deterministic RNG. Wraps a SplitMix64 core; the standard <random>
// distributions are not bit-stable across library implementations, so all
// draws are hand-rolled here.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        // SplitMix64 (Steele et al.), fully specified, platform independent.
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller.
    double normal();

    // Uniform integer in [0, n).
    size_t index(size_t n) { return static_cast<size_t>(next_u64() % n); }

    int uniform_int(int lo, int hi_inclusive) {
        return lo + static_cast<int>(index(static_cast<size_t>(hi_inclusive - lo + 1)));
    }

    template <typename T>
    const T& pick(const std::vector<T>& v) {
        return v[index(v.size())];
    }

    // In-place Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // Independent substream k of this generator's seed.
    Rng fork(uint64_t k) const;

private:
    uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// FNV-1a 64-bit.
uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(uint64_t v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
// Write to "<path>.tmp" then rename, so readers never observe a partial file.
void atomic_write_file(const std::string& path, const std::string& content);

std::string lowercase(const std::string& s);
std::string trim(const std::string& s);
bool starts_with(const std::string& s, const std::string& prefix);

}  // namespace qg
