#pragma once
// Deterministic RNG helpers. All sampling goes through these so runs with the
// same seed reproduce bit-for-bit (std::uniform_* distributions are
// implementation-defined and deliberately avoided).

#include <cstdint>
#include <random>
#include <vector>

namespace knews {

inline uint64_t mix64(uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t mix64(uint64_t a, uint64_t b) { return mix64(a ^ mix64(b)); }
inline uint64_t mix64(uint64_t a, uint64_t b, uint64_t c) { return mix64(mix64(a, b), c); }

class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next() { return gen_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n)
    int uniform_int(int n) { return n <= 1 ? 0 : static_cast<int>(gen_() % static_cast<uint64_t>(n)); }

    double normal() {
        // Box-Muller; spare value intentionally discarded to keep the stream simple.
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    template <typename V>
    void shuffle(std::vector<V>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(gen_() % i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct values from [0, n) in draw order (partial Fisher-Yates).
    std::vector<int> sample_without_replacement(int n, int k) {
        std::vector<int> idx(n);
        for (int i = 0; i < n; ++i) idx[i] = i;
        std::vector<int> out;
        out.reserve(k);
        for (int i = 0; i < k && i < n; ++i) {
            int j = i + uniform_int(n - i);
            std::swap(idx[i], idx[j]);
            out.push_back(idx[i]);
        }
        return out;
    }

  private:
    std::mt19937_64 gen_;
};

}  // namespace knews
