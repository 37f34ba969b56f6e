#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace scaa {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

// Row-major strides, innermost dimension contiguous.
inline std::vector<int64_t> strides_of(const Shape& s) {
    std::vector<int64_t> st(s.size(), 1);
    for (int i = (int)s.size() - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
    return st;
}

template <typename... Args>
[[noreturn]] inline void fail(Args&&... args) {
    std::ostringstream os;
    (os << ... << args);
    throw std::runtime_error(os.str());
}

#define SCAA_CHECK(cond, ...)                  \
    do {                                       \
        if (!(cond)) ::scaa::fail(__VA_ARGS__); \
    } while (0)

// Deterministic RNG. Raw engine output is mapped to floats by hand so the
// stream does not depend on the standard library's distribution internals.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return (eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), n > 0. Rejection-free modulo bias is
    // negligible for the small n used here, but reject anyway to keep the
    // stream well defined.
    int64_t uniform_int(int64_t n) {
        const uint64_t span = (uint64_t)n;
        const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        uint64_t v;
        do {
            v = eng_();
        } while (v >= limit);
        return (int64_t)(v % span);
    }

    // Box-Muller; caches the second variate.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0, u2;
        while (u1 == 0.0) u1 = uniform();
        u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int64_t i = (int64_t)v.size() - 1; i > 0; --i) {
            int64_t j = uniform_int(i + 1);
            std::swap(v[i], v[j]);
        }
    }

    // Sample k distinct indices from [0, n) in selection order.
    std::vector<int64_t> sample_without_replacement(int64_t n, int64_t k) {
        SCAA_CHECK(k <= n, "cannot sample ", k, " distinct values from ", n);
        std::vector<int64_t> pool(n);
        std::iota(pool.begin(), pool.end(), 0);
        std::vector<int64_t> out;
        out.reserve(k);
        for (int64_t i = 0; i < k; ++i) {
            int64_t j = uniform_int(n - i);
            out.push_back(pool[j]);
            std::swap(pool[j], pool[n - 1 - i]);
        }
        return out;
    }

private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// splitmix64, used to derive independent substreams from (seed, salt...).
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c) {
    return mix_seed(mix_seed(a, b), c);
}

}  // namespace scaa
