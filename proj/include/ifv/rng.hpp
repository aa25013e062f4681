#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace ifv {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derive an independent stream seed from (master, purpose, index).
inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t purpose, std::uint64_t index) {
    return splitmix64(splitmix64(master ^ splitmix64(purpose)) ^ index);
}

namespace stream {
constexpr std::uint64_t targets = 0x7a01;
constexpr std::uint64_t fv_init = 0x7a02;
constexpr std::uint64_t reopt = 0x7a03;
constexpr std::uint64_t weights = 0x7a04;
}  // namespace stream

// mt19937_64 with explicit double conversions. The standard distributions are
// implementation-defined, so uniform/gaussian are generated by hand to keep
// outputs bit-identical across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // index in [0, n)
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n; }

    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    std::vector<double> gaussian_vector(std::size_t n, double stddev = 1.0) {
        std::vector<double> v(n);
        for (double& x : v) x = stddev * gaussian();
        return v;
    }

    // uniform direction on the unit sphere
    std::vector<double> unit_vector(std::size_t n) {
        std::vector<double> v;
        double norm = 0.0;
        do {
            v = gaussian_vector(n);
            norm = 0.0;
            for (double x : v) norm += x * x;
        } while (norm == 0.0);
        norm = std::sqrt(norm);
        for (double& x : v) x /= norm;
        return v;
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace ifv
