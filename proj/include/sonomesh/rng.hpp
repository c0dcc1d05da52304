#pragma once

#include <cmath>
#include <cstdint>

#include "sonomesh/common.hpp"

namespace sonomesh {

// Fully specified generator (splitmix64) so results are identical across
// platforms and standard-library versions. std distributions are
// implementation-defined, which would break the byte-for-byte reproducibility
// contract of the CLI.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    // Derive an independent stream, e.g. per profile column.
    static Rng stream(std::uint64_t seed, std::uint64_t index) {
        Rng r(seed);
        r.next_u64();
        Rng s(r.next_u64() ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
        s.next_u64();
        return s;
    }

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller (pairs cached).
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * kPi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    cplx gaussian_cplx() {
        double re = gaussian();
        double im = gaussian();
        return {re, im};
    }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace sonomesh
