#pragma once

#include <cstddef>
#include <vector>

#include "sonomesh/common.hpp"

namespace sonomesh::fft {

namespace detail {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

// In-place iterative radix-2 Cooley-Tukey. n must be a power of two.
inline void fft_pow2(std::vector<cplx>& a, bool inverse) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * kPi / static_cast<double>(len);
        const cplx wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            cplx w(1.0, 0.0);
            for (std::size_t j = 0; j < len / 2; ++j) {
                cplx u = a[i + j];
                cplx v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

}  // namespace detail

// Forward DFT, any length (Bluestein for non powers of two). No scaling.
inline void transform(std::vector<cplx>& a, bool inverse = false) {
    const std::size_t n = a.size();
    if (n <= 1) return;
    if (detail::is_pow2(n)) {
        detail::fft_pow2(a, inverse);
        return;
    }
    // Bluestein: convolve with a chirp to express an arbitrary-length DFT
    // through a power-of-two FFT.
    const std::size_t m = detail::next_pow2(2 * n + 1);
    std::vector<cplx> w(n);
    for (std::size_t i = 0; i < n; ++i) {
        // i*i mod 2n avoids precision loss for large i
        std::uint64_t sq = static_cast<std::uint64_t>(i) * i % (2 * n);
        double ang = (inverse ? 1.0 : -1.0) * kPi * static_cast<double>(sq) / static_cast<double>(n);
        w[i] = cplx(std::cos(ang), std::sin(ang));
    }
    std::vector<cplx> av(m, cplx(0, 0)), bv(m, cplx(0, 0));
    for (std::size_t i = 0; i < n; ++i) av[i] = a[i] * w[i];
    bv[0] = std::conj(w[0]);
    for (std::size_t i = 1; i < n; ++i) bv[i] = bv[m - i] = std::conj(w[i]);
    detail::fft_pow2(av, false);
    detail::fft_pow2(bv, false);
    for (std::size_t i = 0; i < m; ++i) av[i] *= bv[i];
    detail::fft_pow2(av, true);
    const double scale = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < n; ++i) a[i] = av[i] * w[i] * scale;
}

inline std::vector<cplx> forward(std::vector<cplx> a) {
    transform(a, false);
    return a;
}

// Inverse DFT with 1/n scaling.
inline std::vector<cplx> inverse(std::vector<cplx> a) {
    transform(a, true);
    const double s = 1.0 / static_cast<double>(a.size());
    for (auto& v : a) v *= s;
    return a;
}

inline std::vector<cplx> forward_real(const std::vector<double>& x) {
    std::vector<cplx> a(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) a[i] = cplx(x[i], 0.0);
    transform(a, false);
    return a;
}

// Rotate so the zero-frequency bin sits at index n/2.
inline std::vector<cplx> fftshift(const std::vector<cplx>& a) {
    const std::size_t n = a.size();
    std::vector<cplx> out(n);
    const std::size_t h = n / 2;
    for (std::size_t i = 0; i < n; ++i) out[i] = a[(i + h) % n];
    return out;
}

// Signed frequency index of bin i in an n-point unshifted spectrum.
inline long signed_bin(std::size_t i, std::size_t n) {
    long li = static_cast<long>(i);
    long ln = static_cast<long>(n);
    return li <= ln / 2 ? li : li - ln;
}

}  // namespace sonomesh::fft
