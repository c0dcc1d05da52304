#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sonomesh/fft.hpp"
#include "sonomesh/rng.hpp"

using namespace sonomesh;

// brute-force DFT oracle
static std::vector<cplx> dft(const std::vector<cplx>& a, bool inverse) {
    const std::size_t n = a.size();
    std::vector<cplx> out(n);
    const double sign = inverse ? 1.0 : -1.0;
    for (std::size_t k = 0; k < n; ++k) {
        cplx acc(0, 0);
        for (std::size_t j = 0; j < n; ++j)
            acc += a[j] * std::exp(cplx(0, sign * 2.0 * kPi * static_cast<double>(k * j) /
                                              static_cast<double>(n)));
        out[k] = inverse ? acc / static_cast<double>(n) : acc;
    }
    return out;
}

TEST_CASE("forward transform matches brute-force DFT (pow2 and Bluestein)") {
    Rng rng(42);
    for (std::size_t n : {2u, 8u, 16u, 7u, 12u, 31u, 96u, 100u}) {
        std::vector<cplx> a(n);
        for (auto& x : a) x = rng.gaussian_cplx();
        auto got = fft::forward(a);
        auto want = dft(a, false);
        for (std::size_t k = 0; k < n; ++k)
            CHECK(std::abs(got[k] - want[k]) < 1e-9 * std::sqrt(static_cast<double>(n)));
    }
}

TEST_CASE("inverse undoes forward") {
    Rng rng(7);
    for (std::size_t n : {4u, 9u, 64u, 33u}) {
        std::vector<cplx> a(n);
        for (auto& x : a) x = rng.gaussian_cplx();
        auto back = fft::inverse(fft::forward(a));
        for (std::size_t k = 0; k < n; ++k) CHECK(std::abs(back[k] - a[k]) < 1e-10);
    }
}

TEST_CASE("impulse transforms to flat spectrum") {
    std::vector<cplx> a(16, cplx(0, 0));
    a[0] = 1.0;
    auto f = fft::forward(a);
    for (const auto& x : f) CHECK(std::abs(x - cplx(1, 0)) < 1e-12);
}

TEST_CASE("Parseval energy identity") {
    Rng rng(3);
    std::vector<cplx> a(50);
    for (auto& x : a) x = rng.gaussian_cplx();
    double et = 0.0, ef = 0.0;
    for (const auto& x : a) et += std::norm(x);
    for (const auto& x : fft::forward(a)) ef += std::norm(x);
    CHECK(ef / static_cast<double>(a.size()) == doctest::Approx(et).epsilon(1e-10));
}

TEST_CASE("forward_real embeds the real sequence") {
    std::vector<double> x = {1.0, -2.0, 0.5, 3.0, 0.0};
    std::vector<cplx> xc(x.begin(), x.end());
    auto got = fft::forward_real(x);
    auto want = fft::forward(xc);
    for (std::size_t k = 0; k < x.size(); ++k) CHECK(std::abs(got[k] - want[k]) < 1e-12);
}

TEST_CASE("signed_bin maps upper half to negative frequencies") {
    CHECK(fft::signed_bin(0, 8) == 0);
    CHECK(fft::signed_bin(3, 8) == 3);
    CHECK(fft::signed_bin(4, 8) == 4);  // Nyquist kept positive
    CHECK(fft::signed_bin(5, 8) == -3);
    CHECK(fft::signed_bin(7, 8) == -1);
}

TEST_CASE("fftshift centers DC") {
    std::vector<cplx> a = {cplx(0, 0), cplx(1, 0), cplx(2, 0), cplx(3, 0)};
    auto s = fft::fftshift(a);
    CHECK(s[2].real() == 0.0);  // DC lands at n/2
}

TEST_CASE("single tone peaks at its bin") {
    const std::size_t n = 128;
    std::vector<cplx> a(n);
    for (std::size_t j = 0; j < n; ++j)
        a[j] = std::exp(cplx(0, 2.0 * kPi * 5.0 * static_cast<double>(j) / static_cast<double>(n)));
    auto f = fft::forward(a);
    std::size_t pk = 0;
    for (std::size_t k = 1; k < n; ++k)
        if (std::abs(f[k]) > std::abs(f[pk])) pk = k;
    CHECK(pk == 5);
}
