#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sonomesh/fft.hpp"
#include "sonomesh/signal.hpp"

using namespace sonomesh;

static double rms(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc / static_cast<double>(v.size()));
}

TEST_CASE("rect window branch values") {
    CHECK(rect_window(0.0) == 1.0);
    CHECK(rect_window(0.5) == 1.0);   // closed boundary
    CHECK(rect_window(-0.5) == 1.0);
    CHECK(rect_window(0.6) == 0.0);
    CHECK(rect_window(-2.0) == 0.0);
}

TEST_CASE("synth_chirp default config: 96 samples from 18 kHz") {
    ChirpConfig cfg;  // f_c 20 kHz, B 4 kHz, T_c 1 ms, f_s 96 kHz
    CHECK(cfg.f_start() == doctest::Approx(18000.0));
    CHECK(cfg.slope() == doctest::Approx(4.0e6));
    auto buf = synth_chirp(cfg);
    CHECK(buf.samples.size() == 96);
    CHECK(buf.samples[0] == doctest::Approx(cfg.amplitude));  // cos(0)
}

TEST_CASE("chirp instantaneous frequency sweeps start to start+B") {
    ChirpConfig cfg;
    cfg.T_c = 10e-3;
    auto buf = synth_chirp(cfg);
    // zero-crossing density over the first and last tenth approximates f
    auto count_crossings = [&](std::size_t from, std::size_t to) {
        std::size_t c = 0;
        for (std::size_t i = from + 1; i < to; ++i)
            if ((buf.samples[i - 1] < 0) != (buf.samples[i] < 0)) ++c;
        return static_cast<double>(c) / 2.0 / (static_cast<double>(to - from) / cfg.f_s);
    };
    const std::size_t n = buf.samples.size();
    CHECK(count_crossings(0, n / 10) == doctest::Approx(18200.0).epsilon(0.02));
    CHECK(count_crossings(n - n / 10, n) == doctest::Approx(21800.0).epsilon(0.02));
}

TEST_CASE("chirp energy scales as amplitude squared") {
    ChirpConfig a, b;
    b.amplitude = 3.0;
    const double ea = rms(synth_chirp(a).samples);
    const double eb = rms(synth_chirp(b).samples);
    CHECK(eb / ea == doctest::Approx(3.0).epsilon(1e-10));
}

TEST_CASE("B=0 degenerates to a pure tone at f_c") {
    ChirpConfig cfg;
    cfg.B = 0.0;
    cfg.T_c = 10e-3;
    auto buf = synth_chirp(cfg);
    auto spec = fft::forward_real(buf.samples);
    std::size_t pk = 0;
    for (std::size_t k = 1; k < spec.size() / 2; ++k)
        if (std::abs(spec[k]) > std::abs(spec[pk])) pk = k;
    const double f_peak = static_cast<double>(pk) * cfg.f_s / static_cast<double>(spec.size());
    CHECK(f_peak == doctest::Approx(20000.0).epsilon(0.01));
}

TEST_CASE("invalid configs rejected naming the constraint") {
    ChirpConfig cfg;
    cfg.f_s = 30000.0;  // Nyquist violation
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    ChirpConfig cfg2;
    cfg2.f_c = 1000.0;  // f_c - B/2 <= 0
    CHECK_THROWS_AS(cfg2.validate(), ConfigError);
    ChirpConfig cfg3;
    cfg3.T_c = 0.0;
    CHECK_THROWS_AS(cfg3.validate(), ConfigError);
}

static SampleBuffer tone(double f, double f_s, std::size_t n) {
    SampleBuffer b;
    b.f_s = f_s;
    b.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        b.samples[i] = std::cos(2.0 * kPi * f * static_cast<double>(i) / f_s);
    return b;
}

TEST_CASE("bandpass rejects out-of-band and passes in-band tones") {
    auto stop = bandpass(tone(10000.0, 96000.0, 4096), 18000.0, 22000.0);
    auto pass = bandpass(tone(20000.0, 96000.0, 4096), 18000.0, 22000.0);
    // measure away from the (delay-compensated) edges
    auto mid_rms = [](const SampleBuffer& b) {
        std::vector<double> mid(b.samples.begin() + 512, b.samples.end() - 512);
        return rms(mid);
    };
    const double in_rms = 1.0 / std::sqrt(2.0);
    CHECK(mid_rms(stop) <= 0.01 * in_rms);
    CHECK(mid_rms(pass) >= 0.89 * in_rms);
}

TEST_CASE("bandpass is linear and preserves length") {
    auto a = tone(19000.0, 96000.0, 1024);
    auto b = tone(21000.0, 96000.0, 1024);
    SampleBuffer sum = a;
    for (std::size_t i = 0; i < sum.samples.size(); ++i) sum.samples[i] += b.samples[i];
    auto fa = bandpass(a, 18000.0, 22000.0);
    auto fb = bandpass(b, 18000.0, 22000.0);
    auto fs = bandpass(sum, 18000.0, 22000.0);
    CHECK(fs.samples.size() == 1024);
    for (std::size_t i = 0; i < 1024; ++i)
        CHECK(fs.samples[i] == doctest::Approx(fa.samples[i] + fb.samples[i]).epsilon(1e-9));
    SampleBuffer z;
    z.f_s = 96000.0;
    z.samples.assign(256, 0.0);
    for (double x : bandpass(z, 18000.0, 22000.0).samples) CHECK(x == 0.0);
}

TEST_CASE("bandpass rejects invalid bands") {
    auto t = tone(20000.0, 96000.0, 256);
    CHECK_THROWS_AS(bandpass(t, 22000.0, 18000.0), ConfigError);
    CHECK_THROWS_AS(bandpass(t, 18000.0, 50000.0), ConfigError);
}

TEST_CASE("analytic signal of a cosine has unit magnitude") {
    auto t = tone(20000.0, 96000.0, 960);
    auto a = analytic(t);
    for (std::size_t i = 16; i + 16 < a.samples.size(); ++i) {
        CHECK(std::abs(a.samples[i]) == doctest::Approx(1.0).epsilon(1e-3));
        CHECK(a.samples[i].real() == doctest::Approx(t.samples[i]).epsilon(1e-9));
    }
}

TEST_CASE("analytic chirp has no negative-frequency energy") {
    ChirpConfig cfg;
    auto a = analytic(synth_chirp(cfg));
    auto spec = fft::forward(a.samples);
    const std::size_t n = spec.size();
    const auto pos_bin = static_cast<std::size_t>(20000.0 * static_cast<double>(n) / cfg.f_s);
    const std::size_t neg_bin = n - pos_bin;
    CHECK(std::abs(spec[neg_bin]) <= 1e-9 * std::abs(spec[pos_bin]));
}

TEST_CASE("dechirp of a delayed chirp beats at k*delay") {
    ChirpConfig cfg;
    cfg.T_c = 10e-3;
    const std::size_t n = cfg.samples_per_chirp();
    const std::size_t delay = 10;
    SampleBuffer ref_r = synth_chirp(cfg);
    SampleBuffer echo_r;
    echo_r.f_s = cfg.f_s;
    echo_r.samples.assign(n, 0.0);
    for (std::size_t i = delay; i < n; ++i) echo_r.samples[i] = ref_r.samples[i - delay];
    auto prod = dechirp(analytic(echo_r), analytic(ref_r));
    auto spec = fft::forward(prod.samples);
    std::size_t pk = 0;
    for (std::size_t k2 = 1; k2 < spec.size(); ++k2)
        if (std::abs(spec[k2]) > std::abs(spec[pk])) pk = k2;
    const double beat = cfg.slope() * static_cast<double>(delay) / cfg.f_s;
    const long want = std::lround(-beat * static_cast<double>(n) / cfg.f_s);  // echo lags -> negative beat
    CHECK(std::abs(fft::signed_bin(pk, spec.size()) - want) <= 1);
}

TEST_CASE("dechirp identities and errors") {
    ChirpConfig cfg;
    auto ref = analytic(synth_chirp(cfg));
    auto prod = dechirp(ref, ref);
    // constant phase: consecutive products agree
    for (std::size_t i = 1; i < prod.samples.size(); ++i)
        CHECK(std::abs(std::arg(prod.samples[i] * std::conj(prod.samples[i - 1]))) < 1e-9);
    ComplexBuffer shorter = ref;
    shorter.samples.pop_back();
    CHECK_THROWS_AS(dechirp(shorter, ref), ShapeError);
}

TEST_CASE("two delays superpose with proportional magnitudes") {
    ChirpConfig cfg;
    cfg.T_c = 10e-3;
    const std::size_t n = cfg.samples_per_chirp();
    SampleBuffer ref_r = synth_chirp(cfg);
    SampleBuffer echo_r;
    echo_r.f_s = cfg.f_s;
    echo_r.samples.assign(n, 0.0);
    for (std::size_t i = 48; i < n; ++i) echo_r.samples[i] += 1.0 * ref_r.samples[i - 48];
    for (std::size_t i = 240; i < n; ++i) echo_r.samples[i] += 0.5 * ref_r.samples[i - 240];
    auto spec = fft::forward(dechirp(analytic(echo_r), analytic(ref_r)).samples);
    const double bins_per_sample = cfg.slope() / cfg.f_s * static_cast<double>(n) / cfg.f_s;
    const auto b1 = static_cast<std::size_t>(spec.size() - std::llround(48.0 * bins_per_sample));
    const auto b2 = static_cast<std::size_t>(spec.size() - std::llround(240.0 * bins_per_sample));
    // overlap with the receive window shrinks with delay; normalize it out
    const double overlap = (960.0 - 240.0) / (960.0 - 48.0);
    CHECK(std::abs(spec[b2]) / std::abs(spec[b1]) == doctest::Approx(0.5 * overlap).epsilon(0.05));
}

TEST_CASE("delay/distance conversion") {
    CHECK(delay_to_distance(2e-3, 343.0) == doctest::Approx(0.343));
    CHECK(delay_to_distance(0.0) == 0.0);
    CHECK_THROWS_AS(delay_to_distance(-1e-3), DomainError);
    CHECK(distance_to_delay(delay_to_distance(1.234e-3)) == doctest::Approx(1.234e-3));
}
