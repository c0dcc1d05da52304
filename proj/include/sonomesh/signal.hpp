#pragma once

#include <cmath>
#include <vector>

#include "sonomesh/common.hpp"
#include "sonomesh/fft.hpp"

namespace sonomesh {

// FMCW waveform parameters. f_c is the sweep center; the instantaneous
// frequency runs f_c - B/2 .. f_c + B/2 over T_c. Start-frequency form is
// exposed through from_start_frequency()/f_start().
struct ChirpConfig {
    double f_c = 20000.0;    // carrier (sweep center), Hz
    double B = 4000.0;       // bandwidth, Hz
    double T_c = 1e-3;       // chirp duration, s
    double T_e = 5e-3;       // pause between chirps, s
    double f_s = 96000.0;    // sample rate, Hz
    double amplitude = 1.0;

    double f_start() const { return f_c - B / 2.0; }
    double period() const { return T_c + T_e; }
    double slope() const { return B / T_c; }
    std::size_t samples_per_chirp() const {
        return static_cast<std::size_t>(std::llround(T_c * f_s));
    }
    std::size_t samples_per_period() const {
        return static_cast<std::size_t>(std::llround(period() * f_s));
    }

    static ChirpConfig from_start_frequency(double f_start, double B, double T_c,
                                            double T_e, double f_s,
                                            double amplitude = 1.0) {
        return ChirpConfig{f_start + B / 2.0, B, T_c, T_e, f_s, amplitude};
    }

    void validate() const {
        if (!(T_c > 0.0)) throw ConfigError("ChirpConfig: T_c must be > 0");
        if (!(T_e >= 0.0)) throw ConfigError("ChirpConfig: T_e must be >= 0");
        if (!(B >= 0.0)) throw ConfigError("ChirpConfig: B must be >= 0");
        if (!(f_s > 0.0)) throw ConfigError("ChirpConfig: f_s must be > 0");
        if (!(f_c - B / 2.0 > 0.0))
            throw ConfigError("ChirpConfig: f_c - B/2 must be > 0");
        if (!(f_s > 2.0 * (f_c + B / 2.0)))
            throw ConfigError("ChirpConfig: f_s violates Nyquist for f_c + B/2");
        if (samples_per_chirp() < 1)
            throw ConfigError("ChirpConfig: T_c*f_s rounds to zero samples");
    }
};

struct SampleBuffer {
    std::vector<double> samples;
    double f_s = 0.0;
};

struct ComplexBuffer {
    std::vector<cplx> samples;
    double f_s = 0.0;
};

// Rectangle window: 1 for |x| <= 0.5 (closed support), else 0.
inline double rect_window(double x) { return std::abs(x) <= 0.5 ? 1.0 : 0.0; }

// Chirp sample at time t (seconds from chirp start); zero outside [0, T_c].
inline double chirp_at(const ChirpConfig& cfg, double t) {
    const double w = rect_window(t / cfg.T_c - 0.5);
    if (w == 0.0) return 0.0;
    const double k = cfg.slope();
    return cfg.amplitude * std::cos(2.0 * kPi * (cfg.f_start() * t + 0.5 * k * t * t));
}

// One chirp, round(T_c*f_s) samples; the rect window is implicit in the length.
inline SampleBuffer synth_chirp(const ChirpConfig& cfg) {
    cfg.validate();
    const std::size_t n = cfg.samples_per_chirp();
    SampleBuffer out;
    out.f_s = cfg.f_s;
    out.samples.resize(n);
    const double k = cfg.slope();
    const double f0 = cfg.f_start();
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / cfg.f_s;
        out.samples[i] = cfg.amplitude * std::cos(2.0 * kPi * (f0 * t + 0.5 * k * t * t));
    }
    return out;
}

namespace detail {

// Linear-phase bandpass FIR taps: windowed-sinc (Hamming), odd length.
inline std::vector<double> bandpass_taps(double lo, double hi, double f_s,
                                         std::size_t n_taps) {
    if (n_taps % 2 == 0) ++n_taps;
    const double fl = lo / f_s;
    const double fh = hi / f_s;
    const long mid = static_cast<long>(n_taps / 2);
    std::vector<double> h(n_taps);
    for (long i = 0; i < static_cast<long>(n_taps); ++i) {
        const long m = i - mid;
        double v;
        if (m == 0) {
            v = 2.0 * (fh - fl);
        } else {
            v = (std::sin(2.0 * kPi * fh * m) - std::sin(2.0 * kPi * fl * m)) /
                (kPi * static_cast<double>(m));
        }
        const double w =
            0.54 - 0.46 * std::cos(2.0 * kPi * static_cast<double>(i) /
                                   static_cast<double>(n_taps - 1));
        h[i] = v * w;
    }
    return h;
}

}  // namespace detail

// Linear-phase FIR bandpass, group delay compensated so the output has the
// same length and timing as the input. Hamming window: ~53 dB stopband,
// well under 1 dB passband ripple once the band edges clear the transition.
inline SampleBuffer bandpass(const SampleBuffer& buf, double lo, double hi,
                             std::size_t n_taps = 255) {
    if (!(lo > 0.0 && lo < hi && hi < buf.f_s / 2.0))
        throw ConfigError("bandpass: need 0 < lo < hi < f_s/2");
    const auto h = detail::bandpass_taps(lo, hi, buf.f_s, n_taps);
    const long delay = static_cast<long>(h.size() / 2);
    const long n = static_cast<long>(buf.samples.size());
    SampleBuffer out;
    out.f_s = buf.f_s;
    out.samples.assign(buf.samples.size(), 0.0);
    for (long i = 0; i < n; ++i) {
        double acc = 0.0;
        // y[i] = sum_j h[j] * x[i + delay - j]  (delay-compensated convolution)
        const long base = i + delay;
        const long j0 = std::max(0L, base - (n - 1));
        const long j1 = std::min(static_cast<long>(h.size()) - 1, base);
        for (long j = j0; j <= j1; ++j) acc += h[j] * buf.samples[base - j];
        out.samples[i] = acc;
    }
    return out;
}

// Analytic signal via the frequency-domain Hilbert transform: zero the
// negative bins, double the strictly positive ones.
inline ComplexBuffer analytic(const SampleBuffer& buf) {
    const std::size_t n = buf.samples.size();
    if (n < 2) throw DomainError("analytic: need at least 2 samples");
    auto spec = fft::forward_real(buf.samples);
    for (std::size_t i = 0; i < n; ++i) {
        const long f = fft::signed_bin(i, n);
        if (f < 0) {
            spec[i] = cplx(0.0, 0.0);
        } else if (f > 0 && !(n % 2 == 0 && i == n / 2)) {
            spec[i] *= 2.0;
        }
    }
    ComplexBuffer out;
    out.f_s = buf.f_s;
    out.samples = fft::inverse(std::move(spec));
    return out;
}

// Element-wise echo * conj(reference). A delay dt shows up afterwards as a
// beat tone at k*dt.
inline ComplexBuffer dechirp(const ComplexBuffer& echo, const ComplexBuffer& reference) {
    if (echo.samples.size() != reference.samples.size())
        throw ShapeError("dechirp: buffer lengths differ");
    ComplexBuffer out;
    out.f_s = echo.f_s;
    out.samples.resize(echo.samples.size());
    for (std::size_t i = 0; i < echo.samples.size(); ++i)
        out.samples[i] = echo.samples[i] * std::conj(reference.samples[i]);
    return out;
}

inline constexpr double kDefaultSoundSpeed = 343.0;  // m/s at 20 C

inline double delay_to_distance(double dt, double v_s = kDefaultSoundSpeed) {
    if (dt < 0.0) throw DomainError("delay_to_distance: negative delay");
    if (!(v_s > 0.0)) throw DomainError("delay_to_distance: v_s must be > 0");
    return dt * v_s / 2.0;
}

inline double distance_to_delay(double d, double v_s = kDefaultSoundSpeed) {
    if (d < 0.0) throw DomainError("distance_to_delay: negative distance");
    if (!(v_s > 0.0)) throw DomainError("distance_to_delay: v_s must be > 0");
    return 2.0 * d / v_s;
}

}  // namespace sonomesh
