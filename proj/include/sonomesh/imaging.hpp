#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "sonomesh/common.hpp"
#include "sonomesh/echosim.hpp"
#include "sonomesh/fft.hpp"
#include "sonomesh/signal.hpp"

namespace sonomesh {

// Range x azimuth magnitude image. rows = range bins, cols = azimuth bins.
// azimuth_bin is in cycles/aperture per bin (1/pad); azimuth_bin_m carries the
// scene-meter calibration used for joint localization.
struct AcousticImage {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> pixels;  // row-major, >= 0
    double range_bin_m = 0.0;
    double azimuth_bin = 1.0;
    double azimuth_bin_m = 0.0;
    std::size_t pad = 1;

    double& at(std::size_t r, std::size_t c) { return pixels[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return pixels[r * cols + c]; }
};

struct AlignmentResult {
    std::vector<double> shifts;  // fast-time samples, per profile
    ProfileMatrix aligned;
};

struct FocusResult {
    std::vector<double> phases;         // radians per profile, phases[0] == 0
    std::vector<double> entropy_trace;  // per accepted sweep, non-increasing
    ProfileMatrix focused;
};

// Dechirp every column against the transmit chirp (analytic, window-local
// reference). Output carries the same metadata.
inline ProfileMatrix dechirp_matrix(const ProfileMatrix& m, const ChirpConfig& cfg) {
    if (m.M != cfg.samples_per_chirp())
        throw ShapeError("dechirp_matrix: chirp length does not match M");
    auto ref = analytic(synth_chirp(cfg));
    ProfileMatrix out = m;
    for (std::size_t n = 0; n < m.N; ++n)
        for (std::size_t mm = 0; mm < m.M; ++mm)
            out.at(mm, n) = m.at(mm, n) * std::conj(ref.samples[mm]);
    return out;
}

inline ProfileMatrix subtract_background(const ProfileMatrix& m, const ProfileMatrix& bg) {
    m.check_same_shape(bg, "subtract_background");
    ProfileMatrix out = m;
    for (std::size_t i = 0; i < m.data.size(); ++i) out.data[i] = m.data[i] - bg.data[i];
    return out;
}

namespace detail {

// Frequency offset (cycles/sample) between two columns holding the same beat
// content at a common shift: coarse padded-FFT peak on the conjugate product,
// then phase-difference refinement. The self terms of every scatter line up
// at the common offset, so the estimate stays sharp for multi-scatter scenes.
inline double column_freq_offset(const std::vector<cplx>& ref, const std::vector<cplx>& col) {
    const std::size_t M = ref.size();
    std::vector<cplx> prod(M);
    for (std::size_t i = 0; i < M; ++i) prod[i] = ref[i] * std::conj(col[i]);

    const std::size_t P = 8 * fft::detail::next_pow2(M);
    std::vector<cplx> padded(P, cplx(0, 0));
    std::copy(prod.begin(), prod.end(), padded.begin());
    fft::transform(padded, false);
    std::size_t best = 0;
    double best_mag = -1.0;
    for (std::size_t i = 0; i < P; ++i) {
        const double v = std::abs(padded[i]);
        if (v > best_mag) {
            best_mag = v;
            best = i;
        }
    }
    // parabolic refinement on the log magnitude
    const double ym = std::abs(padded[(best + P - 1) % P]);
    const double y0 = std::abs(padded[best]);
    const double yp = std::abs(padded[(best + 1) % P]);
    double delta = 0.0;
    const double denom = ym - 2.0 * y0 + yp;
    if (std::abs(denom) > 1e-30) delta = 0.5 * (ym - yp) / denom;
    double f = (static_cast<double>(fft::signed_bin(best, P)) + delta) / static_cast<double>(P);

    // phase-slope refinement: residual frequency of prod * e^{-j2pi f m}
    for (int it = 0; it < 3; ++it) {
        const cplx step = std::exp(cplx(0, -2.0 * kPi * f));
        cplx acc(0, 0);
        cplx prev = prod[0];
        cplx rot(1, 0);
        for (std::size_t i = 1; i < M; ++i) {
            rot *= step;
            const cplx cur = prod[i] * rot;
            acc += cur * std::conj(prev);
            prev = cur;
        }
        f += std::arg(acc) / (2.0 * kPi);
    }
    return f;  // positive when col lags ref toward lower beat frequency
}

}  // namespace detail

// Cross-correlate each dechirped column's range profile against column 0 and
// take out the common sub-sample delay as a linear phase (circular spectral
// shift). Shifts are reported in fast-time samples.
inline AlignmentResult align_profiles(const ProfileMatrix& m, bool running_average = false) {
    if (m.M < 4) throw ShapeError("align_profiles: M must be >= 4");
    if (!(m.k > 0.0)) throw ConfigError("align_profiles: chirp slope missing");
    AlignmentResult res;
    res.shifts.assign(m.N, 0.0);
    res.aligned = m;

    std::vector<cplx> ref(m.M);
    for (std::size_t i = 0; i < m.M; ++i) ref[i] = m.at(i, 0);
    {
        double e = 0.0;
        for (const auto& v : ref) e += std::norm(v);
        if (e <= 0.0) throw AlignmentError("align_profiles: all-zero column 0");
    }

    std::vector<cplx> col(m.M);
    for (std::size_t n = 1; n < m.N; ++n) {
        double e = 0.0;
        for (std::size_t i = 0; i < m.M; ++i) {
            col[i] = m.at(i, n);
            e += std::norm(col[i]);
        }
        if (e <= 0.0)
            throw AlignmentError("align_profiles: all-zero column " + std::to_string(n));
        const double f = detail::column_freq_offset(ref, col);  // cycles/sample
        // beat shift f*f_s Hz -> delay f*f_s/k s -> fast-time samples
        const double shift_samples = f * m.f_s * m.f_s / m.k;
        res.shifts[n] = shift_samples;
        for (std::size_t i = 0; i < m.M; ++i)
            res.aligned.at(i, n) =
                col[i] * std::exp(cplx(0, 2.0 * kPi * f * static_cast<double>(i)));
        if (running_average) {
            // fold the aligned column into the reference
            const double w = static_cast<double>(n) / static_cast<double>(n + 1);
            for (std::size_t i = 0; i < m.M; ++i)
                ref[i] = ref[i] * w + res.aligned.at(i, n) * (1.0 - w);
        }
    }
    for (double s : res.shifts)
        if (std::abs(s) >= static_cast<double>(m.M) / 2.0)
            throw AlignmentError("align_profiles: shift exceeds M/2 samples");
    return res;
}

// Shannon entropy of the normalized intensity distribution of an image.
inline double image_entropy(const std::vector<double>& mag2, double total) {
    if (!(total > 0.0) || !std::isfinite(total))
        throw NumericError("image entropy undefined for all-zero image");
    double e = 0.0;
    for (double v : mag2) {
        if (v <= 0.0) continue;
        const double p = v / total;
        e -= p * std::log(p);
    }
    return e;
}

// 2D FFT magnitude image from dechirped IF data, both axes centered
// (fftshift) so the scene center sits mid-image and row/col indices grow with
// range/cross-range.
inline AcousticImage form_image(const ProfileMatrix& m, std::size_t pad = 1,
                                double v_s = kDefaultSoundSpeed, bool hann = false) {
    if (pad < 1) throw ConfigError("form_image: pad must be >= 1");
    const std::size_t Mp = m.M * pad;
    const std::size_t Np = m.N * pad;

    // range FFT per column
    std::vector<std::vector<cplx>> rangeft(m.N);
    for (std::size_t n = 0; n < m.N; ++n) {
        std::vector<cplx> colv(Mp, cplx(0, 0));
        for (std::size_t i = 0; i < m.M; ++i) {
            double w = 1.0;
            if (hann)
                w = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) /
                                         static_cast<double>(m.M - 1));
            colv[i] = m.at(i, n) * w;
        }
        fft::transform(colv, false);
        rangeft[n] = std::move(colv);
    }

    AcousticImage img;
    img.rows = Mp;
    img.cols = Np;
    img.pad = pad;
    img.pixels.assign(Mp * Np, 0.0);
    img.range_bin_m = v_s * m.f_s / (2.0 * m.k * static_cast<double>(Mp));
    img.azimuth_bin = 1.0 / static_cast<double>(pad);
    if (m.theta != 0.0 && (m.f0 > 0.0 || m.lambda > 0.0)) {
        // cross-range calibration uses the wavelength at the sweep start: the
        // dechirped carrier phase is referenced there, not at the center
        const double lam_eff = m.f0 > 0.0 ? v_s / m.f0 : m.lambda;
        img.azimuth_bin_m = lam_eff * static_cast<double>(m.N - 1) /
                            (2.0 * std::abs(m.theta) * static_cast<double>(Np));
    }

    // azimuth FFT per range row, then place with both axes centered.
    std::vector<cplx> rowv(Np);
    for (std::size_t q = 0; q < Mp; ++q) {
        std::fill(rowv.begin(), rowv.end(), cplx(0, 0));
        for (std::size_t n = 0; n < m.N; ++n) rowv[n] = rangeft[n][q];
        fft::transform(rowv, false);
        // row index: i_r = Mp/2 - signed(q) puts positive range offsets below center
        const long qs = fft::signed_bin(q, Mp);
        const long i_r = (static_cast<long>(Mp) / 2 - qs + static_cast<long>(Mp)) % static_cast<long>(Mp);
        for (std::size_t b = 0; b < Np; ++b) {
            const long bs = fft::signed_bin(b, Np);
            const long i_a = (static_cast<long>(Np) / 2 - bs + static_cast<long>(Np)) % static_cast<long>(Np);
            img.at(static_cast<std::size_t>(i_r), static_cast<std::size_t>(i_a)) = std::abs(rowv[b]);
        }
    }
    return img;
}

// Minimum-entropy autofocus: cyclic coordinate descent over per-profile
// phases with a golden-section line search, phase 0 fixed as gauge. The
// complex image is kept cached; changing one column's phase is a rank-one
// update, so each entropy evaluation costs O(M*N).
inline FocusResult mea_autofocus(const ProfileMatrix& m, std::size_t max_iters = 50,
                                 double tol = 1e-6) {
    const std::size_t M = m.M, N = m.N;
    FocusResult res;
    res.phases.assign(N, 0.0);

    // range FFT cache A[q][n]
    std::vector<std::vector<cplx>> A(N);
    for (std::size_t n = 0; n < N; ++n) {
        std::vector<cplx> colv(M);
        for (std::size_t i = 0; i < M; ++i) colv[i] = m.at(i, n);
        fft::transform(colv, false);
        A[n] = std::move(colv);
    }
    // Column n's image contribution is A[n][q] * W^{bn} * e^{-j phi_n}; it is
    // produced on the fly from A and a per-column azimuth phasor table, so
    // memory stays O(M*N).
    auto make_wtab = [&](std::size_t n, double phi) {
        std::vector<cplx> w(N);
        for (std::size_t b = 0; b < N; ++b) {
            const double ang = -2.0 * kPi * static_cast<double>(b) * static_cast<double>(n) /
                                   static_cast<double>(N) -
                               phi;
            w[b] = cplx(std::cos(ang), std::sin(ang));
        }
        return w;
    };
    std::vector<cplx> G(M * N, cplx(0, 0));
    for (std::size_t n = 0; n < N; ++n) {
        const auto w = make_wtab(n, 0.0);
        for (std::size_t q = 0; q < M; ++q)
            for (std::size_t b = 0; b < N; ++b) G[q * N + b] += A[n][q] * w[b];
    }

    double total = 0.0;
    std::vector<double> mag2(M * N);
    for (std::size_t i = 0; i < M * N; ++i) {
        mag2[i] = std::norm(G[i]);
        total += mag2[i];
    }
    double entropy = image_entropy(mag2, total);  // throws on all-zero input
    res.entropy_trace.push_back(entropy);

    // entropy if column n's phase changes by dphi relative to current state
    std::vector<double> m2(M * N);
    auto eval_delta = [&](std::size_t n, const std::vector<cplx>& wtab, double dphi) {
        const cplx rho = std::exp(cplx(0, -dphi)) - cplx(1.0, 0.0);
        double tot = 0.0;
        for (std::size_t q = 0; q < M; ++q) {
            const cplx aq = rho * A[n][q];
            for (std::size_t b = 0; b < N; ++b) {
                const double v = std::norm(G[q * N + b] + aq * wtab[b]);
                m2[q * N + b] = v;
                tot += v;
            }
        }
        if (!(tot > 0.0)) throw NumericError("mea_autofocus: degenerate image");
        const double inv = 1.0 / tot;
        double e = 0.0;
        for (std::size_t i = 0; i < M * N; ++i) {
            const double v = m2[i] * inv;
            if (v > 0.0) e -= v * std::log(v);
        }
        return e;
    };
    auto apply = [&](std::size_t n, const std::vector<cplx>& wtab, double dphi) {
        const cplx rho = std::exp(cplx(0, -dphi)) - cplx(1.0, 0.0);
        for (std::size_t q = 0; q < M; ++q) {
            const cplx aq = rho * A[n][q];
            for (std::size_t b = 0; b < N; ++b) G[q * N + b] += aq * wtab[b];
        }
        res.phases[n] += dphi;
    };

    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    for (std::size_t it = 0; it < max_iters; ++it) {
        for (std::size_t n = 1; n < N; ++n) {  // phase 0 is the gauge
            const auto wtab = make_wtab(n, res.phases[n]);
            double a = -kPi, b = kPi;
            double c1 = b - gr * (b - a), c2 = a + gr * (b - a);
            double f1 = eval_delta(n, wtab, c1), f2 = eval_delta(n, wtab, c2);
            for (int step = 0; step < 24; ++step) {
                if (f1 < f2) {
                    b = c2;
                    c2 = c1;
                    f2 = f1;
                    c1 = b - gr * (b - a);
                    f1 = eval_delta(n, wtab, c1);
                } else {
                    a = c1;
                    c1 = c2;
                    f1 = f2;
                    c2 = a + gr * (b - a);
                    f2 = eval_delta(n, wtab, c2);
                }
            }
            const double best = 0.5 * (a + b);
            const double e_best = eval_delta(n, wtab, best);
            if (e_best < entropy) {  // monotone by construction
                apply(n, wtab, best);
                entropy = e_best;
            }
        }
        const double prev = res.entropy_trace.back();
        res.entropy_trace.push_back(entropy);
        if (std::abs(prev - entropy) < tol) break;
    }

    res.focused = m;
    for (std::size_t n = 0; n < N; ++n) {
        const cplx ph = std::exp(cplx(0, -res.phases[n]));
        for (std::size_t i = 0; i < M; ++i) res.focused.at(i, n) = m.at(i, n) * ph;
    }
    return res;
}

// Separable sinc PSF oracle for a point scatter at fractional image position
// (p_r, p_a) in bins. T is configurable: the chirp-period ambiguity between
// T_c and T_c + T_e is exposed rather than resolved.
struct PsfMeta {
    std::size_t rows = 0;
    std::size_t cols = 0;
    double range_bin_m = 0.0;
    double azimuth_bin_m = 0.0;
    double k = 0.0;
    double T = 0.0;  // chirp duration used in the range sinc
    double v_s = kDefaultSoundSpeed;
    double theta = 0.0;
    double lambda = 0.0;
    double amplitude = 1.0;
};

inline AcousticImage psf_predict(double p_r, double p_a, const PsfMeta& meta) {
    AcousticImage img;
    img.rows = meta.rows;
    img.cols = meta.cols;
    img.range_bin_m = meta.range_bin_m;
    img.azimuth_bin_m = meta.azimuth_bin_m;
    img.pixels.assign(meta.rows * meta.cols, 0.0);
    for (std::size_t r = 0; r < meta.rows; ++r) {
        const double dr_m = (static_cast<double>(r) - p_r) * meta.range_bin_m;
        const double sr = sinc(2.0 * meta.k * meta.T / meta.v_s * dr_m);
        for (std::size_t c = 0; c < meta.cols; ++c) {
            const double da_m = (static_cast<double>(c) - p_a) * meta.azimuth_bin_m;
            const double sa = sinc(2.0 * meta.theta / meta.lambda * da_m);
            img.at(r, c) = meta.amplitude * std::abs(sr * sa);
        }
    }
    return img;
}

}  // namespace sonomesh
