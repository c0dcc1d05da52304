#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sonomesh/echosim.hpp"
#include "sonomesh/imaging.hpp"
#include "sonomesh/rng.hpp"

using namespace sonomesh;

static SceneConfig scene_base() {
    SceneConfig sc;
    sc.chirp.T_c = 10e-3;
    sc.chirp.T_e = 20e-3;
    sc.standoff = 2.5;
    sc.n_profiles = 16;
    sc.motion.aperture_angle = 0.0;
    return sc;
}

static std::pair<std::size_t, std::size_t> peak_pixel(const AcousticImage& img) {
    std::size_t br = 0, bc = 0;
    double best = -1.0;
    for (std::size_t r = 0; r < img.rows; ++r)
        for (std::size_t c = 0; c < img.cols; ++c)
            if (img.at(r, c) > best) { best = img.at(r, c); br = r; bc = c; }
    return {br, bc};
}

TEST_CASE("dechirp_matrix multiplies by the conjugate analytic reference") {
    SceneConfig sc = scene_base();
    sc.target = {{{0.0, 0.2}, 1.0}};
    const ProfileMatrix m = simulate_echoes(sc);
    const ProfileMatrix d = dechirp_matrix(m, sc.chirp);
    const auto ref = analytic(synth_chirp(sc.chirp));
    for (std::size_t n = 0; n < m.N; ++n)
        for (std::size_t i = 0; i < m.M; ++i)
            CHECK(d.at(i, n) == m.at(i, n) * std::conj(ref.samples[i]));
    ChirpConfig other = sc.chirp;
    other.T_c *= 2.0;
    CHECK_THROWS_AS(dechirp_matrix(m, other), ShapeError);
}

TEST_CASE("background subtraction removes a static clutter line by >= 60 dB") {
    SceneConfig sc = scene_base();
    sc.target = {{{0.0, 0.15}, 1.0}};
    sc.background = {{{0.0, -0.4}, 2.0}};
    sc.motion.aperture_angle = 0.1;
    const ProfileMatrix m = simulate_echoes(sc);
    const ProfileMatrix bg = background_profile(sc);
    const ProfileMatrix clean = subtract_background(m, bg);

    // look at the background's beat bin in the range FFT of column 0
    auto range_power_at = [&](const ProfileMatrix& pm, double dy) {
        const ProfileMatrix d = dechirp_matrix(pm, sc.chirp);
        std::vector<cplx> col(d.M);
        for (std::size_t i = 0; i < d.M; ++i) col[i] = d.at(i, 0);
        fft::transform(col, false);
        const double f_beat = -d.k * 2.0 * dy / sc.v_s;
        const long bin = std::lround(f_beat / d.f_s * static_cast<double>(d.M));
        const std::size_t q = static_cast<std::size_t>((bin + static_cast<long>(d.M)) %
                                                       static_cast<long>(d.M));
        return std::norm(col[q]);
    };
    // subtraction is exact: what remains equals the target-only simulation
    const ProfileMatrix tgt = target_profile(sc);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        num += std::norm(clean.data[i] - tgt.data[i]);
        den += std::norm(tgt.data[i]);
    }
    CHECK(10.0 * std::log10(den / std::max(num, 1e-300)) > 60.0);
    // and the clutter's beat bin drops to the target sidelobe floor
    const double before = range_power_at(m, -0.4);
    const double after = range_power_at(clean, -0.4);
    CHECK(10.0 * std::log10(before / after) > 25.0);

    ProfileMatrix small = bg;
    small.N -= 1;
    small.data.resize(small.M * small.N);
    CHECK_THROWS_AS(subtract_background(m, small), ShapeError);
}

TEST_CASE("align_profiles recovers injected sub-sample shifts") {
    SceneConfig sc = scene_base();
    sc.target = {{{0.05, 0.12}, 1.0}, {{-0.1, -0.08}, 0.8}};
    const ProfileMatrix d = dechirp_matrix(simulate_echoes(sc), sc.chirp);

    Rng rng(99);
    for (int trial = 0; trial < 5; ++trial) {
        ProfileMatrix shifted = d;
        std::vector<double> truth(d.N, 0.0);
        for (std::size_t n = 1; n < d.N; ++n) {
            truth[n] = rng.uniform(-2.0, 2.0);  // fast-time samples
            // a fast-time delay of s samples moves the beat by -k*s/f_s Hz,
            // i.e. a linear phase exp(-j 2 pi k s i / f_s^2) across the window
            const double f = -d.k * truth[n] / (d.f_s * d.f_s);
            for (std::size_t i = 0; i < d.M; ++i)
                shifted.at(i, n) *= std::exp(cplx(0, 2.0 * kPi * f * static_cast<double>(i)));
        }
        const AlignmentResult res = align_profiles(shifted);
        CHECK(res.shifts[0] == 0.0);
        for (std::size_t n = 1; n < d.N; ++n)
            CHECK(std::abs(res.shifts[n] - truth[n]) < 0.25);
        // aligned columns should match column 0 again (up to estimator residue)
        for (std::size_t n = 1; n < d.N; ++n) {
            double num = 0.0, den = 0.0;
            for (std::size_t i = 0; i < d.M; ++i) {
                num += std::norm(res.aligned.at(i, n) - d.at(i, n));
                den += std::norm(d.at(i, n));
            }
            CHECK(num / den < 0.05);
        }
    }
}

TEST_CASE("align_profiles error paths") {
    SceneConfig sc = scene_base();
    sc.target = {{{0.0, 0.1}, 1.0}};
    ProfileMatrix d = dechirp_matrix(simulate_echoes(sc), sc.chirp);
    for (std::size_t i = 0; i < d.M; ++i) d.at(i, 3) = cplx(0, 0);
    try {
        align_profiles(d);
        FAIL("expected AlignmentError");
    } catch (const AlignmentError& e) {
        CHECK(std::string(e.what()).find("3") != std::string::npos);
    }
    ProfileMatrix tiny;
    tiny.M = 2;
    tiny.N = 2;
    tiny.k = 1.0;
    tiny.data.assign(4, cplx(1, 0));
    CHECK_THROWS_AS(align_profiles(tiny), ShapeError);
}

TEST_CASE("form_image places a centroid scatter at the image center") {
    SceneConfig sc = scene_base();
    sc.target = {{{0.0, 0.0}, 1.0}};
    sc.motion.aperture_angle = 0.2;
    const ProfileMatrix d = dechirp_matrix(simulate_echoes(sc), sc.chirp);
    const AcousticImage img = form_image(d, 2);
    CHECK(img.rows == d.M * 2);
    CHECK(img.cols == d.N * 2);
    const auto [pr, pc] = peak_pixel(img);
    CHECK(std::abs(static_cast<long>(pr) - static_cast<long>(img.rows / 2)) <= 2);
    CHECK(std::abs(static_cast<long>(pc) - static_cast<long>(img.cols / 2)) <= 2);
    CHECK(img.range_bin_m == doctest::Approx(sc.v_s * d.f_s / (2.0 * d.k * double(img.rows))));
    CHECK(img.azimuth_bin_m > 0.0);
}

TEST_CASE("form_image: positive range offset lands below center at the known bin") {
    SceneConfig sc = scene_base();
    sc.n_profiles = 32;
    const double dy = 0.3;
    sc.target = {{{0.0, dy}, 1.0}, {{0.0, 0.0}, 1e-12}};  // phantom holds the centroid
    sc.motion.aperture_angle = 0.0;
    const ProfileMatrix d = dechirp_matrix(simulate_echoes(sc), sc.chirp);
    const AcousticImage img = form_image(d, 1);
    const auto [pr, pc] = peak_pixel(img);
    // the phantom barely moves the centroid, so the bright scatter images at
    // its full dy range offset, below the center row
    const long want = static_cast<long>(img.rows / 2) + std::lround(dy / img.range_bin_m);
    CHECK(std::abs(static_cast<long>(pr) - want) <= 1);
    CHECK(std::abs(static_cast<long>(pc) - static_cast<long>(img.cols / 2)) <= 1);
}

TEST_CASE("two scatters split in cross-range by the calibrated azimuth bin") {
    SceneConfig sc = scene_base();
    sc.n_profiles = 64;
    sc.motion.aperture_angle = 0.12;
    const double dx = 0.25;
    sc.target = {{{dx / 2, 0.0}, 1.0}, {{-dx / 2, 0.0}, 1.0}};
    const ProfileMatrix d = dechirp_matrix(simulate_echoes(sc), sc.chirp);
    const AcousticImage img = form_image(d, 2);
    // the two peaks share the center row; find the two azimuth maxima there
    const std::size_t r0 = img.rows / 2;
    double best1 = -1, best2 = -1;
    std::size_t c1 = 0, c2 = 0;
    for (std::size_t c = 0; c < img.cols; ++c) {
        double v = 0.0;
        for (long dr = -2; dr <= 2; ++dr)
            v = std::max(v, img.at(static_cast<std::size_t>(static_cast<long>(r0) + dr), c));
        if (v > best1) { best2 = best1; c2 = c1; best1 = v; c1 = c; }
        else if (v > best2 && (c > c1 + 3 || c1 > c + 3)) { best2 = v; c2 = c; }
    }
    const double sep_m = std::abs(static_cast<double>(c1) - static_cast<double>(c2)) *
                         img.azimuth_bin_m;
    CHECK(sep_m == doctest::Approx(dx).epsilon(0.25));
}

TEST_CASE("autofocus: entropy trace is non-increasing and corrects phase errors") {
    SceneConfig sc = scene_base();
    sc.target = {{{0.08, 0.1}, 1.0}, {{-0.06, -0.12}, 0.9}};
    sc.motion.aperture_angle = 0.15;
    ProfileMatrix d = dechirp_matrix(simulate_echoes(sc), sc.chirp);

    // keep the focus problem small for speed
    ProfileMatrix small;
    small.M = 64;
    small.N = d.N;
    small.f_s = d.f_s;
    small.k = d.k;
    small.theta = d.theta;
    small.lambda = d.lambda;
    small.f0 = d.f0;
    small.data.resize(small.M * small.N);
    for (std::size_t n = 0; n < small.N; ++n)
        for (std::size_t i = 0; i < small.M; ++i) small.at(i, n) = d.at(i * 15, n);

    Rng rng(5);
    ProfileMatrix blurred = small;
    std::vector<double> injected(small.N, 0.0);
    for (std::size_t n = 1; n < small.N; ++n) {
        injected[n] = rng.uniform(-1.2, 1.2);
        const cplx ph = std::exp(cplx(0, injected[n]));
        for (std::size_t i = 0; i < small.M; ++i) blurred.at(i, n) *= ph;
    }

    const FocusResult res = mea_autofocus(blurred, 30);
    REQUIRE(res.entropy_trace.size() >= 2);
    for (std::size_t i = 1; i < res.entropy_trace.size(); ++i)
        CHECK(res.entropy_trace[i] <= res.entropy_trace[i - 1] + 1e-12);
    CHECK(res.phases[0] == 0.0);
    // focused entropy should land at or below the unblurred entropy
    const FocusResult base = mea_autofocus(small, 1, 1e12);
    CHECK(res.entropy_trace.back() <= base.entropy_trace.front() + 0.05);
}

TEST_CASE("psf_predict: sinc nulls at the resolution spacing") {
    PsfMeta meta;
    meta.rows = 64;
    meta.cols = 32;
    meta.k = 4e5;
    meta.T = 10e-3;
    meta.v_s = 343.0;
    meta.theta = 0.2;
    meta.lambda = 343.0 / 20000.0;
    // place the first nulls exactly 4 bins from the peak
    const double range_null_m = meta.v_s / (2.0 * meta.k * meta.T);
    const double azimuth_null_m = meta.lambda / (2.0 * meta.theta);
    meta.range_bin_m = range_null_m / 4.0;
    meta.azimuth_bin_m = azimuth_null_m / 4.0;
    const AcousticImage img = psf_predict(32.0, 16.0, meta);
    CHECK(img.at(32, 16) == doctest::Approx(1.0));
    CHECK(img.at(36, 16) < 1e-12);
    CHECK(img.at(28, 16) < 1e-12);
    CHECK(img.at(32, 20) < 1e-12);
    CHECK(img.at(32, 12) < 1e-12);
    // between the nulls the sidelobe comes back up
    CHECK(img.at(38, 16) > 0.05);
}

TEST_CASE("hann window trades mainlobe width for lower range sidelobes") {
    SceneConfig sc = scene_base();
    sc.target = {{{0.0, 0.1001}, 1.0}};  // deliberately off-bin to force sidelobes
    const ProfileMatrix d = dechirp_matrix(simulate_echoes(sc), sc.chirp);
    const AcousticImage rect = form_image(d, 2, kDefaultSoundSpeed, false);
    const AcousticImage hann = form_image(d, 2, kDefaultSoundSpeed, true);
    const auto [pr, pc] = peak_pixel(rect);
    const auto [hr, hc] = peak_pixel(hann);
    auto sidelobe_db = [&](const AcousticImage& img, std::size_t r0, std::size_t c0) {
        double peak = img.at(r0, c0), sl = 0.0;
        for (std::size_t r = 0; r < img.rows; ++r) {
            if (std::llabs(static_cast<long long>(r) - static_cast<long long>(r0)) < 8) continue;
            sl = std::max(sl, img.at(r, c0));
        }
        return 20.0 * std::log10(sl / peak);
    };
    CHECK(sidelobe_db(hann, hr, hc) < sidelobe_db(rect, pr, pc) - 5.0);
}

TEST_CASE("form_image rejects pad 0; entropy rejects all-zero input") {
    SceneConfig sc = scene_base();
    sc.target = {{{0.0, 0.1}, 1.0}};
    const ProfileMatrix d = dechirp_matrix(simulate_echoes(sc), sc.chirp);
    CHECK_THROWS_AS(form_image(d, 0), ConfigError);
    CHECK_THROWS_AS(image_entropy({0.0, 0.0}, 0.0), NumericError);
}
