#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sonomesh/common.hpp"
#include "sonomesh/rng.hpp"
#include "sonomesh/signal.hpp"
#include "sonomesh/skeleton.hpp"

namespace sonomesh {

struct ScatterPoint {
    Vec2 position;          // scene coordinates, meters: x cross-range, y range
    double reflectivity = 1.0;
};

struct TargetMotion {
    double radial_velocity = 0.0;  // m/s, along the range axis (step 1)
    double aperture_angle = 0.2;   // radians swept over the N profiles (step 3)
};

struct PoseSpec {
    std::string pose_id = "standing";
    double scale = 1.7;  // body height, meters
    // per-joint articulation overrides, body-frame offsets in meters
    std::vector<std::pair<std::string, Vec2>> joint_overrides;
};

struct SceneConfig {
    std::vector<ScatterPoint> target;
    TargetMotion motion;
    std::vector<ScatterPoint> background;  // static, contribute identically per profile
    double snr_db = std::numeric_limits<double>::infinity();
    std::size_t n_profiles = 64;
    ChirpConfig chirp;
    double standoff = 1.0;  // target center range, meters
    double v_s = kDefaultSoundSpeed;
    std::uint64_t rng_seed = 1;
    bool spreading_loss = false;  // optional 1/r^2 amplitude falloff

    void validate() const {
        chirp.validate();
        if (n_profiles < 2) throw ConfigError("SceneConfig: n_profiles must be >= 2");
        if (!(standoff > 0.0)) throw ConfigError("SceneConfig: standoff must be > 0");
        if (chirp.T_e > 0.0 && standoff > v_s * chirp.T_e / 2.0)
            throw ConfigError("SceneConfig: standoff beyond unambiguous range v_s*T_e/2");
        if (std::abs(motion.aperture_angle) >= kPi / 2.0)
            throw ConfigError("SceneConfig: |aperture_angle| must be < pi/2");
    }
};

// Raw complex echo matrix: M fast-time samples per column, N profiles.
struct ProfileMatrix {
    std::size_t M = 0;
    std::size_t N = 0;
    std::vector<cplx> data;  // column-major, data[n*M + m]
    double f_s = 0.0;
    double k = 0.0;       // chirp slope, Hz/s
    double theta = 0.0;   // aperture angle swept, radians
    double lambda = 0.0;  // wavelength at carrier, meters
    double f0 = 0.0;      // sweep start frequency, Hz (phase reference)

    cplx& at(std::size_t m, std::size_t n) { return data[n * M + m]; }
    const cplx& at(std::size_t m, std::size_t n) const { return data[n * M + m]; }

    void check_same_shape(const ProfileMatrix& o, const char* what) const {
        if (M != o.M || N != o.N)
            throw ShapeError(std::string(what) + ": profile matrix shapes differ");
    }
};

// Scatter-point sampling of the 16-joint skeleton posed per spec. Points are
// placed along the 15 bones with a deterministic cross-bone jitter of up to
// kBoneRadius. Returns the scatters plus the skeleton joints as ground truth,
// both in body-frame meters (x width, y height with ankles at 0).
inline constexpr double kBoneRadius = 0.03;  // meters

struct PoseScatters {
    std::vector<ScatterPoint> scatters;
    JointSet2D joints;
};

inline PoseScatters pose_to_scatters(const PoseSpec& spec, double density) {
    if (!(density > 0.0)) throw DomainError("pose_to_scatters: density must be > 0");
    auto unit = pose_joints_unit(spec.pose_id);
    for (const auto& [name, off] : spec.joint_overrides) {
        bool found = false;
        for (int i = 0; i < kNumJoints; ++i) {
            if (joint_names()[i] == name) {
                unit[i] = unit[i] + off * (1.0 / spec.scale);
                found = true;
            }
        }
        if (!found) throw DomainError("pose_to_scatters: unknown joint " + name);
    }
    PoseScatters out;
    for (int i = 0; i < kNumJoints; ++i)
        out.joints.joints[i] = {unit[i].x * spec.scale, unit[i].y * spec.scale};

    // Seed from the pose name so the sampling is a pure function of the spec.
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : spec.pose_id) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ULL;
    Rng rng(h);

    for (int b = 0; b < kNumBones; ++b) {
        auto [p, c] = bone_list()[b];
        const Vec2 a = out.joints.joints[p];
        const Vec2 e = out.joints.joints[c];
        const double len = (e - a).norm();
        const auto n_pts = std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(len * density)));
        Vec2 dir = (e - a) * (1.0 / len);
        Vec2 normal{-dir.y, dir.x};
        for (std::size_t i = 0; i < n_pts; ++i) {
            const double t = static_cast<double>(i) / static_cast<double>(n_pts - 1);
            const double jx = rng.uniform(-kBoneRadius, kBoneRadius);
            Vec2 pos = a + (e - a) * t + normal * jx;
            out.scatters.push_back({pos, 1.0});
        }
    }
    return out;
}

namespace detail {

// Range of scatter p in profile n: radial translation (step 1) shifts the
// target center; rotation (step 3) turns the offsets about the centroid.
inline double scatter_range(const Vec2& pos, const Vec2& centroid, double standoff_n,
                            double angle_n) {
    const Vec2 off = pos - centroid;
    const double ca = std::cos(angle_n), sa = std::sin(angle_n);
    const Vec2 rot{ca * off.x - sa * off.y, sa * off.x + ca * off.y};
    // Sensor at the origin, scene center on the range axis at standoff_n.
    const double x = centroid.x + rot.x;
    const double y = standoff_n + (centroid.y + rot.y);
    return std::sqrt(x * x + y * y);
}

inline Vec2 scatter_centroid(const std::vector<ScatterPoint>& pts) {
    Vec2 c{0, 0};
    if (pts.empty()) return c;
    for (const auto& p : pts) c = c + p.position;
    return c * (1.0 / static_cast<double>(pts.size()));
}

// One column: window gated at the reference delay 2*standoff/v_s, stretch
// dechirp convention. The column holds the analytic, bandpassed superposition
// of delayed chirps sampled over the window.
inline void add_scatter_echoes(std::vector<double>& column, const SceneConfig& scene,
                               const std::vector<ScatterPoint>& pts, const Vec2& centroid,
                               double standoff_n, double angle_n, std::size_t scatter_base) {
    const auto& cfg = scene.chirp;
    const std::size_t M = cfg.samples_per_chirp();
    const double tau_ref = 2.0 * scene.standoff / scene.v_s;
    const double max_range = scene.v_s * (tau_ref + cfg.T_c) / 2.0;
    for (std::size_t p = 0; p < pts.size(); ++p) {
        const double r = scatter_range(pts[p].position, centroid, standoff_n, angle_n);
        if (r <= 0.0 || r >= max_range)
            throw DomainError("scatter " + std::to_string(scatter_base + p) +
                              " beyond unambiguous range");
        const double tau = 2.0 * r / scene.v_s;
        double amp = pts[p].reflectivity;
        if (scene.spreading_loss) amp /= std::max(1e-6, r * r);
        const double dtau = tau - tau_ref;
        for (std::size_t m = 0; m < M; ++m) {
            const double t = static_cast<double>(m) / cfg.f_s;  // window time
            column[m] += amp * chirp_at(cfg, t - dtau);
        }
    }
}

}  // namespace detail

namespace detail {

inline ProfileMatrix simulate_impl(const SceneConfig& scene, bool target_on,
                                   bool background_on, bool noise_on) {
    scene.validate();
    const auto& cfg = scene.chirp;
    const std::size_t M = cfg.samples_per_chirp();
    const std::size_t N = scene.n_profiles;
    ProfileMatrix out;
    out.M = M;
    out.N = N;
    out.f_s = cfg.f_s;
    out.k = cfg.slope();
    out.theta = scene.motion.aperture_angle;
    out.lambda = scene.v_s / cfg.f_c;
    out.f0 = cfg.f_start();
    out.data.assign(M * N, cplx(0, 0));

    const Vec2 centroid = detail::scatter_centroid(scene.target);
    const Vec2 bg_centroid{0, 0};  // background never moves

    double signal_power_acc = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
        std::vector<double> column(M, 0.0);
        const double t_n = static_cast<double>(n) * cfg.period();
        const double standoff_n = scene.standoff + scene.motion.radial_velocity * t_n;
        const double angle_n =
            N > 1 ? scene.motion.aperture_angle * static_cast<double>(n) /
                        static_cast<double>(N - 1)
                  : 0.0;
        if (target_on)
            detail::add_scatter_echoes(column, scene, scene.target, centroid, standoff_n,
                                       angle_n, 0);
        if (background_on)
            detail::add_scatter_echoes(column, scene, scene.background, bg_centroid,
                                       scene.standoff, 0.0, scene.target.size());
        SampleBuffer buf{std::move(column), cfg.f_s};
        buf = bandpass(buf, cfg.f_c - cfg.B, cfg.f_c + cfg.B);
        auto an = analytic(buf);
        for (std::size_t m = 0; m < M; ++m) {
            out.at(m, n) = an.samples[m];
            signal_power_acc += std::norm(an.samples[m]);
        }
    }

    if (noise_on && std::isfinite(scene.snr_db)) {
        const double sig_power = signal_power_acc / static_cast<double>(M * N);
        const double noise_power = sig_power / std::pow(10.0, scene.snr_db / 10.0);
        const double sigma = std::sqrt(noise_power / 2.0);  // per real component
        for (std::size_t n = 0; n < N; ++n) {
            // Per-column stream so parallel generation stays schedule-free.
            Rng rng = Rng::stream(scene.rng_seed, n);
            for (std::size_t m = 0; m < M; ++m)
                out.at(m, n) += rng.gaussian_cplx() * sigma;
        }
    }
    return out;
}

}  // namespace detail

inline ProfileMatrix simulate_echoes(const SceneConfig& scene) {
    return detail::simulate_impl(scene, true, true, true);
}

// Echoes of the static background only, noise-free; every column identical.
inline ProfileMatrix background_profile(const SceneConfig& scene) {
    return detail::simulate_impl(scene, false, true, false);
}

// Target-only matrix, noise-free. Test oracle for superposition checks.
inline ProfileMatrix target_profile(const SceneConfig& scene) {
    return detail::simulate_impl(scene, true, false, false);
}

}  // namespace sonomesh
