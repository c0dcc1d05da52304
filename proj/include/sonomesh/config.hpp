#pragma once

#include <json.hpp>

#include "sonomesh/echosim.hpp"
#include "sonomesh/io.hpp"

namespace sonomesh {

struct ImagingConfig {
    std::size_t pad = 4;
    bool window = false;  // Hann on both FFT axes
    bool autofocus = true;
    std::size_t max_iters = 50;
    double tol = 1e-6;
};

struct PoseConfig {
    double threshold_q = 0.90;
    std::size_t K = 6;
    std::uint64_t seed = 1;
};

struct RegistrationConfig {
    std::size_t grid_nx = 9, grid_ny = 9, grid_nz = 17;
    double temperature = 1.0;
    std::string checkpoint = "reg.regp";
    std::size_t epochs = 50;
    double lr = 1e-3;
    std::size_t batch = 10;
    std::uint64_t seed = 7;
};

struct FusionConfig {
    std::string checkpoint = "fusion.fusp";
    double lambda = 0.1;  // match-loss weight, exposed but unused by forward passes
    double mask_p = 0.0;
    std::uint64_t seed = 11;
};

// A scene is described by a pose, not raw scatter lists; the generator
// expands it deterministically.
struct SceneDescription {
    PoseSpec pose;
    double density = 50.0;  // scatter points per meter of bone
    TargetMotion motion;
    double snr_db = std::numeric_limits<double>::infinity();
    std::size_t n_profiles = 96;
    double standoff = 2.5;
    std::uint64_t rng_seed = 1;
    std::vector<ScatterPoint> background;
};

struct PipelineConfig {
    ChirpConfig chirp;
    ChirpConfig scene_chirp;  // longer chirp used for imaging scenes
    SceneDescription scene;
    ImagingConfig imaging;
    PoseConfig pose;
    RegistrationConfig registration;
    FusionConfig fusion;
    std::string output_dir = ".";

    SceneConfig to_scene_config() const {
        SceneConfig sc;
        auto ps = pose_to_scatters(scene.pose, scene.density);
        // center the body on the standoff so echoes stay inside the receive
        // window; the pipeline adds the centroid back when mapping detections
        // to the body frame
        Vec2 centroid{0, 0};
        for (const auto& s : ps.scatters) centroid = centroid + s.position;
        centroid = centroid * (1.0 / static_cast<double>(ps.scatters.size()));
        for (auto& s : ps.scatters) s.position = s.position - centroid;
        sc.target = ps.scatters;
        sc.motion = scene.motion;
        sc.background = scene.background;
        sc.snr_db = scene.snr_db;
        sc.n_profiles = scene.n_profiles;
        sc.chirp = scene_chirp;
        sc.standoff = scene.standoff;
        sc.rng_seed = scene.rng_seed;
        sc.validate();
        return sc;
    }
};

namespace detail {

template <typename T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("config: bad value for field '") + key + "'");
    }
}

inline void parse_chirp(const nlohmann::json& j, ChirpConfig& c) {
    get_if(j, "f_c", c.f_c);
    get_if(j, "B", c.B);
    get_if(j, "T_c", c.T_c);
    get_if(j, "T_e", c.T_e);
    get_if(j, "f_s", c.f_s);
    get_if(j, "amplitude", c.amplitude);
}

}  // namespace detail

inline PipelineConfig parse_config(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: parse failure: ") + e.what());
    }
    if (j.value("schema_version", 0) != 1)
        throw ConfigError("config: field 'schema_version' missing or not 1");
    PipelineConfig cfg;
    // the imaging scene defaults to a long chirp so a body-height swath fits,
    // with a matching longer pause for the unambiguous range
    cfg.scene_chirp.T_c = 10e-3;
    cfg.scene_chirp.T_e = 20e-3;
    if (j.contains("chirp")) detail::parse_chirp(j["chirp"], cfg.chirp);
    if (j.contains("scene_chirp")) detail::parse_chirp(j["scene_chirp"], cfg.scene_chirp);
    if (j.contains("scene")) {
        const auto& s = j["scene"];
        detail::get_if(s, "pose_id", cfg.scene.pose.pose_id);
        detail::get_if(s, "scale", cfg.scene.pose.scale);
        detail::get_if(s, "density", cfg.scene.density);
        detail::get_if(s, "aperture_angle", cfg.scene.motion.aperture_angle);
        detail::get_if(s, "radial_velocity", cfg.scene.motion.radial_velocity);
        detail::get_if(s, "snr_db", cfg.scene.snr_db);
        detail::get_if(s, "n_profiles", cfg.scene.n_profiles);
        detail::get_if(s, "standoff", cfg.scene.standoff);
        detail::get_if(s, "seed", cfg.scene.rng_seed);
        if (s.contains("background")) {
            for (const auto& b : s["background"]) {
                ScatterPoint p;
                p.position = {b.at("x").get<double>(), b.at("y").get<double>()};
                detail::get_if(b, "reflectivity", p.reflectivity);
                cfg.scene.background.push_back(p);
            }
        }
        if (s.contains("joint_overrides")) {
            for (const auto& [name, v] : s["joint_overrides"].items())
                cfg.scene.pose.joint_overrides.push_back(
                    {name, {v[0].get<double>(), v[1].get<double>()}});
        }
    }
    if (j.contains("imaging")) {
        const auto& s = j["imaging"];
        detail::get_if(s, "pad", cfg.imaging.pad);
        detail::get_if(s, "window", cfg.imaging.window);
        detail::get_if(s, "autofocus", cfg.imaging.autofocus);
        detail::get_if(s, "max_iters", cfg.imaging.max_iters);
        detail::get_if(s, "tol", cfg.imaging.tol);
    }
    if (j.contains("pose")) {
        const auto& s = j["pose"];
        detail::get_if(s, "threshold_q", cfg.pose.threshold_q);
        detail::get_if(s, "K", cfg.pose.K);
        detail::get_if(s, "seed", cfg.pose.seed);
    }
    if (j.contains("registration")) {
        const auto& s = j["registration"];
        detail::get_if(s, "grid_nx", cfg.registration.grid_nx);
        detail::get_if(s, "grid_ny", cfg.registration.grid_ny);
        detail::get_if(s, "grid_nz", cfg.registration.grid_nz);
        detail::get_if(s, "temperature", cfg.registration.temperature);
        detail::get_if(s, "checkpoint", cfg.registration.checkpoint);
        detail::get_if(s, "epochs", cfg.registration.epochs);
        detail::get_if(s, "lr", cfg.registration.lr);
        detail::get_if(s, "batch", cfg.registration.batch);
        detail::get_if(s, "seed", cfg.registration.seed);
    }
    if (j.contains("fusion")) {
        const auto& s = j["fusion"];
        detail::get_if(s, "checkpoint", cfg.fusion.checkpoint);
        detail::get_if(s, "lambda", cfg.fusion.lambda);
        detail::get_if(s, "mask_p", cfg.fusion.mask_p);
        detail::get_if(s, "seed", cfg.fusion.seed);
    }
    detail::get_if(j, "output_dir", cfg.output_dir);
    try {
        cfg.chirp.validate();
        cfg.scene_chirp.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("config: chirp: ") + e.what());
    }
    if (!(cfg.imaging.pad >= 1)) throw ConfigError("config: field 'imaging.pad' must be >= 1");
    if (!(cfg.pose.threshold_q > 0.0 && cfg.pose.threshold_q < 1.0))
        throw ConfigError("config: field 'pose.threshold_q' must be in (0,1)");
    if (cfg.pose.K < 1) throw ConfigError("config: field 'pose.K' must be >= 1");
    if (!(cfg.registration.temperature > 0.0))
        throw ConfigError("config: field 'registration.temperature' must be > 0");
    if (cfg.fusion.mask_p < 0.0 || cfg.fusion.mask_p > 1.0)
        throw ConfigError("config: field 'fusion.mask_p' must be in [0,1]");
    return cfg;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
    return parse_config(io::read_file(path));
}

}  // namespace sonomesh
