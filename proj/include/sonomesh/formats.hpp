#pragma once

#include <json.hpp>

#include "sonomesh/echosim.hpp"
#include "sonomesh/imaging.hpp"
#include "sonomesh/io.hpp"
#include "sonomesh/skeleton.hpp"

namespace sonomesh::io {

inline void write_pmtx(const std::filesystem::path& path, const ProfileMatrix& m) {
    std::string s = "PMTX";
    detail::put_u32(s, static_cast<std::uint32_t>(m.M));
    detail::put_u32(s, static_cast<std::uint32_t>(m.N));
    detail::put_u32(s, static_cast<std::uint32_t>(std::llround(m.f_s)));
    detail::put_f64(s, m.k);
    for (const auto& z : m.data) {
        detail::put_f32(s, static_cast<float>(z.real()));
        detail::put_f32(s, static_cast<float>(z.imag()));
    }
    atomic_write(path, s);
}

// theta/lambda are not part of the file format; the caller restores them from
// its scene configuration.
inline ProfileMatrix read_pmtx(const std::filesystem::path& path) {
    detail::Reader r(read_file(path));
    r.expect_magic("PMTX");
    ProfileMatrix m;
    m.M = r.u32();
    m.N = r.u32();
    m.f_s = r.u32();
    m.k = r.f64();
    m.data.resize(m.M * m.N);
    for (auto& z : m.data) {
        const float re = r.f32();
        const float im = r.f32();
        z = {re, im};
    }
    return m;
}

inline void write_aimg(const std::filesystem::path& path, const AcousticImage& img) {
    std::string s = "AIMG";
    detail::put_u32(s, static_cast<std::uint32_t>(img.rows));
    detail::put_u32(s, static_cast<std::uint32_t>(img.cols));
    detail::put_f64(s, img.range_bin_m);
    detail::put_f64(s, img.azimuth_bin);
    for (double p : img.pixels) detail::put_f32(s, static_cast<float>(p));
    atomic_write(path, s);
}

inline AcousticImage read_aimg(const std::filesystem::path& path) {
    detail::Reader r(read_file(path));
    r.expect_magic("AIMG");
    AcousticImage img;
    img.rows = r.u32();
    img.cols = r.u32();
    img.range_bin_m = r.f64();
    img.azimuth_bin = r.f64();
    img.pixels.resize(img.rows * img.cols);
    for (auto& p : img.pixels) p = r.f32();
    return img;
}

inline void write_joints2d(const std::filesystem::path& path, const JointSet2D& js) {
    nlohmann::json doc;
    doc["schema_version"] = 1;
    auto& arr = doc["joints"] = nlohmann::json::array();
    for (int j = 0; j < kNumJoints; ++j)
        arr.push_back({{"name", joint_names()[static_cast<std::size_t>(j)]},
                       {"x", js.joints[j].x},
                       {"y", js.joints[j].y},
                       {"flagged", js.flagged[static_cast<std::size_t>(j)]}});
    atomic_write(path, doc.dump(2) + "\n");
}

inline JointSet2D read_joints2d(const std::filesystem::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad joints file: ") + e.what());
    }
    if (doc.value("schema_version", 0) != 1) throw IoError("joints file: unsupported schema");
    JointSet2D js;
    const auto& arr = doc.at("joints");
    if (arr.size() != kNumJoints) throw IoError("joints file: expected 16 joints");
    for (int j = 0; j < kNumJoints; ++j) {
        const auto& e = arr[static_cast<std::size_t>(j)];
        if (e.at("name") != joint_names()[static_cast<std::size_t>(j)])
            throw IoError("joints file: unexpected joint order");
        js.joints[j] = {e.at("x").get<double>(), e.at("y").get<double>()};
        js.flagged[static_cast<std::size_t>(j)] = e.at("flagged").get<bool>();
    }
    return js;
}

inline void write_joints3d(const std::filesystem::path& path, const JointSet3D& js,
                           const std::vector<Vec3>* vertices = nullptr) {
    nlohmann::json doc;
    doc["schema_version"] = 1;
    auto& arr = doc["joints"] = nlohmann::json::array();
    for (int j = 0; j < kNumJoints; ++j)
        arr.push_back({{"name", joint_names()[static_cast<std::size_t>(j)]},
                       {"x", js.joints[j].x},
                       {"y", js.joints[j].y},
                       {"z", js.joints[j].z}});
    if (vertices) {
        auto& va = doc["vertices"] = nlohmann::json::array();
        for (const auto& v : *vertices) va.push_back({v.x, v.y, v.z});
    }
    atomic_write(path, doc.dump(2) + "\n");
}

inline JointSet3D read_joints3d(const std::filesystem::path& path,
                                std::vector<Vec3>* vertices = nullptr) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad joints file: ") + e.what());
    }
    if (doc.value("schema_version", 0) != 1) throw IoError("joints file: unsupported schema");
    JointSet3D js;
    const auto& arr = doc.at("joints");
    if (arr.size() != kNumJoints) throw IoError("joints file: expected 16 joints");
    for (int j = 0; j < kNumJoints; ++j) {
        const auto& e = arr[static_cast<std::size_t>(j)];
        js.joints[j] = {e.at("x").get<double>(), e.at("y").get<double>(),
                        e.at("z").get<double>()};
    }
    if (vertices && doc.contains("vertices")) {
        vertices->clear();
        for (const auto& v : doc["vertices"])
            vertices->push_back({v[0].get<double>(), v[1].get<double>(), v[2].get<double>()});
    }
    return js;
}

}  // namespace sonomesh::io
