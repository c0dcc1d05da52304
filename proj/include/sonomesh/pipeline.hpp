#pragma once

#include "sonomesh/config.hpp"
#include "sonomesh/echosim.hpp"
#include "sonomesh/formats.hpp"
#include "sonomesh/fusion.hpp"
#include "sonomesh/imaging.hpp"
#include "sonomesh/metrics.hpp"
#include "sonomesh/pose.hpp"
#include "sonomesh/registration.hpp"

namespace sonomesh {

// Map an image pixel back to scene coordinates: x cross-range, y range offset
// from the standoff, both meters. Inverse of the placement in form_image.
inline Vec2 pixel_to_scene(const AcousticImage& img, Vec2 px) {
    const double rows2 = static_cast<double>(img.rows) / 2.0;
    const double cols2 = static_cast<double>(img.cols) / 2.0;
    const double y = (px.y - rows2) * img.range_bin_m;
    const double x = (px.x - cols2) * img.azimuth_bin_m;
    return {x, y};
}

inline Vec2 scene_to_pixel(const AcousticImage& img, Vec2 scene) {
    const double rows2 = static_cast<double>(img.rows) / 2.0;
    const double cols2 = static_cast<double>(img.cols) / 2.0;
    return {cols2 + scene.x / img.azimuth_bin_m, rows2 + scene.y / img.range_bin_m};
}

struct ImageArtifacts {
    ProfileMatrix raw;
    AcousticImage image;
    std::vector<double> entropy_trace;
    std::vector<double> phases;
};

// simulate -> subtract background -> align -> (autofocus) -> 2D FFT
inline ImageArtifacts run_imaging(const PipelineConfig& cfg) {
    const SceneConfig scene = cfg.to_scene_config();
    ImageArtifacts art;
    art.raw = simulate_echoes(scene);
    ProfileMatrix work = art.raw;
    if (!scene.background.empty()) work = subtract_background(work, background_profile(scene));
    work = dechirp_matrix(work, scene.chirp);
    work = align_profiles(work).aligned;
    if (cfg.imaging.autofocus) {
        FocusResult f = mea_autofocus(work, cfg.imaging.max_iters, cfg.imaging.tol);
        art.entropy_trace = f.entropy_trace;
        art.phases = f.phases;
        work = std::move(f.focused);
    }
    art.image = form_image(work, cfg.imaging.pad, kDefaultSoundSpeed, cfg.imaging.window);
    return art;
}

struct JointArtifacts {
    std::vector<BoundingBox> boxes;
    GmmModel gmm;
    SegmentMap seg;
    JointSet2D joints;  // pixel coordinates
};

inline JointArtifacts run_joints(const AcousticImage& img, const PoseConfig& pc) {
    JointArtifacts art;
    art.boxes = detect_human(img, pc.threshold_q);
    if (art.boxes.empty()) throw DomainError("no human detected in image");
    const double thr = intensity_quantile(img, pc.threshold_q);
    art.gmm = fit_gmm(img, art.boxes.front(), pc.K, pc.seed, thr);
    art.seg = segment(img, art.gmm, thr);
    // joints live inside the winning detection; noise blobs elsewhere in the
    // image must not contribute candidates
    const BoundingBox& fb = art.boxes.front();
    for (std::size_t r = 0; r < art.seg.rows; ++r)
        for (std::size_t c = 0; c < art.seg.cols; ++c)
            if (r < fb.row_min || r > fb.row_max || c < fb.col_min || c > fb.col_max)
                art.seg.at(r, c) = 0;
    art.joints = locate_joints(img, art.seg, art.gmm);
    return art;
}

// Diagnostic overlay: the image as PGM with 3x3 crosses at the joints.
inline void write_overlay_pgm(const std::filesystem::path& path, const AcousticImage& img,
                              const JointSet2D& joints) {
    AcousticImage overlay = img;
    double mx = 0.0;
    for (double p : overlay.pixels) mx = std::max(mx, p);
    if (mx <= 0.0) mx = 1.0;
    for (int j = 0; j < kNumJoints; ++j) {
        const long r0 = static_cast<long>(std::llround(joints.joints[j].y));
        const long c0 = static_cast<long>(std::llround(joints.joints[j].x));
        for (long d = -1; d <= 1; ++d) {
            for (auto [r, c] : {std::pair{r0 + d, c0}, std::pair{r0, c0 + d}}) {
                if (r < 0 || c < 0 || r >= static_cast<long>(overlay.rows) ||
                    c >= static_cast<long>(overlay.cols))
                    continue;
                overlay.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = mx;
            }
        }
    }
    io::write_pgm(path, overlay.pixels, overlay.rows, overlay.cols);
}

// 2D pixel joints -> canonical 3D joints through the trained registration
// stack (soft-argmax first stage + residual second stage).
inline JointSet3D run_registration_apply(const AcousticImage& img, const JointSet2D& joints2d,
                                         RegParams& params, const RegistrationConfig& rc) {
    const TemplateSkeleton tmpl = TemplateSkeleton::standing();
    CanonicalGrid grid = CanonicalGrid::lattice(tmpl, rc.grid_nx, rc.grid_ny, rc.grid_nz);
    refresh_grid(grid, params);
    JointSet3D out;
    Embedding fused{};
    for (int j = 0; j < kNumJoints; ++j) {
        const Embedding e = embed_2d(img, joints2d.joints[j], params);
        out.joints[j] = soft_match(e, grid, rc.temperature).point;
        for (int d = 0; d < kEmbedDim; ++d)
            fused[static_cast<std::size_t>(d)] +=
                e[static_cast<std::size_t>(d)] / static_cast<double>(kNumJoints);
    }
    // the refined second-stage estimate is the reported one
    return stage2_map(fused, tmpl, params);
}

struct FuseArtifacts {
    MeshResult mesh;
    double w_im = 0.0, w_ai = 0.0;
};

// Toy fusion forward pass: the acoustic image plays both modalities (no RGB
// capture path at desk scale); the RGB branch sees the same image.
inline FuseArtifacts run_fusion(const AcousticImage& img, const SegmentMap& seg,
                                FusionParams& params, const FusionConfig& fc) {
    const FeatureMap f = backbone(img, params);
    TokenSequence tok_ai = embed_and_project(f, params, Modality::acoustic);
    TokenSequence tok_im = embed_and_project(f, params, Modality::rgb);
    tok_ai = modality_mask(tok_ai, fc.mask_p, fc.seed);
    tok_im = modality_mask(tok_im, fc.mask_p, fc.seed + 1);
    const GlobalLocal gl_ai = global_local(tok_ai, seg, params);
    const GlobalLocal gl_im = global_local(tok_im, seg, params);
    const TemplateSkeleton tmpl = TemplateSkeleton::standing();
    TokenSequence template_tokens;
    {
        // template joints lifted to d=32 tokens through the 2D projection pad
        for (int j = 0; j < kNumJoints; ++j) {
            std::array<double, kTokenDim> t{};
            t[0] = tmpl.joints.joints[j].x;
            t[1] = tmpl.joints.joints[j].y;
            t[2] = tmpl.joints.joints[j].z;
            template_tokens.append(t.data(), Modality::body_template);
        }
    }
    const double rate_ai = tok_ai.n_tokens && tok_ai.masked.front() ? 1.0 : 0.0;
    const double rate_im = tok_im.n_tokens && tok_im.masked.front() ? 1.0 : 0.0;
    GimResult g = gim(gl_im.G, gl_ai.G, template_tokens, params, rate_im, rate_ai);
    const TokenSequence m = fusion_transformer(g.tokens, gl_ai, gl_im, params);
    FuseArtifacts art;
    art.mesh = regress_mesh(m, tmpl, params);
    art.w_im = g.w_im;
    art.w_ai = g.w_ai;
    return art;
}

struct PipelineResult {
    ImageArtifacts imaging;
    JointArtifacts joints;
    JointSet2D joints_scene_m;  // pixel joints mapped to scene meters
    JointSet2D gt_scene_m;
    double mpjpe_2d_m = 0.0;    // mean planar joint error, meters
};

inline PipelineResult run_pipeline_core(const PipelineConfig& cfg) {
    PipelineResult res;
    res.imaging = run_imaging(cfg);
    res.joints = run_joints(res.imaging.image, cfg.pose);
    const PoseScatters ps = pose_to_scatters(cfg.scene.pose, cfg.scene.density);
    res.gt_scene_m = ps.joints;
    // The simulated scene is centered on the scatter centroid, and the
    // rotation sweeps 0..theta, so the focused image shows the centered target
    // at its mid-aperture orientation. Rotate detections back by theta/2 and
    // re-add the centroid to land in the body frame of the ground truth.
    const Vec2 centroid = detail::scatter_centroid(ps.scatters);
    const double half = -0.5 * cfg.scene.motion.aperture_angle;
    const double ca = std::cos(half), sa = std::sin(half);
    double acc = 0.0;
    for (int j = 0; j < kNumJoints; ++j) {
        const Vec2 off = pixel_to_scene(res.imaging.image, res.joints.joints.joints[j]);
        res.joints_scene_m.joints[j] = {centroid.x + ca * off.x - sa * off.y,
                                        centroid.y + sa * off.x + ca * off.y};
        res.joints_scene_m.flagged[static_cast<std::size_t>(j)] =
            res.joints.joints.flagged[static_cast<std::size_t>(j)];
        acc += (res.joints_scene_m.joints[j] - res.gt_scene_m.joints[j]).norm();
    }
    res.mpjpe_2d_m = acc / static_cast<double>(kNumJoints);
    return res;
}

}  // namespace sonomesh
