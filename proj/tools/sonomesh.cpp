// sonomesh: file-connected CLI for the acoustic imaging + pose pipeline.

#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>

#include "sonomesh/config.hpp"
#include "sonomesh/pipeline.hpp"

namespace {

constexpr const char* kVersion = "sonomesh 1.0.0";
constexpr const char* kSchema =
    "config schema_version 1; formats: WAV(pcm-f32) CBUF v1 PMTX v1 AIMG v1 "
    "REGP v1 FUSP v1 PGM(P5/16) joints-json v1 CSV";

namespace fs = std::filesystem;
using namespace sonomesh;

fs::path out_path(const PipelineConfig& cfg, const std::string& name) {
    fs::path dir(cfg.output_dir);
    fs::create_directories(dir);
    return dir / name;
}

std::size_t thread_cap() {
    if (const char* env = std::getenv("SONOMESH_THREADS")) {
        const long v = std::atol(env);
        if (v > 0) return static_cast<std::size_t>(v);
    }
    return 0;  // auto
}

void write_entropy_csv(const fs::path& path, const std::vector<double>& trace) {
    std::string s = "sweep,entropy\n";
    for (std::size_t i = 0; i < trace.size(); ++i)
        s += std::to_string(i) + "," + std::to_string(trace[i]) + "\n";
    io::atomic_write(path, s);
}

// Deterministic training fixture: per-joint gaussian blobs with distinctive
// intensities rendered around randomly perturbed template poses.
std::vector<RegSample> make_training_fixture(std::size_t n_samples, std::uint64_t seed) {
    std::vector<RegSample> out;
    const TemplateSkeleton tmpl = TemplateSkeleton::standing();
    const std::size_t rows = 96, cols = 64;
    for (std::size_t s = 0; s < n_samples; ++s) {
        Rng rng = Rng::stream(seed, s);
        RegSample sample;
        sample.image.rows = rows;
        sample.image.cols = cols;
        sample.image.pixels.assign(rows * cols, 0.0);
        sample.image.range_bin_m = 2.0 / static_cast<double>(rows);
        sample.image.azimuth_bin_m = 1.0 / static_cast<double>(cols);
        for (int j = 0; j < kNumJoints; ++j) {
            const Vec3 t = tmpl.joints.joints[j];
            const Vec3 jitter{rng.uniform(-0.04, 0.04), rng.uniform(-0.04, 0.04),
                              rng.uniform(-0.02, 0.02)};
            sample.gt3d.joints[j] = t + jitter;
            // project canonical (x, y) onto the image plane
            const double pr = static_cast<double>(rows) / 2.0 -
                              sample.gt3d.joints[j].y / sample.image.range_bin_m;
            const double pc = static_cast<double>(cols) / 2.0 +
                              sample.gt3d.joints[j].x / sample.image.azimuth_bin_m;
            sample.joints2d[static_cast<std::size_t>(j)] = {pc, pr};
            const double amp = 0.2 + 0.05 * j;  // distinctive per-joint intensity
            for (long r = std::max(0L, static_cast<long>(pr) - 6);
                 r < std::min<long>(static_cast<long>(rows), static_cast<long>(pr) + 7); ++r) {
                for (long c = std::max(0L, static_cast<long>(pc) - 6);
                     c < std::min<long>(static_cast<long>(cols), static_cast<long>(pc) + 7); ++c) {
                    const double d2 = (r - pr) * (r - pr) + (c - pc) * (c - pc);
                    sample.image.pixels[static_cast<std::size_t>(r) * cols +
                                        static_cast<std::size_t>(c)] += amp * std::exp(-d2 / 8.0);
                }
            }
        }
        out.push_back(std::move(sample));
    }
    return out;
}

int cmd_synth(const PipelineConfig& cfg, std::size_t periods) {
    const SampleBuffer chirp = synth_chirp(cfg.chirp);
    SampleBuffer train;
    train.f_s = cfg.chirp.f_s;
    const auto silence = static_cast<std::size_t>(std::llround(cfg.chirp.T_e * cfg.chirp.f_s));
    for (std::size_t p = 0; p < periods; ++p) {
        train.samples.insert(train.samples.end(), chirp.samples.begin(), chirp.samples.end());
        train.samples.insert(train.samples.end(), silence, 0.0);
    }
    io::write_wav(out_path(cfg, "chirp.wav"), train);
    std::cout << "wrote chirp.wav (" << train.samples.size() << " samples)\n";
    return 0;
}

int cmd_simulate(const PipelineConfig& cfg) {
    const ProfileMatrix m = simulate_echoes(cfg.to_scene_config());
    io::write_pmtx(out_path(cfg, "profiles.pmtx"), m);
    std::cout << "wrote profiles.pmtx (" << m.M << " x " << m.N << ")\n";
    return 0;
}

int cmd_image(PipelineConfig cfg, bool no_autofocus) {
    if (no_autofocus) cfg.imaging.autofocus = false;
    const ImageArtifacts art = run_imaging(cfg);
    io::write_aimg(out_path(cfg, "image.aimg"), art.image);
    io::write_pgm(out_path(cfg, "image.pgm"), art.image.pixels, art.image.rows, art.image.cols);
    write_entropy_csv(out_path(cfg, "entropy.csv"), art.entropy_trace);
    std::cout << "wrote image.aimg image.pgm entropy.csv (" << art.image.rows << " x "
              << art.image.cols << ")\n";
    return 0;
}

int cmd_joints(const PipelineConfig& cfg) {
    const AcousticImage img = io::read_aimg(out_path(cfg, "image.aimg"));
    const JointArtifacts art = run_joints(img, cfg.pose);
    io::write_joints2d(out_path(cfg, "joints2d.json"), art.joints);
    write_overlay_pgm(out_path(cfg, "joints_overlay.pgm"), img, art.joints);
    std::cout << "wrote joints2d.json joints_overlay.pgm\n";
    return 0;
}

int cmd_register_train(const PipelineConfig& cfg) {
    RegParams params;
    params.init(cfg.registration.seed);
    const TemplateSkeleton tmpl = TemplateSkeleton::standing();
    CanonicalGrid grid = CanonicalGrid::lattice(tmpl, cfg.registration.grid_nx,
                                                cfg.registration.grid_ny, cfg.registration.grid_nz);
    const auto dataset = make_training_fixture(50, cfg.registration.seed);
    RegHyper hyper;
    hyper.lr = cfg.registration.lr;
    hyper.epochs = cfg.registration.epochs;
    hyper.batch = cfg.registration.batch;
    hyper.seed = cfg.registration.seed;
    hyper.temperature = cfg.registration.temperature;
    const TrainResult res = train_registration(dataset, params, grid, tmpl, hyper);
    params.save(out_path(cfg, cfg.registration.checkpoint));
    std::string curve = "epoch,loss\n";
    for (std::size_t i = 0; i < res.loss_curve.size(); ++i)
        curve += std::to_string(i) + "," + std::to_string(res.loss_curve[i]) + "\n";
    io::atomic_write(out_path(cfg, "train_loss.csv"), curve);
    std::cout << "trained: loss " << res.loss_curve.front() << " -> " << res.loss_curve.back()
              << ", wrote " << cfg.registration.checkpoint << " train_loss.csv\n";
    return 0;
}

int cmd_register_apply(const PipelineConfig& cfg) {
    RegParams params;
    params.load(out_path(cfg, cfg.registration.checkpoint));
    const AcousticImage img = io::read_aimg(out_path(cfg, "image.aimg"));
    const JointSet2D joints2d = io::read_joints2d(out_path(cfg, "joints2d.json"));
    const JointSet3D joints3d =
        run_registration_apply(img, joints2d, params, cfg.registration);
    io::write_joints3d(out_path(cfg, "joints3d.json"), joints3d);
    std::cout << "wrote joints3d.json\n";
    return 0;
}

int cmd_fuse(const PipelineConfig& cfg) {
    FusionParams params;
    const fs::path ckpt = out_path(cfg, cfg.fusion.checkpoint);
    if (fs::exists(ckpt)) {
        params.load(ckpt);
    } else {
        params.init(cfg.fusion.seed);
        params.save(ckpt);
    }
    const AcousticImage img = io::read_aimg(out_path(cfg, "image.aimg"));
    const JointArtifacts ja = run_joints(img, cfg.pose);
    const FuseArtifacts art = run_fusion(img, ja.seg, params, cfg.fusion);
    io::write_joints3d(out_path(cfg, "mesh.json"), art.mesh.joints, &art.mesh.vertices);
    std::cout << "wrote mesh.json (weights im " << art.w_im << ", ai " << art.w_ai << ")\n";
    return 0;
}

int cmd_eval(const PipelineConfig& cfg, const std::string& pred_file, const std::string& gt_file) {
    std::vector<Vec3> pred_v, gt_v;
    const JointSet3D pred = io::read_joints3d(pred_file, &pred_v);
    const JointSet3D gt = io::read_joints3d(gt_file, &gt_v);
    EvalReport report;
    SampleErrors err;
    err.sample_id = fs::path(pred_file).stem().string();
    err.mpjpe_cm = mpjpe(pred, gt);
    err.pve_cm = (!pred_v.empty() && pred_v.size() == gt_v.size()) ? pve(pred_v, gt_v) : 0.0;
    err.pa_mpjpe_cm = pa_mpjpe(pred, gt);
    report.samples.push_back(err);
    for (int j = 0; j < kNumJoints; ++j)
        report.per_joint_cm[static_cast<std::size_t>(j)] =
            100.0 * (pred.joints[j] - gt.joints[j]).norm();
    report.write_csv(out_path(cfg, "eval.csv"));
    io::atomic_write(out_path(cfg, "eval.txt"), report.to_text());
    std::cout << report.to_text();
    return 0;
}

int cmd_pipeline(const PipelineConfig& cfg) {
    const PipelineResult res = run_pipeline_core(cfg);
    io::write_pmtx(out_path(cfg, "profiles.pmtx"), res.imaging.raw);
    io::write_aimg(out_path(cfg, "image.aimg"), res.imaging.image);
    io::write_pgm(out_path(cfg, "image.pgm"), res.imaging.image.pixels, res.imaging.image.rows,
                  res.imaging.image.cols);
    write_entropy_csv(out_path(cfg, "entropy.csv"), res.imaging.entropy_trace);
    io::write_joints2d(out_path(cfg, "joints2d.json"), res.joints.joints);
    write_overlay_pgm(out_path(cfg, "joints_overlay.pgm"), res.imaging.image, res.joints.joints);
    std::string s = "joint,pred_x_m,pred_y_m,gt_x_m,gt_y_m,err_m\n";
    for (int j = 0; j < kNumJoints; ++j) {
        const Vec2 p = res.joints_scene_m.joints[j];
        const Vec2 g = res.gt_scene_m.joints[j];
        s += std::string(joint_names()[static_cast<std::size_t>(j)]) + "," + std::to_string(p.x) +
             "," + std::to_string(p.y) + "," + std::to_string(g.x) + "," + std::to_string(g.y) +
             "," + std::to_string((p - g).norm()) + "\n";
    }
    io::atomic_write(out_path(cfg, "pipeline_eval.csv"), s);
    std::cout << "pipeline mpjpe_2d " << res.mpjpe_2d_m << " m\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acoustic imaging + human pose pipeline"};
    app.set_version_flag("--version", kVersion);
    bool show_schema = false;
    app.add_flag("--schema", show_schema, "print file format versions and exit");

    std::string config_path;
    bool no_autofocus = false;
    std::size_t periods = 8;
    std::string pred_file, gt_file;

    auto add_cfg = [&](CLI::App* sub) {
        sub->add_option("-c,--config", config_path, "pipeline config (JSON)")->required();
    };
    auto* synth = app.add_subcommand("synth", "emit the chirp train as WAV");
    add_cfg(synth);
    synth->add_option("--periods", periods, "chirp periods to emit");
    auto* simulate = app.add_subcommand("simulate", "simulate echoes to PMTX");
    add_cfg(simulate);
    auto* image = app.add_subcommand("image", "imaging chain to AIMG/PGM");
    add_cfg(image);
    image->add_flag("--no-autofocus", no_autofocus, "skip minimum-entropy autofocus");
    auto* joints = app.add_subcommand("joints", "extract 2D joints from image.aimg");
    add_cfg(joints);
    auto* reg = app.add_subcommand("register", "registration module");
    auto* reg_train = reg->add_subcommand("train", "train on the synthetic fixture");
    add_cfg(reg_train);
    auto* reg_apply = reg->add_subcommand("apply", "map 2D joints to 3D");
    add_cfg(reg_apply);
    reg->require_subcommand(1);
    auto* fuse = app.add_subcommand("fuse", "fusion transformer forward pass");
    add_cfg(fuse);
    auto* eval = app.add_subcommand("eval", "evaluate predicted vs ground-truth joints");
    add_cfg(eval);
    eval->add_option("pred", pred_file, "predicted joints3d JSON")->required();
    eval->add_option("gt", gt_file, "ground-truth joints3d JSON")->required();
    auto* pipeline = app.add_subcommand("pipeline", "run the full chain");
    add_cfg(pipeline);

    CLI11_PARSE(app, argc, argv);
    if (show_schema) {
        std::cout << kSchema << "\n";
        return 0;
    }
    if (app.get_subcommands().empty()) {
        std::cerr << app.help();
        return 2;
    }
    (void)thread_cap();  // modules are single-threaded; cap honored trivially

    try {
        const PipelineConfig cfg = load_config(config_path);
        if (synth->parsed()) return cmd_synth(cfg, periods);
        if (simulate->parsed()) return cmd_simulate(cfg);
        if (image->parsed()) return cmd_image(cfg, no_autofocus);
        if (joints->parsed()) return cmd_joints(cfg);
        if (reg->parsed()) {
            if (reg_train->parsed()) return cmd_register_train(cfg);
            return cmd_register_apply(cfg);
        }
        if (fuse->parsed()) return cmd_fuse(cfg);
        if (eval->parsed()) return cmd_eval(cfg, pred_file, gt_file);
        if (pipeline->parsed()) return cmd_pipeline(cfg);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 2;
}
