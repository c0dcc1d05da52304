#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "sonomesh/common.hpp"
#include "sonomesh/imaging.hpp"
#include "sonomesh/nn.hpp"
#include "sonomesh/skeleton.hpp"

namespace sonomesh {

using Embedding = std::array<double, 16>;

inline constexpr int kEmbedDim = 16;
inline constexpr int kPatch = 15;             // embed_2d patch side
inline constexpr int kConvCh = 4;             // conv channels
inline constexpr int kConvOut = 7;            // (15-3)/2 + 1
inline constexpr int kHidden = 32;            // MLP hidden width
inline constexpr double kStage2Limit = 0.5;   // meters, tanh-bounded offsets

// Sampled points in the canonical body frame with per-point embeddings.
struct CanonicalGrid {
    std::vector<Vec3> points;
    std::vector<Embedding> embeddings;

    static CanonicalGrid lattice(const TemplateSkeleton& tmpl, std::size_t nx = 9,
                                 std::size_t ny = 9, std::size_t nz = 17) {
        if (nx < 1 || ny < 1 || nz < 1) throw ConfigError("CanonicalGrid: empty lattice");
        Vec3 lo{1e9, 1e9, 1e9}, hi{-1e9, -1e9, -1e9};
        for (const auto& j : tmpl.joints.joints) {
            lo = {std::min(lo.x, j.x), std::min(lo.y, j.y), std::min(lo.z, j.z)};
            hi = {std::max(hi.x, j.x), std::max(hi.y, j.y), std::max(hi.z, j.z)};
        }
        // pad so joints sit strictly inside; flat axes get a thin slab
        const double margin = 0.05 * tmpl.height;
        lo = lo - Vec3{margin, margin, margin};
        hi = hi + Vec3{margin, margin, margin};
        CanonicalGrid g;
        // nz runs along the body's long axis (y in the template frame)
        for (std::size_t iz = 0; iz < nz; ++iz) {
            for (std::size_t iy = 0; iy < ny; ++iy) {
                for (std::size_t ix = 0; ix < nx; ++ix) {
                    auto frac = [](std::size_t i, std::size_t n) {
                        return n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.5;
                    };
                    g.points.push_back({lo.x + frac(ix, nx) * (hi.x - lo.x),
                                        lo.y + frac(iz, nz) * (hi.y - lo.y),
                                        lo.z + frac(iy, ny) * (hi.z - lo.z)});
                }
            }
        }
        g.embeddings.assign(g.points.size(), Embedding{});
        return g;
    }
};

// psi^a (2D conv extractor), psi (3D MLP) and phi^a (second-stage mapper).
struct RegParams {
    nn::Param conv_w{"conv_w", {kConvCh, 3, 3}};
    nn::Param conv_b{"conv_b", {kConvCh}};
    nn::Param fc_w{"fc_w", {kEmbedDim, kConvCh * kConvOut * kConvOut}};
    nn::Param fc_b{"fc_b", {kEmbedDim}};
    nn::Param mlp_w1{"mlp_w1", {kHidden, 3}};
    nn::Param mlp_b1{"mlp_b1", {kHidden}};
    nn::Param mlp_w2{"mlp_w2", {kHidden, kHidden}};
    nn::Param mlp_b2{"mlp_b2", {kHidden}};
    nn::Param mlp_w3{"mlp_w3", {kEmbedDim, kHidden}};
    nn::Param mlp_b3{"mlp_b3", {kEmbedDim}};
    nn::Param s2_w1{"s2_w1", {kHidden, kEmbedDim + 3 * kNumJoints}};
    nn::Param s2_b1{"s2_b1", {kHidden}};
    nn::Param s2_w2{"s2_w2", {3 * kNumJoints, kHidden}};
    nn::Param s2_b2{"s2_b2", {3 * kNumJoints}};

    std::vector<nn::Param*> all() {
        return {&conv_w, &conv_b, &fc_w, &fc_b, &mlp_w1, &mlp_b1, &mlp_w2,
                &mlp_b2, &mlp_w3, &mlp_b3, &s2_w1, &s2_b1, &s2_w2, &s2_b2};
    }
    void zero_grads() {
        for (auto* p : all()) p->zero_grad();
    }
    void init(std::uint64_t seed) {
        Rng rng(seed);
        conv_w.init_gaussian(rng, 0.4);
        conv_b.init_gaussian(rng, 0.1);
        fc_w.init_gaussian(rng, 0.15);
        fc_b.init_gaussian(rng, 0.05);
        mlp_w1.init_gaussian(rng, 0.8);
        mlp_b1.init_gaussian(rng, 0.2);
        mlp_w2.init_gaussian(rng, 0.3);
        mlp_b2.init_gaussian(rng, 0.1);
        mlp_w3.init_gaussian(rng, 0.3);
        mlp_b3.init_gaussian(rng, 0.05);
        s2_w1.init_gaussian(rng, 0.2);
        s2_b1.init_gaussian(rng, 0.05);
        // zero final layer: stage2 starts as the identity residual
        std::fill(s2_w2.value.v.begin(), s2_w2.value.v.end(), 0.0);
        std::fill(s2_b2.value.v.begin(), s2_b2.value.v.end(), 0.0);
    }
    void save(const std::filesystem::path& p) {
        auto ps = all();
        io::write_checkpoint(p, "REGP", 1, nn::to_blobs(ps));
    }
    void load(const std::filesystem::path& p) {
        auto ps = all();
        nn::from_blobs(ps, io::read_checkpoint(p, "REGP", 1));
    }
};

// ---- embed_2d ------------------------------------------------------------

struct Embed2DCache {
    std::array<double, kPatch * kPatch> patch{};
    std::array<double, kConvCh * kConvOut * kConvOut> conv{};  // post-tanh
    Embedding e{};
};

// Patch-local convolutional embedding of one joint. Out-of-image pixels are
// zero-padded; the joint must itself lie inside the image.
inline Embedding embed_2d(const AcousticImage& img, Vec2 joint, RegParams& params,
                          Embed2DCache* cache = nullptr) {
    const long cr = static_cast<long>(std::llround(joint.y));
    const long cc = static_cast<long>(std::llround(joint.x));
    if (cr < 0 || cc < 0 || cr >= static_cast<long>(img.rows) || cc >= static_cast<long>(img.cols))
        throw DomainError("embed_2d: joint outside image");
    Embed2DCache local;
    Embed2DCache& cc_ = cache ? *cache : local;
    const int half = kPatch / 2;
    for (int pr = 0; pr < kPatch; ++pr) {
        for (int pc = 0; pc < kPatch; ++pc) {
            const long r = cr + pr - half;
            const long c = cc + pc - half;
            double v = 0.0;
            if (r >= 0 && c >= 0 && r < static_cast<long>(img.rows) && c < static_cast<long>(img.cols))
                v = img.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
            cc_.patch[static_cast<std::size_t>(pr * kPatch + pc)] = v;
        }
    }
    // conv 3x3 stride 2, tanh
    for (int ch = 0; ch < kConvCh; ++ch) {
        for (int orow = 0; orow < kConvOut; ++orow) {
            for (int ocol = 0; ocol < kConvOut; ++ocol) {
                double acc = params.conv_b.value[static_cast<std::size_t>(ch)];
                for (int kr = 0; kr < 3; ++kr)
                    for (int kc = 0; kc < 3; ++kc)
                        acc += params.conv_w.value[static_cast<std::size_t>(ch * 9 + kr * 3 + kc)] *
                               cc_.patch[static_cast<std::size_t>((orow * 2 + kr) * kPatch + ocol * 2 + kc)];
                cc_.conv[static_cast<std::size_t>((ch * kConvOut + orow) * kConvOut + ocol)] =
                    std::tanh(acc);
            }
        }
    }
    nn::dense_forward(params.fc_w.value, params.fc_b.value, cc_.conv.data(), cc_.e.data());
    return cc_.e;
}

inline void embed_2d_backward(const Embed2DCache& cache, const Embedding& de, RegParams& params) {
    std::array<double, kConvCh * kConvOut * kConvOut> dconv{};
    nn::dense_backward(params.fc_w.value, params.fc_w, params.fc_b, cache.conv.data(), de.data(),
                       dconv.data());
    nn::tanh_backward(cache.conv.data(), dconv.data(), dconv.size());
    for (int ch = 0; ch < kConvCh; ++ch) {
        for (int orow = 0; orow < kConvOut; ++orow) {
            for (int ocol = 0; ocol < kConvOut; ++ocol) {
                const double g = dconv[static_cast<std::size_t>((ch * kConvOut + orow) * kConvOut + ocol)];
                params.conv_b.grad[static_cast<std::size_t>(ch)] += g;
                for (int kr = 0; kr < 3; ++kr)
                    for (int kc = 0; kc < 3; ++kc)
                        params.conv_w.grad[static_cast<std::size_t>(ch * 9 + kr * 3 + kc)] +=
                            g * cache.patch[static_cast<std::size_t>((orow * 2 + kr) * kPatch + ocol * 2 + kc)];
            }
        }
    }
}

// ---- embed_3d ------------------------------------------------------------

struct Embed3DCache {
    std::array<double, 3> x{};
    std::array<double, kHidden> h1{}, h2{};
    Embedding e{};
};

inline Embedding embed_3d(const Vec3& point, RegParams& params, Embed3DCache* cache = nullptr) {
    Embed3DCache local;
    Embed3DCache& c = cache ? *cache : local;
    c.x = {point.x, point.y, point.z};
    nn::dense_forward(params.mlp_w1.value, params.mlp_b1.value, c.x.data(), c.h1.data());
    nn::tanh_forward(c.h1.data(), kHidden);
    nn::dense_forward(params.mlp_w2.value, params.mlp_b2.value, c.h1.data(), c.h2.data());
    nn::tanh_forward(c.h2.data(), kHidden);
    nn::dense_forward(params.mlp_w3.value, params.mlp_b3.value, c.h2.data(), c.e.data());
    return c.e;
}

inline void embed_3d_backward(const Embed3DCache& cache, const Embedding& de, RegParams& params) {
    std::array<double, kHidden> dh2{}, dh1{};
    nn::dense_backward(params.mlp_w3.value, params.mlp_w3, params.mlp_b3, cache.h2.data(), de.data(),
                       dh2.data());
    nn::tanh_backward(cache.h2.data(), dh2.data(), kHidden);
    nn::dense_backward(params.mlp_w2.value, params.mlp_w2, params.mlp_b2, cache.h1.data(), dh2.data(),
                       dh1.data());
    nn::tanh_backward(cache.h1.data(), dh1.data(), kHidden);
    nn::dense_backward(params.mlp_w1.value, params.mlp_w1, params.mlp_b1, cache.x.data(), dh1.data(),
                       nullptr);
}

inline void refresh_grid(CanonicalGrid& grid, RegParams& params,
                         std::vector<Embed3DCache>* caches = nullptr) {
    if (caches) caches->resize(grid.points.size());
    for (std::size_t i = 0; i < grid.points.size(); ++i)
        grid.embeddings[i] = embed_3d(grid.points[i], params, caches ? &(*caches)[i] : nullptr);
}

// ---- soft argmax matching -------------------------------------------------

struct SoftMatchResult {
    Vec3 point;
    std::vector<double> weights;  // sums to 1
};

struct SoftMatchCache {
    std::vector<double> sims;  // cosine similarities
    std::vector<double> weights;
    Embedding e{};
    double e_norm = 0.0;
};

inline SoftMatchResult soft_match(const Embedding& e, const CanonicalGrid& grid,
                                  double temperature = 1.0, SoftMatchCache* cache = nullptr) {
    if (grid.points.empty()) throw DomainError("soft_match: empty grid");
    if (!(temperature > 0.0)) throw ConfigError("soft_match: temperature must be > 0");
    double en = 0.0;
    for (double v : e) en += v * v;
    en = std::sqrt(en);
    if (en < 1e-12) throw NumericError("soft_match: zero-norm embedding");
    const std::size_t K = grid.points.size();
    std::vector<double> sims(K);
    for (std::size_t k = 0; k < K; ++k) {
        double dot = 0.0, gn = 0.0;
        for (int d = 0; d < kEmbedDim; ++d) {
            dot += e[static_cast<std::size_t>(d)] * grid.embeddings[k][static_cast<std::size_t>(d)];
            gn += grid.embeddings[k][static_cast<std::size_t>(d)] *
                  grid.embeddings[k][static_cast<std::size_t>(d)];
        }
        gn = std::sqrt(gn);
        if (gn < 1e-12) throw NumericError("soft_match: zero-norm grid embedding");
        sims[k] = dot / (en * gn);
    }
    double mx = -1e300;
    for (double s : sims) mx = std::max(mx, s / temperature);
    std::vector<double> w(K);
    double tot = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        w[k] = std::exp(sims[k] / temperature - mx);
        tot += w[k];
    }
    SoftMatchResult res;
    res.point = {0, 0, 0};
    res.weights.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
        res.weights[k] = w[k] / tot;
        res.point = res.point + grid.points[k] * res.weights[k];
    }
    if (cache) {
        cache->sims = std::move(sims);
        cache->weights = res.weights;
        cache->e = e;
        cache->e_norm = en;
    }
    return res;
}

// Backward of soft_match: given dL/dpoint, fill dL/de and accumulate
// dL/d(grid embedding k) into dgrid.
inline void soft_match_backward(const SoftMatchCache& cache, const CanonicalGrid& grid,
                                double temperature, const Vec3& dpoint, Embedding& de,
                                std::vector<Embedding>& dgrid) {
    const std::size_t K = grid.points.size();
    std::vector<double> dw(K);
    for (std::size_t k = 0; k < K; ++k) dw[k] = grid.points[k].dot(dpoint);
    double wdot = 0.0;
    for (std::size_t k = 0; k < K; ++k) wdot += cache.weights[k] * dw[k];
    de.fill(0.0);
    for (std::size_t k = 0; k < K; ++k) {
        const double dsim = cache.weights[k] * (dw[k] - wdot) / temperature;
        if (dsim == 0.0) continue;
        double gn = 0.0, dot = 0.0;
        const auto& g = grid.embeddings[k];
        for (int d = 0; d < kEmbedDim; ++d) {
            gn += g[static_cast<std::size_t>(d)] * g[static_cast<std::size_t>(d)];
            dot += g[static_cast<std::size_t>(d)] * cache.e[static_cast<std::size_t>(d)];
        }
        gn = std::sqrt(gn);
        const double inv = 1.0 / (cache.e_norm * gn);
        const double sim = dot * inv;
        for (int d = 0; d < kEmbedDim; ++d) {
            const auto dd = static_cast<std::size_t>(d);
            de[dd] += dsim * (g[dd] * inv - sim * cache.e[dd] / (cache.e_norm * cache.e_norm));
            dgrid[k][dd] += dsim * (cache.e[dd] * inv - sim * g[dd] / (gn * gn));
        }
    }
}

// ---- stage 2 mapper -------------------------------------------------------

struct Stage2Cache {
    std::array<double, kEmbedDim + 3 * kNumJoints> in{};
    std::array<double, kHidden> h{};
    std::array<double, 3 * kNumJoints> raw{};  // pre-limit tanh output
};

// Residual mapping: concat(fused embedding, flattened template joints) ->
// tanh-bounded per-coordinate offsets (|offset| < 0.5 m) on the template.
inline JointSet3D stage2_map(const Embedding& fused, const TemplateSkeleton& tmpl,
                             RegParams& params, Stage2Cache* cache = nullptr) {
    Stage2Cache local;
    Stage2Cache& c = cache ? *cache : local;
    for (int d = 0; d < kEmbedDim; ++d) c.in[static_cast<std::size_t>(d)] = fused[static_cast<std::size_t>(d)];
    for (int j = 0; j < kNumJoints; ++j) {
        c.in[static_cast<std::size_t>(kEmbedDim + 3 * j + 0)] = tmpl.joints.joints[j].x;
        c.in[static_cast<std::size_t>(kEmbedDim + 3 * j + 1)] = tmpl.joints.joints[j].y;
        c.in[static_cast<std::size_t>(kEmbedDim + 3 * j + 2)] = tmpl.joints.joints[j].z;
    }
    nn::dense_forward(params.s2_w1.value, params.s2_b1.value, c.in.data(), c.h.data());
    nn::tanh_forward(c.h.data(), kHidden);
    nn::dense_forward(params.s2_w2.value, params.s2_b2.value, c.h.data(), c.raw.data());
    JointSet3D out;
    for (int j = 0; j < kNumJoints; ++j) {
        const Vec3 off{kStage2Limit * std::tanh(c.raw[static_cast<std::size_t>(3 * j + 0)]),
                       kStage2Limit * std::tanh(c.raw[static_cast<std::size_t>(3 * j + 1)]),
                       kStage2Limit * std::tanh(c.raw[static_cast<std::size_t>(3 * j + 2)])};
        out.joints[j] = tmpl.joints.joints[j] + off;
    }
    return out;
}

inline void stage2_backward(const Stage2Cache& cache, const JointSet3D& /*out*/,
                            const std::array<double, 3 * kNumJoints>& dout, RegParams& params,
                            Embedding* dfused) {
    std::array<double, 3 * kNumJoints> draw{};
    for (int i = 0; i < 3 * kNumJoints; ++i) {
        const double t = std::tanh(cache.raw[static_cast<std::size_t>(i)]);
        draw[static_cast<std::size_t>(i)] = dout[static_cast<std::size_t>(i)] * kStage2Limit * (1.0 - t * t);
    }
    std::array<double, kHidden> dh{};
    nn::dense_backward(params.s2_w2.value, params.s2_w2, params.s2_b2, cache.h.data(), draw.data(),
                       dh.data());
    nn::tanh_backward(cache.h.data(), dh.data(), kHidden);
    std::array<double, kEmbedDim + 3 * kNumJoints> din{};
    nn::dense_backward(params.s2_w1.value, params.s2_w1, params.s2_b1, cache.in.data(), dh.data(),
                       din.data());
    if (dfused)
        for (int d = 0; d < kEmbedDim; ++d)
            (*dfused)[static_cast<std::size_t>(d)] = din[static_cast<std::size_t>(d)];
}

// ---- matching loss --------------------------------------------------------

inline double match_loss(const JointSet3D& pred, const JointSet3D& gt) {
    double acc = 0.0;
    for (int j = 0; j < kNumJoints; ++j) {
        const Vec3 d = pred.joints[j] - gt.joints[j];
        acc += d.dot(d);
    }
    return acc;
}

// ---- training -------------------------------------------------------------

struct RegSample {
    AcousticImage image;
    std::array<Vec2, kNumJoints> joints2d;  // pixel coordinates
    JointSet3D gt3d;                        // canonical-frame meters
};

struct RegHyper {
    double lr = 1e-3;
    std::size_t epochs = 50;
    std::size_t batch = 10;
    std::uint64_t seed = 7;
    double temperature = 1.0;
};

namespace detail {

// Sample loss and gradient accumulation for the full registration stack:
// soft-argmax path plus the stage-2 residual path. dgrid collects gradients
// of the shared grid embeddings; the caller backprops them through embed_3d.
inline double reg_sample_loss(const RegSample& s, RegParams& params, const CanonicalGrid& grid,
                              const TemplateSkeleton& tmpl, double temperature, bool with_grad,
                              std::vector<Embedding>* dgrid) {
    std::array<Embed2DCache, kNumJoints> e2c;
    std::array<SoftMatchCache, kNumJoints> smc;
    Embedding fused{};
    JointSet3D pred;
    for (int j = 0; j < kNumJoints; ++j) {
        const Embedding e = embed_2d(s.image, s.joints2d[j], params, &e2c[j]);
        const auto m = soft_match(e, grid, temperature, &smc[j]);
        pred.joints[j] = m.point;
        for (int d = 0; d < kEmbedDim; ++d)
            fused[static_cast<std::size_t>(d)] +=
                e[static_cast<std::size_t>(d)] / static_cast<double>(kNumJoints);
    }
    Stage2Cache s2c;
    const JointSet3D refined = stage2_map(fused, tmpl, params, &s2c);
    const double loss = match_loss(pred, s.gt3d) + match_loss(refined, s.gt3d);
    if (!with_grad) return loss;

    // backward: stage2 path
    std::array<double, 3 * kNumJoints> dref{};
    for (int j = 0; j < kNumJoints; ++j) {
        const Vec3 d = (refined.joints[j] - s.gt3d.joints[j]) * 2.0;
        dref[static_cast<std::size_t>(3 * j + 0)] = d.x;
        dref[static_cast<std::size_t>(3 * j + 1)] = d.y;
        dref[static_cast<std::size_t>(3 * j + 2)] = d.z;
    }
    Embedding dfused{};
    stage2_backward(s2c, refined, dref, params, &dfused);

    // backward: soft-match path, plus the fused-mean contribution
    for (int j = 0; j < kNumJoints; ++j) {
        const Vec3 dpoint = (pred.joints[j] - s.gt3d.joints[j]) * 2.0;
        Embedding de{};
        soft_match_backward(smc[j], grid, temperature, dpoint, de, *dgrid);
        for (int d = 0; d < kEmbedDim; ++d)
            de[static_cast<std::size_t>(d)] +=
                dfused[static_cast<std::size_t>(d)] / static_cast<double>(kNumJoints);
        embed_2d_backward(e2c[j], de, params);
    }
    return loss;
}

}  // namespace detail

// Mean loss over a batch with full gradient accumulation into params.
inline double reg_batch_loss(const std::vector<const RegSample*>& batch, RegParams& params,
                             CanonicalGrid& grid, const TemplateSkeleton& tmpl, double temperature,
                             bool with_grad) {
    std::vector<Embed3DCache> gcaches;
    refresh_grid(grid, params, with_grad ? &gcaches : nullptr);
    std::vector<Embedding> dgrid;
    if (with_grad) dgrid.assign(grid.points.size(), Embedding{});
    double total = 0.0;
    for (const auto* s : batch)
        total += detail::reg_sample_loss(*s, params, grid, tmpl, temperature, with_grad,
                                         with_grad ? &dgrid : nullptr);
    const double inv = 1.0 / static_cast<double>(batch.size());
    if (with_grad) {
        // scale accumulated parameter grads to the batch mean
        for (auto* p : params.all())
            for (auto& g : p->grad.v) g *= inv;
        for (std::size_t k = 0; k < grid.points.size(); ++k) {
            Embedding de = dgrid[k];
            for (auto& v : de) v *= inv;
            embed_3d_backward(gcaches[k], de, params);
        }
    }
    return total * inv;
}

// Central finite differences against the analytic gradient over every
// parameter; returns the max relative error.
inline double grad_check(RegParams& params, const std::vector<RegSample>& batch,
                         CanonicalGrid& grid, const TemplateSkeleton& tmpl, double epsilon,
                         double temperature = 1.0) {
    if (!(epsilon >= 1e-7 && epsilon <= 1e-3))
        throw DomainError("grad_check: epsilon outside [1e-7, 1e-3]");
    std::vector<const RegSample*> b;
    for (const auto& s : batch) b.push_back(&s);
    params.zero_grads();
    reg_batch_loss(b, params, grid, tmpl, temperature, true);
    double worst = 0.0;
    for (auto* p : params.all()) {
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double saved = p->value[i];
            p->value[i] = saved + epsilon;
            const double lp = reg_batch_loss(b, params, grid, tmpl, temperature, false);
            p->value[i] = saved - epsilon;
            const double lm = reg_batch_loss(b, params, grid, tmpl, temperature, false);
            p->value[i] = saved;
            const double fd = (lp - lm) / (2.0 * epsilon);
            const double ga = p->grad[i];
            if (!std::isfinite(ga) || !std::isfinite(fd))
                throw NumericError("grad_check: non-finite gradient");
            const double rel = std::abs(ga - fd) / std::max({std::abs(ga), std::abs(fd), 1e-8});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

struct TrainResult {
    std::vector<double> loss_curve;  // mean loss per epoch (pre-update evaluation)
};

inline TrainResult train_registration(const std::vector<RegSample>& dataset, RegParams& params,
                                      CanonicalGrid& grid, const TemplateSkeleton& tmpl,
                                      const RegHyper& hyper) {
    if (dataset.empty()) throw DomainError("train_registration: empty dataset");
    nn::Adam opt(hyper.lr);
    Rng shuffle_rng(hyper.seed);
    auto all_params = params.all();
    TrainResult res;
    std::vector<std::size_t> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        // epoch mean loss on the current parameters
        std::vector<const RegSample*> full;
        for (const auto& s : dataset) full.push_back(&s);
        const double mean_loss = reg_batch_loss(full, params, grid, tmpl, hyper.temperature, false);
        if (!std::isfinite(mean_loss) || mean_loss > 1e6)
            throw TrainError("train_registration: diverged, loss = " + std::to_string(mean_loss));
        res.loss_curve.push_back(mean_loss);

        // Fisher-Yates with the seeded stream keeps runs reproducible
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.below(i)]);
        const std::size_t bs = std::max<std::size_t>(1, hyper.batch);
        for (std::size_t start = 0; start < order.size(); start += bs) {
            std::vector<const RegSample*> batch;
            for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i)
                batch.push_back(&dataset[order[i]]);
            params.zero_grads();
            reg_batch_loss(batch, params, grid, tmpl, hyper.temperature, true);
            if (hyper.lr > 0.0) opt.step(all_params);
        }
    }
    std::vector<const RegSample*> full;
    for (const auto& s : dataset) full.push_back(&s);
    res.loss_curve.push_back(reg_batch_loss(full, params, grid, tmpl, hyper.temperature, false));
    return res;
}

}  // namespace sonomesh
