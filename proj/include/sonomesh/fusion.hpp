#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "sonomesh/common.hpp"
#include "sonomesh/imaging.hpp"
#include "sonomesh/nn.hpp"
#include "sonomesh/pose.hpp"
#include "sonomesh/rng.hpp"
#include "sonomesh/skeleton.hpp"

namespace sonomesh {

inline constexpr int kTokenDim = 32;
inline constexpr int kFusionHeads = 4;
inline constexpr int kFusionBlocks = 2;
inline constexpr int kBackboneCh = 16;
inline constexpr int kVertsPerBone = 10;
inline constexpr int kNumVertices = kNumBones * kVertsPerBone;  // 150
inline constexpr double kBoneTolerance = 0.25;

enum class Modality : std::uint8_t { rgb = 0, acoustic = 1, body_template = 2 };

struct FeatureMap {
    std::size_t channels = 0, rows = 0, cols = 0;
    std::vector<double> data;  // channel-major

    double at(std::size_t c, std::size_t r, std::size_t col) const {
        return data[(c * rows + r) * cols + col];
    }
    double& at(std::size_t c, std::size_t r, std::size_t col) {
        return data[(c * rows + r) * cols + col];
    }
};

struct TokenSequence {
    std::size_t n_tokens = 0;
    std::vector<double> data;  // n_tokens x kTokenDim, row-major
    std::vector<Modality> tags;
    std::vector<std::uint8_t> masked;
    std::size_t token_rows = 0, token_cols = 0;  // grid shape for pixel tokens
    std::size_t pixel_stride = 1;               // image pixels per token step

    double* row(std::size_t i) { return data.data() + i * kTokenDim; }
    const double* row(std::size_t i) const { return data.data() + i * kTokenDim; }
    void append(const double* v, Modality tag, bool mask_bit = false) {
        data.insert(data.end(), v, v + kTokenDim);
        tags.push_back(tag);
        masked.push_back(mask_bit ? 1 : 0);
        ++n_tokens;
    }
};

struct FusionParams {
    // backbone: full-res branch, low-res branch, full-res downsampler
    nn::Param bb_w1{"bb_w1", {8, 1, 3, 3}};
    nn::Param bb_b1{"bb_b1", {8}};
    nn::Param bb_w2{"bb_w2", {8, 8, 3, 3}};
    nn::Param bb_b2{"bb_b2", {8}};
    nn::Param bb_w3{"bb_w3", {8, 8, 3, 3}};
    nn::Param bb_b3{"bb_b3", {8}};
    // pixel embedding phi and depth-conditioned projection psi
    nn::Param proj_w{"proj_w", {kTokenDim, kBackboneCh}};
    nn::Param proj_b{"proj_b", {kTokenDim}};
    nn::Param depth_w{"depth_w", {kBackboneCh}};
    nn::Param depth_b{"depth_b", {1}};
    nn::Param psi_dir{"psi_dir", {kTokenDim}};
    // G = CNN(V): one strided token conv then global average
    nn::Param g_w{"g_w", {kTokenDim, kTokenDim, 3, 3}};
    nn::Param g_b{"g_b", {kTokenDim}};
    // GIM quality scoring
    nn::Param gim_w{"gim_w", {1}};
    nn::Param gim_b{"gim_b", {1}};
    // transformer blocks
    struct Block {
        nn::Param wq, wk, wv, wo, ff_w1, ff_b1, ff_w2, ff_b2;
        explicit Block(int i)
            : wq("wq" + std::to_string(i), {kTokenDim, kTokenDim}),
              wk("wk" + std::to_string(i), {kTokenDim, kTokenDim}),
              wv("wv" + std::to_string(i), {kTokenDim, kTokenDim}),
              wo("wo" + std::to_string(i), {kTokenDim, kTokenDim}),
              ff_w1("ff_w1_" + std::to_string(i), {2 * kTokenDim, kTokenDim}),
              ff_b1("ff_b1_" + std::to_string(i), {2 * kTokenDim}),
              ff_w2("ff_w2_" + std::to_string(i), {kTokenDim, 2 * kTokenDim}),
              ff_b2("ff_b2_" + std::to_string(i), {kTokenDim}) {}
    };
    std::array<Block, kFusionBlocks> blocks{Block(0), Block(1)};
    // regression heads
    nn::Param joint_w{"joint_w", {3 * kNumJoints, kTokenDim}};
    nn::Param joint_b{"joint_b", {3 * kNumJoints}};
    nn::Param vert_w{"vert_w", {3 * kNumVertices, kTokenDim}};
    nn::Param vert_b{"vert_b", {3 * kNumVertices}};

    std::vector<nn::Param*> all() {
        std::vector<nn::Param*> ps = {&bb_w1,   &bb_b1,   &bb_w2,  &bb_b2,  &bb_w3,
                                      &bb_b3,   &proj_w,  &proj_b, &depth_w, &depth_b,
                                      &psi_dir, &g_w,     &g_b,    &gim_w,  &gim_b};
        for (auto& b : blocks)
            for (auto* p : {&b.wq, &b.wk, &b.wv, &b.wo, &b.ff_w1, &b.ff_b1, &b.ff_w2, &b.ff_b2})
                ps.push_back(p);
        for (auto* p : {&joint_w, &joint_b, &vert_w, &vert_b}) ps.push_back(p);
        return ps;
    }
    void init(std::uint64_t seed) {
        Rng rng(seed);
        for (auto* p : all()) p->init_gaussian(rng, 0.1);
        gim_w.value[0] = 1.0;
        gim_b.value[0] = 0.5;
    }
    void save(const std::filesystem::path& p) {
        auto ps = all();
        io::write_checkpoint(p, "FUSP", 1, nn::to_blobs(ps));
    }
    void load(const std::filesystem::path& p) {
        auto ps = all();
        nn::from_blobs(ps, io::read_checkpoint(p, "FUSP", 1));
    }
};

namespace detail {

// zero-padded 3x3 convolution over a channel-major map
inline void conv3x3(const FeatureMap& in, const nn::Tensor& w, const nn::Tensor& b,
                    std::size_t out_ch, std::size_t stride, bool act, FeatureMap& out) {
    out.channels = out_ch;
    out.rows = (in.rows + stride - 1) / stride;
    out.cols = (in.cols + stride - 1) / stride;
    out.data.assign(out.channels * out.rows * out.cols, 0.0);
    for (std::size_t oc = 0; oc < out_ch; ++oc) {
        for (std::size_t orow = 0; orow < out.rows; ++orow) {
            for (std::size_t ocol = 0; ocol < out.cols; ++ocol) {
                double acc = b[oc];
                for (std::size_t ic = 0; ic < in.channels; ++ic) {
                    for (int kr = -1; kr <= 1; ++kr) {
                        for (int kc = -1; kc <= 1; ++kc) {
                            const long r = static_cast<long>(orow * stride) + kr;
                            const long c = static_cast<long>(ocol * stride) + kc;
                            if (r < 0 || c < 0 || r >= static_cast<long>(in.rows) ||
                                c >= static_cast<long>(in.cols))
                                continue;
                            acc += w[((oc * in.channels + ic) * 3 + static_cast<std::size_t>(kr + 1)) * 3 +
                                     static_cast<std::size_t>(kc + 1)] *
                                   in.at(ic, static_cast<std::size_t>(r), static_cast<std::size_t>(c));
                        }
                    }
                }
                out.at(oc, orow, ocol) = act ? std::tanh(acc) : acc;
            }
        }
    }
}

}  // namespace detail

// Two-resolution convolutional extractor: a maintained full-resolution branch
// is downsampled and stacked on the strided branch (16 channels at half size).
inline FeatureMap backbone(const AcousticImage& img, FusionParams& params) {
    if (img.rows == 0 || img.cols == 0) throw ShapeError("backbone: empty image");
    FeatureMap x{1, img.rows, img.cols, img.pixels};
    FeatureMap full, low, fulldown;
    detail::conv3x3(x, params.bb_w1.value, params.bb_b1.value, 8, 1, true, full);
    detail::conv3x3(full, params.bb_w2.value, params.bb_b2.value, 8, 2, true, low);
    detail::conv3x3(full, params.bb_w3.value, params.bb_b3.value, 8, 2, true, fulldown);
    FeatureMap out{kBackboneCh, low.rows, low.cols, {}};
    out.data = low.data;
    out.data.insert(out.data.end(), fulldown.data.begin(), fulldown.data.end());
    return out;
}

// phi: per-pixel linear lift to d=32; psi: shift along a learned direction by
// a per-pixel depth scalar. Tokens sample the feature map at stride 2.
inline TokenSequence embed_and_project(const FeatureMap& f, FusionParams& params, Modality tag) {
    TokenSequence seq;
    seq.token_rows = (f.rows + 1) / 2;
    seq.token_cols = (f.cols + 1) / 2;
    seq.pixel_stride = 4;  // backbone halves, sampling halves again
    for (std::size_t tr = 0; tr < seq.token_rows; ++tr) {
        for (std::size_t tc = 0; tc < seq.token_cols; ++tc) {
            std::array<double, kBackboneCh> feat{};
            for (std::size_t c = 0; c < kBackboneCh; ++c) feat[c] = f.at(c, tr * 2, tc * 2);
            std::array<double, kTokenDim> tok{};
            nn::dense_forward(params.proj_w.value, params.proj_b.value, feat.data(), tok.data());
            double depth = params.depth_b.value[0];
            for (std::size_t c = 0; c < kBackboneCh; ++c) depth += params.depth_w.value[c] * feat[c];
            const double shift = std::tanh(depth);
            for (int d = 0; d < kTokenDim; ++d)
                tok[static_cast<std::size_t>(d)] += shift * params.psi_dir.value[static_cast<std::size_t>(d)];
            seq.append(tok.data(), tag);
        }
    }
    return seq;
}

struct GlobalLocal {
    std::array<double, kTokenDim> G{};
    std::array<std::array<double, kTokenDim>, kNumJoints> L{};
    std::array<bool, kNumJoints> empty{};  // flagged when a segment has no tokens
};

// G = CNN(V) global average; L_j = masked pooling of tokens over segment j.
inline GlobalLocal global_local(const TokenSequence& v, const SegmentMap& mask,
                                FusionParams& params) {
    if (v.token_rows * v.token_cols != v.n_tokens)
        throw ShapeError("global_local: token sequence is not a grid");
    GlobalLocal out;
    FeatureMap grid{kTokenDim, v.token_rows, v.token_cols, {}};
    grid.data.resize(kTokenDim * v.token_rows * v.token_cols);
    for (std::size_t t = 0; t < v.n_tokens; ++t)
        for (int d = 0; d < kTokenDim; ++d)
            grid.at(static_cast<std::size_t>(d), t / v.token_cols, t % v.token_cols) =
                v.row(t)[d];
    FeatureMap conv;
    detail::conv3x3(grid, params.g_w.value, params.g_b.value, kTokenDim, 2, true, conv);
    const double inv = 1.0 / static_cast<double>(conv.rows * conv.cols);
    for (int d = 0; d < kTokenDim; ++d) {
        double acc = 0.0;
        for (std::size_t r = 0; r < conv.rows; ++r)
            for (std::size_t c = 0; c < conv.cols; ++c)
                acc += conv.at(static_cast<std::size_t>(d), r, c);
        out.G[static_cast<std::size_t>(d)] = acc * inv;
    }
    for (int j = 0; j < kNumJoints; ++j) {
        std::size_t count = 0;
        for (std::size_t t = 0; t < v.n_tokens; ++t) {
            const std::size_t pr = (t / v.token_cols) * v.pixel_stride;
            const std::size_t pc = (t % v.token_cols) * v.pixel_stride;
            if (pr >= mask.rows || pc >= mask.cols) continue;
            if (mask.labels[pr * mask.cols + pc] != j) continue;
            for (int d = 0; d < kTokenDim; ++d)
                out.L[static_cast<std::size_t>(j)][static_cast<std::size_t>(d)] += v.row(t)[d];
            ++count;
        }
        if (count == 0) {
            out.empty[static_cast<std::size_t>(j)] = true;
        } else {
            for (auto& x : out.L[static_cast<std::size_t>(j)])
                x /= static_cast<double>(count);
        }
    }
    return out;
}

struct GimResult {
    std::array<double, kTokenDim> fused{};
    double w_im = 0.0, w_ai = 0.0;  // convex weights
    TokenSequence tokens;           // fused token followed by template tokens
};

// Quality-weighted convex combination of per-modality global features,
// concatenated with the template tokens (Eq. `gt`, simplified scoring).
inline GimResult gim(const std::array<double, kTokenDim>& g_im,
                     const std::array<double, kTokenDim>& g_ai, const TokenSequence& template_tokens,
                     FusionParams& params, double mask_rate_im = 0.0, double mask_rate_ai = 0.0) {
    auto quality = [&](const std::array<double, kTokenDim>& g, double rate) {
        double n = 0.0;
        for (double x : g) n += x * x;
        const double s = params.gim_w.value[0] * std::sqrt(n) + params.gim_b.value[0];
        const double softplus = s > 30.0 ? s : std::log1p(std::exp(s));
        return (1.0 - rate) * softplus;
    };
    GimResult res;
    const double q_im = quality(g_im, mask_rate_im);
    const double q_ai = quality(g_ai, mask_rate_ai);
    if (q_im + q_ai < 1e-12) throw DomainError("gim: both modalities fully masked");
    res.w_im = q_im / (q_im + q_ai);
    res.w_ai = q_ai / (q_im + q_ai);
    for (int d = 0; d < kTokenDim; ++d)
        res.fused[static_cast<std::size_t>(d)] = res.w_im * g_im[static_cast<std::size_t>(d)] +
                                                 res.w_ai * g_ai[static_cast<std::size_t>(d)];
    res.tokens.append(res.fused.data(), Modality::body_template);
    for (std::size_t t = 0; t < template_tokens.n_tokens; ++t)
        res.tokens.append(template_tokens.row(t), template_tokens.tags[t],
                          template_tokens.masked[t] != 0);
    return res;
}

// With probability p one modality (never both) is zeroed and mask bits set.
inline TokenSequence modality_mask(TokenSequence tokens, double p, std::uint64_t seed) {
    if (p < 0.0 || p > 1.0) throw ConfigError("modality_mask: p outside [0,1]");
    Rng rng(seed);
    if (rng.uniform() < p) {
        const Modality victim = rng.below(2) == 0 ? Modality::rgb : Modality::acoustic;
        for (std::size_t t = 0; t < tokens.n_tokens; ++t) {
            if (tokens.tags[t] != victim) continue;
            std::fill(tokens.row(t), tokens.row(t) + kTokenDim, 0.0);
            tokens.masked[t] = 1;
        }
    }
    return tokens;
}

struct AttentionTrace {
    // per block, per head: n x n row-stochastic matrices
    std::vector<std::vector<double>> rows;
};

// 2-block multi-head self-attention + feed-forward over the concatenated
// token set. Masked tokens get -inf logits as keys and pass through untouched.
inline TokenSequence fusion_transformer(const TokenSequence& g_t,
                                        const GlobalLocal& l_ai, const GlobalLocal& l_im,
                                        FusionParams& params, AttentionTrace* trace = nullptr) {
    TokenSequence seq = g_t;
    for (int j = 0; j < kNumJoints; ++j)
        seq.append(l_ai.L[static_cast<std::size_t>(j)].data(), Modality::acoustic,
                   l_ai.empty[static_cast<std::size_t>(j)]);
    for (int j = 0; j < kNumJoints; ++j)
        seq.append(l_im.L[static_cast<std::size_t>(j)].data(), Modality::rgb,
                   l_im.empty[static_cast<std::size_t>(j)]);
    seq.token_rows = seq.token_cols = 0;

    const std::size_t n = seq.n_tokens;
    const int hd = kTokenDim / kFusionHeads;
    bool any_key = false;
    for (std::size_t t = 0; t < n; ++t) any_key = any_key || seq.masked[t] == 0;
    if (!any_key) throw DomainError("fusion_transformer: every token masked");

    for (auto& block : params.blocks) {
        std::vector<double> q(n * kTokenDim), k(n * kTokenDim), v(n * kTokenDim),
            attn_out(n * kTokenDim, 0.0);
        for (std::size_t t = 0; t < n; ++t) {
            nn::matvec(block.wq.value, seq.row(t), &q[t * kTokenDim]);
            nn::matvec(block.wk.value, seq.row(t), &k[t * kTokenDim]);
            nn::matvec(block.wv.value, seq.row(t), &v[t * kTokenDim]);
        }
        for (int h = 0; h < kFusionHeads; ++h) {
            const std::size_t off = static_cast<std::size_t>(h * hd);
            for (std::size_t qi = 0; qi < n; ++qi) {
                std::vector<double> logits(n, -1e300);
                double mx = -1e300;
                for (std::size_t ki = 0; ki < n; ++ki) {
                    if (seq.masked[ki]) continue;  // -inf logit for masked keys
                    double dot = 0.0;
                    for (int d = 0; d < hd; ++d)
                        dot += q[qi * kTokenDim + off + static_cast<std::size_t>(d)] *
                               k[ki * kTokenDim + off + static_cast<std::size_t>(d)];
                    logits[ki] = dot / std::sqrt(static_cast<double>(hd));
                    mx = std::max(mx, logits[ki]);
                }
                double tot = 0.0;
                std::vector<double> w(n, 0.0);
                for (std::size_t ki = 0; ki < n; ++ki) {
                    if (seq.masked[ki]) continue;
                    w[ki] = std::exp(logits[ki] - mx);
                    tot += w[ki];
                }
                for (std::size_t ki = 0; ki < n; ++ki) {
                    w[ki] /= tot;
                    for (int d = 0; d < hd; ++d)
                        attn_out[qi * kTokenDim + off + static_cast<std::size_t>(d)] +=
                            w[ki] * v[ki * kTokenDim + off + static_cast<std::size_t>(d)];
                }
                if (trace) trace->rows.push_back(w);
            }
        }
        for (std::size_t t = 0; t < n; ++t) {
            if (seq.masked[t]) continue;  // masked tokens stay zero
            std::array<double, kTokenDim> proj{};
            nn::matvec(block.wo.value, &attn_out[t * kTokenDim], proj.data());
            for (int d = 0; d < kTokenDim; ++d) seq.row(t)[d] += proj[static_cast<std::size_t>(d)];
            std::array<double, 2 * kTokenDim> hid{};
            std::array<double, kTokenDim> ff{};
            nn::dense_forward(block.ff_w1.value, block.ff_b1.value, seq.row(t), hid.data());
            nn::tanh_forward(hid.data(), hid.size());
            nn::dense_forward(block.ff_w2.value, block.ff_b2.value, hid.data(), ff.data());
            for (int d = 0; d < kTokenDim; ++d) seq.row(t)[d] += ff[static_cast<std::size_t>(d)];
        }
    }
    return seq;
}

struct MeshResult {
    JointSet3D joints;
    std::vector<Vec3> vertices;  // kNumVertices
};

namespace detail {

// Walk the bone tree from the root, clamping each bone length to within
// kBoneTolerance of the template length. Bones are visited parents-first so a
// clamped joint never invalidates a bone that was already set.
inline void project_bone_lengths(JointSet3D& joints, const TemplateSkeleton& tmpl) {
    std::array<int, kNumBones> order{};
    {
        std::array<bool, kNumJoints> settled{};
        // the root is the joint that never appears as a child
        std::array<bool, kNumJoints> is_child{};
        for (const auto& [p, c] : bone_list()) is_child[static_cast<std::size_t>(c)] = true;
        for (int j = 0; j < kNumJoints; ++j) settled[static_cast<std::size_t>(j)] = !is_child[static_cast<std::size_t>(j)];
        std::size_t filled = 0;
        std::array<bool, kNumBones> used{};
        while (filled < kNumBones) {
            for (int b = 0; b < kNumBones; ++b) {
                if (used[static_cast<std::size_t>(b)]) continue;
                const auto [p, c] = bone_list()[static_cast<std::size_t>(b)];
                if (!settled[static_cast<std::size_t>(p)]) continue;
                used[static_cast<std::size_t>(b)] = true;
                settled[static_cast<std::size_t>(c)] = true;
                order[filled++] = b;
            }
        }
    }
    for (int bi = 0; bi < kNumBones; ++bi) {
        const int b = order[static_cast<std::size_t>(bi)];
        const auto [parent, child] = bone_list()[static_cast<std::size_t>(b)];
        const double tlen = tmpl.lengths[static_cast<std::size_t>(b)];
        Vec3 d = joints.joints[child] - joints.joints[parent];
        double len = std::sqrt(d.dot(d));
        if (len < 1e-12) {
            d = {0.0, tlen, 0.0};
            len = tlen;
        }
        const double lo = (1.0 - kBoneTolerance) * tlen, hi = (1.0 + kBoneTolerance) * tlen;
        const double target = std::clamp(len, lo, hi);
        joints.joints[child] = joints.joints[parent] + d * (target / len);
    }
}

}  // namespace detail

// Per-joint residual head on pooled mesh features, bone-length projection,
// then 10 interpolated vertices per bone refined by a final dense head.
inline MeshResult regress_mesh(const TokenSequence& m_features, const TemplateSkeleton& tmpl,
                               FusionParams& params) {
    if (m_features.n_tokens == 0) throw ShapeError("regress_mesh: empty feature set");
    std::array<double, kTokenDim> pooled{};
    std::size_t count = 0;
    for (std::size_t t = 0; t < m_features.n_tokens; ++t) {
        if (m_features.masked[t]) continue;
        for (int d = 0; d < kTokenDim; ++d) pooled[static_cast<std::size_t>(d)] += m_features.row(t)[d];
        ++count;
    }
    if (count == 0) throw DomainError("regress_mesh: every token masked");
    for (auto& x : pooled) x /= static_cast<double>(count);

    std::array<double, 3 * kNumJoints> jres{};
    nn::dense_forward(params.joint_w.value, params.joint_b.value, pooled.data(), jres.data());
    MeshResult res;
    for (int j = 0; j < kNumJoints; ++j)
        res.joints.joints[j] = tmpl.joints.joints[j] + Vec3{jres[static_cast<std::size_t>(3 * j)],
                                                            jres[static_cast<std::size_t>(3 * j + 1)],
                                                            jres[static_cast<std::size_t>(3 * j + 2)]};
    detail::project_bone_lengths(res.joints, tmpl);

    std::array<double, 3 * kNumVertices> vres{};
    nn::dense_forward(params.vert_w.value, params.vert_b.value, pooled.data(), vres.data());
    res.vertices.resize(kNumVertices);
    for (int b = 0; b < kNumBones; ++b) {
        const auto [parent, child] = bone_list()[static_cast<std::size_t>(b)];
        for (int i = 0; i < kVertsPerBone; ++i) {
            const double t = (i + 0.5) / kVertsPerBone;
            const std::size_t vi = static_cast<std::size_t>(b * kVertsPerBone + i);
            res.vertices[vi] = res.joints.joints[parent] * (1.0 - t) + res.joints.joints[child] * t +
                               Vec3{vres[3 * vi], vres[3 * vi + 1], vres[3 * vi + 2]};
        }
    }
    return res;
}

}  // namespace sonomesh
