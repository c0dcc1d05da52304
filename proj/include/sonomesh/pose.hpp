#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "sonomesh/common.hpp"
#include "sonomesh/imaging.hpp"
#include "sonomesh/rng.hpp"
#include "sonomesh/skeleton.hpp"

namespace sonomesh {

struct BoundingBox {
    std::size_t row_min = 0, row_max = 0, col_min = 0, col_max = 0;

    bool contains(std::size_t r, std::size_t c) const {
        return r >= row_min && r <= row_max && c >= col_min && c <= col_max;
    }
    double area() const {
        return static_cast<double>((row_max - row_min + 1) * (col_max - col_min + 1));
    }
    double iou(const BoundingBox& o) const {
        const double r0 = std::max(row_min, o.row_min);
        const double r1 = std::min(row_max, o.row_max);
        const double c0 = std::max(col_min, o.col_min);
        const double c1 = std::min(col_max, o.col_max);
        if (r1 < r0 || c1 < c0) return 0.0;
        const double inter = (r1 - r0 + 1) * (c1 - c0 + 1);
        return inter / (area() + o.area() - inter);
    }
    BoundingBox merged(const BoundingBox& o) const {
        return {std::min(row_min, o.row_min), std::max(row_max, o.row_max),
                std::min(col_min, o.col_min), std::max(col_max, o.col_max)};
    }
    double diagonal() const {
        const double dr = static_cast<double>(row_max - row_min + 1);
        const double dc = static_cast<double>(col_max - col_min + 1);
        return std::sqrt(dr * dr + dc * dc);
    }
};

struct GmmComponent {
    Vec2 mean;          // (x=col, y=row) pixels
    double cov[2][2] = {{1, 0}, {0, 1}};
    double weight = 0.0;
};

struct GmmModel {
    std::vector<GmmComponent> components;
    double log_likelihood = -std::numeric_limits<double>::infinity();
    std::vector<double> log_likelihood_trace;
};

struct SegmentMap {
    std::size_t rows = 0, cols = 0;
    std::vector<int> labels;  // 0 background, 1..K component

    int& at(std::size_t r, std::size_t c) { return labels[r * cols + c]; }
    int at(std::size_t r, std::size_t c) const { return labels[r * cols + c]; }
};

// Quantile of all pixel intensities; scale-free "foreground" threshold shared
// by detection, GMM fitting and segmentation.
inline double intensity_quantile(const AcousticImage& img, double q) {
    std::vector<double> v = img.pixels;
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const std::size_t i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    return i + 1 < v.size() ? v[i] * (1.0 - frac) + v[i + 1] * frac : v.back();
}

// Quantile threshold + 8-connected components in place of the paper's trained
// detector; same interface, deterministic. Boxes with IoU > 0.3 are merged
// and results sorted by contained energy.
inline std::vector<BoundingBox> detect_human(const AcousticImage& img,
                                             double threshold_q = 0.90,
                                             std::size_t min_area = 9) {
    if (img.pixels.empty()) throw ShapeError("detect_human: empty image");
    const double thresh = intensity_quantile(img, threshold_q);
    const std::size_t R = img.rows, C = img.cols;
    std::vector<int> comp(R * C, -1);
    std::vector<BoundingBox> boxes;
    std::vector<std::size_t> areas;
    std::vector<std::size_t> stack;
    for (std::size_t start = 0; start < R * C; ++start) {
        if (comp[start] >= 0 || !(img.pixels[start] > thresh)) continue;
        const int id = static_cast<int>(boxes.size());
        BoundingBox box{start / C, start / C, start % C, start % C};
        std::size_t area = 0;
        stack.assign(1, start);
        comp[start] = id;
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            ++area;
            const std::size_t r = p / C, c = p % C;
            box.row_min = std::min(box.row_min, r);
            box.row_max = std::max(box.row_max, r);
            box.col_min = std::min(box.col_min, c);
            box.col_max = std::max(box.col_max, c);
            for (int dr = -1; dr <= 1; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    if (dr == 0 && dc == 0) continue;
                    const long nr = static_cast<long>(r) + dr;
                    const long nc = static_cast<long>(c) + dc;
                    if (nr < 0 || nc < 0 || nr >= static_cast<long>(R) || nc >= static_cast<long>(C))
                        continue;
                    const std::size_t np = static_cast<std::size_t>(nr) * C + static_cast<std::size_t>(nc);
                    if (comp[np] < 0 && img.pixels[np] > thresh) {
                        comp[np] = id;
                        stack.push_back(np);
                    }
                }
            }
        }
        boxes.push_back(box);
        areas.push_back(area);
    }
    std::vector<BoundingBox> kept;
    for (std::size_t i = 0; i < boxes.size(); ++i)
        if (areas[i] >= min_area) kept.push_back(boxes[i]);
    // merge overlapping boxes until stable
    bool merged = true;
    while (merged) {
        merged = false;
        for (std::size_t i = 0; i < kept.size() && !merged; ++i) {
            for (std::size_t j = i + 1; j < kept.size() && !merged; ++j) {
                if (kept[i].iou(kept[j]) > 0.3) {
                    kept[i] = kept[i].merged(kept[j]);
                    kept.erase(kept.begin() + static_cast<long>(j));
                    merged = true;
                }
            }
        }
    }
    auto energy = [&](const BoundingBox& b) {
        double e = 0.0;
        for (std::size_t r = b.row_min; r <= b.row_max; ++r)
            for (std::size_t c = b.col_min; c <= b.col_max; ++c) e += img.at(r, c);
        return e;
    };
    std::stable_sort(kept.begin(), kept.end(), [&](const auto& a, const auto& b) {
        return energy(a) > energy(b);
    });
    return kept;
}

namespace detail {

inline double log_gauss2(const Vec2& x, const GmmComponent& g) {
    const double dx = x.x - g.mean.x;
    const double dy = x.y - g.mean.y;
    const double det = g.cov[0][0] * g.cov[1][1] - g.cov[0][1] * g.cov[1][0];
    if (!(det > 0.0)) return -std::numeric_limits<double>::infinity();
    const double inv00 = g.cov[1][1] / det;
    const double inv11 = g.cov[0][0] / det;
    const double inv01 = -g.cov[0][1] / det;
    const double q = dx * dx * inv00 + 2.0 * dx * dy * inv01 + dy * dy * inv11;
    return -0.5 * (q + std::log(det)) - std::log(2.0 * kPi);
}

}  // namespace detail

// Weighted EM over intensity-weighted pixel coordinates inside the box.
// k-means++ init seeded by `seed`; covariances regularized each M-step with
// eps_reg * I where eps_reg = 1e-6 * box-diagonal^2.
inline GmmModel fit_gmm(const AcousticImage& img, const BoundingBox& box, std::size_t K,
                        std::uint64_t seed, double threshold = 0.0) {
    std::vector<Vec2> pts;
    std::vector<double> w;
    for (std::size_t r = box.row_min; r <= box.row_max; ++r) {
        for (std::size_t c = box.col_min; c <= box.col_max; ++c) {
            const double v = img.at(r, c);
            if (v > threshold) {
                pts.push_back({static_cast<double>(c), static_cast<double>(r)});
                w.push_back(v);
            }
        }
    }
    if (pts.size() < K * 4)
        throw DomainError("fit_gmm: fewer than K*4 above-threshold pixels in box");
    const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
    const double eps_reg = 1e-6 * box.diagonal() * box.diagonal();

    // k-means++ seeding on the weighted points
    Rng rng(seed);
    std::vector<Vec2> centers;
    {
        // first center: weighted draw by intensity
        double u = rng.uniform() * wsum;
        std::size_t pick = 0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            u -= w[i];
            if (u <= 0.0) {
                pick = i;
                break;
            }
        }
        centers.push_back(pts[pick]);
        std::vector<double> d2(pts.size());
        while (centers.size() < K) {
            double tot = 0.0;
            for (std::size_t i = 0; i < pts.size(); ++i) {
                double best = std::numeric_limits<double>::max();
                for (const auto& c : centers) best = std::min(best, (pts[i] - c).dot(pts[i] - c));
                d2[i] = best * w[i];
                tot += d2[i];
            }
            double v = rng.uniform() * tot;
            std::size_t idx = pts.size() - 1;
            for (std::size_t i = 0; i < pts.size(); ++i) {
                v -= d2[i];
                if (v <= 0.0) {
                    idx = i;
                    break;
                }
            }
            centers.push_back(pts[idx]);
        }
    }

    GmmModel gmm;
    gmm.components.resize(K);
    const double init_var = std::max(1.0, box.diagonal() / (4.0 * static_cast<double>(K)));
    for (std::size_t k = 0; k < K; ++k) {
        gmm.components[k].mean = centers[k];
        gmm.components[k].cov[0][0] = gmm.components[k].cov[1][1] = init_var * init_var;
        gmm.components[k].cov[0][1] = gmm.components[k].cov[1][0] = 0.0;
        gmm.components[k].weight = 1.0 / static_cast<double>(K);
    }

    std::vector<double> resp(pts.size() * K);
    for (int iter = 0; iter < 200; ++iter) {
        // E step
        double ll = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < K; ++k) {
                resp[i * K + k] = std::log(gmm.components[k].weight) +
                                  detail::log_gauss2(pts[i], gmm.components[k]);
                mx = std::max(mx, resp[i * K + k]);
            }
            double denom = 0.0;
            for (std::size_t k = 0; k < K; ++k) denom += std::exp(resp[i * K + k] - mx);
            const double lse = mx + std::log(denom);
            for (std::size_t k = 0; k < K; ++k) resp[i * K + k] = std::exp(resp[i * K + k] - lse);
            ll += w[i] * lse;
        }
        if (!std::isfinite(ll)) throw NumericError("fit_gmm: non-finite log-likelihood");
        gmm.log_likelihood_trace.push_back(ll);
        const bool converged =
            gmm.log_likelihood_trace.size() > 1 &&
            std::abs(ll - gmm.log_likelihood_trace[gmm.log_likelihood_trace.size() - 2]) < 1e-6;
        gmm.log_likelihood = ll;
        if (converged) break;
        // M step
        for (std::size_t k = 0; k < K; ++k) {
            double nk = 0.0;
            Vec2 mu{0, 0};
            for (std::size_t i = 0; i < pts.size(); ++i) {
                const double g = resp[i * K + k] * w[i];
                nk += g;
                mu = mu + pts[i] * g;
            }
            if (nk <= 0.0) nk = 1e-12;
            mu = mu * (1.0 / nk);
            double c00 = 0.0, c01 = 0.0, c11 = 0.0;
            for (std::size_t i = 0; i < pts.size(); ++i) {
                const double g = resp[i * K + k] * w[i];
                const double dx = pts[i].x - mu.x;
                const double dy = pts[i].y - mu.y;
                c00 += g * dx * dx;
                c01 += g * dx * dy;
                c11 += g * dy * dy;
            }
            auto& comp = gmm.components[k];
            comp.mean = mu;
            comp.cov[0][0] = c00 / nk + eps_reg;
            comp.cov[0][1] = comp.cov[1][0] = c01 / nk;
            comp.cov[1][1] = c11 / nk + eps_reg;
            comp.weight = nk / wsum;
        }
        // renormalize weights (guards accumulated rounding)
        double ws = 0.0;
        for (const auto& c : gmm.components) ws += c.weight;
        for (auto& c : gmm.components) c.weight /= ws;
    }
    return gmm;
}

// Label above-threshold pixels by argmax posterior responsibility; ties break
// to the lowest component index. Background stays 0.
inline SegmentMap segment(const AcousticImage& img, const GmmModel& gmm,
                          double threshold = 0.0) {
    SegmentMap seg;
    seg.rows = img.rows;
    seg.cols = img.cols;
    seg.labels.assign(img.rows * img.cols, 0);
    for (std::size_t r = 0; r < img.rows; ++r) {
        for (std::size_t c = 0; c < img.cols; ++c) {
            if (!(img.at(r, c) > threshold)) continue;
            const Vec2 x{static_cast<double>(c), static_cast<double>(r)};
            int best = 0;
            double best_lp = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < gmm.components.size(); ++k) {
                const double lp = std::log(std::max(gmm.components[k].weight, 1e-300)) +
                                  detail::log_gauss2(x, gmm.components[k]);
                if (lp > best_lp + 1e-15) {
                    best_lp = lp;
                    best = static_cast<int>(k) + 1;
                }
            }
            seg.at(r, c) = best;
        }
    }
    return seg;
}

namespace detail {

// Rectangular Hungarian algorithm (Jonker-style with potentials).
// cost is n_rows x n_cols with n_rows <= n_cols; returns column per row.
inline std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
    const int n = static_cast<int>(cost.size());
    const int m = static_cast<int>(cost.empty() ? 0 : cost[0].size());
    const double INF = std::numeric_limits<double>::max() / 4;
    std::vector<double> u(n + 1), v(m + 1);
    std::vector<int> p(m + 1, 0), way(m + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(m + 1, INF);
        std::vector<char> used(m + 1, false);
        do {
            used[j0] = true;
            const int i0 = p[j0];
            double delta = INF;
            int j1 = -1;
            for (int j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> match(n, -1);
    for (int j = 1; j <= m; ++j)
        if (p[j] > 0) match[p[j] - 1] = j - 1;
    return match;
}

struct Candidate {
    Vec2 pos;   // (x=col, y=row)
    int label;  // owning segment
};

// Template joints scaled anisotropically into the box. Image rows grow with
// range, and range carries body height, so the head maps to the largest row.
inline std::array<Vec2, kNumJoints> scale_template_to_box(const BoundingBox& box) {
    auto unit = pose_joints_unit("standing");
    double xmin = 1e9, xmax = -1e9, ymin = 1e9, ymax = -1e9;
    for (const auto& j : unit) {
        xmin = std::min(xmin, j.x);
        xmax = std::max(xmax, j.x);
        ymin = std::min(ymin, j.y);
        ymax = std::max(ymax, j.y);
    }
    std::array<Vec2, kNumJoints> out{};
    for (int i = 0; i < kNumJoints; ++i) {
        const double tx = (unit[i].x - xmin) / (xmax - xmin);
        const double ty = (unit[i].y - ymin) / (ymax - ymin);
        out[i] = {static_cast<double>(box.col_min) + tx * static_cast<double>(box.col_max - box.col_min),
                  static_cast<double>(box.row_min) + ty * static_cast<double>(box.row_max - box.row_min)};
    }
    return out;
}

}  // namespace detail

// Segment centroids plus kernel-density maxima on segment boundary pixels
// (bandwidth 2 px) form the joint candidates; Hungarian assignment against
// the box-scaled template names them. Missing joints fall back to the scaled
// template and are flagged.
inline JointSet2D locate_joints(const AcousticImage& img, const SegmentMap& seg,
                                const GmmModel& gmm) {
    (void)img;
    (void)gmm;
    // bounding box of the foreground labels
    bool any = false;
    BoundingBox box{seg.rows, 0, seg.cols, 0};
    int max_label = 0;
    for (std::size_t r = 0; r < seg.rows; ++r) {
        for (std::size_t c = 0; c < seg.cols; ++c) {
            const int l = seg.at(r, c);
            if (l <= 0) continue;
            any = true;
            max_label = std::max(max_label, l);
            box.row_min = std::min(box.row_min, r);
            box.row_max = std::max(box.row_max, r);
            box.col_min = std::min(box.col_min, c);
            box.col_max = std::max(box.col_max, c);
        }
    }
    if (!any) throw DomainError("locate_joints: no foreground segment");

    auto tmpl = detail::scale_template_to_box(box);
    JointSet2D out;

    // count distinct populated labels
    std::vector<std::size_t> label_count(static_cast<std::size_t>(max_label) + 1, 0);
    for (int l : seg.labels)
        if (l > 0) ++label_count[static_cast<std::size_t>(l)];
    int n_segments = 0;
    for (std::size_t l = 1; l < label_count.size(); ++l)
        if (label_count[l] > 0) ++n_segments;
    if (n_segments < 2) {  // degenerate: all joints from the scaled template
        for (int i = 0; i < kNumJoints; ++i) {
            out.joints[i] = tmpl[i];
            out.flagged[i] = true;
        }
        return out;
    }

    // geometric centers, unweighted over member pixels
    std::vector<Vec2> centroid(label_count.size(), Vec2{0, 0});
    for (std::size_t r = 0; r < seg.rows; ++r)
        for (std::size_t c = 0; c < seg.cols; ++c) {
            const int l = seg.at(r, c);
            if (l > 0)
                centroid[static_cast<std::size_t>(l)] =
                    centroid[static_cast<std::size_t>(l)] +
                    Vec2{static_cast<double>(c), static_cast<double>(r)};
        }
    std::vector<detail::Candidate> candidates;
    for (std::size_t l = 1; l < label_count.size(); ++l) {
        if (label_count[l] == 0) continue;
        centroid[l] = centroid[l] * (1.0 / static_cast<double>(label_count[l]));
        candidates.push_back({centroid[l], static_cast<int>(l)});
    }

    // boundary pixels: foreground with a 4-neighbor of a different label
    std::vector<std::pair<Vec2, int>> boundary;
    for (std::size_t r = 0; r < seg.rows; ++r) {
        for (std::size_t c = 0; c < seg.cols; ++c) {
            const int l = seg.at(r, c);
            if (l <= 0) continue;
            bool edge = false;
            const long rr = static_cast<long>(r), cc = static_cast<long>(c);
            const long nbr[4][2] = {{rr - 1, cc}, {rr + 1, cc}, {rr, cc - 1}, {rr, cc + 1}};
            for (const auto& nb : nbr) {
                if (nb[0] < 0 || nb[1] < 0 || nb[0] >= static_cast<long>(seg.rows) ||
                    nb[1] >= static_cast<long>(seg.cols) ||
                    seg.at(static_cast<std::size_t>(nb[0]), static_cast<std::size_t>(nb[1])) != l) {
                    edge = true;
                    break;
                }
            }
            if (edge)
                boundary.push_back({{static_cast<double>(c), static_cast<double>(r)}, l});
        }
    }
    // kernel density on boundary pixels, bandwidth 2 px; keep local maxima
    const double h2 = 2.0 * 2.0 * 2.0;  // 2*h^2
    std::vector<double> dens(boundary.size(), 0.0);
    for (std::size_t i = 0; i < boundary.size(); ++i) {
        for (std::size_t j = 0; j < boundary.size(); ++j) {
            const Vec2 d = boundary[i].first - boundary[j].first;
            const double d2 = d.dot(d);
            if (d2 < 36.0) dens[i] += std::exp(-d2 / h2);
        }
    }
    for (std::size_t i = 0; i < boundary.size(); ++i) {
        bool is_max = true;
        for (std::size_t j = 0; j < boundary.size() && is_max; ++j) {
            if (i == j) continue;
            const Vec2 d = boundary[i].first - boundary[j].first;
            if (d.dot(d) <= 16.0 && dens[j] > dens[i]) is_max = false;
        }
        if (is_max) candidates.push_back({boundary[i].first, boundary[i].second});
    }

    // Hungarian assignment against the scaled template, refined by re-fitting
    // a per-axis affine map to the matched pairs (two rounds).
    auto tcur = tmpl;
    std::vector<int> match;
    for (int round = 0; round < 3; ++round) {
        std::vector<std::vector<double>> cost(kNumJoints,
                                              std::vector<double>(candidates.size(), 0.0));
        for (int i = 0; i < kNumJoints; ++i)
            for (std::size_t j = 0; j < candidates.size(); ++j) {
                const Vec2 d = tcur[i] - candidates[j].pos;
                cost[i][j] = d.dot(d);
            }
        if (candidates.size() < kNumJoints) {
            match.assign(kNumJoints, -1);
            // square it up: pad virtual candidates at template positions
            std::vector<std::vector<double>> padded = cost;
            for (auto& row : padded)
                row.resize(kNumJoints, 1e12);
            auto m2 = detail::hungarian(padded);
            for (int i = 0; i < kNumJoints; ++i)
                if (m2[i] >= 0 && m2[i] < static_cast<int>(candidates.size())) match[i] = m2[i];
            break;
        }
        match = detail::hungarian(cost);
        // least-squares per-axis affine: candidate = a * template + b
        double sx = 0, sxx = 0, sy = 0, syy = 0, scx = 0, scy = 0, sxcx = 0, sycy = 0;
        int cnt = 0;
        for (int i = 0; i < kNumJoints; ++i) {
            if (match[i] < 0) continue;
            const Vec2 t = tmpl[i];
            const Vec2 c = candidates[static_cast<std::size_t>(match[i])].pos;
            sx += t.x;
            sxx += t.x * t.x;
            sy += t.y;
            syy += t.y * t.y;
            scx += c.x;
            scy += c.y;
            sxcx += t.x * c.x;
            sycy += t.y * c.y;
            ++cnt;
        }
        if (cnt < 4) break;
        const double dn = static_cast<double>(cnt);
        const double vx = sxx - sx * sx / dn;
        const double vy = syy - sy * sy / dn;
        if (vx > 1e-9 && vy > 1e-9) {
            const double ax = (sxcx - sx * scx / dn) / vx;
            const double ay = (sycy - sy * scy / dn) / vy;
            const double bx = (scx - ax * sx) / dn;
            const double by = (scy - ay * sy) / dn;
            for (int i = 0; i < kNumJoints; ++i)
                tcur[i] = {ax * tmpl[i].x + bx, ay * tmpl[i].y + by};
        }
    }

    for (int i = 0; i < kNumJoints; ++i) {
        if (match[i] >= 0) {
            out.joints[i] = candidates[static_cast<std::size_t>(match[i])].pos;
            out.flagged[i] = false;
        } else {
            out.joints[i] = tcur[i];
            out.flagged[i] = true;
        }
    }
    return out;
}

}  // namespace sonomesh
