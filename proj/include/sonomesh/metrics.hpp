#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include "sonomesh/common.hpp"
#include "sonomesh/io.hpp"
#include "sonomesh/skeleton.hpp"

namespace sonomesh {

namespace detail {

using Mat3 = std::array<std::array<double, 3>, 3>;

inline Mat3 mat3_mul(const Mat3& a, const Mat3& b) {
    Mat3 c{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) c[i][j] += a[i][k] * b[k][j];
    return c;
}

inline Mat3 mat3_t(const Mat3& a) {
    Mat3 t{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) t[i][j] = a[j][i];
    return t;
}

inline double mat3_det(const Mat3& a) {
    return a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
           a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
           a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
}

// One-sided Jacobi SVD of a 3x3: A = U diag(s) V^T with s >= 0 descending.
inline void svd3(const Mat3& a, Mat3& u, std::array<double, 3>& s, Mat3& v) {
    Mat3 b = a;  // columns become U * diag(s)
    v = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    for (int sweep = 0; sweep < 60; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < 2; ++p) {
            for (int q = p + 1; q < 3; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (int i = 0; i < 3; ++i) {
                    alpha += b[i][p] * b[i][p];
                    beta += b[i][q] * b[i][q];
                    gamma += b[i][p] * b[i][q];
                }
                off += gamma * gamma;
                if (std::abs(gamma) < 1e-300) continue;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = c * t;
                for (int i = 0; i < 3; ++i) {
                    const double bp = b[i][p], bq = b[i][q];
                    b[i][p] = c * bp - sn * bq;
                    b[i][q] = sn * bp + c * bq;
                    const double vp = v[i][p], vq = v[i][q];
                    v[i][p] = c * vp - sn * vq;
                    v[i][q] = sn * vp + c * vq;
                }
            }
        }
        if (off < 1e-30) break;
    }
    for (int j = 0; j < 3; ++j) {
        double n = 0.0;
        for (int i = 0; i < 3; ++i) n += b[i][j] * b[i][j];
        s[j] = std::sqrt(n);
        for (int i = 0; i < 3; ++i) u[i][j] = s[j] > 1e-300 ? b[i][j] / s[j] : (i == j ? 1.0 : 0.0);
    }
    // sort descending, carrying the columns of U and V
    for (int i = 0; i < 2; ++i) {
        int mx = i;
        for (int j = i + 1; j < 3; ++j)
            if (s[j] > s[mx]) mx = j;
        if (mx != i) {
            std::swap(s[i], s[mx]);
            for (int r = 0; r < 3; ++r) {
                std::swap(u[r][i], u[r][mx]);
                std::swap(v[r][i], v[r][mx]);
            }
        }
    }
}

inline double mean_err_cm(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const Vec3 d = a[i] - b[i];
        acc += std::sqrt(d.dot(d));
    }
    return 100.0 * acc / static_cast<double>(a.size());
}

}  // namespace detail

// Mean per-joint position error in centimeters.
inline double mpjpe(const JointSet3D& pred, const JointSet3D& gt) {
    std::vector<Vec3> a(pred.joints.begin(), pred.joints.end());
    std::vector<Vec3> b(gt.joints.begin(), gt.joints.end());
    return detail::mean_err_cm(a, b);
}

// Per-vertex error in centimeters over arbitrary equal-length vertex sets.
inline double pve(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt) {
    if (pred.size() != gt.size() || pred.empty()) throw ShapeError("pve: vertex count mismatch");
    return detail::mean_err_cm(pred, gt);
}

// Procrustes-aligned MPJPE: optimal similarity transform (R, t, uniform s) of
// pred onto gt before measuring. Stands in for the Chen2022 shape error.
inline double pa_mpjpe(const JointSet3D& pred, const JointSet3D& gt) {
    constexpr int n = kNumJoints;
    Vec3 mp{0, 0, 0}, mg{0, 0, 0};
    for (int i = 0; i < n; ++i) {
        mp = mp + pred.joints[i];
        mg = mg + gt.joints[i];
    }
    mp = mp * (1.0 / n);
    mg = mg * (1.0 / n);
    detail::Mat3 cov{};
    double var_p = 0.0;
    for (int i = 0; i < n; ++i) {
        const Vec3 p = pred.joints[i] - mp;
        const Vec3 g = gt.joints[i] - mg;
        const std::array<double, 3> pv{p.x, p.y, p.z}, gv{g.x, g.y, g.z};
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) cov[r][c] += gv[static_cast<std::size_t>(r)] * pv[static_cast<std::size_t>(c)];
        var_p += p.dot(p);
    }
    if (var_p < 1e-18) throw NumericError("pa_mpjpe: degenerate prediction");
    detail::Mat3 u, v;
    std::array<double, 3> s{};
    detail::svd3(cov, u, s, v);
    if (s[0] + s[1] < 1e-15) throw NumericError("pa_mpjpe: degenerate configuration");
    detail::Mat3 r = detail::mat3_mul(u, detail::mat3_t(v));
    double trace = s[0] + s[1] + s[2];
    if (detail::mat3_det(r) < 0.0) {  // reflection fix: flip the smallest axis
        for (int i = 0; i < 3; ++i) v[i][2] = -v[i][2];
        r = detail::mat3_mul(u, detail::mat3_t(v));
        trace = s[0] + s[1] - s[2];
    }
    const double scale = trace / var_p;
    JointSet3D aligned;
    for (int i = 0; i < n; ++i) {
        const Vec3 p = pred.joints[i] - mp;
        const std::array<double, 3> pv{p.x, p.y, p.z};
        Vec3 q{0, 0, 0};
        q.x = r[0][0] * pv[0] + r[0][1] * pv[1] + r[0][2] * pv[2];
        q.y = r[1][0] * pv[0] + r[1][1] * pv[1] + r[1][2] * pv[2];
        q.z = r[2][0] * pv[0] + r[2][1] * pv[1] + r[2][2] * pv[2];
        aligned.joints[i] = mg + q * scale;
    }
    return mpjpe(aligned, gt);
}

struct SampleErrors {
    std::string sample_id;
    double mpjpe_cm = 0.0;
    double pve_cm = 0.0;
    double pa_mpjpe_cm = 0.0;
};

struct EvalReport {
    std::vector<SampleErrors> samples;
    std::array<double, kNumJoints> per_joint_cm{};  // mean over samples

    double mean_mpjpe_cm() const { return mean([](const SampleErrors& s) { return s.mpjpe_cm; }); }
    double mean_pve_cm() const { return mean([](const SampleErrors& s) { return s.pve_cm; }); }
    double mean_pa_mpjpe_cm() const {
        return mean([](const SampleErrors& s) { return s.pa_mpjpe_cm; });
    }

    std::string to_text() const {
        std::ostringstream os;
        os << "samples: " << samples.size() << "\n";
        os << "mpjpe_cm: " << mean_mpjpe_cm() << "\n";
        os << "pve_cm: " << mean_pve_cm() << "\n";
        os << "pa_mpjpe_cm: " << mean_pa_mpjpe_cm() << " (Procrustes-aligned stand-in)\n";
        for (int j = 0; j < kNumJoints; ++j)
            os << "  " << joint_names()[static_cast<std::size_t>(j)] << ": "
               << per_joint_cm[static_cast<std::size_t>(j)] << "\n";
        return os.str();
    }

    void write_csv(const std::filesystem::path& path) const {
        std::ostringstream os;
        os << "sample_id,mpjpe_cm,pve_cm,pa_mpjpe_cm\n";
        for (const auto& s : samples)
            os << s.sample_id << "," << s.mpjpe_cm << "," << s.pve_cm << "," << s.pa_mpjpe_cm
               << "\n";
        io::atomic_write(path, os.str());
    }

  private:
    template <typename F>
    double mean(F f) const {
        if (samples.empty()) return 0.0;
        double acc = 0.0;
        for (const auto& s : samples) acc += f(s);
        return acc / static_cast<double>(samples.size());
    }
};

}  // namespace sonomesh
