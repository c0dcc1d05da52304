#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sonomesh/common.hpp"
#include "sonomesh/io.hpp"
#include "sonomesh/rng.hpp"

namespace sonomesh::nn {

struct Tensor {
    std::vector<std::uint32_t> dims;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(std::vector<std::uint32_t> d) : dims(std::move(d)) {
        std::size_t n = 1;
        for (auto x : dims) n *= x;
        v.assign(n, 0.0);
    }
    std::size_t size() const { return v.size(); }
    double& operator[](std::size_t i) { return v[i]; }
    double operator[](std::size_t i) const { return v[i]; }
};

// A learnable tensor paired with its gradient accumulator.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    Param(std::string n, std::vector<std::uint32_t> dims)
        : name(std::move(n)), value(std::move(dims)) {
        grad = Tensor(value.dims);
    }
    void zero_grad() { std::fill(grad.v.begin(), grad.v.end(), 0.0); }
    void init_gaussian(Rng& rng, double scale) {
        for (auto& x : value.v) x = rng.gaussian() * scale;
    }
};

// Adam with fixed update order over the parameter list; deterministic.
class Adam {
  public:
    explicit Adam(double lr = 1e-3, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8)
        : lr_(lr), b1_(b1), b2_(b2), eps_(eps) {}

    void step(std::vector<Param*>& params) {
        if (m_.empty()) {
            for (auto* p : params) {
                m_.emplace_back(p->value.dims);
                v_.emplace_back(p->value.dims);
            }
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(b1_, t_);
        const double bc2 = 1.0 - std::pow(b2_, t_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& p = *params[i];
            for (std::size_t j = 0; j < p.value.size(); ++j) {
                const double g = p.grad[j];
                m_[i][j] = b1_ * m_[i][j] + (1.0 - b1_) * g;
                v_[i][j] = b2_ * v_[i][j] + (1.0 - b2_) * g * g;
                const double mhat = m_[i][j] / bc1;
                const double vhat = v_[i][j] / bc2;
                p.value[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    double lr() const { return lr_; }

  private:
    double lr_, b1_, b2_, eps_;
    int t_ = 0;
    std::vector<Tensor> m_, v_;
};

// y = W x + b, dims W = [out, in]
inline void dense_forward(const Tensor& W, const Tensor& b, const double* x, double* y) {
    const std::size_t out = W.dims[0], in = W.dims[1];
    for (std::size_t o = 0; o < out; ++o) {
        double acc = b[o];
        const double* row = &W.v[o * in];
        for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
        y[o] = acc;
    }
}

// y = W x, dims W = [out, in]
inline void matvec(const Tensor& W, const double* x, double* y) {
    const std::size_t out = W.dims[0], in = W.dims[1];
    for (std::size_t o = 0; o < out; ++o) {
        double acc = 0.0;
        const double* row = &W.v[o * in];
        for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
        y[o] = acc;
    }
}

// accumulate gradients; dx may be null for input layers
inline void dense_backward(const Tensor& W, Param& pW, Param& pb, const double* x,
                           const double* dy, double* dx) {
    const std::size_t out = W.dims[0], in = W.dims[1];
    if (dx)
        for (std::size_t i = 0; i < in; ++i) dx[i] = 0.0;
    for (std::size_t o = 0; o < out; ++o) {
        pb.grad[o] += dy[o];
        const double* row = &W.v[o * in];
        double* grow = &pW.grad.v[o * in];
        for (std::size_t i = 0; i < in; ++i) {
            grow[i] += dy[o] * x[i];
            if (dx) dx[i] += row[i] * dy[o];
        }
    }
}

inline void tanh_forward(double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] = std::tanh(x[i]);
}

// dy in place becomes dx given the activated output y
inline void tanh_backward(const double* y, double* dy, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dy[i] *= 1.0 - y[i] * y[i];
}

inline std::vector<io::TensorBlob> to_blobs(const std::vector<Param*>& params) {
    std::vector<io::TensorBlob> blobs;
    for (const auto* p : params) blobs.push_back({p->value.dims, p->value.v});
    return blobs;
}

inline void from_blobs(std::vector<Param*>& params, const std::vector<io::TensorBlob>& blobs) {
    if (blobs.size() != params.size()) throw IoError("checkpoint tensor count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (blobs[i].dims != params[i]->value.dims)
            throw IoError("checkpoint tensor shape mismatch for " + params[i]->name);
        params[i]->value.v = blobs[i].data;
    }
}

}  // namespace sonomesh::nn
