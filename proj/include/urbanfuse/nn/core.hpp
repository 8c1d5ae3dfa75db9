#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "urbanfuse/common.hpp"

namespace urbanfuse::nn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Seq = std::vector<Mat>;  // time-major sequence of N x C frames

struct Param {
    std::string name;
    Mat value;
    Mat grad;

    Param() = default;
    Param(std::string n, int rows, int cols)
        : name(std::move(n)), value(Mat::Zero(rows, cols)), grad(Mat::Zero(rows, cols)) {}
};

inline void glorot_init(Mat& w, std::mt19937_64& rng, double fan_in, double fan_out) {
    double a = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-a, a);
    for (int i = 0; i < w.rows(); ++i)
        for (int j = 0; j < w.cols(); ++j) w(i, j) = dist(rng);
}

class Adam {
public:
    explicit Adam(std::vector<Param*> params, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8)
        : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (Param* p : params_)
            slots_.push_back({Mat::Zero(p->value.rows(), p->value.cols()),
                              Mat::Zero(p->value.rows(), p->value.cols())});
    }

    void zero_grad() {
        for (Param* p : params_) p->grad.setZero();
    }

    void step(double lr) {
        ++t_;
        double bc1 = 1.0 - std::pow(beta1_, t_);
        double bc2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Param& p = *params_[i];
            Slot& s = slots_[i];
            s.m = beta1_ * s.m + (1.0 - beta1_) * p.grad;
            s.v = beta2_ * s.v + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
            Mat mhat = s.m / bc1;
            Mat vhat = s.v / bc2;
            p.value.array() -= lr * mhat.array() / (vhat.array().sqrt() + eps_);
        }
    }

private:
    struct Slot {
        Mat m, v;
    };
    std::vector<Param*> params_;
    std::vector<Slot> slots_;
    double beta1_, beta2_, eps_;
    long t_ = 0;
};

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

inline double sigmoid(double x) {
    if (x >= 0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

inline double softplus(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

inline Mat sigmoid(const Mat& x) { return x.unaryExpr([](double v) { return sigmoid(v); }); }
inline Mat relu(const Mat& x) { return x.cwiseMax(0.0); }
inline Mat relu_mask(const Mat& pre) {
    return pre.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Spectral helpers
// ---------------------------------------------------------------------------

// Chebyshev-scaled Laplacian with self-loops: with lambda_max taken as 2,
// L~ = L - I = -D^{-1/2} (A + I) D^{-1/2}. Spectrum lies in [-1, 1).
inline Mat scaled_cheb_laplacian(const Mat& a) {
    const int n = static_cast<int>(a.rows());
    if (a.cols() != n) throw DataError("adjacency must be square");
    if (!a.isApprox(a.transpose(), 1e-12)) throw DataError("adjacency must be symmetric");
    Mat ahat = a + Mat::Identity(n, n);
    Vec dinv = ahat.rowwise().sum();
    for (int i = 0; i < n; ++i) dinv(i) = 1.0 / std::sqrt(dinv(i));
    return -(dinv.asDiagonal() * ahat * dinv.asDiagonal());
}

// T_0..T_{k-1} of the given operator (T_0 = I, T_1 = X, T_j = 2X T_{j-1} - T_{j-2}).
inline std::vector<Mat> chebyshev_basis(const Mat& x, int order) {
    const int n = static_cast<int>(x.rows());
    std::vector<Mat> t;
    t.push_back(Mat::Identity(n, n));
    if (order > 1) t.push_back(x);
    for (int j = 2; j < order; ++j) t.push_back(2.0 * x * t[j - 1] - t[j - 2]);
    t.resize(order);
    return t;
}

// Row-normalized transition matrix W~ = A / rowsum(A); all-zero rows stay
// zero (isolated nodes) and are reported through `log`.
inline Mat row_normalized_transition(const Mat& a, std::vector<std::string>* log = nullptr) {
    const int n = static_cast<int>(a.rows());
    Mat w = a;
    for (int i = 0; i < n; ++i) {
        double s = a.row(i).sum();
        if (s > 0.0)
            w.row(i) /= s;
        else {
            w.row(i).setZero();
            if (log) log->push_back("isolated node at index " + std::to_string(i));
        }
    }
    return w;
}

inline bool all_finite(const Mat& m) { return m.allFinite(); }

}  // namespace urbanfuse::nn
