// Brute-force reference implementations used by the tests only. Each oracle
// is a naive double loop, written before (and kept independent of) the main
// code paths it checks.
#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

namespace oracle {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline Mat distance_kernel(const Mat& d, double sigma, double eps) {
    Mat a = Mat::Zero(d.rows(), d.cols());
    for (int i = 0; i < d.rows(); ++i)
        for (int j = 0; j < d.cols(); ++j) {
            if (i == j) continue;
            double w = std::exp(-(d(i, j) * d(i, j)) / (sigma * sigma));
            if (w >= eps) a(i, j) = w;
        }
    return a;
}

inline double pearson_abs(const Vec& x, const Vec& y) {
    double mx = 0, my = 0;
    int n = static_cast<int>(x.size());
    for (int i = 0; i < n; ++i) {
        mx += x(i);
        my += y(i);
    }
    mx /= n;
    my /= n;
    double cov = 0, vx = 0, vy = 0;
    for (int i = 0; i < n; ++i) {
        cov += (x(i) - mx) * (y(i) - my);
        vx += (x(i) - mx) * (x(i) - mx);
        vy += (y(i) - my) * (y(i) - my);
    }
    if (vx <= 0 || vy <= 0) return 0.0;
    return std::min(1.0, std::abs(cov / std::sqrt(vx * vy)));
}

// Correlation stack from already z-scored category blocks.
inline Mat node_correlation(const Mat& block) {
    int n = static_cast<int>(block.rows());
    Mat c = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            Vec vi = block.row(i), vj = block.row(j);
            double vari = 0, varj = 0;
            for (int f = 0; f < vi.size(); ++f) {
                vari += std::pow(vi(f) - vi.mean(), 2);
                varj += std::pow(vj(f) - vj.mean(), 2);
            }
            if (vari <= 0 || varj <= 0)
                c(i, j) = 0.0;
            else
                c(i, j) = pearson_abs(vi, vj);
        }
    return c;
}

inline Mat homophily(const std::vector<Mat>& corrs, const Mat& a_dist) {
    Mat a = Mat::Zero(a_dist.rows(), a_dist.cols());
    for (const Mat& c : corrs)
        for (int i = 0; i < a.rows(); ++i)
            for (int j = 0; j < a.cols(); ++j) a(i, j) += c(i, j) * a_dist(i, j);
    return a / static_cast<double>(corrs.size());
}

inline double zinb_pmf(long long y, double n, double p, double pi) {
    double nb = std::exp(std::lgamma(y + n) - std::lgamma(y + 1.0) - std::lgamma(n)) *
                std::pow(p, double(y)) * std::pow(1.0 - p, n);
    if (y == 0) return pi + (1.0 - pi) * nb;
    return (1.0 - pi) * nb;
}

inline double zinb_mean_by_summation(double n, double p, double pi) {
    double mean = 0, cdf = 0;
    for (long long y = 0; y < 100000000; ++y) {
        double f = zinb_pmf(y, n, p, pi);
        mean += y * f;
        cdf += f;
        if (1.0 - cdf < 1e-12) break;
    }
    return mean;
}

// K-hop diffusion via explicit Chebyshev matrix powers (T_1 = W, T_2 = 2W^2 - I, ...).
inline Mat diffusion(const Mat& w, const Mat& h, const std::vector<Mat>& theta_f,
                     const std::vector<Mat>& theta_b) {
    int k_max = static_cast<int>(theta_f.size());
    Mat out = Mat::Zero(h.rows(), theta_f[0].cols());
    Mat t_prev = Mat::Identity(w.rows(), w.cols());
    Mat t_cur = w;
    for (int k = 1; k <= k_max; ++k) {
        out += t_cur * h * theta_f[k - 1] + t_cur * h * theta_b[k - 1];
        Mat t_next = 2.0 * w * t_cur - t_prev;
        t_prev = t_cur;
        t_cur = t_next;
    }
    return out.cwiseMax(0.0);
}

// Spectral-domain evaluation of the order-k Chebyshev graph filter.
inline Mat spectral_cheb(const Mat& lap_scaled, const Mat& h, const std::vector<Mat>& theta) {
    Eigen::SelfAdjointEigenSolver<Mat> es(lap_scaled);
    Mat u = es.eigenvectors();
    Vec lam = es.eigenvalues();
    Mat out = Mat::Zero(h.rows(), theta[0].cols());
    Vec t_prev = Vec::Ones(lam.size());
    Vec t_cur = lam;
    for (std::size_t j = 0; j < theta.size(); ++j) {
        Vec tj = j == 0 ? t_prev : (j == 1 ? t_cur : Vec());
        if (j >= 2) {
            tj = 2.0 * lam.cwiseProduct(t_cur) - t_prev;
            t_prev = t_cur;
            t_cur = tj;
        }
        out += u * tj.asDiagonal() * u.transpose() * h * theta[j];
    }
    return out.cwiseMax(0.0);
}

// ---------------------------------------------------------------------------
// Metric references: plain folds over (time, tract) cells.
// ---------------------------------------------------------------------------

inline double mae(const Mat& y, const Mat& yhat) {
    double s = 0;
    for (int t = 0; t < y.rows(); ++t)
        for (int n = 0; n < y.cols(); ++n) s += std::abs(y(t, n) - yhat(t, n));
    return s / (y.rows() * y.cols());
}

inline Vec mape_per_tract(const Mat& y, const Mat& yhat) {
    Vec out(y.cols());
    for (int n = 0; n < y.cols(); ++n) {
        double s = 0;
        for (int t = 0; t < y.rows(); ++t)
            s += std::abs(y(t, n) - yhat(t, n)) / std::max(y(t, n), 1.0);
        out(n) = s / y.rows() * 100.0;
    }
    return out;
}

inline double kl_div(const Mat& y, const Mat& yhat, double eps = 2.2e-16) {
    double s = 0;
    for (int t = 0; t < y.rows(); ++t)
        for (int n = 0; n < y.cols(); ++n)
            s += y(t, n) * std::log((y(t, n) + eps) / (yhat(t, n) + eps));
    return s / (y.rows() * y.cols());
}

inline double mpiw(const Mat& lo, const Mat& hi) {
    double s = 0;
    for (int t = 0; t < lo.rows(); ++t)
        for (int n = 0; n < lo.cols(); ++n) s += hi(t, n) - lo(t, n);
    return s / (lo.rows() * lo.cols());
}

inline double picp(const Mat& y, const Mat& lo, const Mat& hi) {
    double c = 0;
    for (int t = 0; t < y.rows(); ++t)
        for (int n = 0; n < y.cols(); ++n)
            if (y(t, n) >= lo(t, n) && y(t, n) <= hi(t, n)) c += 1;
    return c / (y.rows() * y.cols());
}

inline double true_zero_rate(const Mat& y, const Mat& yhat) {
    double zeros = 0, hits = 0;
    for (int t = 0; t < y.rows(); ++t)
        for (int n = 0; n < y.cols(); ++n)
            if (y(t, n) == 0) {
                zeros += 1;
                if (std::llround(yhat(t, n)) == 0) hits += 1;
            }
    return zeros == 0 ? std::numeric_limits<double>::quiet_NaN() : hits / zeros;
}

inline double micro_f1(const Mat& y, const Mat& yhat) {
    // micro-averaged over integer classes == exact-match rate
    double hits = 0;
    for (int t = 0; t < y.rows(); ++t)
        for (int n = 0; n < y.cols(); ++n)
            if (std::llround(yhat(t, n)) == std::llround(y(t, n))) hits += 1;
    return hits / (y.rows() * y.cols());
}

// ---------------------------------------------------------------------------
// Central finite differences of a scalar function over a parameter matrix.
// ---------------------------------------------------------------------------

inline double central_diff(const std::function<double()>& f, double* x, double eps) {
    double saved = *x;
    *x = saved + eps;
    double up = f();
    *x = saved - eps;
    double down = f();
    *x = saved;
    return (up - down) / (2.0 * eps);
}

// Compares analytic parameter gradients (already accumulated in p->grad)
// against central differences of `loss`. Returns the worst relative error
// over up to `samples` entries per parameter.
template <typename ParamPtrs>
double max_param_grad_err(const ParamPtrs& params, const std::function<double()>& loss,
                          std::mt19937_64& rng, int samples = 8, double eps = 1e-6) {
    double worst = 0.0;
    for (auto* p : params) {
        int total = static_cast<int>(p->value.size());
        for (int s = 0; s < std::min(samples, total); ++s) {
            int idx = static_cast<int>(rng() % total);
            double analytic = p->grad.data()[idx];
            double numeric = central_diff(loss, p->value.data() + idx, eps);
            double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
            worst = std::max(worst, std::abs(analytic - numeric) / denom);
        }
    }
    return worst;
}

}  // namespace oracle
