#pragma once

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>
#include <boost/math/special_functions/digamma.hpp>

#include "urbanfuse/common.hpp"
#include "urbanfuse/nn/core.hpp"

namespace urbanfuse {

// Zero-inflated negative binomial with P(0) = pi + (1-pi)(1-p)^n and
// P(y>0) = (1-pi) C(y+n-1, y) p^y (1-p)^n. Under this convention the mean is
// (1-pi) n p / (1-p).

namespace zinb_detail {
constexpr double kParamFloor = 1e-6;

inline double logsumexp2(double a, double b) {
    double m = std::max(a, b);
    return m + std::log1p(std::exp(std::min(a, b) - m));
}
}  // namespace zinb_detail

struct ZinbPoint {
    double n = 1.0;
    double p = 0.5;
    double pi = 0.0;

    // pi == 1 (a pure point mass at zero) is admitted as a degenerate limit.
    void check() const {
        if (!(n > 0.0) || !(p > 0.0) || !(p < 1.0) || !(pi >= 0.0) || !(pi <= 1.0) ||
            !std::isfinite(n) || !std::isfinite(p) || !std::isfinite(pi))
            throw DataError("invalid ZINB parameters");
    }
};

inline double zinb_log_pmf(long long y, const ZinbPoint& q) {
    q.check();
    if (y < 0) throw DataError("ZINB support is nonnegative integers");
    const double log1mp = std::log1p(-q.p);
    if (y == 0) {
        // pi == 0 would send log(pi) to -inf; feed the mixture through
        // log-sum-exp only when both terms are live.
        double nb0 = std::log1p(-q.pi) + q.n * log1mp;
        if (q.pi <= 0.0) return nb0;
        return zinb_detail::logsumexp2(std::log(q.pi), nb0);
    }
    double dy = static_cast<double>(y);
    return std::log1p(-q.pi) + std::lgamma(dy + q.n) - std::lgamma(dy + 1.0) -
           std::lgamma(q.n) + dy * std::log(q.p) + q.n * log1mp;
}

inline double zinb_pmf(long long y, const ZinbPoint& q) { return std::exp(zinb_log_pmf(y, q)); }

inline double zinb_mean(const ZinbPoint& q) { return (1.0 - q.pi) * q.n * q.p / (1.0 - q.p); }

// Negative log likelihood of a batch: -mean log pmf.
inline double zinb_nll(const Eigen::VectorXd& y, const Eigen::VectorXd& n,
                       const Eigen::VectorXd& p, const Eigen::VectorXd& pi) {
    double acc = 0.0;
    for (int i = 0; i < y.size(); ++i)
        acc -= zinb_log_pmf(static_cast<long long>(std::llround(y(i))), {n(i), p(i), pi(i)});
    return acc / static_cast<double>(y.size());
}

struct ZinbGrad {
    double dn = 0.0, dp = 0.0, dpi = 0.0;
};

// d log pmf / d(n, p, pi) at valid parameters.
inline ZinbGrad zinb_log_pmf_grad(long long y, const ZinbPoint& q) {
    q.check();
    const double log1mp = std::log1p(-q.p);
    ZinbGrad g;
    if (y == 0) {
        double lq = q.n * log1mp;           // log (1-p)^n
        double nb0 = (1.0 - q.pi) * std::exp(lq);
        double p0 = q.pi + nb0;
        g.dpi = (1.0 - std::exp(lq)) / p0;
        g.dn = nb0 * log1mp / p0;
        g.dp = -nb0 * q.n / (1.0 - q.p) / p0;
    } else {
        double dy = static_cast<double>(y);
        g.dn = boost::math::digamma(dy + q.n) - boost::math::digamma(q.n) + log1mp;
        g.dp = dy / q.p - q.n / (1.0 - q.p);
        g.dpi = -1.0 / (1.0 - q.pi);
    }
    return g;
}

// Smallest y with CDF(y) >= prob, scanning the integer support. The scan
// stops once the remaining tail mass drops below 1e-12.
inline long long zinb_quantile(double prob, const ZinbPoint& q) {
    if (prob < 0.0 || prob > 1.0) throw DataError("quantile probability out of [0,1]");
    double cdf = 0.0;
    const long long cap = 100000000;
    for (long long y = 0; y < cap; ++y) {
        cdf += zinb_pmf(y, q);
        if (cdf >= prob) return y;
        if (1.0 - cdf < 1e-12) return y;  // truncated tail
    }
    throw DataError("ZINB quantile scan failed to converge");
}

// Draws from the mixture: zero with probability pi, otherwise a negative
// binomial sampled through its Poisson-Gamma representation
// (lambda ~ Gamma(n, p/(1-p)), y ~ Poisson(lambda)).
template <typename Rng>
long long zinb_sample(Rng& rng, const ZinbPoint& q) {
    q.check();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (unit(rng) < q.pi) return 0;
    std::gamma_distribution<double> gamma(q.n, q.p / (1.0 - q.p));
    std::poisson_distribution<long long> poisson(std::max(1e-12, gamma(rng)));
    return poisson(rng);
}

// ---------------------------------------------------------------------------
// Head activations: softplus keeps n positive, sigmoids keep p and pi in
// (0,1); all three are floored away from the boundary before likelihood
// evaluation. Gradients pass through only where the floor is inactive.
// ---------------------------------------------------------------------------

struct ZinbActivation {
    double n = 0.0, p = 0.0, pi = 0.0;
    bool n_clamped = false, p_clamped = false, pi_clamped = false;

    static ZinbActivation apply(double n_pre, double p_pre, double pi_pre) {
        using zinb_detail::kParamFloor;
        ZinbActivation a;
        double n = nn::softplus(n_pre);
        a.n_clamped = n < kParamFloor;
        a.n = std::max(n, kParamFloor);
        double p = nn::sigmoid(p_pre);
        a.p_clamped = p < kParamFloor || p > 1.0 - kParamFloor;
        a.p = std::min(std::max(p, kParamFloor), 1.0 - kParamFloor);
        double pi = nn::sigmoid(pi_pre);
        a.pi_clamped = pi < kParamFloor || pi > 1.0 - kParamFloor;
        a.pi = std::min(std::max(pi, kParamFloor), 1.0 - kParamFloor);
        return a;
    }

    ZinbPoint point() const { return {n, p, pi}; }

    // chain rule back to the pre-activations
    ZinbGrad backward(double n_pre, double p_pre, double pi_pre, const ZinbGrad& g) const {
        ZinbGrad out;
        out.dn = n_clamped ? 0.0 : g.dn * nn::sigmoid(n_pre);
        out.dp = p_clamped ? 0.0 : g.dp * p * (1.0 - p);
        out.dpi = pi_clamped ? 0.0 : g.dpi * pi * (1.0 - pi);
        return out;
    }
};

}  // namespace urbanfuse
