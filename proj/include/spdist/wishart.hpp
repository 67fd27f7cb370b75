#pragma once

// Wishart distribution on 3x3 SPD matrices in the mean parameterization:
// W(V, k) has scale V/k and k degrees of freedom, so E[X] = V.

#include <spdist/errors.hpp>
#include <spdist/rng.hpp>
#include <spdist/tensor_math.hpp>

#include <cmath>
#include <numbers>
#include <optional>
#include <random>

namespace spdist {

inline constexpr int kDim = 3;

// log Gamma_3(a) = (3/2) log(pi) + sum_{j=1..3} log Gamma(a + (1 - j)/2)
inline double log_multivariate_gamma3(double a) {
    return 1.5 * std::log(std::numbers::pi) + std::lgamma(a) + std::lgamma(a - 0.5) +
           std::lgamma(a - 1.0);
}

// The pieces of log W(X | V, k) that do not depend on k. Lets callers
// re-evaluate the density at many k (the dof update) without refactoring.
struct WishartStats {
    double log_det_x = 0.0;
    double log_det_v = 0.0;
    double trace_vinv_x = 0.0;

    static WishartStats of(const SpdMatrix3& x, const SpdMatrix3& v) {
        return {x.log_det(), v.log_det(), v.trace_solve(x)};
    }

    double log_pdf(double k) const {
        if (!(k > kDim - 1)) throw InvalidDof(k);
        const double p = kDim;
        // |V/k| = |V| / k^p and (V/k)^{-1} = k V^{-1}.
        return 0.5 * (k - p - 1.0) * log_det_x - 0.5 * k * trace_vinv_x -
               0.5 * k * p * std::numbers::ln2 - 0.5 * k * (log_det_v - p * std::log(k)) -
               log_multivariate_gamma3(0.5 * k);
    }
};

inline double wishart_logpdf(const SpdMatrix3& x, const SpdMatrix3& mean, double k) {
    return WishartStats::of(x, mean).log_pdf(k);
}

inline double wishart_logpdf(const SymMatrix3& x, const SymMatrix3& mean, double k) {
    return wishart_logpdf(SpdMatrix3(x), SpdMatrix3(mean), k);
}

// Bartlett construction: X = (L B)(L B)^T with L = chol(V/k), B lower
// triangular, B_ii^2 ~ chi^2(k - i) and B_ij ~ N(0, 1) below the diagonal.
// Gamma draws for the diagonal allow non-integer k. Returns nullopt in the
// (roundoff-only) case the product fails the PD check.
inline std::optional<SpdMatrix3> try_sample_wishart(const SpdMatrix3& mean, double k, Rng& rng) {
    if (!(k > kDim - 1)) throw InvalidDof(k);
    std::normal_distribution<double> normal(0.0, 1.0);
    Lower3 b;
    b.l11 = std::sqrt(std::gamma_distribution<double>(0.5 * k, 2.0)(rng));
    b.l22 = std::sqrt(std::gamma_distribution<double>(0.5 * (k - 1.0), 2.0)(rng));
    b.l33 = std::sqrt(std::gamma_distribution<double>(0.5 * (k - 2.0), 2.0)(rng));
    b.l21 = normal(rng);
    b.l31 = normal(rng);
    b.l32 = normal(rng);
    const Lower3 lb = (1.0 / std::sqrt(k)) * mean.cholesky_factor() * b;
    return SpdMatrix3::try_make(lb.gram());
}

inline SpdMatrix3 sample_wishart(const SpdMatrix3& mean, double k, Rng& rng) {
    for (;;) {
        if (auto x = try_sample_wishart(mean, k, rng)) return *x;
    }
}

} // namespace spdist
