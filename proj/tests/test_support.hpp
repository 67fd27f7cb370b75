#pragma once

#include <spdist/rng.hpp>
#include <spdist/tensor_math.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace spdist::testing {

inline Mat3 random_rotation(Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    return rotation_from_quaternion(n(rng), n(rng), n(rng), n(rng));
}

// B B^T + shift * I with standard normal B.
inline SymMatrix3 random_spd(Rng& rng, double shift = 1.0) {
    std::normal_distribution<double> n(0.0, 1.0);
    Mat3 b;
    for (auto& row : b.a)
        for (double& x : row) x = n(rng);
    return SymMatrix3::from(b * b.transposed()) + shift * SymMatrix3::identity();
}

inline SymMatrix3 random_symmetric(Rng& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    return {n(rng), n(rng), n(rng), n(rng), n(rng), n(rng)};
}

inline SymMatrix3 from_spectrum(const Mat3& r, double l1, double l2, double l3) {
    return conjugate(r, SymMatrix3::diagonal(l1, l2, l3));
}

// One-sample Kolmogorov-Smirnov statistic D_n against a continuous CDF.
inline double ks_statistic(std::vector<double> x, const std::function<double(double)>& cdf) {
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = cdf(x[i]);
        d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
    }
    return d;
}

// Asymptotic 1% critical value of sqrt(n) D_n (Kolmogorov distribution).
inline constexpr double kKsCritical01 = 1.6276236115189502;

inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("spdist_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

} // namespace spdist::testing
