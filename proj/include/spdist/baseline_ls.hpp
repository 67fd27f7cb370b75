#pragma once

// Voxel-wise least-squares tensor fit of the log-linear signal model. Used as
// the non-spatial baseline and as the sampler's warm start.

#include <spdist/errors.hpp>
#include <spdist/signal_model.hpp>
#include <spdist/tensor_math.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <optional>
#include <vector>

namespace spdist {

// Row m is [g1^2, g2^2, g3^2, 2 g1 g2, 2 g1 g3, 2 g2 g3], so row . a = g^T A g
// for a = (a11, a22, a33, a12, a13, a23).
inline Eigen::Matrix<double, Eigen::Dynamic, 6> design_matrix(const std::vector<UnitVector3>& gradients) {
    Eigen::Matrix<double, Eigen::Dynamic, 6> d(static_cast<Eigen::Index>(gradients.size()), 6);
    for (std::size_t m = 0; m < gradients.size(); ++m) {
        const Vec3& g = gradients[m].vec();
        const auto r = static_cast<Eigen::Index>(m);
        d(r, 0) = g.x * g.x;
        d(r, 1) = g.y * g.y;
        d(r, 2) = g.z * g.z;
        d(r, 3) = 2.0 * g.x * g.y;
        d(r, 4) = 2.0 * g.x * g.z;
        d(r, 5) = 2.0 * g.y * g.z;
    }
    return d;
}

// Factorizes the design once; fits any number of voxels sharing the protocol.
class LeastSquaresFitter {
public:
    explicit LeastSquaresFitter(const AcquisitionProtocol& protocol)
        : b_(protocol.b), qr_(design_matrix(protocol.gradients)) {
        if (qr_.rank() < 6) throw RankDeficientDesign(static_cast<int>(qr_.rank()));
    }

    // Minimizes sum_m (log S_m - log S0 + b g_m^T A g_m)^2 over symmetric A.
    SymMatrix3 fit(VoxelId v, const DwiDataset& data) const {
        const std::size_t m = data.measurements();
        Eigen::VectorXd y(static_cast<Eigen::Index>(m));
        for (std::size_t j = 0; j < m; ++j)
            y(static_cast<Eigen::Index>(j)) = -(data.log_signal(v, j) - data.log_s0(v)) / b_;
        const Eigen::Matrix<double, 6, 1> a = qr_.solve(y);
        return {a(0), a(1), a(2), a(3), a(4), a(5)};
    }

    std::vector<SymMatrix3> fit_all(const DwiDataset& data) const {
        std::vector<SymMatrix3> out(data.voxels());
        for (VoxelId v = 0; v < out.size(); ++v) out[v] = fit(v, data);
        return out;
    }

private:
    double b_;
    Eigen::ColPivHouseholderQR<Eigen::Matrix<double, Eigen::Dynamic, 6>> qr_;
};

inline SymMatrix3 fit_least_squares(VoxelId v, const DwiDataset& data) {
    return LeastSquaresFitter(data.protocol()).fit(v, data);
}

// Clamp eigenvalues below `floor` up to `floor`. The default floor is
// 1e-4 * max(lambda_max, 1). Inputs that already clear the floor come back
// bit-identical.
inline SpdMatrix3 project_to_pd(const SymMatrix3& s, std::optional<double> floor = std::nullopt) {
    const SymmetricEigen e = symmetric_eigen(s);
    const double f = floor.value_or(1e-4 * std::max(e.values[0], 1.0));
    if (e.values[2] >= f) {
        if (auto pd = SpdMatrix3::try_make(s)) return *pd;
    }
    SymMatrix3 out;
    for (int i = 0; i < 3; ++i) out += std::max(e.values[i], f) * SymMatrix3::outer(e.vectors[i]);
    return SpdMatrix3(out);
}

// Sum of squared residuals over all voxels.
inline double total_ssr(const std::vector<SymMatrix3>& tensors, const DwiDataset& data) {
    double s = 0.0;
    for (VoxelId v = 0; v < tensors.size(); ++v) s += voxel_ssr(tensors[v], v, data);
    return s;
}

} // namespace spdist
