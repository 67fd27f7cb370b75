#include "test_support.hpp"

#include <spdist/errors.hpp>
#include <spdist/signal_model.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <deque>
#include <numbers>

using namespace spdist;

namespace {

DwiDataset single_voxel(const std::vector<UnitVector3>& g, const std::vector<double>& log_s) {
    AcquisitionProtocol p;
    p.gradients = g;
    p.b = 1.0;
    p.log_s0 = {0.0};
    return DwiDataset({1, 1, 1}, p, log_s);
}

} // namespace

TEST(NoiselessLogSignal, Examples) {
    EXPECT_DOUBLE_EQ(noiseless_log_signal(SymMatrix3::identity(), UnitVector3(0.3, -0.4, 0.5), 1.0, 0.0), -1.0);
    EXPECT_DOUBLE_EQ(noiseless_log_signal(SymMatrix3::diagonal(2, 0.5, 0.5), UnitVector3(1, 0, 0), 1.0, 0.0), -2.0);
    EXPECT_DOUBLE_EQ(noiseless_log_signal(SymMatrix3::diagonal(2, 0.5, 0.5), UnitVector3(1, 0, 0), 0.5, 0.25), -0.75);
}

TEST(NoiselessLogSignal, RotationEquivariance) {
    Rng rng(41);
    for (int i = 0; i < 1000; ++i) {
        const Mat3 r = spdist::testing::random_rotation(rng);
        const SymMatrix3 a = conjugate(r, SymMatrix3::diagonal(2, 0.5, 0.5));
        EXPECT_NEAR(noiseless_log_signal(a, UnitVector3(r * Vec3{1, 0, 0}), 1.0, 0.0), -2.0, 1e-12);

        const SymMatrix3 b = spdist::testing::random_spd(rng);
        const UnitVector3 g(spdist::testing::random_symmetric(rng).apply({1, 1, 1}));
        EXPECT_NEAR(noiseless_log_signal(conjugate(r, b), UnitVector3(r * g.vec()), 1.3, 0.2),
                    noiseless_log_signal(b, g, 1.3, 0.2), 1e-10);
    }
}

TEST(VoxelLogLikelihood, ZeroResiduals) {
    const auto g = hemisphere_gradients(15);
    std::vector<double> y;
    for (const auto& gm : g) y.push_back(noiseless_log_signal(SymMatrix3::identity(), gm, 1.0, 0.0));
    const DwiDataset d = single_voxel(g, y);
    const double at1 = voxel_log_likelihood(SymMatrix3::identity(), 0, d, 1.0);
    EXPECT_NEAR(at1, -7.5 * std::log(2 * std::numbers::pi), 1e-12);
    EXPECT_NEAR(voxel_log_likelihood(SymMatrix3::identity(), 0, d, 2.0) - at1, -7.5 * std::log(2.0), 1e-12);
}

TEST(VoxelLogLikelihood, MatchesNaiveSummation) {
    Rng rng(42);
    const auto g = hemisphere_gradients(15);
    std::normal_distribution<double> n(0.0, 0.3);
    std::vector<double> y;
    for (std::size_t m = 0; m < g.size(); ++m) y.push_back(-1.0 + n(rng));
    const DwiDataset d = single_voxel(g, y);
    for (int i = 0; i < 50; ++i) {
        const SymMatrix3 a = spdist::testing::random_spd(rng, 0.1);
        const double s2 = 0.05 + 0.01 * i;
        double naive = 0.0;
        for (std::size_t m = 0; m < g.size(); ++m) {
            const Vec3& gm = g[m].vec();
            double q = 0.0;
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) q += gm[r] * a(r, c) * gm[c];
            const double mu = 0.0 - 1.0 * q;
            naive += -0.5 * std::log(2 * std::numbers::pi * s2) - (y[m] - mu) * (y[m] - mu) / (2 * s2);
        }
        EXPECT_NEAR(voxel_log_likelihood(a, 0, d, s2), naive, 1e-12 * std::abs(naive) + 1e-12);
    }
}

TEST(VoxelLogLikelihood, MaximizedAtMeanSquaredResidual) {
    Rng rng(43);
    const auto g = hemisphere_gradients(15);
    std::normal_distribution<double> n(0.0, 0.2);
    std::vector<double> y;
    for (std::size_t m = 0; m < g.size(); ++m) y.push_back(-0.8 + n(rng));
    const DwiDataset d = single_voxel(g, y);
    const SymMatrix3 a = SymMatrix3::identity();
    const double mse = voxel_ssr(a, 0, d) / 15.0;
    double best_s2 = 0.0, best = -1e300;
    for (int i = 1; i <= 200000; ++i) {
        const double s2 = 1e-5 * i;
        const double ll = voxel_log_likelihood(a, 0, d, s2);
        if (ll > best) best = ll, best_s2 = s2;
    }
    EXPECT_NEAR(best_s2, mse, 1e-5);
}

TEST(HemisphereGradients, UnitUpperHemisphereAndSpread) {
    const auto g = hemisphere_gradients(15);
    ASSERT_EQ(g.size(), 15u);
    for (const auto& v : g) {
        EXPECT_NEAR(norm(v.vec()), 1.0, 1e-12);
        EXPECT_GT(v.z(), 0.0);
    }
    for (std::size_t i = 0; i < g.size(); ++i)
        for (std::size_t j = i + 1; j < g.size(); ++j) EXPECT_LT(std::abs(dot(g[i], g[j])), 0.99);
}

TEST(Dataset, ValidationErrors) {
    AcquisitionProtocol p;
    p.gradients = hemisphere_gradients(5);
    p.log_s0 = {0.0};
    EXPECT_THROW(DwiDataset({1, 1, 1}, p, std::vector<double>(5, -1.0)), SchemaError);
    p.gradients = hemisphere_gradients(6);
    EXPECT_THROW(DwiDataset({1, 1, 1}, p, std::vector<double>(5, -1.0)), SchemaError);
    std::vector<double> bad(6, -1.0);
    bad[2] = std::nan("");
    EXPECT_THROW(DwiDataset({1, 1, 1}, p, bad), SchemaError);
    EXPECT_NO_THROW(DwiDataset({1, 1, 1}, p, std::vector<double>(6, -1.0)));
}

TEST(Phantom, DefaultGeometry) {
    const PhantomConfig cfg;
    Rng rng(1);
    const Phantom ph = simulate_phantom(cfg, rng);
    EXPECT_EQ(ph.data.dims(), (GridDims{8, 7, 2}));
    EXPECT_EQ(ph.data.measurements(), 15u);
    EXPECT_EQ(ph.data.voxels(), 112u);
    EXPECT_EQ(ph.truth.fiber_count(), 50u);

    // Each arc is a single face-connected component within every slice.
    const GridDims d = cfg.dims;
    for (int label = 0; label < 2; ++label) {
        for (int z = 0; z < d.nz; ++z) {
            std::vector<VoxelId> members;
            for (VoxelId v = 0; v < d.count(); ++v)
                if (ph.truth.fiber_label[v] == label && d.coord(v).z == z) members.push_back(v);
            ASSERT_FALSE(members.empty());
            std::vector<char> seen(d.count(), 0);
            std::deque<VoxelId> q{members.front()};
            seen[members.front()] = 1;
            std::size_t reached = 0;
            while (!q.empty()) {
                const VoxelCoord c = d.coord(q.front());
                q.pop_front();
                ++reached;
                for (VoxelCoord o : {VoxelCoord{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}}) {
                    const VoxelCoord n{c.x + o.x, c.y + o.y, z};
                    if (!d.contains(n)) continue;
                    const VoxelId id = d.id(n);
                    if (!seen[id] && ph.truth.fiber_label[id] == label) seen[id] = 1, q.push_back(id);
                }
            }
            EXPECT_EQ(reached, members.size()) << "arc " << label << " slice " << z;
        }
    }
}

TEST(Phantom, TruthDirectionsAreArcTangents) {
    const PhantomConfig cfg;
    const PhantomTruth t = phantom_truth(cfg);
    for (VoxelId v = 0; v < cfg.dims.count(); ++v) {
        if (!t.is_fiber(v)) {
            EXPECT_EQ(t.tensor[v], cfg.background_lambda * SymMatrix3::identity());
            continue;
        }
        const ArcSpec& a = cfg.arcs[static_cast<std::size_t>(t.fiber_label[v])];
        const VoxelCoord c = cfg.dims.coord(v);
        const Vec3 radial{c.x - a.cx, c.y - a.cy, 0.0};
        EXPECT_NEAR(dot(t.direction[v]->vec(), radial), 0.0, 1e-12);
        EXPECT_NEAR(norm(t.direction[v]->vec()), 1.0, 1e-12);
        const PrincipalDirection p = principal_eigenvector(t.tensor[v]);
        EXPECT_NEAR(std::abs(dot(p.direction, *t.direction[v])), 1.0, 1e-12);
        EXPECT_NEAR(p.eigenvalue, cfg.fiber_lambda1, 1e-12);
    }
}

TEST(Phantom, ArcTangentsAtZeroAndNinetyArePerpendicular) {
    EXPECT_NEAR(dot(arc_tangent(0.0), arc_tangent(std::numbers::pi / 2)), 0.0, 1e-15);
}

TEST(Phantom, NoiselessWhenTauIsZero) {
    PhantomConfig cfg;
    cfg.tau = 0.0;
    Rng rng(2);
    const Phantom ph = simulate_phantom(cfg, rng);
    EXPECT_EQ(ph.data.log_signals(), ph.noiseless);
    for (VoxelId v = 0; v < ph.data.voxels(); ++v)
        for (std::size_t m = 0; m < ph.data.measurements(); ++m)
            EXPECT_EQ(ph.data.log_signal(v, m),
                      noiseless_log_signal(ph.truth.tensor[v], ph.data.protocol().gradients[m], 1.0, 0.0));
}

TEST(Phantom, NoiseVarianceAtTauHalf) {
    PhantomConfig cfg;
    Rng rng(3);
    const Phantom ph = simulate_phantom(cfg, phantom_protocol(cfg), 0.5, rng);
    const auto& y = ph.data.log_signals();
    double mean = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) mean += y[i] - ph.noiseless[i];
    mean /= static_cast<double>(y.size());
    double var = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) var += std::pow(y[i] - ph.noiseless[i] - mean, 2);
    var /= static_cast<double>(y.size() - 1);
    EXPECT_NEAR(var, 0.25, 0.025);
}

TEST(Phantom, SeedDeterminism) {
    PhantomConfig cfg;
    cfg.tau = 0.1;
    Rng a(7), b(7), c(8);
    EXPECT_EQ(simulate_phantom(cfg, a).data, simulate_phantom(cfg, b).data);
    EXPECT_FALSE(simulate_phantom(cfg, a).data == simulate_phantom(cfg, c).data);
}

TEST(Phantom, ConfigErrors) {
    PhantomConfig leaves;
    leaves.arcs = {{0.0, 0.0, 9.0, 0.5, 0.0, 90.0}};
    EXPECT_THROW(validate_phantom(leaves), ConfigError);
    Rng rng(1);
    EXPECT_THROW(simulate_phantom(leaves, rng), ConfigError);

    PhantomConfig overlap;
    overlap.arcs = {{0.0, 0.0, 3.0, 1.0, 0.0, 90.0}, {7.0, 0.0, 4.0, 1.0, 90.0, 180.0}};
    EXPECT_THROW(phantom_truth(overlap), ConfigError);

    PhantomConfig neg;
    neg.tau = -0.1;
    EXPECT_THROW(validate_phantom(neg), ConfigError);
    EXPECT_THROW(simulate_phantom(PhantomConfig{}, phantom_protocol(PhantomConfig{}), -1.0, rng), ConfigError);

    PhantomConfig few;
    few.num_gradients = 5;
    EXPECT_THROW(validate_phantom(few), ConfigError);
}
