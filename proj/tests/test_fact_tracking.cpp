#include <spdist/errors.hpp>
#include <spdist/fact_tracking.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <type_traits>

using namespace spdist;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

DirectionField uniform_field(GridDims dims, Vec3 dir) {
    return {dims, std::vector<UnitVector3>(dims.count(), UnitVector3(dir))};
}

// In-plane directions near +x with independent jitter of the given sd.
DirectionField jittered_field(GridDims dims, double sd_deg, Rng& rng) {
    std::normal_distribution<double> n(0.0, sd_deg * kDeg);
    DirectionField f{dims, {}};
    for (VoxelId v = 0; v < dims.count(); ++v) {
        const double a = n(rng), e = 0.3 * n(rng);
        f.direction.emplace_back(std::cos(a) * std::cos(e), std::sin(a) * std::cos(e), std::sin(e));
    }
    return f;
}

// Flip every other voxel's sign; principal directions are defined up to sign.
DirectionField sign_flipped(const DirectionField& f, Rng& rng) {
    DirectionField g = f;
    std::bernoulli_distribution coin(0.5);
    for (auto& d : g.direction)
        if (coin(rng)) d = UnitVector3::from_normalized(-1.0 * d.vec());
    return g;
}

bool subset(const Tract& a, const Tract& b) { return std::includes(b.begin(), b.end(), a.begin(), a.end()); }

} // namespace

TEST(Angles, Examples) {
    const UnitVector3 x(1, 0, 0), mx(-1, 0, 0), d(1, 1, 0), z(0, 0, 1);
    EXPECT_NEAR(angle_delta(x, mx), 0.0, 1e-12);
    EXPECT_NEAR(angle_delta(x, mx, false), 180.0, 1e-12);
    EXPECT_NEAR(angle_delta(x, d), 45.0, 1e-12);
    EXPECT_NEAR(angle_delta(x, z), 90.0, 1e-12);
    EXPECT_NEAR(angle_theta(x, UnitVector3(1, 1, 1)), std::acos(1 / std::sqrt(3.0)) / kDeg, 1e-12);

    const GridDims dims{3, 3, 3};
    const UnitVector3 l = between_voxel_direction(dims.id({0, 0, 0}), dims.id({1, 1, 0}), dims);
    EXPECT_NEAR(l.x(), 1 / std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(l.y(), 1 / std::sqrt(2.0), 1e-15);
    EXPECT_EQ(l.z(), 0.0);
}

TEST(FactTrack, UniformFieldFollowsTheRow) {
    const GridDims dims{5, 5, 1};
    const DirectionField f = uniform_field(dims, {1, 0, 0});
    const TrackConfig c{{dims.id({0, 2, 0})}, 20.0};
    const Tract t = fact_track(f, c);
    Tract expected;
    for (int x = 0; x + 1 < 5; ++x) {
        expected.push_back({dims.id({x, 2, 0}), dims.id({x + 1, 2, 0})});
        expected.push_back({dims.id({x + 1, 2, 0}), dims.id({x, 2, 0})});
    }
    std::sort(expected.begin(), expected.end());
    EXPECT_EQ(t, expected);
    std::vector<VoxelId> row;
    for (int x = 0; x < 5; ++x) row.push_back(dims.id({x, 2, 0}));
    EXPECT_EQ(tract_voxels(t, c.seeds), row);
}

TEST(FactTrack, TinyThresholdLeavesOnlyTheSeed) {
    Rng rng(81);
    const GridDims dims{6, 6, 2};
    for (int i = 0; i < 20; ++i) {
        const DirectionField f = jittered_field(dims, 20.0, rng);
        const TrackConfig c{{dims.id({2, 3, 0})}, 1e-6};
        const Tract t = fact_track(f, c);
        EXPECT_TRUE(t.empty());
        EXPECT_EQ(tract_voxels(t, c.seeds), c.seeds);
    }
}

// Row y = 1 points along x up to x = 2, then turns 30 degrees in plane; the
// other rows point along z.
TEST(FactTrack, ThirtyDegreeJump) {
    const GridDims dims{5, 3, 1};
    DirectionField f = uniform_field(dims, {0, 0, 1});
    for (int x = 0; x < 5; ++x)
        f.direction[dims.id({x, 1, 0})] = x <= 2 ? UnitVector3(1, 0, 0) : UnitVector3(std::cos(30 * kDeg), std::sin(30 * kDeg), 0);
    const std::vector<VoxelId> seeds{dims.id({0, 1, 0})};

    std::vector<VoxelId> first, whole;
    for (int x = 0; x < 5; ++x) (x <= 2 ? first : whole).push_back(dims.id({x, 1, 0}));
    whole.insert(whole.begin(), first.begin(), first.end());
    std::sort(whole.begin(), whole.end());

    EXPECT_EQ(tract_voxels(fact_track(f, {seeds, 25.0}), seeds), first);
    EXPECT_EQ(tract_voxels(fact_track(f, {seeds, 35.0}), seeds), whole);
    // The jump is exactly 30 degrees, so C = 30 still stops.
    EXPECT_EQ(tract_voxels(fact_track(f, {seeds, 29.999}), seeds), first);
}

TEST(FactTrack, SignFlipInvariance) {
    Rng rng(82);
    const GridDims dims{7, 6, 2};
    for (int i = 0; i < 30; ++i) {
        const DirectionField f = jittered_field(dims, 15.0, rng);
        const TrackConfig c{{dims.id({3, 3, 0}), dims.id({0, 0, 1})}, 22.0};
        EXPECT_EQ(fact_track(f, c), fact_track(sign_flipped(f, rng), c));
    }
}

TEST(FactTrack, RawAnglesSeeSigns) {
    const GridDims dims{3, 1, 1};
    DirectionField f = uniform_field(dims, {1, 0, 0});
    f.direction[1] = UnitVector3(-1, 0, 0);
    TrackConfig c{{0}, 20.0, true};
    EXPECT_EQ(tract_voxels(fact_track(f, c), c.seeds).size(), 3u);
    c.acute = false;
    EXPECT_TRUE(fact_track(f, c).empty());
}

TEST(FactTrack, DeterministicAndMonotoneInThreshold) {
    Rng rng(83);
    const GridDims dims{8, 7, 2};
    for (int i = 0; i < 10; ++i) {
        const DirectionField f = jittered_field(dims, 15.0, rng);
        const std::vector<VoxelId> seeds{dims.id({1, 3, 0})};
        EXPECT_EQ(fact_track(f, {seeds, 21.0}), fact_track(f, {seeds, 21.0}));
        Tract prev;
        for (double c = 1.0; c < 60.0; c += 1.0) {
            const Tract t = fact_track(f, {seeds, c});
            EXPECT_TRUE(subset(prev, t)) << "C=" << c;
            prev = t;
        }
    }
}

TEST(FactTrack, SeedValidation) {
    const GridDims dims{5, 5, 1};
    const DirectionField f = uniform_field(dims, {1, 0, 0});
    EXPECT_THROW(fact_track(f, {{25}, 20.0}), SeedOutOfBounds);
    EXPECT_THROW(fact_track(f, {{}, 20.0}), ConfigError);
    EXPECT_THROW(fact_track(f, {{0}, 0.0}), ConfigError);
    EXPECT_THROW(edge_activation(f, {100}), SeedOutOfBounds);
    static_assert(std::is_base_of_v<ConfigError, SeedOutOfBounds>);
}

// The activation route must reproduce direct tracking at every threshold.
TEST(EdgeActivation, MatchesDirectTracking) {
    Rng rng(84);
    const GridDims dims{8, 7, 2};
    std::uniform_real_distribution<double> cdist(0.5, 60.0);
    for (int i = 0; i < 40; ++i) {
        const DirectionField f = jittered_field(dims, 5.0 + i, rng);
        const std::vector<VoxelId> seeds{dims.id({0, 3, 0}), dims.id({7, 6, 1})};
        const auto act = edge_activation(f, seeds);
        for (int j = 0; j < 25; ++j) {
            const double c = cdist(rng);
            EXPECT_EQ(tract_at(act, c), fact_track(f, {seeds, c})) << "C=" << c;
        }
        for (double c : {18.0, 23.0, 28.0}) EXPECT_EQ(tract_at(act, c), fact_track(f, {seeds, c}));
    }
}

TEST(ProbabilisticTrack, IdenticalDrawsGiveOnePattern) {
    Rng rng(85);
    const GridDims dims{6, 5, 1};
    const DirectionField f = jittered_field(dims, 10.0, rng);
    const std::vector<DirectionField> draws(25, f);
    const auto pats = probabilistic_track(draws, {{dims.id({0, 2, 0})}, 20.0});
    ASSERT_EQ(pats.size(), 1u);
    EXPECT_EQ(pats[0].probability, 1.0);
    EXPECT_EQ(pats[0].count, 25u);
}

TEST(ProbabilisticTrack, ProbabilitiesSumToOneAndAreSorted) {
    Rng rng(86);
    const GridDims dims{8, 7, 2};
    std::vector<DirectionField> draws;
    for (int i = 0; i < 200; ++i) draws.push_back(jittered_field(dims, 14.0, rng));
    const TrackConfig c{{dims.id({1, 3, 0})}, 20.0};
    const auto pats = probabilistic_track(draws, c);
    EXPECT_GT(pats.size(), 1u);
    double s = 0.0;
    std::size_t n = 0;
    std::set<Tract> distinct;
    for (std::size_t i = 0; i < pats.size(); ++i) {
        s += pats[i].probability;
        n += pats[i].count;
        distinct.insert(pats[i].edges);
        if (i > 0) {
            EXPECT_GE(pats[i - 1].count, pats[i].count);
        }
        EXPECT_EQ(pats[i].voxels, tract_voxels(pats[i].edges, c.seeds));
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
    EXPECT_EQ(n, 200u);
    EXPECT_EQ(distinct.size(), pats.size());
}

TEST(SensitivitySweep, DefaultGrid) {
    const auto c = default_sweep_thresholds();
    ASSERT_EQ(c.size(), 1001u);
    EXPECT_EQ(c.front(), 18.0);
    EXPECT_EQ(c.back(), 28.0);
    EXPECT_EQ(c[1], 18.01);
    EXPECT_EQ(c[500], 23.0);
    EXPECT_EQ(std::set<double>(c.begin(), c.end()).size(), 1001u);
}

TEST(SensitivitySweep, AgreesWithPerThresholdTracking) {
    Rng rng(87);
    const GridDims dims{8, 7, 2};
    std::vector<DirectionField> draws;
    for (int i = 0; i < 60; ++i) draws.push_back(jittered_field(dims, 14.0, rng));
    const std::vector<VoxelId> seeds{dims.id({1, 3, 0})};
    const SensitivityCurve curve = sensitivity_sweep(draws, seeds);
    ASSERT_EQ(curve.thresholds.size(), 1001u);
    EXPECT_EQ(curve.draws, 60u);

    for (std::size_t s : {std::size_t{0}, std::size_t{137}, std::size_t{500}, std::size_t{999}, std::size_t{1000}}) {
        const auto pats = probabilistic_track(draws, {seeds, curve.thresholds[s]});
        double total = 0.0;
        for (const auto& [id, count] : curve.counts[s]) total += static_cast<double>(count);
        EXPECT_EQ(total, 60.0);
        ASSERT_EQ(pats.size(), curve.counts[s].size());
        for (const FiberPattern& p : pats) {
            const auto it = std::find(curve.patterns.begin(), curve.patterns.end(), p.edges);
            ASSERT_NE(it, curve.patterns.end());
            EXPECT_DOUBLE_EQ(curve.probability(s, static_cast<std::size_t>(it - curve.patterns.begin())), p.probability);
        }
    }
}

// Each draw's tract can only grow with C; so the per-draw pattern sequence
// visits nested edge sets.
TEST(SensitivitySweep, PerDrawMonotone) {
    Rng rng(88);
    const GridDims dims{8, 7, 2};
    const std::vector<VoxelId> seeds{dims.id({1, 3, 0})};
    for (int i = 0; i < 20; ++i) {
        const std::vector<DirectionField> one{jittered_field(dims, 14.0, rng)};
        const SensitivityCurve curve = sensitivity_sweep(one, seeds);
        const Tract* prev = nullptr;
        for (std::size_t s = 0; s < curve.thresholds.size(); ++s) {
            ASSERT_EQ(curve.counts[s].size(), 1u);
            const Tract& t = curve.patterns[curve.counts[s][0].first];
            if (prev) {
                EXPECT_TRUE(subset(*prev, t));
            }
            prev = &t;
        }
    }
}

TEST(SensitivitySweep, Validation) {
    const GridDims dims{3, 3, 1};
    const std::vector<DirectionField> f{uniform_field(dims, {1, 0, 0})};
    EXPECT_THROW(sensitivity_sweep({}, {0}), ConfigError);
    EXPECT_THROW(sensitivity_sweep(f, {}), ConfigError);
    EXPECT_THROW(sensitivity_sweep(f, {9}), SeedOutOfBounds);
    EXPECT_THROW(sensitivity_sweep(f, {0}, {20.0, 19.0}), ConfigError);
}

TEST(DirectionFields, FromDraws) {
    PosteriorDraws d;
    d.dims = {2, 1, 1};
    d.voxels = 2;
    d.tensors = {SymMatrix3::diagonal(3, 1, 1), SymMatrix3::diagonal(1, 3, 1), SymMatrix3::diagonal(1, 1, 3),
                 SymMatrix3::diagonal(3, 1, 1)};
    d.sweep_index = {1, 2};
    const auto f = direction_fields(d);
    ASSERT_EQ(f.size(), 2u);
    EXPECT_EQ(f[0].direction[1].vec(), (Vec3{0, 1, 0}));
    EXPECT_EQ(f[1].direction[0].vec(), (Vec3{0, 0, 1}));
    d.tensors.clear();
    EXPECT_THROW(direction_fields(d), ConfigError);
}
