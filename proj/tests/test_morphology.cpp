#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "poro/errors.hpp"
#include "poro/morphology.hpp"
#include "poro/rng.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace poro;

namespace {

const double pi = std::acos(-1.0);

VoxelGeometry from_free_bits(uint32_t n, const std::vector<int>& bits) {
    const size_t n3 = size_t(n) * n * n;
    BitVector f(n3);
    for (size_t i = 0; i < n3; ++i)
        if (bits[i]) f.set(i);
    return VoxelGeometry::from_masks(n, std::move(f), BitVector(n3));
}

// Axis-aligned free block [x0,x0+k) per axis inside an otherwise solid grid.
VoxelGeometry free_block(uint32_t n, uint32_t x0, uint32_t k) {
    const size_t n3 = size_t(n) * n * n;
    BitVector f(n3);
    VoxelGeometry tmp;
    tmp.n_h = n;
    for (uint32_t z = x0; z < x0 + k; ++z)
        for (uint32_t y = x0; y < x0 + k; ++y)
            for (uint32_t x = x0; x < x0 + k; ++x) f.set(tmp.index(x, y, z));
    return VoxelGeometry::from_masks(n, std::move(f), BitVector(n3));
}

void check_against_brute(const VoxelGeometry& g) {
    const auto m = compute_features(g);
    const auto b = test::brute_minkowski(g);
    CHECK(m.volume == doctest::Approx(b[0]).epsilon(1e-12));
    CHECK(m.surface == doctest::Approx(b[1]).epsilon(1e-12));
    CHECK(m.mean_curvature == doctest::Approx(b[2]).epsilon(1e-12));
    CHECK(m.total_curvature == doctest::Approx(b[3]).epsilon(1e-12));
}

} // namespace

TEST_CASE("voxel-count features") {
    BitVector f(8), w(8);
    f.set(0);
    auto g1 = VoxelGeometry::from_masks(2, f, w);
    auto m1 = compute_features(g1);
    CHECK(m1.porosity == 0.125);
    CHECK(m1.volume == 0.125);
    CHECK(m1.washcoat_fraction == 0.0);

    BitVector f2(8), w2(8);
    f2.set(0);
    f2.set(1);
    f2.set(2);
    w2.set(3);
    w2.set(4);
    auto m2 = compute_features(VoxelGeometry::from_masks(2, f2, w2));
    CHECK(m2.porosity == 0.375);
    CHECK(m2.washcoat_fraction == 0.25);
}

TEST_CASE("all-free cube: no internal interfaces, chi = 1") {
    const size_t n3 = 6 * 6 * 6;
    auto g = VoxelGeometry::from_masks(6, BitVector(n3, true), BitVector(n3));
    auto m = compute_features(g);
    CHECK(m.porosity == 1.0);
    CHECK(m.washcoat_fraction == 0.0);
    CHECK(m.volume == 1.0);
    CHECK(m.surface == 0.0);
    CHECK(m.mean_curvature == 0.0);
    CHECK(m.total_curvature == doctest::Approx(4 * pi).epsilon(1e-12));
}

TEST_CASE("empty free phase") {
    const size_t n3 = 4 * 4 * 4;
    auto g = VoxelGeometry::from_masks(4, BitVector(n3), BitVector(n3, true));
    auto m = compute_features(g);
    CHECK(m.porosity == 0.0);
    CHECK(m.volume == 0.0);
    CHECK(m.surface == 0.0);
    CHECK(m.mean_curvature == 0.0);
    CHECK(m.total_curvature == 0.0);
}

TEST_CASE("interior free cubes match the analytic cube formulas") {
    // Mean-curvature integral of a cube of side a is 3*pi*a; chi = 1.
    for (uint32_t k : {1u, 2u, 3u}) {
        const uint32_t n = 8;
        const double a = double(k) / n;
        auto g = free_block(n, 2, k);
        auto m = compute_features(g);
        CHECK(m.volume == doctest::Approx(a * a * a).epsilon(1e-12));
        CHECK(m.surface == doctest::Approx(6 * a * a).epsilon(1e-12));
        CHECK(m.mean_curvature == doctest::Approx(3 * pi * a).epsilon(1e-12));
        CHECK(m.total_curvature == doctest::Approx(4 * pi).epsilon(1e-12));
        check_against_brute(g);
    }
}

TEST_CASE("square ring of free voxels has chi = 0") {
    const uint32_t n = 8;
    const size_t n3 = size_t(n) * n * n;
    BitVector f(n3);
    VoxelGeometry tmp;
    tmp.n_h = n;
    // 3x3 frame (hole in the middle), one voxel thick, fully interior.
    for (uint32_t y = 2; y <= 4; ++y)
        for (uint32_t x = 2; x <= 4; ++x)
            if (!(x == 3 && y == 3)) f.set(tmp.index(x, y, 3));
    auto g = VoxelGeometry::from_masks(n, std::move(f), BitVector(n3));
    auto m = compute_features(g);
    CHECK(m.total_curvature == doctest::Approx(0.0).epsilon(1e-12));
    check_against_brute(g);
}

TEST_CASE("volume, surface and mean curvature add over separated components") {
    const uint32_t n = 10;
    const size_t n3 = size_t(n) * n * n;
    auto a = free_block(n, 1, 2);
    auto b = free_block(n, 6, 3);
    BitVector both(n3);
    for (size_t i = 0; i < n3; ++i)
        if (a.free_mask[i] || b.free_mask[i]) both.set(i);
    auto g = VoxelGeometry::from_masks(n, std::move(both), BitVector(n3));

    auto ma = compute_features(a), mb = compute_features(b), mg = compute_features(g);
    CHECK(mg.volume == doctest::Approx(ma.volume + mb.volume).epsilon(1e-12));
    CHECK(mg.surface == doctest::Approx(ma.surface + mb.surface).epsilon(1e-12));
    CHECK(mg.mean_curvature ==
          doctest::Approx(ma.mean_curvature + mb.mean_curvature).epsilon(1e-12));
    CHECK(mg.total_curvature == doctest::Approx(8 * pi).epsilon(1e-12)); // chi = 2
}

TEST_CASE("edge-touching cubes stay disconnected under 6-connectivity") {
    const uint32_t n = 6;
    const size_t n3 = size_t(n) * n * n;
    BitVector f(n3);
    VoxelGeometry tmp;
    tmp.n_h = n;
    f.set(tmp.index(2, 2, 2));
    f.set(tmp.index(3, 3, 2)); // shares one edge with the first voxel
    auto g = VoxelGeometry::from_masks(n, std::move(f), BitVector(n3));
    auto m = compute_features(g);
    CHECK(m.total_curvature == doctest::Approx(8 * pi).epsilon(1e-12));
    check_against_brute(g);
}

TEST_CASE("translation invariance of interior structures") {
    const uint32_t n = 9;
    const size_t n3 = size_t(n) * n * n;
    rng::Engine eng(31);
    BitVector f0(n3), f1(n3);
    VoxelGeometry tmp;
    tmp.n_h = n;
    for (uint32_t z = 2; z <= 5; ++z)
        for (uint32_t y = 2; y <= 5; ++y)
            for (uint32_t x = 2; x <= 5; ++x)
                if (eng.uniform() < 0.5) {
                    f0.set(tmp.index(x, y, z));
                    f1.set(tmp.index(x + 1, y + 1, z + 1));
                }
    auto m0 = compute_features(VoxelGeometry::from_masks(n, std::move(f0), BitVector(n3)));
    auto m1 = compute_features(VoxelGeometry::from_masks(n, std::move(f1), BitVector(n3)));
    for (int i = 0; i < 6; ++i)
        CHECK(m0.as_array()[i] == doctest::Approx(m1.as_array()[i]).epsilon(1e-12));
}

TEST_CASE("checkerboard fixture, analytic values") {
    const uint32_t n = 4;
    BitVector f(64), w(64);
    for (uint32_t z = 0; z < n; ++z)
        for (uint32_t y = 0; y < n; ++y)
            for (uint32_t x = 0; x < n; ++x) {
                const size_t i = x + 4 * (y + 4 * z);
                if ((x + y + z) % 2 == 0)
                    f.set(i);
                else
                    w.set(i);
            }
    auto g = VoxelGeometry::from_masks(n, std::move(f), std::move(w));
    auto m = compute_features(g);
    CHECK(m.porosity == 0.5);
    CHECK(m.washcoat_fraction == 0.5);
    CHECK(m.volume == doctest::Approx(0.5).epsilon(1e-12));
    // Every interior lattice face separates the phases: 3*16*3 faces * h^2.
    CHECK(m.surface == doctest::Approx(9.0).epsilon(1e-12));
    // Every interior lattice edge sees the diagonal two-cell pattern: 108 * 2 units.
    CHECK(m.mean_curvature == doctest::Approx(13.5 * pi).epsilon(1e-12));
    // 32 isolated cubes.
    CHECK(m.total_curvature == doctest::Approx(128 * pi).epsilon(1e-12));
    check_against_brute(g);
}

TEST_CASE("agrees with the brute-force counter on all 2^8 two-cube grids") {
    for (int mask = 0; mask < 256; ++mask) {
        std::vector<int> bits(8);
        for (int i = 0; i < 8; ++i) bits[i] = (mask >> i) & 1;
        check_against_brute(from_free_bits(2, bits));
    }
}

TEST_CASE("agrees with the brute-force counter on random 4^3 and 6^3 grids") {
    rng::Engine eng(77);
    for (int rep = 0; rep < 60; ++rep) {
        const uint32_t n = rep % 2 == 0 ? 4 : 6;
        const double fill = 0.15 + 0.7 * eng.uniform();
        std::vector<int> bits(size_t(n) * n * n);
        for (auto& b : bits) b = eng.uniform() < fill ? 1 : 0;
        check_against_brute(from_free_bits(n, bits));
    }
}

TEST_CASE("digitized ball: volume, face-count surface bias, chi = 1") {
    const uint32_t n = 64;
    const double h = 1.0 / n;
    const double r = 0.3;
    BitVector f(size_t(n) * n * n);
    VoxelGeometry tmp;
    tmp.n_h = n;
    for (uint32_t z = 0; z < n; ++z)
        for (uint32_t y = 0; y < n; ++y)
            for (uint32_t x = 0; x < n; ++x) {
                const double dx = (x + 0.5) * h - 0.5;
                const double dy = (y + 0.5) * h - 0.5;
                const double dz = (z + 0.5) * h - 0.5;
                if (dx * dx + dy * dy + dz * dz < r * r) f.set(tmp.index(x, y, z));
            }
    auto g = VoxelGeometry::from_masks(n, std::move(f), BitVector(size_t(n) * n * n));
    auto m = compute_features(g);

    const double v_exact = 4.0 / 3.0 * pi * r * r * r;
    CHECK(std::abs(m.volume - v_exact) / v_exact < 0.01);
    // Face counting overestimates a smooth sphere's area by ~1.5x.
    const double s_smooth = 4 * pi * r * r;
    CHECK(std::abs(m.surface - 1.5 * s_smooth) / (1.5 * s_smooth) < 0.15);
    CHECK(m.total_curvature == doctest::Approx(4 * pi).epsilon(1e-12));
    CHECK(m.mean_curvature > 0.0);

    // Regression baselines, measured once on this fixture.
    CHECK(m.volume == 0.112396240234375);
    CHECK(m.surface == 1.69921875);
    CHECK(m.mean_curvature == doctest::Approx(5.5959619142068187).epsilon(1e-12));
}

TEST_CASE("feature CSV writes 17-digit values and reads back exactly") {
    const auto dir = fs::temp_directory_path() / "poro_morph_csv";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto p = dir / "features.csv";

    MorphFeatures a;
    a.porosity = 1.0 / 3.0;
    a.washcoat_fraction = 0.25;
    a.volume = 1.0 / 7.0;
    a.surface = 6.25e-3;
    a.mean_curvature = 3 * pi * 0.125;
    a.total_curvature = 4 * pi;
    MorphFeatures b;
    b.porosity = 0.5;
    write_features_csv(p, {"s0", "s1"}, {a, b});

    auto t = read_features_csv(p);
    REQUIRE(t.ids == std::vector<std::string>{"s0", "s1"});
    REQUIRE(t.values.size() == 2);
    const auto ref = a.as_array();
    for (int i = 0; i < 6; ++i) CHECK(t.values[0][i] == ref[i]);
    CHECK(t.values[1][0] == 0.5);

    CHECK_THROWS_AS(read_features_csv(dir / "none.csv"), ArtifactError);
    fs::remove_all(dir);
}
