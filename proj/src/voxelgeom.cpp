#include "poro/voxelgeom.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <queue>

#include "poro/errors.hpp"
#include "poro/rng.hpp"
#include "poro/util.hpp"

namespace poro {

void GeometryConfig::validate() const {
    if (n_h < 8) throw ConfigError("resolution too small (n_h < 8)");
    if (!(target_washcoat_fraction >= 0.0 && target_washcoat_fraction < 1.0))
        throw ConfigError("target_washcoat_fraction must lie in [0,1)");
    if (!(binder_fraction >= 0.0 && binder_fraction < 1.0))
        throw ConfigError("binder_fraction must lie in [0,1)");
    if (!(sphere_radius_min > 0.0 && sphere_radius_min <= sphere_radius_max &&
          sphere_radius_max < 0.5))
        throw ConfigError("sphere radius range must satisfy 0 < min <= max < 0.5");
}

VoxelGeometry VoxelGeometry::from_masks(uint32_t n_h, BitVector free, BitVector washcoat) {
    VoxelGeometry g;
    g.n_h = n_h;
    size_t n3 = g.voxel_count();
    if (free.size() != n3 || washcoat.size() != n3)
        throw ArtifactError("mask size does not match n_h^3");
    if (free.count_and(washcoat) != 0)
        throw ArtifactError("free and washcoat masks overlap");
    g.free_mask = std::move(free);
    g.washcoat_mask = std::move(washcoat);
    return g;
}

namespace {

// 6-neighbourhood offsets as (axis, step) pairs handled explicitly in loops.

void pile_spheres(const GeometryConfig& cfg, rng::Engine& eng, BitVector& washcoat) {
    const uint32_t n = cfg.n_h;
    const double h = 1.0 / n;
    const auto n3 = static_cast<double>(size_t(n) * n * n);
    size_t wc_count = 0;
    size_t attempts = 0;
    const size_t attempt_budget = 200000;
    while (static_cast<double>(wc_count) / n3 < cfg.target_washcoat_fraction) {
        if (++attempts > attempt_budget)
            throw ConfigError("washcoat target fraction unreachable within attempt budget");
        const double cx = eng.uniform();
        const double cy = eng.uniform();
        const double cz = eng.uniform();
        const double r = eng.uniform(cfg.sphere_radius_min, cfg.sphere_radius_max);
        const double r2 = r * r;
        auto lo = [&](double c) { return static_cast<int64_t>(std::floor((c - r) / h)); };
        auto hi = [&](double c) { return static_cast<int64_t>(std::floor((c + r) / h)); };
        for (int64_t z = std::max<int64_t>(0, lo(cz)); z <= std::min<int64_t>(n - 1, hi(cz)); ++z)
            for (int64_t y = std::max<int64_t>(0, lo(cy)); y <= std::min<int64_t>(n - 1, hi(cy)); ++y)
                for (int64_t x = std::max<int64_t>(0, lo(cx)); x <= std::min<int64_t>(n - 1, hi(cx)); ++x) {
                    const double dx = (x + 0.5) * h - cx;
                    const double dy = (y + 0.5) * h - cy;
                    const double dz = (z + 0.5) * h - cz;
                    if (dx * dx + dy * dy + dz * dz < r2) {
                        size_t idx = x + size_t(n) * (y + size_t(n) * z);
                        if (!washcoat[idx]) {
                            washcoat.set(idx);
                            ++wc_count;
                        }
                    }
                }
    }
}

void place_binder(const GeometryConfig& cfg, rng::Engine& eng, const BitVector& washcoat,
                  BitVector& free) {
    if (cfg.binder_fraction <= 0.0) return;
    const uint32_t n = cfg.n_h;
    std::vector<size_t> candidates;
    for (uint32_t z = 0; z < n; ++z)
        for (uint32_t y = 0; y < n; ++y)
            for (uint32_t x = 0; x < n; ++x) {
                size_t idx = x + size_t(n) * (y + size_t(n) * z);
                if (!free[idx]) continue;
                bool touches =
                    (x > 0 && washcoat[idx - 1]) || (x + 1 < n && washcoat[idx + 1]) ||
                    (y > 0 && washcoat[idx - n]) || (y + 1 < n && washcoat[idx + n]) ||
                    (z > 0 && washcoat[idx - size_t(n) * n]) ||
                    (z + 1 < n && washcoat[idx + size_t(n) * n]);
                if (touches) candidates.push_back(idx);
            }
    auto n_binder = static_cast<size_t>(
        std::llround(cfg.binder_fraction * static_cast<double>(candidates.size())));
    rng::shuffle(candidates, eng);
    for (size_t i = 0; i < n_binder; ++i) free.set(candidates[i], false);
}

} // namespace

bool inlet_outlet_connected(const VoxelGeometry& g) {
    const uint32_t n = g.n_h;
    const size_t n3 = g.voxel_count();
    std::vector<uint8_t> seen(n3, 0);
    std::queue<size_t> q;
    for (uint32_t z = 0; z < n; ++z)
        for (uint32_t y = 0; y < n; ++y) {
            size_t idx = g.index(0, y, z);
            if (g.free_mask[idx]) {
                seen[idx] = 1;
                q.push(idx);
            }
        }
    const size_t sy = n, sz = size_t(n) * n;
    while (!q.empty()) {
        size_t idx = q.front();
        q.pop();
        uint32_t x = idx % n, y = (idx / n) % n, z = idx / sz;
        if (x == n - 1) return true;
        auto visit = [&](size_t nb) {
            if (!seen[nb] && g.free_mask[nb]) {
                seen[nb] = 1;
                q.push(nb);
            }
        };
        if (x > 0) visit(idx - 1);
        if (x + 1 < n) visit(idx + 1);
        if (y > 0) visit(idx - sy);
        if (y + 1 < n) visit(idx + sy);
        if (z > 0) visit(idx - sz);
        if (z + 1 < n) visit(idx + sz);
    }
    return false;
}

VoxelGeometry generate_sample(const GeometryConfig& cfg) {
    cfg.validate();
    const size_t n3 = size_t(cfg.n_h) * cfg.n_h * cfg.n_h;
    const int max_retries = 32;
    for (int retry = 0; retry < max_retries; ++retry) {
        rng::Engine eng(rng::derive_seed(cfg.rng_seed, static_cast<uint64_t>(retry)));
        BitVector washcoat(n3);
        if (cfg.target_washcoat_fraction > 0.0) pile_spheres(cfg, eng, washcoat);
        BitVector free(n3, true);
        for (size_t w = 0; w < washcoat.words().size(); ++w)
            if (washcoat.words()[w])
                for (size_t b = 0; b < 64; ++b) {
                    size_t idx = w * 64 + b;
                    if (idx < n3 && washcoat[idx]) free.set(idx, false);
                }
        place_binder(cfg, eng, washcoat, free);
        VoxelGeometry g = VoxelGeometry::from_masks(cfg.n_h, std::move(free), std::move(washcoat));
        if (inlet_outlet_connected(g)) return g;
    }
    throw NumericError("no inlet-outlet pore connectivity after " +
                       std::to_string(max_retries) + " seeded retries");
}

namespace {
constexpr char pvx_magic[4] = {'P', 'V', 'X', '1'};
constexpr uint32_t pvx_version = 1;
} // namespace

void save_pvx(const std::filesystem::path& p, const VoxelGeometry& g) {
    std::vector<uint8_t> out;
    out.insert(out.end(), pvx_magic, pvx_magic + 4);
    util::put_u32_le(out, pvx_version);
    util::put_u32_le(out, g.n_h);
    util::put_u32_le(out, 0); // reserved
    auto free_bytes = g.free_mask.to_bytes();
    auto wash_bytes = g.washcoat_mask.to_bytes();
    out.insert(out.end(), free_bytes.begin(), free_bytes.end());
    out.insert(out.end(), wash_bytes.begin(), wash_bytes.end());
    util::write_file(p, out.data(), out.size());
}

VoxelGeometry load_pvx(const std::filesystem::path& p) {
    auto data = util::read_file(p);
    if (data.size() < 16 || std::memcmp(data.data(), pvx_magic, 4) != 0)
        throw ArtifactError(p.string() + ": not a PVX file (magic mismatch)");
    uint32_t version = util::get_u32_le(data.data() + 4);
    if (version != pvx_version)
        throw ArtifactError(p.string() + ": unsupported PVX version " + std::to_string(version));
    uint32_t n_h = util::get_u32_le(data.data() + 8);
    size_t n3 = size_t(n_h) * n_h * n_h;
    size_t mask_bytes = BitVector::byte_size(n3);
    if (data.size() != 16 + 2 * mask_bytes)
        throw ArtifactError(p.string() + ": truncated payload (" + std::to_string(data.size()) +
                            " bytes, expected " + std::to_string(16 + 2 * mask_bytes) + ")");
    BitVector free = BitVector::from_bytes(data.data() + 16, n3);
    BitVector wash = BitVector::from_bytes(data.data() + 16 + mask_bytes, n3);
    return VoxelGeometry::from_masks(n_h, std::move(free), std::move(wash));
}

BitVector flatten(const VoxelGeometry& g) {
    return concat(g.free_mask, g.washcoat_mask);
}

VoxelGeometry unflatten(const BitVector& z, uint32_t n_h) {
    size_t n3 = size_t(n_h) * n_h * n_h;
    if (z.size() != 2 * n3)
        throw ArtifactError("flattened vector length does not match 2*n_h^3");
    BitVector free(n3), wash(n3);
    for (size_t i = 0; i < n3; ++i) {
        if (z[i]) free.set(i);
        if (z[n3 + i]) wash.set(i);
    }
    return VoxelGeometry::from_masks(n_h, std::move(free), std::move(wash));
}

} // namespace poro
