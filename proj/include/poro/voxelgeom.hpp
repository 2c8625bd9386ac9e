#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "poro/bitgrid.hpp"

namespace poro {

enum class Phase : uint8_t { free_pore = 0, washcoat = 1, solid = 2 };

/// Parameters for one synthetic porous sample on the unit cube.
struct GeometryConfig {
    uint32_t n_h = 24;                 // voxels per edge, h = 1/n_h
    double target_washcoat_fraction = 0.3;  // [0,1); 0 means no washcoat
    double binder_fraction = 0.0;      // [0,1): share of washcoat-adjacent free voxels turned solid
    double sphere_radius_min = 0.08;   // (0, 0.5)
    double sphere_radius_max = 0.16;
    uint64_t rng_seed = 0;

    void validate() const;
};

/// Three-phase voxel grid on the unit cube. A voxel is free, washcoat or
/// solid; the two masks are disjoint, solid is the complement. Linear index
/// runs x fastest: idx = x + n*(y + n*z).
struct VoxelGeometry {
    uint32_t n_h = 0;
    BitVector free_mask;
    BitVector washcoat_mask;

    double voxel_size() const { return 1.0 / n_h; }
    size_t voxel_count() const { return size_t(n_h) * n_h * n_h; }

    size_t index(uint32_t x, uint32_t y, uint32_t z) const {
        return x + size_t(n_h) * (y + size_t(n_h) * z);
    }

    Phase phase(size_t idx) const {
        if (free_mask[idx]) return Phase::free_pore;
        if (washcoat_mask[idx]) return Phase::washcoat;
        return Phase::solid;
    }

    /// Validating constructor from raw masks (disjointness, sizes).
    static VoxelGeometry from_masks(uint32_t n_h, BitVector free, BitVector washcoat);
};

/// Generate one sample: sphere-piled washcoat, optional solid binder on the
/// washcoat surface, inlet(x=0)->outlet(x=1) pore connectivity enforced with
/// bounded retries on derived sub-seeds.
VoxelGeometry generate_sample(const GeometryConfig& cfg);

/// True if the free phase 6-connects the x=0 plane to the x=n_h-1 plane.
bool inlet_outlet_connected(const VoxelGeometry& g);

// Binary geometry file: 16-byte header (magic "PVX1", u32 version=1, u32 n_h,
// u32 reserved), then the free and washcoat masks bit-packed LSB-first.
void save_pvx(const std::filesystem::path& p, const VoxelGeometry& g);
VoxelGeometry load_pvx(const std::filesystem::path& p);

/// Binary feature vector [free_mask; washcoat_mask], length 2*n_h^3.
BitVector flatten(const VoxelGeometry& g);
VoxelGeometry unflatten(const BitVector& z, uint32_t n_h);

} // namespace poro
