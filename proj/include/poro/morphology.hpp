#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "poro/voxelgeom.hpp"

namespace poro {

/// Morphological feature vector of one geometry, fixed order
/// (porosity, washcoat fraction, pore volume, pore surface area,
/// integral mean curvature, integral total curvature).
struct MorphFeatures {
    double porosity = 0;        // eps
    double washcoat_fraction = 0; // eps_w
    double volume = 0;          // V, pore volume
    double surface = 0;         // S, pore/non-pore interface area
    double mean_curvature = 0;  // c_f
    double total_curvature = 0; // ct_f = 4*pi*chi

    std::array<double, 6> as_array() const {
        return {porosity, washcoat_fraction, volume, surface, mean_curvature, total_curvature};
    }
};

/// Names matching the feature CSV header, in feature order.
extern const std::array<const char*, 6> morph_feature_names;

// Free-phase geometric measures from local voxel-configuration counts with
// 6-connected foreground. Faces/edges lying on the domain boundary are
// excluded from surface and curvature (capped phase, caps not counted); the
// Euler characteristic is that of the capped body, so a fully free domain
// gives chi = 1.

/// Surface area of the free phase: h^2 per interior free/non-free face.
double surface_area(const VoxelGeometry& g);

/// (c_f, ct_f): integral mean curvature from edge configurations and
/// 4*pi*chi from the alternating cell count.
std::array<double, 2> curvature_integrals(const VoxelGeometry& g);

MorphFeatures compute_features(const VoxelGeometry& g);

/// One CSV row `id,eps,eps_w,V,S,c_f,ct_f` per geometry, 17 significant digits.
void write_features_csv(const std::filesystem::path& p,
                        const std::vector<std::string>& ids,
                        const std::vector<MorphFeatures>& feats);

struct FeatureTable {
    std::vector<std::string> ids;
    std::vector<std::array<double, 6>> values;
};
FeatureTable read_features_csv(const std::filesystem::path& p);

} // namespace poro
