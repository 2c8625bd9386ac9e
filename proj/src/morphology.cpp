#include "poro/morphology.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "poro/errors.hpp"
#include "poro/util.hpp"

namespace poro {

const std::array<const char*, 6> morph_feature_names = {"eps", "eps_w", "V",
                                                        "S",   "c_f",   "ct_f"};

namespace {

// Weight of one lattice-edge configuration in units of pi*h/4, indexed by the
// 4-bit occupancy of the voxels around the edge (b0/b3 and b1/b2 diagonal).
// Convex edge (one voxel) +1, concave (three voxels) -1, a diagonal pair is
// two coincident convex edges of 6-disconnected bodies, flat/full/empty 0.
constexpr std::array<int, 16> edge_weight = [] {
    std::array<int, 16> w{};
    for (int m = 0; m < 16; ++m) {
        int count = ((m >> 0) & 1) + ((m >> 1) & 1) + ((m >> 2) & 1) + ((m >> 3) & 1);
        if (count == 1)
            w[m] = 1;
        else if (count == 3)
            w[m] = -1;
        else if (count == 2 && (m == 0b1001 || m == 0b0110))
            w[m] = 2;
        else
            w[m] = 0;
    }
    return w;
}();

struct CellCounts {
    size_t xor_faces = 0; // free/non-free interior faces -> surface
    size_t and_faces = 0; // free-free interior faces -> n2 in chi
    long edge_units = 0;  // convex - concave + 2*diagonal
    size_t full_edges = 0;    // interior edges with all 4 voxels free -> n1
    size_t full_vertices = 0; // interior vertices with all 8 voxels free -> n0
};

CellCounts count_cells(const VoxelGeometry& g) {
    const size_t n = g.n_h;
    const auto& f = g.free_mask;
    const size_t sy = n, sz = n * n;
    CellCounts c;

    // Interior faces, one sweep per axis. Faces on the domain boundary do not
    // exist in these ranges, which is exactly the capped-phase convention.
    for (size_t z = 0; z < n; ++z)
        for (size_t y = 0; y < n; ++y)
            for (size_t x = 0; x + 1 < n; ++x) {
                bool a = f[x + sy * y + sz * z], b = f[x + 1 + sy * y + sz * z];
                c.xor_faces += a != b;
                c.and_faces += a && b;
            }
    for (size_t z = 0; z < n; ++z)
        for (size_t y = 0; y + 1 < n; ++y)
            for (size_t x = 0; x < n; ++x) {
                bool a = f[x + sy * y + sz * z], b = f[x + sy * (y + 1) + sz * z];
                c.xor_faces += a != b;
                c.and_faces += a && b;
            }
    for (size_t z = 0; z + 1 < n; ++z)
        for (size_t y = 0; y < n; ++y)
            for (size_t x = 0; x < n; ++x) {
                bool a = f[x + sy * y + sz * z], b = f[x + sy * y + sz * (z + 1)];
                c.xor_faces += a != b;
                c.and_faces += a && b;
            }

    // Interior lattice edges: 4 surrounding voxels form the configuration.
    // Edge along z at lattice point (x,y), x,y in 1..n-1:
    for (size_t z = 0; z < n; ++z)
        for (size_t y = 1; y < n; ++y)
            for (size_t x = 1; x < n; ++x) {
                int m = int(f[(x - 1) + sy * (y - 1) + sz * z]) |
                        int(f[x + sy * (y - 1) + sz * z]) << 1 |
                        int(f[(x - 1) + sy * y + sz * z]) << 2 |
                        int(f[x + sy * y + sz * z]) << 3;
                c.edge_units += edge_weight[m];
                c.full_edges += m == 15;
            }
    // Edge along y at lattice point (x,z):
    for (size_t z = 1; z < n; ++z)
        for (size_t y = 0; y < n; ++y)
            for (size_t x = 1; x < n; ++x) {
                int m = int(f[(x - 1) + sy * y + sz * (z - 1)]) |
                        int(f[x + sy * y + sz * (z - 1)]) << 1 |
                        int(f[(x - 1) + sy * y + sz * z]) << 2 |
                        int(f[x + sy * y + sz * z]) << 3;
                c.edge_units += edge_weight[m];
                c.full_edges += m == 15;
            }
    // Edge along x at lattice point (y,z):
    for (size_t z = 1; z < n; ++z)
        for (size_t y = 1; y < n; ++y)
            for (size_t x = 0; x < n; ++x) {
                int m = int(f[x + sy * (y - 1) + sz * (z - 1)]) |
                        int(f[x + sy * y + sz * (z - 1)]) << 1 |
                        int(f[x + sy * (y - 1) + sz * z]) << 2 |
                        int(f[x + sy * y + sz * z]) << 3;
                c.edge_units += edge_weight[m];
                c.full_edges += m == 15;
            }

    // Interior lattice vertices: all 8 surrounding voxels free.
    for (size_t z = 1; z < n; ++z)
        for (size_t y = 1; y < n; ++y)
            for (size_t x = 1; x < n; ++x) {
                bool all = true;
                for (size_t dz = 0; dz < 2 && all; ++dz)
                    for (size_t dy = 0; dy < 2 && all; ++dy)
                        for (size_t dx = 0; dx < 2 && all; ++dx)
                            all = f[(x - 1 + dx) + sy * (y - 1 + dy) + sz * (z - 1 + dz)];
                c.full_vertices += all;
            }
    return c;
}

} // namespace

double surface_area(const VoxelGeometry& g) {
    const double h = g.voxel_size();
    return static_cast<double>(count_cells(g).xor_faces) * h * h;
}

std::array<double, 2> curvature_integrals(const VoxelGeometry& g) {
    const double h = g.voxel_size();
    CellCounts c = count_cells(g);
    double c_f = std::numbers::pi * h / 4.0 * static_cast<double>(c.edge_units);
    // Euler characteristic of the 6-connected free phase as an alternating
    // count of cells of the open complex: voxels - shared faces + fully
    // surrounded edges - fully surrounded vertices.
    auto chi = static_cast<double>(static_cast<long long>(g.free_mask.count()) -
                                   static_cast<long long>(c.and_faces) +
                                   static_cast<long long>(c.full_edges) -
                                   static_cast<long long>(c.full_vertices));
    return {c_f, 4.0 * std::numbers::pi * chi};
}

MorphFeatures compute_features(const VoxelGeometry& g) {
    const double n3 = static_cast<double>(g.voxel_count());
    const double h = g.voxel_size();
    CellCounts c = count_cells(g);
    MorphFeatures out;
    auto free_n = static_cast<double>(g.free_mask.count());
    out.porosity = free_n / n3;
    out.washcoat_fraction = static_cast<double>(g.washcoat_mask.count()) / n3;
    out.volume = free_n * h * h * h;
    out.surface = static_cast<double>(c.xor_faces) * h * h;
    out.mean_curvature = std::numbers::pi * h / 4.0 * static_cast<double>(c.edge_units);
    auto chi = static_cast<double>(static_cast<long long>(g.free_mask.count()) -
                                   static_cast<long long>(c.and_faces) +
                                   static_cast<long long>(c.full_edges) -
                                   static_cast<long long>(c.full_vertices));
    out.total_curvature = 4.0 * std::numbers::pi * chi;
    return out;
}

void write_features_csv(const std::filesystem::path& p,
                        const std::vector<std::string>& ids,
                        const std::vector<MorphFeatures>& feats) {
    if (ids.size() != feats.size())
        throw ConfigError("feature CSV: ids and rows differ in length");
    std::ostringstream out;
    out << "id";
    for (const char* name : morph_feature_names) out << ',' << name;
    out << '\n';
    for (size_t i = 0; i < ids.size(); ++i) {
        out << ids[i];
        for (double v : feats[i].as_array()) out << ',' << util::format_g17(v);
        out << '\n';
    }
    util::write_file(p, out.str());
}

FeatureTable read_features_csv(const std::filesystem::path& p) {
    auto csv = util::read_csv(p);
    if (csv.header.size() != 7 || csv.header[0] != "id")
        throw ArtifactError(p.string() + ": expected header id,eps,eps_w,V,S,c_f,ct_f");
    for (size_t j = 0; j < 6; ++j)
        if (csv.header[j + 1] != morph_feature_names[j])
            throw ArtifactError(p.string() + ": unexpected feature column '" + csv.header[j + 1] + "'");
    FeatureTable t;
    for (auto& row : csv.rows) {
        t.ids.push_back(row[0]);
        std::array<double, 6> v{};
        for (size_t j = 0; j < 6; ++j) v[j] = util::parse_double(row[j + 1]);
        t.values.push_back(v);
    }
    return t;
}

} // namespace poro
