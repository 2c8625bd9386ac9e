#include "oracles.hpp"

#include <cmath>
#include <unordered_map>

#include "poro/twolayer.hpp"
#include "poro/vkoga.hpp"

namespace poro::test {

namespace {

// Key for a lattice cell of any dimension: packed integer coordinates plus an
// orientation tag. Coordinates are < 2^16 so packing into 64 bits is safe.
uint64_t cell_key(uint32_t tag, uint32_t a, uint32_t b, uint32_t c) {
    return (uint64_t(tag) << 48) | (uint64_t(a) << 32) | (uint64_t(b) << 16) | uint64_t(c);
}

} // namespace

std::array<double, 4> brute_minkowski(const VoxelGeometry& g) {
    const uint32_t n = g.n_h;
    const double h = g.voxel_size();
    auto free_at = [&](int x, int y, int z) {
        if (x < 0 || y < 0 || z < 0 || x >= int(n) || y >= int(n) || z >= int(n)) return false;
        return bool(g.free_mask[g.index(uint32_t(x), uint32_t(y), uint32_t(z))]);
    };

    // Volume and surface by direct scanning.
    int64_t n_free = 0, n_ifaces = 0;
    const int dirs[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    for (int z = 0; z < int(n); ++z)
        for (int y = 0; y < int(n); ++y)
            for (int x = 0; x < int(n); ++x) {
                if (!free_at(x, y, z)) continue;
                ++n_free;
                for (const auto& d : dirs) {
                    const int nx = x + d[0], ny = y + d[1], nz = z + d[2];
                    const bool outside = nx < 0 || ny < 0 || nz < 0 || nx >= int(n) ||
                                         ny >= int(n) || nz >= int(n);
                    if (outside) continue; // capped: domain-boundary faces excluded
                    if (!free_at(nx, ny, nz)) ++n_ifaces;
                }
            }

    // Mean curvature: classify the four cells around every interior lattice
    // edge in cyclic order. Single free quadrant = convex (+1), three = concave
    // (-1), two diagonally opposite = two convex edges meeting (+2).
    int64_t edge_units = 0;
    auto edge_sum = [&](auto cell_of_quadrant) {
        int64_t acc = 0;
        for (uint32_t u = 1; u < n; ++u)
            for (uint32_t v = 1; v < n; ++v)
                for (uint32_t w = 0; w < n; ++w) {
                    bool q[4];
                    for (int i = 0; i < 4; ++i) {
                        static const int du[4] = {-1, 0, 0, -1};
                        static const int dv[4] = {-1, -1, 0, 0};
                        auto [cx, cy, cz] = cell_of_quadrant(int(u) + du[i], int(v) + dv[i], int(w));
                        q[i] = free_at(cx, cy, cz);
                    }
                    const int cnt = q[0] + q[1] + q[2] + q[3];
                    if (cnt == 1) acc += 1;
                    else if (cnt == 3) acc -= 1;
                    else if (cnt == 2 && ((q[0] && q[2]) || (q[1] && q[3]))) acc += 2;
                }
        return acc;
    };
    edge_units += edge_sum([](int a, int b, int w) { return std::array<int, 3>{w, a, b}; }); // x
    edge_units += edge_sum([](int a, int b, int w) { return std::array<int, 3>{a, w, b}; }); // y
    edge_units += edge_sum([](int a, int b, int w) { return std::array<int, 3>{a, b, w}; }); // z

    // Euler characteristic under 6-connectivity: count lower-dimensional cells
    // via incidence (face needs both cells free, edge all 4, vertex all 8).
    std::unordered_map<uint64_t, int> faces, edges, verts;
    for (int z = 0; z < int(n); ++z)
        for (int y = 0; y < int(n); ++y)
            for (int x = 0; x < int(n); ++x) {
                if (!free_at(x, y, z)) continue;
                const auto ux = uint32_t(x), uy = uint32_t(y), uz = uint32_t(z);
                for (uint32_t dx = 0; dx <= 1; ++dx) {
                    faces[cell_key(0, ux + dx, uy, uz)]++;
                    faces[cell_key(1, uy + dx, ux, uz)]++;
                    faces[cell_key(2, uz + dx, ux, uy)]++;
                    for (uint32_t dy = 0; dy <= 1; ++dy) {
                        edges[cell_key(3, ux, uy + dx, uz + dy)]++;
                        edges[cell_key(4, uy, ux + dx, uz + dy)]++;
                        edges[cell_key(5, uz, ux + dx, uy + dy)]++;
                        for (uint32_t dz = 0; dz <= 1; ++dz)
                            verts[cell_key(6, ux + dx, uy + dy, uz + dz)]++;
                    }
                }
            }
    int64_t shared_faces = 0, full_edges = 0, full_verts = 0;
    for (const auto& [k, c] : faces)
        if (c == 2) ++shared_faces;
    for (const auto& [k, c] : edges)
        if (c == 4) ++full_edges;
    for (const auto& [k, c] : verts)
        if (c == 8) ++full_verts;
    const auto chi = double(n_free - shared_faces + full_edges - full_verts);

    const double pi = std::acos(-1.0);
    return {double(n_free) * h * h * h, double(n_ifaces) * h * h,
            (pi * h / 4.0) * double(edge_units), 4.0 * pi * chi};
}

GreedyTrace greedy_reference(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                             const AnyKernel& k, double lambda, int n_max) {
    const Eigen::Index n = X.rows();
    GreedyTrace t;
    std::vector<char> used(static_cast<size_t>(n), 0);
    Eigen::MatrixXd R = Y;
    while (static_cast<int>(t.indices.size()) < n_max) {
        Eigen::Index best = -1;
        double best_norm = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (used[static_cast<size_t>(i)]) continue;
            const double r = R.row(i).norm();
            if (r > best_norm) {
                best_norm = r;
                best = i;
            }
        }
        if (best < 0 || best_norm < greedy_residual_tol) break;
        t.indices.push_back(best);
        t.max_residuals.push_back(best_norm);
        used[static_cast<size_t>(best)] = 1;

        const auto s = static_cast<Eigen::Index>(t.indices.size());
        Eigen::MatrixXd Xs(s, X.cols()), Ys(s, Y.cols());
        for (Eigen::Index a = 0; a < s; ++a) {
            Xs.row(a) = X.row(t.indices[static_cast<size_t>(a)]);
            Ys.row(a) = Y.row(t.indices[static_cast<size_t>(a)]);
        }
        Eigen::MatrixXd M = gram(k, Xs, Xs);
        M.diagonal().array() += lambda;
        t.coefficients = M.colPivHouseholderQr().solve(Ys);
        R = Y - gram(k, X, Xs) * t.coefficients;
    }
    if (t.indices.empty()) {
        t.indices.push_back(0);
        t.coefficients = Eigen::MatrixXd::Zero(1, Y.cols());
    }
    return t;
}

Eigen::MatrixXd loo_reference(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                              const AnyKernel& k, double lambda) {
    const Eigen::Index n = X.rows();
    Eigen::MatrixXd out(n, Y.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::MatrixXd Xr(n - 1, X.cols()), Yr(n - 1, Y.cols());
        Eigen::Index r = 0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i) continue;
            Xr.row(r) = X.row(j);
            Yr.row(r) = Y.row(j);
            ++r;
        }
        Eigen::MatrixXd M = gram(k, Xr, Xr);
        M.diagonal().array() += lambda;
        const Eigen::MatrixXd alpha = M.colPivHouseholderQr().solve(Yr);
        out.row(i) = Y.row(i) - gram(k, X.row(i), Xr) * alpha;
    }
    return out;
}

Eigen::MatrixXd fd_loss_grad(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                             KernelFamily family, const Eigen::MatrixXd& A, double lambda,
                             double step) {
    Eigen::MatrixXd grad(A.rows(), A.cols());
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index j = 0; j < A.cols(); ++j) {
            Eigen::MatrixXd Ap = A, Am = A;
            Ap(i, j) += step;
            Am(i, j) -= step;
            const double lp = loo_loss(X, Y, TwoLayerKernelSpec{{family, 1.0}, Ap}, lambda);
            const double lm = loo_loss(X, Y, TwoLayerKernelSpec{{family, 1.0}, Am}, lambda);
            grad(i, j) = (lp - lm) / (2.0 * step);
        }
    return grad;
}

} // namespace poro::test
