#include "poro/pca.hpp"

#include <cmath>
#include <cstring>

#include "poro/errors.hpp"
#include "poro/util.hpp"

namespace poro {

namespace {

constexpr char pcab_magic[4] = {'P', 'C', 'A', 'B'};

struct GramEig {
    Eigen::VectorXd sigma;  // n_f singular values, descending
    Eigen::MatrixXd v;      // n_train x n_f right singular vectors
};

/// Top n_f spectral pairs of the (symmetric PSD) Gram matrix, with the rank
/// guard: sigma_i below 1e-12 * sigma_1 does not count as attainable.
GramEig gram_eig(const Eigen::MatrixXd& G, int n_f) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G);
    if (eig.info() != Eigen::Success)
        throw NumericError("PCA Gram eigendecomposition failed");
    const Eigen::Index n = G.rows();
    if (n_f < 1 || n_f > n)
        throw ConfigError("PCA: n_f must lie in [1, n_train]");
    GramEig out;
    out.sigma.resize(n_f);
    out.v.resize(n, n_f);
    // Eigenvalues come back ascending. The rank guard compares eigenvalues
    // (squared singular values): a rank-deficient direction shows up in the
    // Gram matrix as lambda ~ eps_mach * lambda_1, which the square root would
    // inflate to sigma ~ 1e-8 * sigma_1, so thresholding sigma directly could
    // never fire.
    double lambda1 = std::max(eig.eigenvalues()(n - 1), 0.0);
    for (int j = 0; j < n_f; ++j) {
        double ev = std::max(eig.eigenvalues()(n - 1 - j), 0.0);
        if (ev <= 1e-12 * lambda1 || ev == 0.0) {
            throw NumericError("PCA: requested n_f = " + std::to_string(n_f) +
                               " exceeds attainable rank " + std::to_string(j));
        }
        out.sigma(j) = std::sqrt(ev);
        out.v.col(j) = eig.eigenvectors().col(n - 1 - j);
    }
    return out;
}

/// Largest-magnitude entry of each column made non-negative (first index on
/// magnitude ties).
void fix_signs(Eigen::MatrixXd& u) {
    for (Eigen::Index j = 0; j < u.cols(); ++j) {
        Eigen::Index arg = 0;
        double best = -1.0;
        for (Eigen::Index i = 0; i < u.rows(); ++i) {
            double a = std::abs(u(i, j));
            if (a > best) {
                best = a;
                arg = i;
            }
        }
        if (u(arg, j) < 0.0) u.col(j) = -u.col(j);
    }
}

} // namespace

PcaBasis fit_pca(const Eigen::MatrixXd& Z, int n_f, bool center, std::string source_split) {
    if (Z.cols() < 1) throw ConfigError("PCA: empty training set");
    PcaBasis basis;
    basis.source_split = std::move(source_split);
    Eigen::MatrixXd Zc;
    const Eigen::MatrixXd* zp = &Z;
    if (center) {
        basis.mean = Z.rowwise().mean();
        Zc = Z.colwise() - basis.mean;
        zp = &Zc;
    }
    Eigen::MatrixXd G = zp->transpose() * (*zp);
    GramEig eig = gram_eig(G, n_f);
    basis.n_f = n_f;
    basis.singular_values = eig.sigma;
    basis.u = (*zp) * eig.v;
    for (int j = 0; j < n_f; ++j) basis.u.col(j) /= eig.sigma(j);
    fix_signs(basis.u);
    return basis;
}

PcaBasis fit_pca(std::span<const BitVector> columns, int n_f, std::string source_split) {
    const auto n = static_cast<Eigen::Index>(columns.size());
    if (n < 1) throw ConfigError("PCA: empty training set");
    const size_t dim = columns[0].size();
    for (const auto& c : columns)
        if (c.size() != dim) throw ConfigError("PCA: columns differ in length");

    // Binary Gram matrix: G_ij = popcount(z_i & z_j).
    Eigen::MatrixXd G(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i; j < n; ++j) {
            auto dot = static_cast<double>(columns[i].count_and(columns[j]));
            G(i, j) = dot;
            G(j, i) = dot;
        }
    GramEig eig = gram_eig(G, n_f);

    PcaBasis basis;
    basis.source_split = std::move(source_split);
    basis.n_f = n_f;
    basis.singular_values = eig.sigma;
    basis.u = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), n_f);
    // U col j = sum_i (v_ij / sigma_j) z_i, accumulated over set bits only.
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::RowVectorXd w = eig.v.row(i).array() / eig.sigma.transpose().array();
        const auto& words = columns[i].words();
        for (size_t wi = 0; wi < words.size(); ++wi) {
            uint64_t word = words[wi];
            while (word) {
                int bit = std::countr_zero(word);
                basis.u.row(static_cast<Eigen::Index>(wi * 64 + bit)) += w;
                word &= word - 1;
            }
        }
    }
    fix_signs(basis.u);
    return basis;
}

Eigen::VectorXd project(const PcaBasis& basis, const Eigen::VectorXd& z) {
    if (z.size() != basis.u.rows())
        throw ConfigError("PCA projection: vector length does not match basis dimension");
    if (basis.mean.size() > 0) return basis.u.transpose() * (z - basis.mean);
    return basis.u.transpose() * z;
}

Eigen::VectorXd project(const PcaBasis& basis, const BitVector& z) {
    if (static_cast<Eigen::Index>(z.size()) != basis.u.rows())
        throw ConfigError("PCA projection: vector length does not match basis dimension");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(basis.n_f);
    const auto& words = z.words();
    for (size_t wi = 0; wi < words.size(); ++wi) {
        uint64_t word = words[wi];
        while (word) {
            int bit = std::countr_zero(word);
            out += basis.u.row(static_cast<Eigen::Index>(wi * 64 + bit)).transpose();
            word &= word - 1;
        }
    }
    if (basis.mean.size() > 0) out -= basis.u.transpose() * basis.mean;
    return out;
}

void save_pca(const std::filesystem::path& p, const PcaBasis& basis) {
    std::vector<uint8_t> out;
    out.insert(out.end(), pcab_magic, pcab_magic + 4);
    const bool centered = basis.mean.size() > 0;
    util::put_u32_le(out, centered ? 2u : 1u);
    util::put_u64_le(out, static_cast<uint64_t>(basis.u.rows()));
    util::put_u32_le(out, static_cast<uint32_t>(basis.n_f));
    for (int j = 0; j < basis.n_f; ++j) util::put_f64_le(out, basis.singular_values(j));
    for (int j = 0; j < basis.n_f; ++j)
        for (Eigen::Index i = 0; i < basis.u.rows(); ++i) util::put_f64_le(out, basis.u(i, j));
    if (centered)
        for (Eigen::Index i = 0; i < basis.mean.size(); ++i)
            util::put_f64_le(out, basis.mean(i));
    util::write_file(p, out.data(), out.size());
}

PcaBasis load_pca(const std::filesystem::path& p) {
    auto data = util::read_file(p);
    if (data.size() < 20 || std::memcmp(data.data(), pcab_magic, 4) != 0)
        throw ArtifactError(p.string() + ": not a PCA basis file (magic mismatch)");
    uint32_t version = util::get_u32_le(data.data() + 4);
    if (version != 1 && version != 2)
        throw ArtifactError(p.string() + ": unsupported basis version " + std::to_string(version));
    auto dim = static_cast<Eigen::Index>(util::get_u64_le(data.data() + 8));
    auto n_f = static_cast<int>(util::get_u32_le(data.data() + 16));
    size_t need = 20 + sizeof(double) * (static_cast<size_t>(n_f) +
                                         static_cast<size_t>(n_f) * static_cast<size_t>(dim) +
                                         (version == 2 ? static_cast<size_t>(dim) : 0));
    if (data.size() != need)
        throw ArtifactError(p.string() + ": truncated basis payload");
    PcaBasis basis;
    basis.n_f = n_f;
    basis.singular_values.resize(n_f);
    basis.u.resize(dim, n_f);
    const uint8_t* cur = data.data() + 20;
    for (int j = 0; j < n_f; ++j, cur += 8) basis.singular_values(j) = util::get_f64_le(cur);
    for (int j = 0; j < n_f; ++j)
        for (Eigen::Index i = 0; i < dim; ++i, cur += 8) basis.u(i, j) = util::get_f64_le(cur);
    if (version == 2) {
        basis.mean.resize(dim);
        for (Eigen::Index i = 0; i < dim; ++i, cur += 8) basis.mean(i) = util::get_f64_le(cur);
    }
    return basis;
}

} // namespace poro
