#pragma once

#include <filesystem>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "poro/bitgrid.hpp"

namespace poro {

/// Truncated left singular basis of a column-sample matrix Z (dim x n_train).
struct PcaBasis {
    Eigen::MatrixXd u;               // dim x n_f, orthonormal columns
    Eigen::VectorXd singular_values; // n_f, descending
    int n_f = 0;
    std::string source_split;        // which training split produced it
    Eigen::VectorXd mean;            // empty unless centering was enabled
};

/// Fit via the Gram trick: eigendecomposition of Z^T Z (n_train x n_train),
/// U = Z V Sigma^-1. Never materializes dim x dim. Sign convention: the
/// largest-magnitude entry of each U column is made non-negative. Centering
/// is off by default (raw 0/1 columns are used as-is).
PcaBasis fit_pca(const Eigen::MatrixXd& Z, int n_f, bool center = false,
                 std::string source_split = {});

/// Same fit for bit-packed binary columns; the Gram matrix comes from
/// popcounts and U from sparse accumulation over set bits.
PcaBasis fit_pca(std::span<const BitVector> columns, int n_f, std::string source_split = {});

Eigen::VectorXd project(const PcaBasis& basis, const Eigen::VectorXd& z);

/// Projection of a binary vector: sum of the U rows selected by set bits.
Eigen::VectorXd project(const PcaBasis& basis, const BitVector& z);

// Basis file: header (magic "PCAB", u32 version, u64 dim, u32 n_f), then
// singular values and U columns as float64 little-endian. Version 2 appends
// the mean vector (centering enabled).
void save_pca(const std::filesystem::path& p, const PcaBasis& basis);
PcaBasis load_pca(const std::filesystem::path& p);

} // namespace poro
