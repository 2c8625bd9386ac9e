#pragma once

#include <filesystem>
#include <string>

#include <Eigen/Dense>

#include "poro/kernels.hpp"

namespace poro {

/// Which feature map a trained model expects; PCA models pin their basis
/// file by content hash.
struct FeatureMapDesc {
    std::string kind = "mf"; // "mf" | "pca"
    std::string basis_path;  // pca only
    std::string basis_sha256;
};

/// Kernel expansion s(x) = sum_i coefficients(i,:) * k(x, centers(i,:)).
struct KernelModel {
    AnyKernel kernel;
    Eigen::MatrixXd centers;      // n x d
    Eigen::MatrixXd coefficients; // n x b
    double lambda = 0.0;
    int output_dim = 0;
    FeatureMapDesc feature_map;
};

/// Interpolation / ridge fit on all points: (K + lambda I) alpha = Y.
KernelModel fit_full(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const AnyKernel& k,
                     double lambda);

/// Per-step record of the greedy selection: which training row was picked and
/// the max residual norm that picked it.
struct GreedyTrace {
    std::vector<Eigen::Index> selected;
    std::vector<double> max_residuals;
};

/// Greedy center selection: repeatedly pick the point with the largest
/// Euclidean residual norm across outputs (ties -> lowest index), refit the
/// regularized system on the selected centers, stop at n_max centers or when
/// the max residual norm drops below 1e-14.
KernelModel fit_greedy(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const AnyKernel& k,
                       double lambda, int n_max, GreedyTrace* trace = nullptr);

/// Residual stopping tolerance of fit_greedy (absolute).
inline constexpr double greedy_residual_tol = 1e-14;

Eigen::VectorXd predict(const KernelModel& m, const Eigen::VectorXd& x);

/// Row i = predict(m, X.row(i)); computed point by point so batch and single
/// prediction agree exactly.
Eigen::MatrixXd predict_batch(const KernelModel& m, const Eigen::MatrixXd& X);

void save_model(const std::filesystem::path& p, const KernelModel& m);
KernelModel load_model(const std::filesystem::path& p);

} // namespace poro
