#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "poro/kernels.hpp"

namespace poro {

/// Closed-form leave-one-out residuals of the ridge fit (K + lambda I) a = Y:
/// row i equals a_i / (M^-1)_ii, the prediction error on sample i when it is
/// left out. Returned as an m x b matrix.
Eigen::MatrixXd loo_residuals(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                              const AnyKernel& k, double lambda);

/// Mean squared Euclidean row norm of loo_residuals.
double loo_loss(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const AnyKernel& k,
                double lambda);

/// LOO loss of the two-layer kernel (base family, shape 1, first layer A) on
/// a batch, with its analytic gradient with respect to A.
std::pair<double, Eigen::MatrixXd> loo_loss_grad(const Eigen::MatrixXd& X,
                                                 const Eigen::MatrixXd& Y, KernelFamily family,
                                                 const Eigen::MatrixXd& A, double lambda);

enum class FirstLayerInit { identity, median };

struct TwoLayerTrainConfig {
    KernelFamily family = KernelFamily::matern2;
    double lambda = 1e-5;
    int batch_size = 16; // clamped to n_train
    int epochs = 500;
    double learning_rate = 1e-2;
    uint64_t seed = 0;
    FirstLayerInit init = FirstLayerInit::median;
};

struct TwoLayerTrainResult {
    Eigen::MatrixXd A;
    std::vector<double> loss_history; // one entry per gradient step
    int skipped_batches = 0;          // singular batch systems
};

/// Lower median of all pairwise Euclidean row distances (0 if < 2 rows).
double median_pairwise_distance(const Eigen::MatrixXd& X);

/// Initial first layer: identity, optionally scaled so the median pairwise
/// distance of the mapped training features is 1.
Eigen::MatrixXd initial_first_layer(const Eigen::MatrixXd& X, FirstLayerInit init);

/// Mini-batch gradient descent on the LOO loss over a seeded shuffled epoch
/// order; fixed learning rate; kernel shape fixed to 1 (A carries the scale).
TwoLayerTrainResult optimize_A(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                               const TwoLayerTrainConfig& cfg);

/// Singular values (descending) and right singular vectors of A.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> singular_spectrum(const Eigen::MatrixXd& A);

} // namespace poro
