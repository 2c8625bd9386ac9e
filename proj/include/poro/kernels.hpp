#pragma once

#include <string>
#include <variant>

#include <Eigen/Dense>

namespace poro {

enum class KernelFamily { gaussian, matern1, matern2 };

const char* kernel_family_name(KernelFamily f);
KernelFamily kernel_family_from_name(const std::string& name);

/// Radial kernel with shape parameter eps > 0:
///   gaussian  exp(-eps^2 r^2)
///   matern1   (1 + eps r) exp(-eps r)
///   matern2   (3 + 3 eps r + eps^2 r^2) exp(-eps r)   (unnormalized, k(x,x)=3)
struct KernelSpec {
    KernelFamily family = KernelFamily::gaussian;
    double shape = 1.0;
};

/// Kernel with a learned linear first layer: k_A(x,y) = k(Ax, Ay).
struct TwoLayerKernelSpec {
    KernelSpec base;
    Eigen::MatrixXd first_layer; // A, d x d
};

using AnyKernel = std::variant<KernelSpec, TwoLayerKernelSpec>;

double radial_value(KernelFamily f, double shape, double r);

/// d(phi)/dr divided by r, in closed form (finite at r = 0).
double radial_slope_over_r(KernelFamily f, double shape, double r);

double kernel_eval(const KernelSpec& k, const Eigen::VectorXd& x, const Eigen::VectorXd& y);
double kernel_eval(const TwoLayerKernelSpec& k, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& y);
double kernel_eval(const AnyKernel& k, const Eigen::VectorXd& x, const Eigen::VectorXd& y);

/// Gram matrix k(X_i, Y_j); rows of X and Y are points.
Eigen::MatrixXd gram(const KernelSpec& k, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y);
Eigen::MatrixXd gram(const TwoLayerKernelSpec& k, const Eigen::MatrixXd& X,
                     const Eigen::MatrixXd& Y);
Eigen::MatrixXd gram(const AnyKernel& k, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y);

} // namespace poro
