#include "poro/kernels.hpp"

#include <cmath>

#include "poro/errors.hpp"

namespace poro {

const char* kernel_family_name(KernelFamily f) {
    switch (f) {
        case KernelFamily::gaussian: return "gaussian";
        case KernelFamily::matern1: return "matern1";
        case KernelFamily::matern2: return "matern2";
    }
    throw ConfigError("unknown kernel family enum value");
}

KernelFamily kernel_family_from_name(const std::string& name) {
    if (name == "gaussian") return KernelFamily::gaussian;
    if (name == "matern1") return KernelFamily::matern1;
    if (name == "matern2") return KernelFamily::matern2;
    throw ConfigError("unknown kernel family '" + name + "'");
}

double radial_value(KernelFamily f, double shape, double r) {
    const double t = shape * r;
    switch (f) {
        case KernelFamily::gaussian: return std::exp(-t * t);
        case KernelFamily::matern1: return (1.0 + t) * std::exp(-t);
        case KernelFamily::matern2: return (3.0 + 3.0 * t + t * t) * std::exp(-t);
    }
    throw ConfigError("unknown kernel family enum value");
}

double radial_slope_over_r(KernelFamily f, double shape, double r) {
    const double e2 = shape * shape;
    const double t = shape * r;
    switch (f) {
        case KernelFamily::gaussian: return -2.0 * e2 * std::exp(-t * t);
        case KernelFamily::matern1: return -e2 * std::exp(-t);
        case KernelFamily::matern2: return -e2 * (1.0 + t) * std::exp(-t);
    }
    throw ConfigError("unknown kernel family enum value");
}

namespace {
void check_dims(Eigen::Index dx, Eigen::Index dy) {
    if (dx != dy)
        throw ConfigError("kernel arguments have mismatched dimensions (" +
                          std::to_string(dx) + " vs " + std::to_string(dy) + ")");
}
} // namespace

double kernel_eval(const KernelSpec& k, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    check_dims(x.size(), y.size());
    return radial_value(k.family, k.shape, (x - y).norm());
}

double kernel_eval(const TwoLayerKernelSpec& k, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& y) {
    check_dims(x.size(), y.size());
    check_dims(k.first_layer.cols(), x.size());
    return radial_value(k.base.family, k.base.shape, (k.first_layer * (x - y)).norm());
}

double kernel_eval(const AnyKernel& k, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    return std::visit([&](const auto& kk) { return kernel_eval(kk, x, y); }, k);
}

Eigen::MatrixXd gram(const KernelSpec& k, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
    check_dims(X.cols(), Y.cols());
    Eigen::MatrixXd G(X.rows(), Y.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (Eigen::Index j = 0; j < Y.rows(); ++j)
            G(i, j) = radial_value(k.family, k.shape, (X.row(i) - Y.row(j)).norm());
    return G;
}

Eigen::MatrixXd gram(const TwoLayerKernelSpec& k, const Eigen::MatrixXd& X,
                     const Eigen::MatrixXd& Y) {
    check_dims(X.cols(), Y.cols());
    check_dims(k.first_layer.cols(), X.cols());
    // Map points through the first layer once, then evaluate the base kernel.
    Eigen::MatrixXd XA = X * k.first_layer.transpose();
    Eigen::MatrixXd YA = Y * k.first_layer.transpose();
    return gram(k.base, XA, YA);
}

Eigen::MatrixXd gram(const AnyKernel& k, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
    return std::visit([&](const auto& kk) { return gram(kk, X, Y); }, k);
}

} // namespace poro
