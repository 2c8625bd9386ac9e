#include "poro/twolayer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "poro/errors.hpp"
#include "poro/rng.hpp"

namespace poro {

namespace {

/// M^-1 for M = gram + lambda I, or empty matrix if the factorization is not
/// positive definite (caller decides whether that is an error or a skip).
Eigen::MatrixXd regularized_inverse(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                                    const AnyKernel& k, double lambda) {
    if (X.rows() != Y.rows()) throw ConfigError("loo_residuals: X and Y row counts differ");
    if (X.rows() < 2) throw ConfigError("loo_residuals: need at least 2 samples");
    Eigen::MatrixXd M = gram(k, X, X);
    M.diagonal().array() += lambda;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0))
        return {};
    return ldlt.solve(Eigen::MatrixXd::Identity(M.rows(), M.cols()));
}

} // namespace

Eigen::MatrixXd loo_residuals(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                              const AnyKernel& k, double lambda) {
    Eigen::MatrixXd C = regularized_inverse(X, Y, k, lambda);
    if (C.size() == 0)
        throw NumericError("loo_residuals: singular regularized kernel system");
    Eigen::MatrixXd alpha = C * Y;
    Eigen::MatrixXd out(Y.rows(), Y.cols());
    for (Eigen::Index i = 0; i < Y.rows(); ++i) out.row(i) = alpha.row(i) / C(i, i);
    return out;
}

double loo_loss(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const AnyKernel& k,
                double lambda) {
    Eigen::MatrixXd E = loo_residuals(X, Y, k, lambda);
    return E.rowwise().squaredNorm().mean();
}

std::pair<double, Eigen::MatrixXd> loo_loss_grad(const Eigen::MatrixXd& X,
                                                 const Eigen::MatrixXd& Y, KernelFamily family,
                                                 const Eigen::MatrixXd& A, double lambda) {
    const Eigen::Index m = X.rows();
    const Eigen::Index d = X.cols();
    TwoLayerKernelSpec k{{family, 1.0}, A};
    Eigen::MatrixXd C = regularized_inverse(X, Y, k, lambda);
    if (C.size() == 0) return {std::numeric_limits<double>::quiet_NaN(), {}};

    Eigen::MatrixXd alpha = C * Y;
    Eigen::VectorXd cii = C.diagonal();
    Eigen::MatrixXd E(m, Y.cols());
    for (Eigen::Index i = 0; i < m; ++i) E.row(i) = alpha.row(i) / cii(i);
    double loss = E.rowwise().squaredNorm().mean();

    // d(loss)/dM for M = K_A + lambda I with all entries treated independent:
    //   W = -(2/m) (C G alpha^T - C diag(s) C),  g_i = e_i / C_ii,
    //   s_i = |e_i|^2 / C_ii.
    Eigen::MatrixXd G(m, Y.cols());
    Eigen::VectorXd s(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        G.row(i) = E.row(i) / cii(i);
        s(i) = E.row(i).squaredNorm() / cii(i);
    }
    Eigen::MatrixXd W = -(2.0 / static_cast<double>(m)) *
                        (C * (G * alpha.transpose()) - C * s.asDiagonal() * C);

    // Chain rule through K_pq = phi(|A (x_p - x_q)|):
    //   dK_pq/dA = phi'(r)/r * (A d) d^T, summed over ordered pairs p != q.
    Eigen::MatrixXd XA = X * A.transpose();
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index p = 0; p < m; ++p)
        for (Eigen::Index q = 0; q < m; ++q) {
            if (p == q) continue;
            double r = (XA.row(p) - XA.row(q)).norm();
            double c = W(p, q) * radial_slope_over_r(family, 1.0, r);
            Eigen::VectorXd diff = (X.row(p) - X.row(q)).transpose();
            B += c * diff * diff.transpose();
        }
    return {loss, A * B};
}

double median_pairwise_distance(const Eigen::MatrixXd& X) {
    std::vector<double> dists;
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (Eigen::Index j = i + 1; j < X.rows(); ++j)
            dists.push_back((X.row(i) - X.row(j)).norm());
    if (dists.empty()) return 0.0;
    std::nth_element(dists.begin(), dists.begin() + (dists.size() - 1) / 2, dists.end());
    return dists[(dists.size() - 1) / 2]; // lower median
}

Eigen::MatrixXd initial_first_layer(const Eigen::MatrixXd& X, FirstLayerInit init) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(X.cols(), X.cols());
    if (init == FirstLayerInit::identity) return A;
    const double med = median_pairwise_distance(X);
    if (med > 0.0) A /= med;
    return A;
}

TwoLayerTrainResult optimize_A(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                               const TwoLayerTrainConfig& cfg) {
    const auto n = static_cast<size_t>(X.rows());
    if (n < 2) throw ConfigError("optimize_A: need at least 2 training samples");
    const size_t batch = std::min<size_t>(std::max(cfg.batch_size, 2), n);

    // The descent runs in the coordinates where the median pairwise training
    // distance is 1 (median policy): features are rescaled once and B starts
    // at the identity, so the fixed learning rate acts on O(1) quantities no
    // matter what units the features carry. The returned A = B * scale maps
    // raw features; with lr = 0 it equals the initial layer exactly.
    double scale = 1.0;
    if (cfg.init == FirstLayerInit::median) {
        const double med = median_pairwise_distance(X);
        if (med > 0.0) scale = 1.0 / med;
    }
    const Eigen::MatrixXd Xs = X * scale;

    TwoLayerTrainResult res;
    Eigen::MatrixXd B = Eigen::MatrixXd::Identity(X.cols(), X.cols());
    rng::Engine eng(cfg.seed);
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});

    size_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng::shuffle(order, eng);
        for (size_t start = 0; start < n; start += batch) {
            size_t count = std::min(batch, n - start);
            if (count < 2) continue;
            Eigen::MatrixXd Xb(count, Xs.cols());
            Eigen::MatrixXd Yb(count, Y.cols());
            for (size_t i = 0; i < count; ++i) {
                Xb.row(i) = Xs.row(order[start + i]);
                Yb.row(i) = Y.row(order[start + i]);
            }
            auto [loss, grad] = loo_loss_grad(Xb, Yb, cfg.family, B, cfg.lambda);
            ++step;
            if (grad.size() == 0) {
                ++res.skipped_batches;
                continue;
            }
            if (!std::isfinite(loss) || !grad.allFinite())
                throw NumericError("optimize_A: non-finite loss/gradient at step " +
                                   std::to_string(step));
            res.loss_history.push_back(loss);
            B -= cfg.learning_rate * grad;
        }
    }
    res.A = B * scale;
    return res;
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> singular_spectrum(const Eigen::MatrixXd& A) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
    return {svd.singularValues(), svd.matrixV()};
}

} // namespace poro
