#include "poro/vkoga.hpp"

#include <fstream>

#include <json.hpp>

#include "poro/errors.hpp"
#include "poro/util.hpp"

namespace poro {

namespace {

using nlohmann::json;

/// LDLT solve of (K + lambda I) alpha = Y with one iterative-refinement pass;
/// keeps interpolation tight for flat shape parameters.
Eigen::MatrixXd solve_regularized(Eigen::MatrixXd M, const Eigen::MatrixXd& Y) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
    double min_pivot = ldlt.vectorD().minCoeff();
    if (ldlt.info() != Eigen::Success || !(min_pivot > 0.0) || !std::isfinite(min_pivot))
        throw NumericError("kernel system factorization failed (smallest pivot " +
                           util::format_g17(min_pivot) + ")");
    Eigen::MatrixXd alpha = ldlt.solve(Y);
    alpha += ldlt.solve(Y - M * alpha);
    if (!alpha.allFinite()) throw NumericError("kernel system solve produced non-finite values");
    return alpha;
}

json kernel_to_json(const AnyKernel& k) {
    json j;
    if (std::holds_alternative<KernelSpec>(k)) {
        const auto& s = std::get<KernelSpec>(k);
        j["family"] = kernel_family_name(s.family);
        j["shape"] = s.shape;
    } else {
        const auto& s = std::get<TwoLayerKernelSpec>(k);
        j["family"] = kernel_family_name(s.base.family);
        j["shape"] = s.base.shape;
        json rows = json::array();
        for (Eigen::Index i = 0; i < s.first_layer.rows(); ++i) {
            json row = json::array();
            for (Eigen::Index c = 0; c < s.first_layer.cols(); ++c)
                row.push_back(s.first_layer(i, c));
            rows.push_back(std::move(row));
        }
        j["A"] = std::move(rows);
    }
    return j;
}

Eigen::MatrixXd matrix_from_json(const json& rows, const char* what) {
    if (!rows.is_array() || rows.empty())
        throw ArtifactError(std::string("model JSON: ") + what + " must be a non-empty array");
    size_t n_cols = rows[0].size();
    Eigen::MatrixXd m(rows.size(), n_cols);
    for (size_t i = 0; i < rows.size(); ++i) {
        if (!rows[i].is_array() || rows[i].size() != n_cols)
            throw ArtifactError(std::string("model JSON: ragged ") + what);
        for (size_t c = 0; c < n_cols; ++c) m(i, c) = rows[i][c].get<double>();
    }
    return m;
}

AnyKernel kernel_from_json(const json& j) {
    KernelSpec base;
    base.family = kernel_family_from_name(j.at("family").get<std::string>());
    base.shape = j.at("shape").get<double>();
    if (j.contains("A")) {
        TwoLayerKernelSpec two;
        two.base = base;
        two.first_layer = matrix_from_json(j.at("A"), "A");
        return two;
    }
    return base;
}

} // namespace

KernelModel fit_full(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const AnyKernel& k,
                     double lambda) {
    if (X.rows() != Y.rows()) throw ConfigError("fit_full: X and Y row counts differ");
    if (X.rows() == 0) throw ConfigError("fit_full: no training points");
    Eigen::MatrixXd M = gram(k, X, X);
    M.diagonal().array() += lambda;
    KernelModel m;
    m.kernel = k;
    m.centers = X;
    m.coefficients = solve_regularized(std::move(M), Y);
    m.lambda = lambda;
    m.output_dim = static_cast<int>(Y.cols());
    return m;
}

KernelModel fit_greedy(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const AnyKernel& k,
                       double lambda, int n_max, GreedyTrace* trace) {
    const Eigen::Index n_pts = X.rows();
    if (n_pts != Y.rows()) throw ConfigError("fit_greedy: X and Y row counts differ");
    if (n_max < 1 || n_max > n_pts)
        throw ConfigError("fit_greedy: n_max must lie in [1, number of points]");

    // Full kernel column block for the selected centers, grown per step.
    std::vector<Eigen::Index> selected;
    std::vector<char> taken(static_cast<size_t>(n_pts), 0);
    Eigen::MatrixXd K_sel(n_pts, n_max);
    Eigen::MatrixXd residual = Y;
    Eigen::MatrixXd coeffs;

    for (int step = 0; step < n_max; ++step) {
        // argmax of the residual row norm over unselected points, ties to the
        // lowest index (with ridge the residual at a center stays nonzero, so
        // selected points must be excluded explicitly)
        Eigen::Index best = -1;
        double best_norm = -1.0;
        for (Eigen::Index i = 0; i < n_pts; ++i) {
            if (taken[static_cast<size_t>(i)]) continue;
            double r = residual.row(i).norm();
            if (r > best_norm) {
                best_norm = r;
                best = i;
            }
        }
        if (best < 0 || best_norm < greedy_residual_tol) break;
        selected.push_back(best);
        taken[static_cast<size_t>(best)] = 1;
        if (trace) {
            trace->selected.push_back(best);
            trace->max_residuals.push_back(best_norm);
        }
        const int n_sel = static_cast<int>(selected.size());

        for (Eigen::Index i = 0; i < n_pts; ++i)
            K_sel(i, n_sel - 1) = kernel_eval(k, X.row(i).transpose(), X.row(best).transpose());

        // Refit on the selected centers only: (K_ss + lambda I) alpha = Y_s.
        Eigen::MatrixXd M(n_sel, n_sel);
        Eigen::MatrixXd Ys(n_sel, Y.cols());
        for (int a = 0; a < n_sel; ++a) {
            Ys.row(a) = Y.row(selected[a]);
            for (int b = 0; b < n_sel; ++b) M(a, b) = K_sel(selected[a], b);
        }
        M.diagonal().array() += lambda;
        coeffs = solve_regularized(std::move(M), Ys);
        residual = Y - K_sel.leftCols(n_sel) * coeffs;
    }

    if (selected.empty()) {
        // Zero target: single-center expansion with zero coefficients.
        selected.push_back(0);
        coeffs = Eigen::MatrixXd::Zero(1, Y.cols());
    }

    KernelModel m;
    m.kernel = k;
    m.centers.resize(selected.size(), X.cols());
    for (size_t a = 0; a < selected.size(); ++a) m.centers.row(a) = X.row(selected[a]);
    m.coefficients = coeffs;
    m.lambda = lambda;
    m.output_dim = static_cast<int>(Y.cols());
    return m;
}

Eigen::VectorXd predict(const KernelModel& m, const Eigen::VectorXd& x) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(m.coefficients.cols());
    for (Eigen::Index i = 0; i < m.centers.rows(); ++i)
        out += m.coefficients.row(i).transpose() *
               kernel_eval(m.kernel, x, m.centers.row(i).transpose());
    return out;
}

Eigen::MatrixXd predict_batch(const KernelModel& m, const Eigen::MatrixXd& X) {
    Eigen::MatrixXd out(X.rows(), m.coefficients.cols());
    for (Eigen::Index i = 0; i < X.rows(); ++i) out.row(i) = predict(m, X.row(i).transpose());
    return out;
}

void save_model(const std::filesystem::path& p, const KernelModel& m) {
    json j;
    j["kernel"] = kernel_to_json(m.kernel);
    j["lambda"] = m.lambda;
    j["output_dim"] = m.output_dim;
    json centers = json::array();
    for (Eigen::Index i = 0; i < m.centers.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.centers.cols(); ++c) row.push_back(m.centers(i, c));
        centers.push_back(std::move(row));
    }
    j["centers"] = std::move(centers);
    json coeffs = json::array();
    for (Eigen::Index i = 0; i < m.coefficients.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.coefficients.cols(); ++c)
            row.push_back(m.coefficients(i, c));
        coeffs.push_back(std::move(row));
    }
    j["coefficients"] = std::move(coeffs);
    json fm;
    fm["kind"] = m.feature_map.kind;
    if (m.feature_map.kind == "pca") {
        fm["basis_path"] = m.feature_map.basis_path;
        fm["basis_sha256"] = m.feature_map.basis_sha256;
    }
    j["feature_map"] = std::move(fm);
    util::write_file(p, j.dump(2) + "\n");
}

KernelModel load_model(const std::filesystem::path& p) {
    auto bytes = util::read_file(p);
    json j;
    try {
        j = json::parse(bytes.begin(), bytes.end());
    } catch (const json::parse_error& e) {
        throw ArtifactError(p.string() + ": model JSON parse error: " + e.what());
    }
    try {
        KernelModel m;
        m.kernel = kernel_from_json(j.at("kernel"));
        m.lambda = j.at("lambda").get<double>();
        m.output_dim = j.at("output_dim").get<int>();
        m.centers = matrix_from_json(j.at("centers"), "centers");
        m.coefficients = matrix_from_json(j.at("coefficients"), "coefficients");
        const auto& fm = j.at("feature_map");
        m.feature_map.kind = fm.at("kind").get<std::string>();
        if (m.feature_map.kind == "pca") {
            m.feature_map.basis_path = fm.at("basis_path").get<std::string>();
            m.feature_map.basis_sha256 = fm.at("basis_sha256").get<std::string>();
        } else if (m.feature_map.kind != "mf") {
            throw ArtifactError("unknown feature map kind '" + m.feature_map.kind + "'");
        }
        if (m.centers.rows() != m.coefficients.rows())
            throw ArtifactError("centers/coefficients row mismatch");
        return m;
    } catch (const json::exception& e) {
        throw ArtifactError(p.string() + ": model JSON missing/invalid field: " + e.what());
    }
}

} // namespace poro
