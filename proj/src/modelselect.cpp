#include "poro/modelselect.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "poro/errors.hpp"
#include "poro/rng.hpp"
#include "poro/util.hpp"

namespace poro {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

/// Mean over leave-one-out folds of ||a_i - s_{-i}(x_i)|| / ||a_i|| for a
/// greedy model with the given kernel; +inf if any fold's system is singular.
double loocv_score(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const AnyKernel& k,
                   double lambda, int n_greedy) {
    const Eigen::Index n = X.rows();
    const int n_max = std::min<Eigen::Index>(n_greedy, n - 1);
    Eigen::MatrixXd Xf(n - 1, X.cols());
    Eigen::MatrixXd Yf(n - 1, Y.cols());
    double total = 0.0;
    for (Eigen::Index hold = 0; hold < n; ++hold) {
        Eigen::Index r = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (i == hold) continue;
            Xf.row(r) = X.row(i);
            Yf.row(r) = Y.row(i);
            ++r;
        }
        double target_norm = Y.row(hold).norm();
        if (target_norm == 0.0)
            throw ConfigError("LOOCV: held-out sample has zero-norm curve");
        try {
            KernelModel m = fit_greedy(Xf, Yf, k, lambda, n_max);
            total += (predict(m, X.row(hold).transpose()).transpose() - Y.row(hold)).norm() /
                     target_norm;
        } catch (const NumericError&) {
            return inf;
        }
    }
    return total / static_cast<double>(n);
}

struct CellKey {
    double score;
    size_t family_idx;
    double lambda;
    double shape;
    // Ties: earlier-listed family wins, then larger lambda, then smaller shape.
    bool operator<(const CellKey& o) const {
        if (score != o.score) return score < o.score;
        if (family_idx != o.family_idx) return family_idx < o.family_idx;
        if (lambda != o.lambda) return lambda > o.lambda;
        return shape < o.shape;
    }
};

} // namespace

SplitIndices split(const Dataset& ds, size_t train_count, uint64_t seed) {
    const size_t n = ds.samples.size();
    if (train_count == 0 || train_count >= n)
        throw ConfigError("split: train_count must lie in [1, n_samples-1]");
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    rng::Engine eng(seed);
    rng::shuffle(idx, eng);
    SplitIndices s;
    s.train.assign(idx.begin(), idx.begin() + static_cast<long>(train_count));
    s.test.assign(idx.begin() + static_cast<long>(train_count), idx.end());
    return s;
}

namespace {
template <typename Set>
Set subset(const Dataset& ds, const std::vector<size_t>& idx) {
    if (idx.empty()) throw ConfigError("dataset subset: empty index list");
    Set out;
    const auto d = ds.samples.at(idx[0]).features.size();
    const auto b = ds.samples.at(idx[0]).curve.size();
    out.x.resize(idx.size(), d);
    out.y.resize(idx.size(), b);
    for (size_t i = 0; i < idx.size(); ++i) {
        const Sample& s = ds.samples.at(idx[i]);
        if (s.features.size() != d || s.curve.size() != b)
            throw ConfigError("dataset subset: inconsistent sample dimensions");
        out.x.row(static_cast<Eigen::Index>(i)) = s.features.transpose();
        out.y.row(static_cast<Eigen::Index>(i)) = s.curve.transpose();
        out.ids.push_back(s.id);
    }
    return out;
}
} // namespace

TrainSet TrainSet::from(const Dataset& ds, const std::vector<size_t>& idx) {
    return subset<TrainSet>(ds, idx);
}
TestSet TestSet::from(const Dataset& ds, const std::vector<size_t>& idx) {
    return subset<TestSet>(ds, idx);
}

Selection1L loocv_select_1L(const TrainSet& train, const HyperGrid& grid, int n_greedy,
                            int threads) {
    if (train.x.rows() < 2) throw ConfigError("LOOCV needs at least 2 training samples");
    struct Cell {
        size_t family_idx;
        double shape;
        double lambda;
    };
    std::vector<Cell> cells;
    for (size_t fi = 0; fi < grid.families.size(); ++fi)
        for (double shape : grid.shapes)
            for (double lambda : grid.lambdas) cells.push_back({fi, shape, lambda});

    std::vector<double> scores(cells.size());
    util::parallel_for(cells.size(), threads, [&](size_t c) {
        KernelSpec k{grid.families[cells[c].family_idx], cells[c].shape};
        scores[c] = loocv_score(train.x, train.y, k, cells[c].lambda, n_greedy);
    });

    Selection1L sel{};
    CellKey best{inf, 0, 0, 0};
    bool any = false;
    for (size_t c = 0; c < cells.size(); ++c) {
        sel.table.push_back(
            {grid.families[cells[c].family_idx], cells[c].shape, cells[c].lambda, scores[c]});
        if (!std::isfinite(scores[c])) continue;
        CellKey key{scores[c], cells[c].family_idx, cells[c].lambda, cells[c].shape};
        if (!any || key < best) {
            best = key;
            any = true;
        }
    }
    if (!any) throw NumericError("LOOCV: every grid cell failed");
    sel.family = grid.families[best.family_idx];
    sel.shape = best.shape;
    sel.lambda = best.lambda;
    return sel;
}

Selection2L loocv_select_2L(const TrainSet& train, const std::vector<KernelFamily>& families,
                            const std::vector<double>& lambdas, const TwoLayerTrainConfig& cfg,
                            int n_greedy, int threads) {
    if (train.x.rows() < 2) throw ConfigError("LOOCV needs at least 2 training samples");
    struct Cell {
        size_t family_idx;
        double lambda;
    };
    std::vector<Cell> cells;
    for (size_t fi = 0; fi < families.size(); ++fi)
        for (double lambda : lambdas) cells.push_back({fi, lambda});

    std::vector<double> scores(cells.size());
    std::vector<TwoLayerTrainResult> trained(cells.size());
    util::parallel_for(cells.size(), threads, [&](size_t c) {
        TwoLayerTrainConfig cell_cfg = cfg;
        cell_cfg.family = families[cells[c].family_idx];
        cell_cfg.lambda = cells[c].lambda;
        trained[c] = optimize_A(train.x, train.y, cell_cfg);
        TwoLayerKernelSpec k{{cell_cfg.family, 1.0}, trained[c].A};
        scores[c] = loocv_score(train.x, train.y, k, cells[c].lambda, n_greedy);
    });

    Selection2L sel{};
    CellKey best{inf, 0, 0, 0};
    bool any = false;
    size_t best_cell = 0;
    for (size_t c = 0; c < cells.size(); ++c) {
        sel.table.push_back({families[cells[c].family_idx],
                             std::numeric_limits<double>::quiet_NaN(), cells[c].lambda,
                             scores[c]});
        if (!std::isfinite(scores[c])) continue;
        CellKey key{scores[c], cells[c].family_idx, cells[c].lambda, 0.0};
        if (!any || key < best) {
            best = key;
            best_cell = c;
            any = true;
        }
    }
    if (!any) throw NumericError("LOOCV: every grid cell failed");
    sel.family = families[cells[best_cell].family_idx];
    sel.lambda = cells[best_cell].lambda;
    sel.A = trained[best_cell].A;
    sel.loss_history = std::move(trained[best_cell].loss_history);
    return sel;
}

double relative_test_error(const Eigen::MatrixXd& targets, const Eigen::MatrixXd& predictions) {
    if (targets.rows() != predictions.rows() || targets.cols() != predictions.cols())
        throw ConfigError("relative_test_error: shape mismatch");
    if (targets.rows() == 0) throw ConfigError("relative_test_error: empty test set");
    double sum = 0.0;
    for (Eigen::Index i = 0; i < targets.rows(); ++i) {
        double norm = targets.row(i).norm();
        if (norm == 0.0)
            throw ConfigError("relative_test_error: zero-norm target row " + std::to_string(i));
        sum += (targets.row(i) - predictions.row(i)).squaredNorm() / (norm * norm);
    }
    return std::sqrt(sum) / static_cast<double>(targets.rows());
}

double relative_test_error(const KernelModel& m, const TestSet& test) {
    return relative_test_error(test.y, predict_batch(m, test.x));
}

void write_cv_table(const std::filesystem::path& p, const std::vector<CvCell>& table) {
    std::ostringstream out;
    out << "family,shape,lambda,cv_score\n";
    for (const auto& c : table) {
        out << kernel_family_name(c.family) << ',';
        if (std::isnan(c.shape))
            out << "";
        else
            out << util::format_g17(c.shape);
        out << ',' << util::format_g17(c.lambda) << ',' << util::format_g17(c.score) << '\n';
    }
    util::write_file(p, out.str());
}

void write_curves_csv(const std::filesystem::path& p, const std::vector<std::string>& ids,
                      const Eigen::MatrixXd& curves) {
    if (static_cast<Eigen::Index>(ids.size()) != curves.rows())
        throw ConfigError("curves CSV: ids and rows differ in length");
    std::ostringstream out;
    out << "id";
    for (Eigen::Index t = 0; t < curves.cols(); ++t) out << ",t_" << t;
    out << '\n';
    for (Eigen::Index i = 0; i < curves.rows(); ++i) {
        out << ids[static_cast<size_t>(i)];
        for (Eigen::Index t = 0; t < curves.cols(); ++t)
            out << ',' << util::format_g17(curves(i, t));
        out << '\n';
    }
    util::write_file(p, out.str());
}

CurveTable read_curves_csv(const std::filesystem::path& p) {
    auto csv = util::read_csv(p);
    if (csv.header.size() < 2 || csv.header[0] != "id")
        throw ArtifactError(p.string() + ": expected header id,t_0,...");
    const size_t n_t = csv.header.size() - 1;
    for (size_t t = 0; t < n_t; ++t)
        if (csv.header[t + 1] != "t_" + std::to_string(t))
            throw ArtifactError(p.string() + ": unexpected curve column '" + csv.header[t + 1] + "'");
    CurveTable out;
    out.curves.resize(static_cast<Eigen::Index>(csv.rows.size()), static_cast<Eigen::Index>(n_t));
    for (size_t i = 0; i < csv.rows.size(); ++i) {
        out.ids.push_back(csv.rows[i][0]);
        for (size_t t = 0; t < n_t; ++t)
            out.curves(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) =
                util::parse_double(csv.rows[i][t + 1]);
    }
    return out;
}

} // namespace poro
