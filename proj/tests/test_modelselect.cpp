#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "poro/errors.hpp"
#include "poro/modelselect.hpp"
#include "poro/util.hpp"
#include "poro/vkoga.hpp"

using namespace poro;

namespace {

Dataset make_dataset(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
    Dataset ds;
    ds.n_t = static_cast<int>(Y.cols());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        Sample s;
        char buf[16];
        std::snprintf(buf, sizeof buf, "g%03d", static_cast<int>(i));
        s.id = buf;
        s.features = X.row(i).transpose();
        s.curve = Y.row(i).transpose();
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

Dataset arbitrary_dataset(int n) {
    Eigen::MatrixXd X(n, 2), Y(n, 3);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = 0.1 * i;
        X(i, 1) = std::sin(0.7 * i);
        Y(i, 0) = 1.0 + 0.01 * i;
        Y(i, 1) = std::cos(0.3 * i);
        Y(i, 2) = 0.5;
    }
    return make_dataset(X, Y);
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

} // namespace

TEST_CASE("seeded split is disjoint exhaustive and reproducible") {
    Dataset ds = arbitrary_dataset(59);
    SplitIndices s = split(ds, 47, 7);
    CHECK(s.train.size() == 47);
    CHECK(s.test.size() == 12);

    std::set<size_t> seen(s.train.begin(), s.train.end());
    seen.insert(s.test.begin(), s.test.end());
    CHECK(seen.size() == 59);
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == 58);

    SplitIndices again = split(ds, 47, 7);
    CHECK(again.train == s.train);
    CHECK(again.test == s.test);

    SplitIndices other = split(ds, 47, 8);
    CHECK(other.train != s.train);

    // Actually shuffled, not the identity order.
    std::vector<size_t> iota(47);
    for (size_t i = 0; i < 47; ++i) iota[i] = i;
    CHECK(s.train != iota);

    SplitIndices singleton = split(ds, 58, 1);
    CHECK(singleton.test.size() == 1);

    CHECK_THROWS_AS(split(ds, 0, 1), ConfigError);
    CHECK_THROWS_AS(split(ds, 59, 1), ConfigError);
    CHECK_THROWS_AS(split(ds, 60, 1), ConfigError);
}

TEST_CASE("train and test subsets carry features curves and ids") {
    Dataset ds = arbitrary_dataset(6);
    std::vector<size_t> idx = {4, 1, 3};
    TrainSet tr = TrainSet::from(ds, idx);
    REQUIRE(tr.x.rows() == 3);
    REQUIRE(tr.y.rows() == 3);
    REQUIRE(tr.ids.size() == 3);
    for (size_t i = 0; i < idx.size(); ++i) {
        const Sample& s = ds.samples[idx[i]];
        CHECK(tr.ids[i] == s.id);
        CHECK((tr.x.row(static_cast<Eigen::Index>(i)).transpose() - s.features).norm() == 0.0);
        CHECK((tr.y.row(static_cast<Eigen::Index>(i)).transpose() - s.curve).norm() == 0.0);
    }
    TestSet te = TestSet::from(ds, {0, 5});
    CHECK(te.ids == std::vector<std::string>{"g000", "g005"});

    CHECK_THROWS_AS(TrainSet::from(ds, {}), ConfigError);

    Dataset ragged = arbitrary_dataset(3);
    ragged.samples[2].features = Eigen::VectorXd::Zero(5);
    CHECK_THROWS_AS(TrainSet::from(ragged, {0, 1, 2}), ConfigError);
}

TEST_CASE("default hyperparameter grid matches the documented search space") {
    HyperGrid g;
    REQUIRE(g.families.size() == 3);
    CHECK(g.families[0] == KernelFamily::matern1);
    CHECK(g.families[1] == KernelFamily::matern2);
    CHECK(g.families[2] == KernelFamily::gaussian);
    CHECK(g.shapes == std::vector<double>{1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125});
    CHECK(g.lambdas == std::vector<double>{0.0, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6});
}

TEST_CASE("relative test error implements the averaged root of summed squared relative errors") {
    Eigen::MatrixXd A(2, 2), P(2, 2);
    A << 1.0, 0.0, 0.0, 2.0;

    SUBCASE("perfect predictions give zero") {
        CHECK(relative_test_error(A, A) == 0.0);
    }
    SUBCASE("doubling a single target gives one") {
        Eigen::MatrixXd a = A.topRows(1);
        CHECK(relative_test_error(a, 2.0 * a) == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("row errors 0.3 and 0.4 average to a quarter") {
        P << 1.3, 0.0, 0.0, 2.8;
        CHECK(relative_test_error(A, P) == doctest::Approx(0.25).epsilon(1e-15));
    }
    SUBCASE("invariant under scaling a row and its prediction together") {
        P << 1.2, -0.1, 0.4, 1.7;
        double base = relative_test_error(A, P);
        Eigen::MatrixXd As = A, Ps = P;
        As.row(1) *= 37.5;
        Ps.row(1) *= 37.5;
        CHECK(relative_test_error(As, Ps) == doctest::Approx(base).epsilon(1e-14));
    }
    SUBCASE("rejects zero-norm targets and shape mismatches") {
        Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(2, 2);
        CHECK_THROWS_AS(relative_test_error(Z, A), ConfigError);
        CHECK_THROWS_AS(relative_test_error(A, Eigen::MatrixXd::Zero(3, 2)), ConfigError);
        CHECK_THROWS_AS(relative_test_error(Eigen::MatrixXd(0, 2), Eigen::MatrixXd(0, 2)),
                        ConfigError);
    }
    SUBCASE("model overload agrees with the matrix form") {
        Eigen::MatrixXd X(5, 1), Y(5, 2);
        for (int i = 0; i < 5; ++i) {
            X(i, 0) = 0.9 * i;
            Y(i, 0) = std::sin(1.1 * i);
            Y(i, 1) = 1.0 + 0.2 * i;
        }
        KernelSpec k{KernelFamily::gaussian, 1.0};
        KernelModel m = fit_greedy(X.topRows(4), Y.topRows(4), k, 1e-8, 4);
        TestSet te;
        te.x = X.bottomRows(1);
        te.y = Y.bottomRows(1);
        te.ids = {"g004"};
        double direct = relative_test_error(te.y, predict_batch(m, te.x));
        CHECK(relative_test_error(m, te) == direct);
    }
}

TEST_CASE("grid search recovers the family that generated the data") {
    // Targets drawn from a Matern 1 span with shape 1: the kink at each
    // center is invisible to the smoother families, which must pay for it
    // in every held-out fold.
    const int n = 15;
    Eigen::MatrixXd X(n, 1), Y(n, 2);
    const double centers[3] = {0.5, 1.75, 3.0};
    const double c0[3] = {1.2, -0.8, 0.9};
    const double c1[3] = {-0.6, 1.1, 0.7};
    KernelSpec gen{KernelFamily::matern1, 1.0};
    for (int i = 0; i < n; ++i) {
        double x = 0.25 * i;
        X(i, 0) = x;
        double y0 = 0.0, y1 = 0.0;
        for (int j = 0; j < 3; ++j) {
            Eigen::VectorXd a(1), b(1);
            a << x;
            b << centers[j];
            double kv = kernel_eval(gen, a, b);
            y0 += c0[j] * kv;
            y1 += c1[j] * kv;
        }
        Y(i, 0) = y0 + 1e-6 * std::sin(137.0 * i);
        Y(i, 1) = y1 + 1e-6 * std::cos(251.0 * i);
    }
    TrainSet tr{X, Y, {}};
    Selection1L sel = loocv_select_1L(tr, HyperGrid{}, 10);
    CHECK(sel.family == KernelFamily::matern1);
    CHECK(sel.table.size() == 3 * 6 * 6);

    // Winning score is the table minimum.
    double best = std::numeric_limits<double>::infinity();
    for (const CvCell& c : sel.table) best = std::min(best, c.score);
    for (const CvCell& c : sel.table)
        if (c.family == sel.family && c.shape == sel.shape && c.lambda == sel.lambda)
            CHECK(c.score == best);
}

TEST_CASE("exact score ties fall to the earlier family and smaller shape") {
    // Two samples with identical features: every fold fits one point and
    // predicts at zero distance, so with no regularization every cell
    // reproduces the training value exactly and all scores coincide.
    Eigen::MatrixXd X(2, 1), Y(2, 2);
    X << 0.7, 0.7;
    Y << 1.0, 2.0, 1.5, 1.0;
    TrainSet tr{X, Y, {}};
    HyperGrid g;
    g.families = {KernelFamily::gaussian, KernelFamily::matern1};
    g.shapes = {1.0, 0.25, 0.5};
    g.lambdas = {0.0};
    Selection1L sel = loocv_select_1L(tr, g, 10);
    for (size_t c = 1; c < sel.table.size(); ++c)
        CHECK(sel.table[c].score == sel.table[0].score);
    CHECK(sel.family == KernelFamily::gaussian);
    CHECK(sel.shape == 0.25);
    CHECK(sel.lambda == 0.0);

    CHECK_THROWS_AS(loocv_select_1L(TrainSet{X.topRows(1), Y.topRows(1), {}}, g, 10),
                    ConfigError);
}

TEST_CASE("singular zero-regularization cells score infinite instead of aborting") {
    // Duplicate feature rows with conflicting targets: interpolation is
    // impossible, ridge fits are fine.
    Eigen::MatrixXd X(4, 1), Y(4, 1);
    X << 0.0, 0.0, 1.0, 1.0;
    Y << 0.5, 1.5, -0.5, 2.0;
    TrainSet tr{X, Y, {}};
    HyperGrid g;
    g.families = {KernelFamily::gaussian};
    g.shapes = {1.0};

    SUBCASE("regularized cells win over infinite ones") {
        g.lambdas = {0.0, 1e-6};
        Selection1L sel = loocv_select_1L(tr, g, 10);
        CHECK(sel.lambda == 1e-6);
        REQUIRE(sel.table.size() == 2);
        CHECK(std::isinf(sel.table[0].score));
        CHECK(std::isfinite(sel.table[1].score));
    }
    SUBCASE("a grid with no usable cell is an error") {
        g.lambdas = {0.0};
        CHECK_THROWS_AS(loocv_select_1L(tr, g, 10), NumericError);
    }
}

TEST_CASE("two-layer search trains a first layer per candidate cell") {
    Eigen::MatrixXd X(8, 2), Y(8, 2);
    for (int i = 0; i < 8; ++i) {
        X(i, 0) = 0.4 * i;
        X(i, 1) = std::cos(1.3 * i);
        Y(i, 0) = std::sin(0.9 * X(i, 0));
        Y(i, 1) = 0.3 * X(i, 0) + 0.1 * X(i, 1);
    }
    TrainSet tr{X, Y, {}};
    TwoLayerTrainConfig cfg;
    cfg.epochs = 20;
    cfg.batch_size = 8;
    cfg.seed = 11;

    Selection2L sel = loocv_select_2L(tr, {KernelFamily::matern2}, {1e-4}, cfg, 5);
    CHECK(sel.family == KernelFamily::matern2);
    CHECK(sel.lambda == 1e-4);
    REQUIRE(sel.A.rows() == 2);
    REQUIRE(sel.A.cols() == 2);
    CHECK(sel.A.allFinite());
    CHECK(sel.loss_history.size() == 20);
    REQUIRE(sel.table.size() == 1);
    CHECK(std::isnan(sel.table[0].shape));
    CHECK(std::isfinite(sel.table[0].score));

    Selection2L again = loocv_select_2L(tr, {KernelFamily::matern2}, {1e-4}, cfg, 5);
    CHECK((again.A - sel.A).norm() == 0.0);
    CHECK(again.table[0].score == sel.table[0].score);

    CHECK_THROWS_AS(
        loocv_select_2L(TrainSet{X.topRows(1), Y.topRows(1), {}}, {KernelFamily::matern2},
                        {1e-4}, cfg, 5),
        ConfigError);
}

TEST_CASE("learned first layer beats isotropic kernels on anisotropic data") {
    // The second coordinate is irrelevant but dominates Euclidean distances;
    // an isotropic kernel cannot see past it while the trained layer can
    // shrink it away.
    const int n = 28;
    Eigen::MatrixXd X(n, 2), Y(n, 3);
    for (int i = 0; i < n; ++i) {
        double x1 = 0.125 * i;
        X(i, 0) = x1;
        X(i, 1) = 10.0 + 10.0 * std::sin(2.7 * i + 0.4);
        Y(i, 0) = std::sin(1.8 * x1);
        Y(i, 1) = std::cos(0.9 * x1) + 0.3 * x1;
        Y(i, 2) = 0.1 * x1 * x1;
    }
    Dataset ds = make_dataset(X, Y);
    SplitIndices sp = split(ds, 20, 3);
    TrainSet tr = TrainSet::from(ds, sp.train);
    TestSet te = TestSet::from(ds, sp.test);

    Selection1L s1 = loocv_select_1L(tr, HyperGrid{}, 10);
    KernelSpec k1{s1.family, s1.shape};
    KernelModel m1 = fit_greedy(tr.x, tr.y, k1, s1.lambda, 10);
    double e1 = relative_test_error(m1, te);

    TwoLayerTrainConfig cfg;
    cfg.epochs = 150;
    cfg.batch_size = 20;
    cfg.seed = 5;
    Selection2L s2 = loocv_select_2L(tr, {KernelFamily::matern2, KernelFamily::gaussian},
                                     {1e-4, 1e-6}, cfg, 10);
    TwoLayerKernelSpec k2{{s2.family, 1.0}, s2.A};
    KernelModel m2 = fit_greedy(tr.x, tr.y, k2, s2.lambda, 10);
    double e2 = relative_test_error(m2, te);

    CHECK(e2 < e1);
}

TEST_CASE("cv table csv lists one row per cell with empty shape for learned layers") {
    std::vector<CvCell> table = {
        {KernelFamily::matern1, 0.5, 1e-3, 0.125},
        {KernelFamily::gaussian, std::numeric_limits<double>::quiet_NaN(), 1e-2, 0.75},
    };
    auto p = temp_file("poro_cvtable_test.csv");
    write_cv_table(p, table);
    util::CsvTable csv = util::read_csv(p);
    REQUIRE(csv.header == std::vector<std::string>{"family", "shape", "lambda", "cv_score"});
    REQUIRE(csv.rows.size() == 2);
    CHECK(csv.rows[0][0] == "matern1");
    CHECK(util::parse_double(csv.rows[0][1]) == 0.5);
    CHECK(util::parse_double(csv.rows[0][2]) == 1e-3);
    CHECK(util::parse_double(csv.rows[0][3]) == 0.125);
    CHECK(csv.rows[1][0] == "gaussian");
    CHECK(csv.rows[1][1] == "");
    CHECK(util::parse_double(csv.rows[1][3]) == 0.75);
    std::filesystem::remove(p);
}

TEST_CASE("curve tables round-trip through csv") {
    Eigen::MatrixXd C(3, 4);
    C << 0.0, 0.125, 0.5, 1.0, 0.0, 1e-17, 0.3333333333333333, 0.9,
        -0.0, 0.25, 2.0 / 3.0, 1.0;
    std::vector<std::string> ids = {"g000", "g007", "g012"};
    auto p = temp_file("poro_curves_test.csv");
    write_curves_csv(p, ids, C);

    CurveTable t = read_curves_csv(p);
    CHECK(t.ids == ids);
    REQUIRE(t.curves.rows() == 3);
    REQUIRE(t.curves.cols() == 4);
    CHECK((t.curves - C).norm() == 0.0);

    CHECK_THROWS_AS(write_curves_csv(p, {"a", "b"}, C), ConfigError);

    util::write_file(p, "name,t_0\nx,1\n");
    CHECK_THROWS_AS(read_curves_csv(p), ArtifactError);
    util::write_file(p, "id,t_0,t_2\nx,1,2\n");
    CHECK_THROWS_AS(read_curves_csv(p), ArtifactError);
    std::filesystem::remove(p);
}
