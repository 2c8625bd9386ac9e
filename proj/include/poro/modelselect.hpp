#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "poro/twolayer.hpp"
#include "poro/vkoga.hpp"

namespace poro {

struct Sample {
    std::string id;
    Eigen::VectorXd features;
    Eigen::VectorXd curve;
};

enum class FeatureKind { morphological, pca };

struct Dataset {
    std::vector<Sample> samples;
    int n_t = 0;
    FeatureKind kind = FeatureKind::morphological;
};

struct SplitIndices {
    std::vector<size_t> train;
    std::vector<size_t> test;
};

/// Seeded uniform shuffle of sample indices; first train_count go to train.
SplitIndices split(const Dataset& ds, size_t train_count, uint64_t seed);

/// Feature matrix + curve matrix view of a subset of a dataset. Selection
/// routines only ever accept TrainSet, so test samples cannot leak in.
struct TrainSet {
    Eigen::MatrixXd x; // n x d
    Eigen::MatrixXd y; // n x n_t
    std::vector<std::string> ids;
    static TrainSet from(const Dataset& ds, const std::vector<size_t>& idx);
};
struct TestSet {
    Eigen::MatrixXd x;
    Eigen::MatrixXd y;
    std::vector<std::string> ids;
    static TestSet from(const Dataset& ds, const std::vector<size_t>& idx);
};

/// Hyperparameter grid; defaults reproduce the standard search space.
struct HyperGrid {
    std::vector<KernelFamily> families = {KernelFamily::matern1, KernelFamily::matern2,
                                          KernelFamily::gaussian};
    std::vector<double> shapes = {1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125};
    std::vector<double> lambdas = {0.0, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6};
};

struct CvCell {
    KernelFamily family;
    double shape;  // NaN for two-layer rows
    double lambda;
    double score;  // +inf marks singular lambda=0 cells
};

struct Selection1L {
    KernelFamily family;
    double shape;
    double lambda;
    std::vector<CvCell> table;
};

struct Selection2L {
    KernelFamily family;
    double lambda;
    Eigen::MatrixXd A;
    std::vector<double> loss_history; // winning cell's optimizer trace
    std::vector<CvCell> table;
};

/// Leave-one-out CV over the full (family x shape x lambda) grid with greedy
/// models of n_greedy centers; fold score = ||a - s|| / ||a|| on the held-out
/// sample. Ties: earlier family, larger lambda, smaller shape.
Selection1L loocv_select_1L(const TrainSet& train, const HyperGrid& grid, int n_greedy = 10,
                            int threads = 1);

/// Two-layer variant: shape is not searched; per (family, lambda) candidate
/// the first layer A is trained on the whole training set, then folds refit
/// coefficients with that A fixed.
Selection2L loocv_select_2L(const TrainSet& train, const std::vector<KernelFamily>& families,
                            const std::vector<double>& lambdas, const TwoLayerTrainConfig& cfg,
                            int n_greedy = 10, int threads = 1);

/// e_rel = (1/|T|) sqrt( sum_i ||a_i - p_i||^2 / ||a_i||^2 ).
double relative_test_error(const Eigen::MatrixXd& targets, const Eigen::MatrixXd& predictions);
double relative_test_error(const KernelModel& m, const TestSet& test);

/// CSV `family,shape,lambda,cv_score` (shape column empty for 2L tables).
void write_cv_table(const std::filesystem::path& p, const std::vector<CvCell>& table);

// Curves CSV: header id,t_0..t_{n_t-1}, one row per sample.
void write_curves_csv(const std::filesystem::path& p, const std::vector<std::string>& ids,
                      const Eigen::MatrixXd& curves);
struct CurveTable {
    std::vector<std::string> ids;
    Eigen::MatrixXd curves; // n x n_t
};
CurveTable read_curves_csv(const std::filesystem::path& p);

} // namespace poro
