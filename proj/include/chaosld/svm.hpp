#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "chaosld/ensembles.hpp"
#include "chaosld/indicators.hpp"

namespace chaosld {

/// Which indicator columns feed the classifier. Log variants drop records
/// carrying the S = 0 sentinel; energy variants refuse map records, which
/// have no conserved energy to offer.
enum class FeatureSet {
    SOnly,
    LogSOnly,
    SAndEnergy,
    LogSAndEnergy,
};

const char* feature_set_name(FeatureSet set);
FeatureSet feature_set_from_name(const std::string& name);
int feature_count(FeatureSet set);

/// Design matrix (one row per usable record) with labels mapped
/// regular -> -1, chaotic -> +1. `source_rows` maps each row back to its
/// record index, so callers can tell which records were excluded.
struct FeatureMatrix {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
    std::vector<std::size_t> source_rows;
};

FeatureMatrix extract_features(const std::vector<IndicatorRecord>& records,
                               FeatureSet set);

/// Mean hinge loss max(0, 1 - y*(w.x + b)) over the rows of x.
double hinge_loss(const Eigen::VectorXd& w, double b, const Eigen::MatrixXd& x,
                  const Eigen::VectorXd& y);

/// Mean subgradient of the hinge loss; rows sitting exactly on the hinge
/// contribute nothing (the strict 1 - y*f > 0 branch).
void hinge_gradient(const Eigen::VectorXd& w, double b,
                    const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                    Eigen::VectorXd& grad_w, double& grad_b);

/// Per-feature affine fitted on training data: x_tilde = (x - mean) / scale.
/// A constant feature keeps scale 1 so the affine stays invertible.
struct Normalization {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;
};

struct TrainOptions {
    std::size_t epochs = 500000; // one epoch = one shuffled pass
    double lr0 = 0.1;            // step size eta_t = lr0 / (1 + t / 1e4)
    std::size_t batch = 64;
    std::uint64_t seed = 1;
    std::string dataset_sha; // provenance only, recorded in the model file

    void validate() const;
};

struct LinearSvmModel {
    FeatureSet features = FeatureSet::LogSOnly;
    Eigen::VectorXd w;
    double b = 0.0;
    Normalization norm;
    TrainOptions training;

    std::string to_json() const;
    static LinearSvmModel from_json(const std::string& text);
};

void save_model(const LinearSvmModel& model, const std::string& path);
LinearSvmModel load_model(const std::string& path);

struct FitResult {
    LinearSvmModel model;
    /// mean of the mini-batch losses seen during each epoch
    std::vector<double> epoch_loss;
};

/// Mini-batch subgradient descent on the mean hinge loss, deterministic for
/// a given seed. Requires both labels present (single class -> DataError).
FitResult fit(const FeatureMatrix& data, FeatureSet set,
              const TrainOptions& opts = {});

/// Margin w.x_tilde + b in normalized feature space; raw features in.
double decision_margin(const LinearSvmModel& model, const Eigen::VectorXd& x);

/// Chaotic iff the margin is strictly positive; an exact zero is regular.
Label predict(const LinearSvmModel& model, const Eigen::VectorXd& x);

struct CaseAccuracy {
    double case_value = 0.0; // energy for flows, K for maps
    std::size_t total = 0;
    std::size_t correct = 0;
};

struct MisclassifiedSample {
    double case_value = 0.0;
    Vec2 slice{0.0, 0.0};
    double margin = 0.0;
    Label truth = Label::Regular;
};

struct EvalReport {
    double accuracy = 0.0;
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0; // chaotic = positive
    std::size_t skipped = 0; // records the recipe cannot featurize
    std::vector<CaseAccuracy> per_case;
    std::vector<MisclassifiedSample> misclassified;

    std::string to_json() const;
};

/// Model predictions against the stored alignment-index labels.
EvalReport evaluate(const LinearSvmModel& model,
                    const std::vector<IndicatorRecord>& records);

} // namespace chaosld
