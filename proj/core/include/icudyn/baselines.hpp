#pragma once

// Static baselines: logistic regression and a one-hidden-layer MLP operating
// on a single snapshot column (last imputed grid column at the cutoff).

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "icudyn/preprocess.hpp"

namespace icudyn {

// The event-grid column at the latest time <= at_minutes.
Eigen::VectorXd extract_static_features(const EncounterMatrix& matrix, double at_minutes = 720.0);

struct LinearModel {
    Eigen::VectorXd w;
    double b = 0.0;
};

struct MlpModel {
    Eigen::MatrixXd w1;  // hidden x features
    Eigen::VectorXd b1;
    Eigen::VectorXd w2;  // hidden
    double b2 = 0.0;
};

struct BaselineConfig {
    double learning_rate = 0.5;
    int epochs = 500;
    std::uint64_t seed = 0;
    double momentum = 0.0;
    int hidden_width = 32;  // MLP only
};

struct LinearTrainResult {
    LinearModel model;
    std::vector<double> epoch_loss;
    bool diverged = false;
};

struct MlpTrainResult {
    MlpModel model;
    std::vector<double> epoch_loss;
    bool diverged = false;
};

// Full-batch gradient descent on mean binary cross-entropy. features is
// n x d (one row per encounter); labels in {0,1} with 1 = died.
LinearTrainResult train_lr(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                           const BaselineConfig& config);
MlpTrainResult train_mlp(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                         const BaselineConfig& config);

double predict_lr(const Eigen::VectorXd& features, const LinearModel& model);
double predict_mlp(const Eigen::VectorXd& features, const MlpModel& model);

// Loss and gradient of the full-batch objective; exposed for the
// finite-difference checks.
double lr_loss_and_grads(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                         const LinearModel& model, Eigen::VectorXd& grad_w, double& grad_b);
double mlp_loss_and_grads(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                          const MlpModel& model, MlpModel& grads);

}  // namespace icudyn
