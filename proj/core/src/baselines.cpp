#include "icudyn/baselines.hpp"

#include <cmath>

#include "icudyn/errors.hpp"
#include "icudyn/model.hpp"
#include "icudyn/rng.hpp"

namespace icudyn {

namespace {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

Vector sigmoid_vec(const Vector& z) {
    return z.unaryExpr([](double v) { return detail::sigmoid(v); });
}

double mean_bce(const Vector& logits, const std::vector<int>& labels) {
    double loss = 0.0;
    for (Eigen::Index i = 0; i < logits.size(); ++i)
        loss += detail::bce_from_logit(logits(i), static_cast<double>(labels[static_cast<std::size_t>(i)]));
    return loss / static_cast<double>(logits.size());
}

void check_training_inputs(const Matrix& features, const std::vector<int>& labels,
                           const BaselineConfig& config) {
    if (features.rows() == 0) fail_data("E_EMPTY_INPUT", "no training rows");
    if (static_cast<std::size_t>(features.rows()) != labels.size())
        fail_data("E_SHAPE", "feature rows and label count differ");
    bool any_pos = false, any_neg = false;
    for (int y : labels) {
        if (y != 0 && y != 1) fail_data("E_BAD_LABEL", "labels must be 0 or 1");
        (y == 1 ? any_pos : any_neg) = true;
    }
    if (!(any_pos && any_neg))
        fail_data("E_SINGLE_CLASS", "training data must contain both classes");
    if (config.learning_rate <= 0.0) fail_data("E_CONFIG", "learning rate must be > 0");
    if (config.epochs < 0) fail_data("E_CONFIG", "epochs must be >= 0");
}

}  // namespace

Eigen::VectorXd extract_static_features(const EncounterMatrix& matrix, double at_minutes) {
    Eigen::Index last = -1;
    for (std::size_t j = 0; j < matrix.times.size() && matrix.times[j] <= at_minutes; ++j)
        last = static_cast<Eigen::Index>(j);
    if (last < 0)
        fail_data("E_NO_COLUMNS", "encounter " + matrix.encounter_id +
                                      " has no data at or before the feature cutoff");
    return matrix.values.col(last);
}

double lr_loss_and_grads(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                         const LinearModel& model, Eigen::VectorXd& grad_w, double& grad_b) {
    if (model.w.size() != features.cols())
        fail_data("E_SHAPE", "weight size does not match feature count");
    const Vector logits = (features * model.w).array() + model.b;
    const Vector p = sigmoid_vec(logits);
    Vector residual(p.size());
    for (Eigen::Index i = 0; i < p.size(); ++i)
        residual(i) = p(i) - static_cast<double>(labels[static_cast<std::size_t>(i)]);
    const double inv_n = 1.0 / static_cast<double>(features.rows());
    grad_w = features.transpose() * residual * inv_n;
    grad_b = residual.sum() * inv_n;
    return mean_bce(logits, labels);
}

double mlp_loss_and_grads(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                          const MlpModel& model, MlpModel& grads) {
    if (model.w1.cols() != features.cols())
        fail_data("E_SHAPE", "first-layer width does not match feature count");
    if (model.w2.size() != model.w1.rows())
        fail_data("E_SHAPE", "output weights do not match hidden width");

    // Rows of `hidden` are the tanh activations of one encounter each.
    const Matrix pre = (features * model.w1.transpose()).rowwise() + model.b1.transpose();
    const Matrix hidden = pre.array().tanh();
    const Vector logits = (hidden * model.w2).array() + model.b2;

    Vector residual(logits.size());
    for (Eigen::Index i = 0; i < logits.size(); ++i)
        residual(i) = detail::sigmoid(logits(i)) - static_cast<double>(labels[static_cast<std::size_t>(i)]);
    const double inv_n = 1.0 / static_cast<double>(features.rows());
    residual *= inv_n;

    grads.w2 = hidden.transpose() * residual;
    grads.b2 = residual.sum();
    const Matrix d_hidden =
        (residual * model.w2.transpose()).cwiseProduct((1.0 - hidden.array().square()).matrix());
    grads.w1 = d_hidden.transpose() * features;
    grads.b1 = d_hidden.colwise().sum().transpose();
    return mean_bce(logits, labels);
}

LinearTrainResult train_lr(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                           const BaselineConfig& config) {
    check_training_inputs(features, labels, config);

    LinearTrainResult result;
    result.model.w = Vector::Zero(features.cols());
    result.model.b = 0.0;

    Vector velocity_w = Vector::Zero(features.cols());
    double velocity_b = 0.0;
    Vector grad_w;
    double grad_b = 0.0;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const double loss = lr_loss_and_grads(features, labels, result.model, grad_w, grad_b);
        if (!std::isfinite(loss)) {
            result.diverged = true;
            break;
        }
        result.epoch_loss.push_back(loss);
        velocity_w = config.momentum * velocity_w + grad_w;
        velocity_b = config.momentum * velocity_b + grad_b;
        result.model.w -= config.learning_rate * velocity_w;
        result.model.b -= config.learning_rate * velocity_b;
    }
    return result;
}

MlpTrainResult train_mlp(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                         const BaselineConfig& config) {
    check_training_inputs(features, labels, config);
    if (config.hidden_width < 1) fail_data("E_CONFIG", "hidden width must be >= 1");

    Rng rng(config.seed);
    MlpTrainResult result;
    const Eigen::Index d = features.cols();
    const Eigen::Index h = config.hidden_width;
    const double s1 = 1.0 / std::sqrt(static_cast<double>(d));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(h));
    result.model.w1.resize(h, d);
    for (Eigen::Index r = 0; r < h; ++r)
        for (Eigen::Index c = 0; c < d; ++c) result.model.w1(r, c) = rng.uniform(-s1, s1);
    result.model.b1 = Vector::Zero(h);
    result.model.w2.resize(h);
    for (Eigen::Index r = 0; r < h; ++r) result.model.w2(r) = rng.uniform(-s2, s2);
    result.model.b2 = 0.0;

    MlpModel velocity;
    velocity.w1 = Matrix::Zero(h, d);
    velocity.b1 = Vector::Zero(h);
    velocity.w2 = Vector::Zero(h);
    velocity.b2 = 0.0;
    MlpModel grads;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const double loss = mlp_loss_and_grads(features, labels, result.model, grads);
        if (!std::isfinite(loss)) {
            result.diverged = true;
            break;
        }
        result.epoch_loss.push_back(loss);
        velocity.w1 = config.momentum * velocity.w1 + grads.w1;
        velocity.b1 = config.momentum * velocity.b1 + grads.b1;
        velocity.w2 = config.momentum * velocity.w2 + grads.w2;
        velocity.b2 = config.momentum * velocity.b2 + grads.b2;
        result.model.w1 -= config.learning_rate * velocity.w1;
        result.model.b1 -= config.learning_rate * velocity.b1;
        result.model.w2 -= config.learning_rate * velocity.w2;
        result.model.b2 -= config.learning_rate * velocity.b2;
    }
    return result;
}

double predict_lr(const Eigen::VectorXd& features, const LinearModel& model) {
    if (features.size() != model.w.size())
        fail_data("E_SHAPE", "feature size does not match the model");
    return detail::sigmoid(model.w.dot(features) + model.b);
}

double predict_mlp(const Eigen::VectorXd& features, const MlpModel& model) {
    if (features.size() != model.w1.cols())
        fail_data("E_SHAPE", "feature size does not match the model");
    const Vector hidden = (model.w1 * features + model.b1).array().tanh();
    return detail::sigmoid(model.w2.dot(hidden) + model.b2);
}

}  // namespace icudyn
