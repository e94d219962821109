#pragma once

// Stacked LSTM mortality-risk model with hand-derived backpropagation
// through time. Inputs are event-grid columns with the prediction horizon
// (delta-t, hours) appended; each step emits a mortality risk for
// t_n + delta_t via a sigmoid head on the top layer's hidden state.

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "icudyn/preprocess.hpp"

namespace icudyn {

struct LstmLayerParams {
    // Gate order everywhere: input (i), forget (f), output (o), candidate (g).
    Eigen::MatrixXd w_i, w_f, w_o, w_g;  // width x input_dim
    Eigen::MatrixXd u_i, u_f, u_o, u_g;  // width x width
    Eigen::VectorXd b_i, b_f, b_o, b_g;  // width

    Eigen::Index input_dim() const { return w_i.cols(); }
    Eigen::Index width() const { return w_i.rows(); }
};

struct ModelParams {
    std::vector<LstmLayerParams> layers;
    Eigen::VectorXd w_out;  // width of top layer
    double b_out = 0.0;

    Eigen::Index input_dim() const { return layers.empty() ? 0 : layers.front().input_dim(); }
    std::vector<int> widths() const;
    std::size_t parameter_count() const;

    // Throws E_SHAPE naming the offending layer when dimensions disagree.
    void check_consistent() const;
};

// Seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init, forget-gate bias 1.
ModelParams init_params(int input_dim, const std::vector<int>& widths, std::uint64_t seed);

// One sequence ready for the network: column n is [grid column n; delta_t_hours].
struct ModelInput {
    Eigen::MatrixXd x;              // (|row_vars| + 1) x steps
    std::vector<double> t_minutes;  // per step

    Eigen::Index steps() const { return x.cols(); }
};

// observe_until_minutes < 0 means "all columns".
ModelInput make_model_input(const EncounterMatrix& matrix, double delta_t_hours,
                            double observe_until_minutes = -1.0);

struct RiskPoint {
    double t_minutes = 0.0;
    double delta_t_hours = 0.0;
    double risk = 0.5;  // mortality risk, strictly in (0, 1)
};
using RiskTrajectory = std::vector<RiskPoint>;

// Single cell step; exposed for tests.
void lstm_cell_forward(const LstmLayerParams& p, const Eigen::VectorXd& x, const Eigen::VectorXd& h,
                       const Eigen::VectorXd& c, Eigen::VectorXd& h_out, Eigen::VectorXd& c_out);

// One risk per input step; step n depends on inputs 1..n only.
RiskTrajectory forward(const ModelInput& input, const ModelParams& params);

struct LabeledSequence {
    ModelInput input;
    double label = 0.0;  // 1 = died in ICU
    std::string encounter_id;
};

// Mean over encounters of mean-over-steps binary cross-entropy between the
// per-step risk and the encounter label; grads are the exact BPTT
// derivatives. bptt_truncation > 0 cuts gradient flow at segment boundaries
// of that length (an approximation; 0 = full BPTT).
double loss_and_grads(const std::vector<LabeledSequence>& batch, const ModelParams& params,
                      ModelParams& grads, int bptt_truncation = 0);

struct TrainConfig {
    double learning_rate = 0.05;
    int epochs = 50;
    int batch_size = 16;
    std::uint64_t seed = 0;
    double clip_norm = 5.0;   // global gradient-norm clip; 0 disables
    double momentum = 0.0;
    double delta_t_min_hours = 0.5;   // per-encounter horizon augmentation range
    double delta_t_max_hours = 24.0;
    std::vector<int> hidden_widths{64, 64, 64};
    int bptt_truncation = 0;          // 0 = full BPTT
    double train_window_hours = 0.0;  // restrict training to the first N hours; 0 = full encounter
};

struct TrainResult {
    ModelParams params;
    std::vector<double> epoch_loss;  // mean training loss per epoch
    double initial_loss = 0.0;       // full-data loss before any update
    double final_loss = 0.0;         // full-data loss after training
    bool diverged = false;           // loss went non-finite; params hold the last good state
    int completed_epochs = 0;
};

TrainResult train(const std::vector<EncounterMatrix>& data, const TrainConfig& config);

// Forward pass over the columns with time <= observe_until; returns the last
// step's risk for horizon delta_t.
double predict_at(const EncounterMatrix& matrix, double observe_until_minutes, double delta_t_hours,
                  const ModelParams& params);

namespace detail {
inline double sigmoid(double z) {
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}
// Numerically stable binary cross-entropy expressed on the logit.
inline double bce_from_logit(double z, double label) {
    const double sp = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    return sp - label * z;
}
}  // namespace detail

}  // namespace icudyn
