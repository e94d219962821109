#include "icudyn/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "icudyn/errors.hpp"
#include "icudyn/rng.hpp"

namespace icudyn {

namespace {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

void fill_uniform(Matrix& m, double bound, Rng& rng) {
    // Row-major fill order so the result is independent of Eigen's storage.
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-bound, bound);
}

void fill_uniform(Vector& v, double bound, Rng& rng) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.uniform(-bound, bound);
}

// Activations of one layer over a whole sequence, kept for backprop.
struct LayerTape {
    Matrix i, f, o, g;  // gate values, width x T
    Matrix c, tanh_c, h;
};

// Runs one layer over its full input sequence (input_dim x T). The
// input-to-hidden halves of the gate pre-activations are batched into one
// product per gate; only the recurrent halves are sequential.
void run_layer(const LstmLayerParams& p, const Matrix& x, LayerTape& tape) {
    const Eigen::Index width = p.width();
    const Eigen::Index steps = x.cols();

    Matrix zi = p.w_i * x;
    Matrix zf = p.w_f * x;
    Matrix zo = p.w_o * x;
    Matrix zg = p.w_g * x;
    zi.colwise() += p.b_i;
    zf.colwise() += p.b_f;
    zo.colwise() += p.b_o;
    zg.colwise() += p.b_g;

    tape.i.resize(width, steps);
    tape.f.resize(width, steps);
    tape.o.resize(width, steps);
    tape.g.resize(width, steps);
    tape.c.resize(width, steps);
    tape.tanh_c.resize(width, steps);
    tape.h.resize(width, steps);

    Vector h_prev = Vector::Zero(width);
    Vector c_prev = Vector::Zero(width);
    for (Eigen::Index n = 0; n < steps; ++n) {
        const Vector ai = zi.col(n) + p.u_i * h_prev;
        const Vector af = zf.col(n) + p.u_f * h_prev;
        const Vector ao = zo.col(n) + p.u_o * h_prev;
        const Vector ag = zg.col(n) + p.u_g * h_prev;

        tape.i.col(n) = ai.unaryExpr([](double z) { return detail::sigmoid(z); });
        tape.f.col(n) = af.unaryExpr([](double z) { return detail::sigmoid(z); });
        tape.o.col(n) = ao.unaryExpr([](double z) { return detail::sigmoid(z); });
        tape.g.col(n) = ag.array().tanh();

        tape.c.col(n) =
            tape.f.col(n).cwiseProduct(c_prev) + tape.i.col(n).cwiseProduct(tape.g.col(n));
        tape.tanh_c.col(n) = tape.c.col(n).array().tanh();
        tape.h.col(n) = tape.o.col(n).cwiseProduct(tape.tanh_c.col(n));

        h_prev = tape.h.col(n);
        c_prev = tape.c.col(n);
    }
}

struct ForwardTape {
    std::vector<LayerTape> layers;
    Vector logits;  // per step
};

void forward_cached(const ModelInput& input, const ModelParams& params, ForwardTape& tape) {
    const auto n_layers = params.layers.size();
    tape.layers.resize(n_layers);
    const Matrix* layer_input = &input.x;
    for (std::size_t l = 0; l < n_layers; ++l) {
        run_layer(params.layers[l], *layer_input, tape.layers[l]);
        layer_input = &tape.layers[l].h;
    }
    const Matrix& top = tape.layers.back().h;
    tape.logits = (params.w_out.transpose() * top).transpose();
    tape.logits.array() += params.b_out;
}

ModelParams zero_like(const ModelParams& params) {
    ModelParams z;
    z.layers.reserve(params.layers.size());
    for (const auto& layer : params.layers) {
        LstmLayerParams g;
        g.w_i = Matrix::Zero(layer.w_i.rows(), layer.w_i.cols());
        g.w_f = g.w_i;
        g.w_o = g.w_i;
        g.w_g = g.w_i;
        g.u_i = Matrix::Zero(layer.u_i.rows(), layer.u_i.cols());
        g.u_f = g.u_i;
        g.u_o = g.u_i;
        g.u_g = g.u_i;
        g.b_i = Vector::Zero(layer.b_i.size());
        g.b_f = g.b_i;
        g.b_o = g.b_i;
        g.b_g = g.b_i;
        z.layers.push_back(std::move(g));
    }
    z.w_out = Vector::Zero(params.w_out.size());
    z.b_out = 0.0;
    return z;
}

// Backward sweep of one layer over the whole sequence. d_h_ext carries the
// gradient arriving at h from above (output head or upper layer); returns
// the gradient with respect to the layer's input sequence.
Matrix backward_layer(const LstmLayerParams& p, const Matrix& x, const LayerTape& tape,
                      const Matrix& d_h_ext, LstmLayerParams& grads, int truncation) {
    const Eigen::Index width = p.width();
    const Eigen::Index steps = x.cols();

    Matrix da_i(width, steps), da_f(width, steps), da_o(width, steps), da_g(width, steps);
    Vector dh_carry = Vector::Zero(width);
    Vector dc_carry = Vector::Zero(width);

    for (Eigen::Index n = steps - 1; n >= 0; --n) {
        const Vector dh = d_h_ext.col(n) + dh_carry;
        const auto i = tape.i.col(n).array();
        const auto f = tape.f.col(n).array();
        const auto o = tape.o.col(n).array();
        const auto g = tape.g.col(n).array();
        const auto tc = tape.tanh_c.col(n).array();

        const Eigen::ArrayXd dc = dc_carry.array() + dh.array() * o * (1.0 - tc.square());
        const Eigen::ArrayXd do_ = dh.array() * tc;

        Eigen::ArrayXd c_prev = Eigen::ArrayXd::Zero(width);
        if (n > 0) c_prev = tape.c.col(n - 1).array();

        da_i.col(n) = (dc * g * i * (1.0 - i)).matrix();
        da_f.col(n) = (dc * c_prev * f * (1.0 - f)).matrix();
        da_o.col(n) = (do_ * o * (1.0 - o)).matrix();
        da_g.col(n) = (dc * i * (1.0 - g.square())).matrix();

        dc_carry = (dc * f).matrix();
        dh_carry = p.u_i.transpose() * da_i.col(n) + p.u_f.transpose() * da_f.col(n) +
                   p.u_o.transpose() * da_o.col(n) + p.u_g.transpose() * da_g.col(n);

        // Truncated BPTT: no gradient flows across segment boundaries.
        if (truncation > 0 && n % truncation == 0) {
            dh_carry.setZero();
            dc_carry.setZero();
        }
    }

    grads.w_i.noalias() += da_i * x.transpose();
    grads.w_f.noalias() += da_f * x.transpose();
    grads.w_o.noalias() += da_o * x.transpose();
    grads.w_g.noalias() += da_g * x.transpose();
    if (steps > 1) {
        const auto h_past = tape.h.leftCols(steps - 1).transpose();
        grads.u_i.noalias() += da_i.rightCols(steps - 1) * h_past;
        grads.u_f.noalias() += da_f.rightCols(steps - 1) * h_past;
        grads.u_o.noalias() += da_o.rightCols(steps - 1) * h_past;
        grads.u_g.noalias() += da_g.rightCols(steps - 1) * h_past;
    }
    grads.b_i += da_i.rowwise().sum();
    grads.b_f += da_f.rowwise().sum();
    grads.b_o += da_o.rowwise().sum();
    grads.b_g += da_g.rowwise().sum();

    return p.w_i.transpose() * da_i + p.w_f.transpose() * da_f + p.w_o.transpose() * da_o +
           p.w_g.transpose() * da_g;
}

bool params_finite(const ModelParams& p) {
    for (const auto& l : p.layers) {
        if (!(l.w_i.allFinite() && l.w_f.allFinite() && l.w_o.allFinite() && l.w_g.allFinite()))
            return false;
        if (!(l.u_i.allFinite() && l.u_f.allFinite() && l.u_o.allFinite() && l.u_g.allFinite()))
            return false;
        if (!(l.b_i.allFinite() && l.b_f.allFinite() && l.b_o.allFinite() && l.b_g.allFinite()))
            return false;
    }
    return p.w_out.allFinite() && std::isfinite(p.b_out);
}

double global_grad_norm(const ModelParams& g) {
    double sq = g.w_out.squaredNorm() + g.b_out * g.b_out;
    for (const auto& l : g.layers) {
        sq += l.w_i.squaredNorm() + l.w_f.squaredNorm() + l.w_o.squaredNorm() + l.w_g.squaredNorm();
        sq += l.u_i.squaredNorm() + l.u_f.squaredNorm() + l.u_o.squaredNorm() + l.u_g.squaredNorm();
        sq += l.b_i.squaredNorm() + l.b_f.squaredNorm() + l.b_o.squaredNorm() + l.b_g.squaredNorm();
    }
    return std::sqrt(sq);
}

template <typename Op>
void for_each_param(ModelParams& a, const ModelParams& b, Op op) {
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        auto& x = a.layers[l];
        const auto& y = b.layers[l];
        op(x.w_i, y.w_i);
        op(x.w_f, y.w_f);
        op(x.w_o, y.w_o);
        op(x.w_g, y.w_g);
        op(x.u_i, y.u_i);
        op(x.u_f, y.u_f);
        op(x.u_o, y.u_o);
        op(x.u_g, y.u_g);
        op(x.b_i, y.b_i);
        op(x.b_f, y.b_f);
        op(x.b_o, y.b_o);
        op(x.b_g, y.b_g);
    }
    op(a.w_out, b.w_out);
}

}  // namespace

std::vector<int> ModelParams::widths() const {
    std::vector<int> w;
    w.reserve(layers.size());
    for (const auto& l : layers) w.push_back(static_cast<int>(l.width()));
    return w;
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = static_cast<std::size_t>(w_out.size()) + 1;
    for (const auto& l : layers) {
        n += 4 * static_cast<std::size_t>(l.w_i.size() + l.u_i.size() + l.b_i.size());
    }
    return n;
}

void ModelParams::check_consistent() const {
    if (layers.empty()) fail_data("E_SHAPE", "model has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& p = layers[l];
        const auto where = "layer " + std::to_string(l + 1);
        const Eigen::Index w = p.w_i.rows(), in = p.w_i.cols();
        auto expect = [&](bool ok, const std::string& what) {
            if (!ok) fail_data("E_SHAPE", where + ": inconsistent " + what);
        };
        expect(p.w_f.rows() == w && p.w_o.rows() == w && p.w_g.rows() == w, "gate widths");
        expect(p.w_f.cols() == in && p.w_o.cols() == in && p.w_g.cols() == in, "gate input dims");
        expect(p.u_i.rows() == w && p.u_i.cols() == w && p.u_f.rows() == w && p.u_f.cols() == w &&
                   p.u_o.rows() == w && p.u_o.cols() == w && p.u_g.rows() == w && p.u_g.cols() == w,
               "recurrent shapes");
        expect(p.b_i.size() == w && p.b_f.size() == w && p.b_o.size() == w && p.b_g.size() == w,
               "bias sizes");
        if (l > 0 && in != layers[l - 1].width())
            fail_data("E_SHAPE", where + ": input dim " + std::to_string(in) +
                                     " does not match layer " + std::to_string(l) + " width " +
                                     std::to_string(layers[l - 1].width()));
        if (!(p.w_i.allFinite() && p.w_f.allFinite() && p.w_o.allFinite() && p.w_g.allFinite() &&
              p.u_i.allFinite() && p.u_f.allFinite() && p.u_o.allFinite() && p.u_g.allFinite() &&
              p.b_i.allFinite() && p.b_f.allFinite() && p.b_o.allFinite() && p.b_g.allFinite()))
            fail_numeric("E_NONFINITE", where + ": non-finite parameter");
    }
    if (w_out.size() != layers.back().width())
        fail_data("E_SHAPE", "output head size " + std::to_string(w_out.size()) +
                                 " does not match top layer width " +
                                 std::to_string(layers.back().width()));
    if (!w_out.allFinite() || !std::isfinite(b_out))
        fail_numeric("E_NONFINITE", "output head: non-finite parameter");
}

ModelParams init_params(int input_dim, const std::vector<int>& widths, std::uint64_t seed) {
    if (input_dim < 1) fail_data("E_CONFIG", "input dim must be >= 1");
    if (widths.empty()) fail_data("E_CONFIG", "at least one hidden layer required");
    for (int w : widths)
        if (w < 1) fail_data("E_CONFIG", "hidden widths must be >= 1");

    Rng rng(seed);
    ModelParams params;
    int in = input_dim;
    for (int w : widths) {
        LstmLayerParams layer;
        const double ws = 1.0 / std::sqrt(static_cast<double>(in));
        const double us = 1.0 / std::sqrt(static_cast<double>(w));
        layer.w_i.resize(w, in);
        layer.w_f.resize(w, in);
        layer.w_o.resize(w, in);
        layer.w_g.resize(w, in);
        fill_uniform(layer.w_i, ws, rng);
        fill_uniform(layer.w_f, ws, rng);
        fill_uniform(layer.w_o, ws, rng);
        fill_uniform(layer.w_g, ws, rng);
        layer.u_i.resize(w, w);
        layer.u_f.resize(w, w);
        layer.u_o.resize(w, w);
        layer.u_g.resize(w, w);
        fill_uniform(layer.u_i, us, rng);
        fill_uniform(layer.u_f, us, rng);
        fill_uniform(layer.u_o, us, rng);
        fill_uniform(layer.u_g, us, rng);
        layer.b_i = Vector::Zero(w);
        layer.b_f = Vector::Ones(w);  // open forget gates at the start of training
        layer.b_o = Vector::Zero(w);
        layer.b_g = Vector::Zero(w);
        params.layers.push_back(std::move(layer));
        in = w;
    }
    params.w_out.resize(widths.back());
    fill_uniform(params.w_out, 1.0 / std::sqrt(static_cast<double>(widths.back())), rng);
    params.b_out = 0.0;
    return params;
}

ModelInput make_model_input(const EncounterMatrix& matrix, double delta_t_hours,
                            double observe_until_minutes) {
    if (delta_t_hours < 0.0) fail_data("E_BAD_DELTA_T", "prediction horizon must be >= 0");
    Eigen::Index n_cols = matrix.cols();
    if (observe_until_minutes >= 0.0) {
        n_cols = 0;
        while (n_cols < matrix.cols() &&
               matrix.times[static_cast<std::size_t>(n_cols)] <= observe_until_minutes)
            ++n_cols;
    }
    if (n_cols == 0)
        fail_data("E_NO_COLUMNS", "encounter " + matrix.encounter_id +
                                      " has no columns inside the observation window");

    ModelInput input;
    input.x.resize(matrix.rows() + 1, n_cols);
    input.x.topRows(matrix.rows()) = matrix.values.leftCols(n_cols);
    input.x.row(matrix.rows()).setConstant(delta_t_hours);
    input.t_minutes.assign(matrix.times.begin(), matrix.times.begin() + n_cols);
    return input;
}

void lstm_cell_forward(const LstmLayerParams& p, const Eigen::VectorXd& x, const Eigen::VectorXd& h,
                       const Eigen::VectorXd& c, Eigen::VectorXd& h_out, Eigen::VectorXd& c_out) {
    if (x.size() != p.input_dim() || h.size() != p.width() || c.size() != p.width())
        fail_data("E_SHAPE", "lstm_cell_forward: input/state sizes do not match the layer");
    const Vector ai = p.w_i * x + p.u_i * h + p.b_i;
    const Vector af = p.w_f * x + p.u_f * h + p.b_f;
    const Vector ao = p.w_o * x + p.u_o * h + p.b_o;
    const Vector ag = p.w_g * x + p.u_g * h + p.b_g;
    const Vector i = ai.unaryExpr([](double z) { return detail::sigmoid(z); });
    const Vector f = af.unaryExpr([](double z) { return detail::sigmoid(z); });
    const Vector o = ao.unaryExpr([](double z) { return detail::sigmoid(z); });
    const Vector g = ag.array().tanh();
    c_out = f.cwiseProduct(c) + i.cwiseProduct(g);
    h_out = o.cwiseProduct(c_out.array().tanh().matrix());
}

RiskTrajectory forward(const ModelInput& input, const ModelParams& params) {
    if (input.steps() == 0) fail_data("E_EMPTY_SEQUENCE", "forward over an empty sequence");
    params.check_consistent();
    if (input.x.rows() != params.input_dim())
        fail_data("E_SHAPE", "input width " + std::to_string(input.x.rows()) +
                                 " does not match model input dim " +
                                 std::to_string(params.input_dim()));

    ForwardTape tape;
    forward_cached(input, params, tape);

    RiskTrajectory out;
    out.reserve(static_cast<std::size_t>(input.steps()));
    const Eigen::Index dt_row = input.x.rows() - 1;
    for (Eigen::Index n = 0; n < input.steps(); ++n) {
        RiskPoint p;
        p.t_minutes = input.t_minutes[static_cast<std::size_t>(n)];
        p.delta_t_hours = input.x(dt_row, n);
        p.risk = detail::sigmoid(tape.logits(n));
        out.push_back(p);
    }
    return out;
}

double loss_and_grads(const std::vector<LabeledSequence>& batch, const ModelParams& params,
                      ModelParams& grads, int bptt_truncation) {
    if (batch.empty()) fail_data("E_EMPTY_INPUT", "empty batch");
    params.check_consistent();
    grads = zero_like(params);

    const double batch_weight = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;

    ForwardTape tape;
    for (const auto& item : batch) {
        if (item.input.steps() == 0)
            fail_data("E_EMPTY_SEQUENCE", "encounter " + item.encounter_id + " has no steps");
        if (item.input.x.rows() != params.input_dim())
            fail_data("E_SHAPE", "encounter " + item.encounter_id + ": input width mismatch");

        forward_cached(item.input, params, tape);
        const Eigen::Index steps = item.input.steps();
        const double step_weight = batch_weight / static_cast<double>(steps);

        double encounter_loss = 0.0;
        Vector dlogits(steps);
        for (Eigen::Index n = 0; n < steps; ++n) {
            encounter_loss += detail::bce_from_logit(tape.logits(n), item.label);
            dlogits(n) = (detail::sigmoid(tape.logits(n)) - item.label) * step_weight;
        }
        encounter_loss *= step_weight;
        if (!std::isfinite(encounter_loss))
            fail_numeric("E_NAN_LOSS", "non-finite loss on encounter " + item.encounter_id);
        loss += encounter_loss;

        // Output head, then a full backward sweep per layer from the top down.
        const std::size_t top = params.layers.size() - 1;
        grads.w_out.noalias() += tape.layers[top].h * dlogits;
        grads.b_out += dlogits.sum();

        Matrix d_h_ext = params.w_out * dlogits.transpose();
        for (std::size_t l = params.layers.size(); l-- > 0;) {
            const Matrix& layer_in = l == 0 ? item.input.x : tape.layers[l - 1].h;
            d_h_ext = backward_layer(params.layers[l], layer_in, tape.layers[l], d_h_ext,
                                     grads.layers[l], bptt_truncation);
        }
    }
    return loss;
}

TrainResult train(const std::vector<EncounterMatrix>& data, const TrainConfig& config) {
    if (data.empty()) fail_data("E_EMPTY_INPUT", "no training encounters");
    if (config.learning_rate <= 0.0) fail_data("E_CONFIG", "learning rate must be > 0");
    if (config.epochs < 0) fail_data("E_CONFIG", "epochs must be >= 0");
    if (config.batch_size < 1) fail_data("E_CONFIG", "batch size must be >= 1");
    if (config.delta_t_min_hours > config.delta_t_max_hours || config.delta_t_min_hours < 0.0)
        fail_data("E_CONFIG", "delta-t augmentation range must satisfy 0 <= min <= max");

    bool any_pos = false, any_neg = false;
    for (const auto& m : data) (m.survived ? any_neg : any_pos) = true;
    if (!(any_pos && any_neg))
        fail_data("E_SINGLE_CLASS", "training data must contain both survivors and non-survivors");

    const double window_minutes =
        config.train_window_hours > 0.0 ? config.train_window_hours * 60.0 : -1.0;

    // Sequences are built once; only the horizon row changes between epochs.
    std::vector<LabeledSequence> sequences;
    sequences.reserve(data.size());
    std::size_t skipped = 0;
    for (const auto& m : data) {
        if (window_minutes >= 0.0 && (m.times.empty() || m.times.front() > window_minutes)) {
            ++skipped;
            continue;
        }
        LabeledSequence s;
        s.input = make_model_input(m, 0.0, window_minutes);
        s.label = m.survived ? 0.0 : 1.0;
        s.encounter_id = m.encounter_id;
        sequences.push_back(std::move(s));
    }
    if (sequences.empty())
        fail_data("E_EMPTY_INPUT", "no encounter has data inside the training window");
    (void)skipped;

    const auto input_dim = static_cast<int>(sequences.front().input.x.rows());
    for (const auto& s : sequences)
        if (s.input.x.rows() != input_dim)
            fail_data("E_SHAPE", "encounter " + s.encounter_id + ": inconsistent row count");

    Rng rng(config.seed);
    TrainResult result;
    result.params = init_params(input_dim, config.hidden_widths, rng.child(1).seed());

    const Eigen::Index dt_row = input_dim - 1;
    const double mid_dt = 0.5 * (config.delta_t_min_hours + config.delta_t_max_hours);
    auto set_delta_t = [&](LabeledSequence& s, double dt) { s.input.x.row(dt_row).setConstant(dt); };

    // Reference losses use the midpoint horizon so they are comparable
    // before and after training.
    auto full_loss = [&](const ModelParams& p) {
        for (auto& s : sequences) set_delta_t(s, mid_dt);
        ModelParams scratch;
        return loss_and_grads(sequences, p, scratch, config.bptt_truncation);
    };
    result.initial_loss = full_loss(result.params);

    ModelParams velocity = zero_like(result.params);
    ModelParams grads;
    std::vector<std::size_t> order(sequences.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= config.epochs && !result.diverged; ++epoch) {
        Rng epoch_rng = rng.child(2, static_cast<std::uint64_t>(epoch));
        for (auto& s : sequences)
            set_delta_t(s, epoch_rng.uniform(config.delta_t_min_hours, config.delta_t_max_hours));
        epoch_rng.shuffle(order);

        double epoch_loss_sum = 0.0;
        std::size_t counted = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            std::vector<LabeledSequence> batch;
            batch.reserve(stop - start);
            for (std::size_t k = start; k < stop; ++k) batch.push_back(sequences[order[k]]);

            ModelParams before_update = result.params;
            double batch_loss = 0.0;
            try {
                batch_loss = loss_and_grads(batch, result.params, grads, config.bptt_truncation);
            } catch (const Error& e) {
                if (e.tag() != "E_NAN_LOSS") throw;
                result.params = std::move(before_update);
                result.diverged = true;
                break;
            }
            epoch_loss_sum += batch_loss * static_cast<double>(batch.size());
            counted += batch.size();

            if (config.clip_norm > 0.0) {
                const double norm = global_grad_norm(grads);
                if (norm > config.clip_norm) {
                    const double scale = config.clip_norm / norm;
                    for_each_param(grads, grads, [&](auto& g, const auto&) { g *= scale; });
                    grads.b_out *= scale;
                }
            }

            // SGD with optional momentum: v = mu*v + g; p -= lr*v.
            for_each_param(velocity, grads, [&](auto& v, const auto& g) {
                v = config.momentum * v + g;
            });
            velocity.b_out = config.momentum * velocity.b_out + grads.b_out;
            for_each_param(result.params, velocity, [&](auto& p, const auto& v) {
                p -= config.learning_rate * v;
            });
            result.params.b_out -= config.learning_rate * velocity.b_out;

            // An update that overflows counts as divergence too; keep the
            // last finite state.
            if (!params_finite(result.params)) {
                result.params = std::move(before_update);
                result.diverged = true;
                break;
            }
        }
        if (result.diverged) break;
        result.epoch_loss.push_back(epoch_loss_sum / static_cast<double>(counted));
        result.completed_epochs = epoch;
    }

    if (config.epochs == 0) {
        result.final_loss = result.initial_loss;
    } else if (result.diverged) {
        // Params are the last finite state, but with pathological inputs even
        // those can have a non-finite reference loss.
        try {
            result.final_loss = full_loss(result.params);
        } catch (const Error& e) {
            if (e.tag() != "E_NAN_LOSS") throw;
            result.final_loss = std::numeric_limits<double>::quiet_NaN();
        }
    } else {
        result.final_loss = full_loss(result.params);
    }
    return result;
}

double predict_at(const EncounterMatrix& matrix, double observe_until_minutes, double delta_t_hours,
                  const ModelParams& params) {
    const ModelInput input = make_model_input(matrix, delta_t_hours, observe_until_minutes);
    return forward(input, params).back().risk;
}

}  // namespace icudyn
