#pragma once

// Glue shared by the test binaries: conversions into the oracle formats,
// parameter flattening for finite differences, scratch directories, and a
// small wrapper for driving the CLI executable.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "icudyn/baselines.hpp"
#include "icudyn/model.hpp"
#include "oracles.hpp"

namespace testsup {

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)});
}

// ------------------------------------------------------------- conversions

inline std::vector<std::vector<double>> columns_of(const Eigen::MatrixXd& m) {
    std::vector<std::vector<double>> cols(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        cols[static_cast<std::size_t>(c)].resize(static_cast<std::size_t>(m.rows()));
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            cols[static_cast<std::size_t>(c)][static_cast<std::size_t>(r)] = m(r, c);
    }
    return cols;
}

inline std::vector<std::vector<double>> nested(const Eigen::MatrixXd& m) {
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        rows[static_cast<std::size_t>(r)].resize(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = m(r, c);
    }
    return rows;
}

inline std::vector<double> flat(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

inline oracles::ScalarNet to_scalar_net(const icudyn::ModelParams& p) {
    oracles::ScalarNet net;
    for (const auto& layer : p.layers) {
        oracles::ScalarLayer sl;
        sl.i = {nested(layer.w_i), nested(layer.u_i), flat(layer.b_i)};
        sl.f = {nested(layer.w_f), nested(layer.u_f), flat(layer.b_f)};
        sl.o = {nested(layer.w_o), nested(layer.u_o), flat(layer.b_o)};
        sl.g = {nested(layer.w_g), nested(layer.u_g), flat(layer.b_g)};
        net.layers.push_back(std::move(sl));
    }
    net.w_out = flat(p.w_out);
    net.b_out = p.b_out;
    return net;
}

// ------------------------------------------- parameter vector (FD harness)

// Fixed flattening order: per layer W_i..W_g, U_i..U_g, b_i..b_g (row-major),
// then w_out, b_out. Matches nothing in the library on purpose except that
// the same function is applied to both params and grads.
inline void flatten_into(const Eigen::MatrixXd& m, std::vector<double>& out) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
}

inline std::vector<double> flatten(const icudyn::ModelParams& p) {
    std::vector<double> out;
    out.reserve(p.parameter_count());
    for (const auto& l : p.layers) {
        for (const auto* m : {&l.w_i, &l.w_f, &l.w_o, &l.w_g, &l.u_i, &l.u_f, &l.u_o, &l.u_g})
            flatten_into(*m, out);
        for (const auto* v : {&l.b_i, &l.b_f, &l.b_o, &l.b_g})
            for (Eigen::Index i = 0; i < v->size(); ++i) out.push_back((*v)(i));
    }
    for (Eigen::Index i = 0; i < p.w_out.size(); ++i) out.push_back(p.w_out(i));
    out.push_back(p.b_out);
    return out;
}

inline void unflatten_from(const std::vector<double>& theta, std::size_t& k, Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = theta[k++];
}

inline void unflatten(const std::vector<double>& theta, icudyn::ModelParams& p) {
    std::size_t k = 0;
    for (auto& l : p.layers) {
        for (auto* m : {&l.w_i, &l.w_f, &l.w_o, &l.w_g, &l.u_i, &l.u_f, &l.u_o, &l.u_g})
            unflatten_from(theta, k, *m);
        for (auto* v : {&l.b_i, &l.b_f, &l.b_o, &l.b_g})
            for (Eigen::Index i = 0; i < v->size(); ++i) (*v)(i) = theta[k++];
    }
    for (Eigen::Index i = 0; i < p.w_out.size(); ++i) p.w_out(i) = theta[k++];
    p.b_out = theta[k++];
}

// Central differences of an arbitrary scalar function of the parameters.
template <typename LossFn>
std::vector<double> central_differences(const icudyn::ModelParams& params, LossFn loss,
                                        double eps) {
    icudyn::ModelParams p = params;
    std::vector<double> theta = flatten(p);
    std::vector<double> grad(theta.size());
    for (std::size_t k = 0; k < theta.size(); ++k) {
        const double saved = theta[k];
        theta[k] = saved + eps;
        unflatten(theta, p);
        const double up = loss(p);
        theta[k] = saved - eps;
        unflatten(theta, p);
        const double down = loss(p);
        theta[k] = saved;
        grad[k] = (up - down) / (2.0 * eps);
    }
    unflatten(theta, p);
    return grad;
}

// All-zero parameters of the given shape (init_params seeds nonzero values
// and a forget bias of 1, so build directly).
inline icudyn::ModelParams zero_params(int input_dim, const std::vector<int>& widths) {
    icudyn::ModelParams p;
    int in = input_dim;
    for (int w : widths) {
        icudyn::LstmLayerParams l;
        l.w_i = Eigen::MatrixXd::Zero(w, in);
        l.w_f = l.w_i;
        l.w_o = l.w_i;
        l.w_g = l.w_i;
        l.u_i = Eigen::MatrixXd::Zero(w, w);
        l.u_f = l.u_i;
        l.u_o = l.u_i;
        l.u_g = l.u_i;
        l.b_i = Eigen::VectorXd::Zero(w);
        l.b_f = l.b_i;
        l.b_o = l.b_i;
        l.b_g = l.b_i;
        p.layers.push_back(std::move(l));
        in = w;
    }
    p.w_out = Eigen::VectorXd::Zero(widths.back());
    p.b_out = 0.0;
    return p;
}

// ---------------------------------------------------------------- file I/O

inline std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void spit(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
}

inline bool files_equal(const std::filesystem::path& a, const std::filesystem::path& b) {
    return slurp(a) == slurp(b);
}

// Fresh directory under the system temp root, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& stem = "icudyn_test") {
        std::random_device rd;
        for (int attempt = 0; attempt < 100; ++attempt) {
            auto candidate = std::filesystem::temp_directory_path() /
                             (stem + "_" + std::to_string(rd() % 1000000000));
            std::error_code ec;
            if (std::filesystem::create_directory(candidate, ec)) {
                path_ = candidate;
                return;
            }
        }
        throw std::runtime_error("could not create a scratch directory");
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

// ------------------------------------------------------------ CLI spawning

struct CliResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr interleaved

    bool contains(const std::string& needle) const {
        return output.find(needle) != std::string::npos;
    }
};

inline std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out.push_back(c);
    }
    out += "'";
    return out;
}

// Runs the pipeline executable with the given arguments; `env_prefix` may
// hold VAR=value assignments.
inline CliResult run_cli(const std::vector<std::string>& args, const std::string& env_prefix = "") {
    std::string cmd = env_prefix.empty() ? "" : env_prefix + " ";
    cmd += shell_quote(ICUDYN_CLI_PATH);
    for (const auto& a : args) cmd += " " + shell_quote(a);
    cmd += " 2>&1";

    CliResult result;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) throw std::runtime_error("popen failed");
    char buf[4096];
    std::size_t got = 0;
    while ((got = fread(buf, 1, sizeof(buf), pipe)) > 0) result.output.append(buf, got);
    const int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

}  // namespace testsup
