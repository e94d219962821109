#pragma once

// Versioned binary checkpoint container shared by the RNN and the static
// baselines.
//
// Layout (all integers little-endian):
//   bytes 0..7   magic "ICDYNCKP"
//   u32          format version (currently 1)
//   u32          model type: 1 = rnn, 2 = lr, 3 = mlp
//   u32          layer count L
//   L x (u32,u32) per-layer (input_dim, width)
//   payload      row-major IEEE-754 doubles, little-endian, in fixed order:
//     rnn: per layer W_i,W_f,W_o,W_g, U_i,U_f,U_o,U_g, b_i,b_f,b_o,b_g; then w_out, b_out
//     lr:  w, b                       (header: 1 layer, (features, 1))
//     mlp: w1, b1, w2, b2             (header: 2 layers, (features, hidden), (hidden, 1))
//
// A sidecar text manifest "<path>.manifest.json" records the shapes and an
// FNV-1a 64 checksum of the payload; load verifies it when present.

#include <cstdint>
#include <string>
#include <vector>

#include "icudyn/baselines.hpp"
#include "icudyn/model.hpp"

namespace icudyn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class ModelType : std::uint32_t { Rnn = 1, LogisticRegression = 2, Mlp = 3 };

const char* to_string(ModelType t);

std::uint64_t fnv1a64(const void* data, std::size_t size);
std::uint64_t fnv1a64_file(const std::string& path);

void save_params(const ModelParams& params, const std::string& path);
void save_params(const LinearModel& model, const std::string& path);
void save_params(const MlpModel& model, const std::string& path);

// Reads only the header.
ModelType peek_model_type(const std::string& path);

// expected_widths, when nonempty, must match the stored layer widths
// (and expected_input_dim the stored input dim) or loading fails with a
// shape error naming the first mismatched layer.
ModelParams load_rnn_params(const std::string& path, int expected_input_dim = -1,
                            const std::vector<int>& expected_widths = {});
LinearModel load_lr_params(const std::string& path);
MlpModel load_mlp_params(const std::string& path);

}  // namespace icudyn
