#include "icudyn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "icudyn/csv.hpp"
#include "icudyn/errors.hpp"

namespace icudyn {

namespace {

constexpr char kMagic[8] = {'I', 'C', 'D', 'Y', 'N', 'C', 'K', 'P'};

static_assert(std::numeric_limits<double>::is_iec559, "IEEE-754 doubles required");

// Encode/decode through an explicit byte order so checkpoints are portable.
void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
public:
    Reader(std::string bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }

    double f64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return std::bit_cast<double>(v);
    }

    void expect_magic() {
        need(8);
        if (std::memcmp(bytes_.data(), kMagic, 8) != 0)
            fail_data("E_FORMAT", path_ + ": not a checkpoint file");
        pos_ = 8;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }
    std::size_t payload_offset() const { return pos_; }
    const std::string& bytes() const { return bytes_; }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size())
            fail_data("E_FORMAT", path_ + ": truncated checkpoint");
    }
    std::string bytes_;
    std::string path_;
    std::size_t pos_ = 0;
};

struct LayerShape {
    std::uint32_t input_dim;
    std::uint32_t width;
};

void write_matrix(std::string& out, const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) put_f64(out, m(r, c));
}

void write_vector(std::string& out, const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) put_f64(out, v(i));
}

Eigen::MatrixXd read_matrix(Reader& in, Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = in.f64();
    return m;
}

Eigen::VectorXd read_vector(Reader& in, Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = in.f64();
    return v;
}

std::string header_bytes(ModelType type, const std::vector<LayerShape>& shapes) {
    std::string out(kMagic, 8);
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(type));
    put_u32(out, static_cast<std::uint32_t>(shapes.size()));
    for (const auto& s : shapes) {
        put_u32(out, s.input_dim);
        put_u32(out, s.width);
    }
    return out;
}

void write_file_with_manifest(const std::string& path, const std::string& bytes,
                              std::size_t payload_offset, ModelType type,
                              const std::vector<LayerShape>& shapes) {
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) fail_data("E_IO", "cannot write " + path);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) fail_data("E_IO", "write failed for " + path);
    }
    const std::uint64_t checksum =
        fnv1a64(bytes.data() + payload_offset, bytes.size() - payload_offset);

    std::string manifest = "{\n  \"format\": \"icudyn-checkpoint\",\n  \"version\": " +
                           std::to_string(kCheckpointVersion) + ",\n  \"model_type\": \"" +
                           to_string(type) + "\",\n  \"layers\": [";
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        if (i) manifest += ", ";
        manifest += "[" + std::to_string(shapes[i].input_dim) + ", " +
                    std::to_string(shapes[i].width) + "]";
    }
    manifest += "],\n  \"payload_fnv1a64\": \"" + [&] {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(checksum));
        return std::string(buf);
    }() + "\"\n}\n";

    std::ofstream mf(path + ".manifest.json", std::ios::trunc);
    if (!mf) fail_data("E_IO", "cannot write " + path + ".manifest.json");
    mf << manifest;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail_data("E_IO", "cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

// The manifest is advisory but when present the payload checksum must match.
void verify_manifest(const std::string& path, const std::string& bytes,
                     std::size_t payload_offset) {
    std::ifstream mf(path + ".manifest.json");
    if (!mf) return;
    std::string manifest((std::istreambuf_iterator<char>(mf)), std::istreambuf_iterator<char>());
    const std::string key = "\"payload_fnv1a64\": \"";
    const auto at = manifest.find(key);
    if (at == std::string::npos) return;
    const std::string stored = manifest.substr(at + key.size(), 16);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(
                      fnv1a64(bytes.data() + payload_offset, bytes.size() - payload_offset)));
    if (stored != buf)
        fail_data("E_CHECKSUM", path + ": payload checksum does not match its manifest");
}

struct Header {
    ModelType type;
    std::vector<LayerShape> shapes;
};

Header read_header(Reader& in, const std::string& path) {
    in.expect_magic();
    const std::uint32_t version = in.u32();
    if (version != kCheckpointVersion)
        fail_data("E_FORMAT", path + ": unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t type = in.u32();
    if (type < 1 || type > 3)
        fail_data("E_FORMAT", path + ": unknown model type " + std::to_string(type));
    const std::uint32_t n_layers = in.u32();
    if (n_layers == 0 || n_layers > 1024)
        fail_data("E_FORMAT", path + ": implausible layer count " + std::to_string(n_layers));
    Header h;
    h.type = static_cast<ModelType>(type);
    h.shapes.resize(n_layers);
    for (auto& s : h.shapes) {
        s.input_dim = in.u32();
        s.width = in.u32();
        if (s.input_dim == 0 || s.width == 0)
            fail_data("E_FORMAT", path + ": zero-sized layer in header");
    }
    return h;
}

}  // namespace

const char* to_string(ModelType t) {
    switch (t) {
        case ModelType::Rnn: return "rnn";
        case ModelType::LogisticRegression: return "lr";
        case ModelType::Mlp: return "mlp";
    }
    return "?";
}

std::uint64_t fnv1a64(const void* data, std::size_t size) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a64_file(const std::string& path) {
    const std::string bytes = slurp(path);
    return fnv1a64(bytes.data(), bytes.size());
}

void save_params(const ModelParams& params, const std::string& path) {
    params.check_consistent();
    std::vector<LayerShape> shapes;
    for (const auto& l : params.layers)
        shapes.push_back({static_cast<std::uint32_t>(l.input_dim()),
                          static_cast<std::uint32_t>(l.width())});
    std::string bytes = header_bytes(ModelType::Rnn, shapes);
    const std::size_t payload_offset = bytes.size();
    for (const auto& l : params.layers) {
        write_matrix(bytes, l.w_i);
        write_matrix(bytes, l.w_f);
        write_matrix(bytes, l.w_o);
        write_matrix(bytes, l.w_g);
        write_matrix(bytes, l.u_i);
        write_matrix(bytes, l.u_f);
        write_matrix(bytes, l.u_o);
        write_matrix(bytes, l.u_g);
        write_vector(bytes, l.b_i);
        write_vector(bytes, l.b_f);
        write_vector(bytes, l.b_o);
        write_vector(bytes, l.b_g);
    }
    write_vector(bytes, params.w_out);
    put_f64(bytes, params.b_out);
    write_file_with_manifest(path, bytes, payload_offset, ModelType::Rnn, shapes);
}

void save_params(const LinearModel& model, const std::string& path) {
    if (model.w.size() == 0) fail_data("E_SHAPE", "cannot save an empty linear model");
    const std::vector<LayerShape> shapes = {
        {static_cast<std::uint32_t>(model.w.size()), 1}};
    std::string bytes = header_bytes(ModelType::LogisticRegression, shapes);
    const std::size_t payload_offset = bytes.size();
    write_vector(bytes, model.w);
    put_f64(bytes, model.b);
    write_file_with_manifest(path, bytes, payload_offset, ModelType::LogisticRegression, shapes);
}

void save_params(const MlpModel& model, const std::string& path) {
    if (model.w1.size() == 0 || model.w2.size() != model.w1.rows())
        fail_data("E_SHAPE", "cannot save an inconsistent mlp model");
    const std::vector<LayerShape> shapes = {
        {static_cast<std::uint32_t>(model.w1.cols()), static_cast<std::uint32_t>(model.w1.rows())},
        {static_cast<std::uint32_t>(model.w1.rows()), 1}};
    std::string bytes = header_bytes(ModelType::Mlp, shapes);
    const std::size_t payload_offset = bytes.size();
    write_matrix(bytes, model.w1);
    write_vector(bytes, model.b1);
    write_vector(bytes, model.w2);
    put_f64(bytes, model.b2);
    write_file_with_manifest(path, bytes, payload_offset, ModelType::Mlp, shapes);
}

ModelType peek_model_type(const std::string& path) {
    Reader in(slurp(path), path);
    return read_header(in, path).type;
}

ModelParams load_rnn_params(const std::string& path, int expected_input_dim,
                            const std::vector<int>& expected_widths) {
    Reader in(slurp(path), path);
    const Header h = read_header(in, path);
    if (h.type != ModelType::Rnn)
        fail_data("E_FORMAT", path + ": expected an rnn checkpoint, found " + to_string(h.type));
    verify_manifest(path, in.bytes(), in.payload_offset());

    if (expected_input_dim > 0 &&
        h.shapes.front().input_dim != static_cast<std::uint32_t>(expected_input_dim))
        fail_data("E_SHAPE", path + ": layer 1 input dim " +
                                 std::to_string(h.shapes.front().input_dim) + ", expected " +
                                 std::to_string(expected_input_dim));
    if (!expected_widths.empty()) {
        if (expected_widths.size() != h.shapes.size())
            fail_data("E_SHAPE", path + ": " + std::to_string(h.shapes.size()) +
                                     " layers, expected " + std::to_string(expected_widths.size()));
        for (std::size_t l = 0; l < h.shapes.size(); ++l)
            if (h.shapes[l].width != static_cast<std::uint32_t>(expected_widths[l]))
                fail_data("E_SHAPE", path + ": layer " + std::to_string(l + 1) + " width " +
                                         std::to_string(h.shapes[l].width) + ", expected " +
                                         std::to_string(expected_widths[l]));
    }

    ModelParams params;
    for (const auto& s : h.shapes) {
        LstmLayerParams l;
        const auto in_dim = static_cast<Eigen::Index>(s.input_dim);
        const auto w = static_cast<Eigen::Index>(s.width);
        l.w_i = read_matrix(in, w, in_dim);
        l.w_f = read_matrix(in, w, in_dim);
        l.w_o = read_matrix(in, w, in_dim);
        l.w_g = read_matrix(in, w, in_dim);
        l.u_i = read_matrix(in, w, w);
        l.u_f = read_matrix(in, w, w);
        l.u_o = read_matrix(in, w, w);
        l.u_g = read_matrix(in, w, w);
        l.b_i = read_vector(in, w);
        l.b_f = read_vector(in, w);
        l.b_o = read_vector(in, w);
        l.b_g = read_vector(in, w);
        params.layers.push_back(std::move(l));
    }
    params.w_out = read_vector(in, static_cast<Eigen::Index>(h.shapes.back().width));
    params.b_out = in.f64();
    if (in.remaining() != 0) fail_data("E_FORMAT", path + ": trailing bytes after payload");
    params.check_consistent();
    return params;
}

LinearModel load_lr_params(const std::string& path) {
    Reader in(slurp(path), path);
    const Header h = read_header(in, path);
    if (h.type != ModelType::LogisticRegression)
        fail_data("E_FORMAT", path + ": expected an lr checkpoint, found " + to_string(h.type));
    if (h.shapes.size() != 1 || h.shapes[0].width != 1)
        fail_data("E_FORMAT", path + ": malformed lr layer table");
    verify_manifest(path, in.bytes(), in.payload_offset());

    LinearModel model;
    model.w = read_vector(in, static_cast<Eigen::Index>(h.shapes[0].input_dim));
    model.b = in.f64();
    if (in.remaining() != 0) fail_data("E_FORMAT", path + ": trailing bytes after payload");
    return model;
}

MlpModel load_mlp_params(const std::string& path) {
    Reader in(slurp(path), path);
    const Header h = read_header(in, path);
    if (h.type != ModelType::Mlp)
        fail_data("E_FORMAT", path + ": expected an mlp checkpoint, found " + to_string(h.type));
    if (h.shapes.size() != 2 || h.shapes[1].width != 1 ||
        h.shapes[0].width != h.shapes[1].input_dim)
        fail_data("E_FORMAT", path + ": malformed mlp layer table");
    verify_manifest(path, in.bytes(), in.payload_offset());

    MlpModel model;
    const auto features = static_cast<Eigen::Index>(h.shapes[0].input_dim);
    const auto hidden = static_cast<Eigen::Index>(h.shapes[0].width);
    model.w1 = read_matrix(in, hidden, features);
    model.b1 = read_vector(in, hidden);
    model.w2 = read_vector(in, hidden);
    model.b2 = in.f64();
    if (in.remaining() != 0) fail_data("E_FORMAT", path + ": trailing bytes after payload");
    return model;
}

}  // namespace icudyn
