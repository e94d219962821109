#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "icudyn/checkpoint.hpp"
#include "icudyn/errors.hpp"
#include "icudyn/rng.hpp"
#include "support.hpp"

using icudyn::Error;
using icudyn::LinearModel;
using icudyn::MlpModel;
using icudyn::ModelParams;
using icudyn::ModelType;

namespace {

void flip_byte(const std::filesystem::path& path, std::size_t offset_from_end) {
    auto bytes = testsup::slurp(path);
    REQUIRE(bytes.size() > offset_from_end);
    bytes[bytes.size() - 1 - offset_from_end] =
        static_cast<char>(bytes[bytes.size() - 1 - offset_from_end] ^ 0x5a);
    testsup::spit(path, bytes);
}

}  // namespace

TEST_SUITE("checkpoint") {

TEST_CASE("fnv1a64 matches the published test vectors") {
    CHECK(icudyn::fnv1a64("", 0) == 0xcbf29ce484222325ULL);
    CHECK(icudyn::fnv1a64("a", 1) == 0xaf63dc4c8601ec8cULL);
    CHECK(icudyn::fnv1a64("foobar", 6) == 0x85944171f73967e8ULL);
}

TEST_CASE("rnn params survive a round trip bit for bit") {
    testsup::TempDir dir;
    const auto path = (dir / "model.ckpt").string();
    const auto params = icudyn::init_params(5, {6, 4, 3}, 2);
    icudyn::save_params(params, path);
    CHECK(std::filesystem::exists(path + ".manifest.json"));

    const auto loaded = icudyn::load_rnn_params(path, 5, {6, 4, 3});
    CHECK(testsup::flatten(loaded) == testsup::flatten(params));
    CHECK(icudyn::peek_model_type(path) == ModelType::Rnn);
}

TEST_CASE("lr params survive a round trip bit for bit") {
    testsup::TempDir dir;
    const auto path = (dir / "lr.ckpt").string();
    icudyn::Rng rng(4);
    LinearModel model;
    model.w = Eigen::VectorXd::NullaryExpr(9, [&](Eigen::Index) { return rng.normal(0.0, 2.0); });
    model.b = -0.321;
    icudyn::save_params(model, path);

    const auto loaded = icudyn::load_lr_params(path);
    CHECK((loaded.w.array() == model.w.array()).all());
    CHECK(loaded.b == model.b);
    CHECK(icudyn::peek_model_type(path) == ModelType::LogisticRegression);
}

TEST_CASE("mlp params survive a round trip bit for bit") {
    testsup::TempDir dir;
    const auto path = (dir / "mlp.ckpt").string();
    icudyn::Rng rng(5);
    MlpModel model;
    model.w1 = Eigen::MatrixXd::NullaryExpr(7, 4, [&](Eigen::Index, Eigen::Index) {
        return rng.normal(0.0, 1.0);
    });
    model.b1 = Eigen::VectorXd::NullaryExpr(7, [&](Eigen::Index) { return rng.normal(0.0, 1.0); });
    model.w2 = Eigen::VectorXd::NullaryExpr(7, [&](Eigen::Index) { return rng.normal(0.0, 1.0); });
    model.b2 = 1.5;
    icudyn::save_params(model, path);

    const auto loaded = icudyn::load_mlp_params(path);
    CHECK((loaded.w1.array() == model.w1.array()).all());
    CHECK((loaded.b1.array() == model.b1.array()).all());
    CHECK((loaded.w2.array() == model.w2.array()).all());
    CHECK(loaded.b2 == model.b2);
    CHECK(icudyn::peek_model_type(path) == ModelType::Mlp);
}

TEST_CASE("saving a loaded model reproduces the file byte for byte") {
    testsup::TempDir dir;
    const auto first = (dir / "a.ckpt").string();
    const auto second = (dir / "b.ckpt").string();
    icudyn::save_params(icudyn::init_params(4, {5, 5}, 9), first);
    icudyn::save_params(icudyn::load_rnn_params(first), second);
    CHECK(testsup::files_equal(first, second));
    CHECK(testsup::files_equal(first + ".manifest.json", second + ".manifest.json"));
}

TEST_CASE("a corrupted payload fails the manifest checksum") {
    testsup::TempDir dir;
    const auto path = (dir / "model.ckpt").string();
    icudyn::save_params(icudyn::init_params(3, {4}, 7), path);
    flip_byte(path, 11);  // somewhere inside the payload doubles

    try {
        icudyn::load_rnn_params(path);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.tag() == "E_CHECKSUM");
    }
}

TEST_CASE("a truncated file is rejected outright, not loaded partially") {
    testsup::TempDir dir;
    const auto path = (dir / "model.ckpt").string();
    icudyn::save_params(icudyn::init_params(3, {4, 4}, 7), path);
    std::filesystem::remove(path + ".manifest.json");  // isolate the format check

    auto bytes = testsup::slurp(path);
    testsup::spit(path, bytes.substr(0, bytes.size() - 9));
    try {
        icudyn::load_rnn_params(path);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.tag() == "E_FORMAT");
        CHECK(std::string(e.what()).find("truncated") != std::string::npos);
    }
}

TEST_CASE("trailing bytes after the payload are an error") {
    testsup::TempDir dir;
    const auto path = (dir / "model.ckpt").string();
    icudyn::save_params(icudyn::init_params(3, {4}, 7), path);
    std::filesystem::remove(path + ".manifest.json");
    testsup::spit(path, testsup::slurp(path) + std::string(1, '\0'));
    try {
        icudyn::load_rnn_params(path);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.tag() == "E_FORMAT");
        CHECK(std::string(e.what()).find("trailing") != std::string::npos);
    }
}

TEST_CASE("unknown versions and wrong magic are rejected") {
    testsup::TempDir dir;
    const auto path = (dir / "model.ckpt").string();
    icudyn::save_params(icudyn::init_params(3, {4}, 7), path);

    auto bytes = testsup::slurp(path);
    auto patched = bytes;
    patched[8] = 2;  // version field follows the 8-byte magic
    testsup::spit(path, patched);
    try {
        icudyn::load_rnn_params(path);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.tag() == "E_FORMAT");
        CHECK(std::string(e.what()).find("version") != std::string::npos);
    }

    patched = bytes;
    patched[0] = 'X';
    testsup::spit(path, patched);
    try {
        icudyn::load_rnn_params(path);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.tag() == "E_FORMAT");
        CHECK(std::string(e.what()).find("not a checkpoint") != std::string::npos);
    }
}

TEST_CASE("model kinds cannot be confused for each other") {
    testsup::TempDir dir;
    const auto rnn_path = (dir / "rnn.ckpt").string();
    const auto lr_path = (dir / "lr.ckpt").string();
    icudyn::save_params(icudyn::init_params(3, {4}, 7), rnn_path);
    LinearModel lr;
    lr.w = Eigen::VectorXd::Zero(3);
    icudyn::save_params(lr, lr_path);

    try {
        icudyn::load_rnn_params(lr_path);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.tag() == "E_FORMAT");
        CHECK(std::string(e.what()).find("expected an rnn checkpoint") != std::string::npos);
    }
    CHECK_THROWS_AS(icudyn::load_lr_params(rnn_path), Error);
    CHECK_THROWS_AS(icudyn::load_mlp_params(rnn_path), Error);
}

TEST_CASE("shape expectations name the first mismatched layer") {
    testsup::TempDir dir;
    const auto path = (dir / "model.ckpt").string();
    icudyn::save_params(icudyn::init_params(5, {6, 4, 3}, 2), path);

    try {
        icudyn::load_rnn_params(path, 5, {6, 5, 3});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.tag() == "E_SHAPE");
        CHECK(std::string(e.what()).find("layer 2") != std::string::npos);
    }
    try {
        icudyn::load_rnn_params(path, 7, {6, 4, 3});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.tag() == "E_SHAPE");
        CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
    }
    CHECK_THROWS_AS(icudyn::load_rnn_params(path, 5, {6, 4}), Error);
}

TEST_CASE("missing files raise an io error") {
    try {
        icudyn::load_rnn_params("/nonexistent/nowhere.ckpt");
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.tag() == "E_IO");
    }
}

}  // TEST_SUITE
