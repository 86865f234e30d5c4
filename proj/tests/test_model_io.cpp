#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "falldet/abod.hpp"
#include "falldet/model_io.hpp"
#include "falldet/rng.hpp"
#include "falldet/svm.hpp"

using namespace falldet;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
    const fs::path dir = fs::temp_directory_path() / "falldet_model_io_tests";
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_SUITE_BEGIN("model_io");

TEST_CASE("abod model round trip is lossless") {
    Rng rng(17);
    std::vector<FeatureVector> refs(8, FeatureVector(5));
    for (auto& r : refs)
        for (double& v : r) v = rng.normal() * 7.3;
    AbodParams params;
    params.knn_k = 4;
    AbodModel m = make_abod_model(refs, RefOrigin::External, params);
    m.origins[2] = RefOrigin::User;
    m.pending = 3;

    const fs::path p = scratch_dir() / "abod.fdm";
    save_model(m, p);
    CHECK(peek_model_kind(p) == ModelKind::Abod);

    const AbodModel back = load_abod_model(p);
    CHECK(back.refs == m.refs);
    CHECK(back.origins == m.origins);
    CHECK(back.threshold == m.threshold);
    CHECK(back.pending == m.pending);
    CHECK(back.params.quantile == m.params.quantile);
    CHECK(back.params.safety == m.params.safety);
    CHECK(back.params.cap == m.params.cap);
    CHECK(back.params.recal_interval == m.params.recal_interval);
    CHECK(back.params.knn_k == m.params.knn_k);
    CHECK(back.params.dup_epsilon == m.params.dup_epsilon);

    SUBCASE("re-serialization is byte-identical") {
        CHECK(serialize_model(back) == serialize_model(m));
    }
    SUBCASE("uncalibrated threshold survives as none") {
        m.threshold.reset();
        m.params.knn_k.reset();
        save_model(m, p);
        const AbodModel again = load_abod_model(p);
        CHECK_FALSE(again.threshold.has_value());
        CHECK_FALSE(again.params.knn_k.has_value());
    }
}

TEST_CASE("svm model round trip is lossless") {
    Rng rng(18);
    SvmModel m;
    for (int i = 0; i < 6; ++i) {
        m.support_vectors.push_back({rng.normal(), rng.normal(), rng.normal()});
        m.coeffs.push_back(rng.normal());
    }
    m.bias = -0.1234567890123456789;
    m.gamma = 1.0 / 3.0;
    m.c = 10.0;

    const fs::path p = scratch_dir() / "svm.fdm";
    save_model(m, p);
    CHECK(peek_model_kind(p) == ModelKind::Svm);

    const SvmModel back = load_svm_model(p);
    CHECK(back.support_vectors == m.support_vectors);
    CHECK(back.coeffs == m.coeffs);
    CHECK(back.bias == m.bias);
    CHECK(back.gamma == m.gamma);
    CHECK(back.c == m.c);
    CHECK(serialize_model(back) == serialize_model(m));
}

TEST_CASE("rejects garbage and mismatched kinds") {
    const fs::path p = scratch_dir() / "junk.fdm";
    std::ofstream(p) << "not a model\n";
    CHECK_THROWS_AS(peek_model_kind(p), Error);
    CHECK_THROWS_AS(load_abod_model(p), Error);

    SvmModel svm;
    svm.support_vectors = {{1, 2}, {3, 4}};
    svm.coeffs = {0.5, -0.5};
    save_model(svm, p);
    CHECK_THROWS_AS(load_abod_model(p), Error);

    SUBCASE("truncated file") {
        std::string text = serialize_model(svm);
        text.resize(text.size() / 2);
        std::ofstream(p, std::ios::binary) << text;
        CHECK_THROWS_AS(load_svm_model(p), Error);
    }
}

TEST_SUITE_END();
