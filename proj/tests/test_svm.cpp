#include <doctest.h>

#include <cmath>

#include "falldet/model_io.hpp"
#include "falldet/rng.hpp"
#include "falldet/svm.hpp"
#include "oracles.hpp"

using namespace falldet;

namespace {

// Two separable Gaussian blobs in 2D; ADL around (+2,+2), falls around (-2,-2).
void two_clusters(Rng& rng, std::size_t n_per_class, std::vector<FeatureVector>& xs,
                  std::vector<Label>& ys) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
        xs.push_back({2.0 + 0.4 * rng.normal(), 2.0 + 0.4 * rng.normal()});
        ys.push_back(Label::Adl);
        xs.push_back({-2.0 + 0.4 * rng.normal(), -2.0 + 0.4 * rng.normal()});
        ys.push_back(Label::Fall);
    }
}

}  // namespace

TEST_SUITE_BEGIN("svm");

TEST_CASE("rbf kernel values and properties") {
    CHECK(rbf_kernel({1, 2, 3}, {1, 2, 3}, 0.7) == 1.0);
    CHECK(rbf_kernel({0, 0}, {1, 0}, 1.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK_THROWS_WITH_AS(rbf_kernel({1, 2}, {1, 2, 3}, 1.0), "dimension mismatch", Error);
    CHECK_THROWS_WITH_AS(rbf_kernel({1, 2}, {1, 3}, 0.0), "gamma must be positive", Error);

    SUBCASE("monotone decay in gamma, symmetry, boundedness") {
        Rng rng(3);
        double prev = 1.0;
        for (double g : {0.1, 1.0, 10.0, 100.0}) {
            const double k = rbf_kernel({0, 0}, {0.5, 0.5}, g);
            CHECK(k < prev);
            CHECK(k > 0.0);
            prev = k;
        }
        for (int it = 0; it < 100; ++it) {
            FeatureVector a{rng.normal(), rng.normal(), rng.normal()};
            FeatureVector b{rng.normal(), rng.normal(), rng.normal()};
            const double k = rbf_kernel(a, b, 0.8);
            CHECK(k == rbf_kernel(b, a, 0.8));
            CHECK(k > 0.0);
            CHECK(k <= 1.0);
        }
    }
}

TEST_CASE("two symmetric points: both support vectors, zero bias") {
    const std::vector<FeatureVector> xs = {{1.0, 0.5}, {-1.0, -0.5}};
    const std::vector<Label> ys = {Label::Adl, Label::Fall};
    TrainConfig cfg;
    cfg.c = 10.0;
    cfg.gamma = 1.0;
    std::vector<double> alphas;
    const SvmModel m = train_smo(xs, ys, cfg, &alphas);
    CHECK(m.support_vectors.size() == 2);
    CHECK(std::fabs(m.bias) < 1e-3);
    CHECK(alphas[0] == doctest::Approx(alphas[1]).epsilon(1e-9));
}

TEST_CASE("XOR with an RBF kernel reaches full training accuracy") {
    const std::vector<FeatureVector> xs = {{0, 0}, {1, 1}, {0, 1}, {1, 0}};
    const std::vector<Label> ys = {Label::Adl, Label::Adl, Label::Fall, Label::Fall};
    TrainConfig cfg;
    cfg.c = 10.0;
    cfg.gamma = 1.0;
    std::vector<double> alphas;
    const SvmModel m = train_smo(xs, ys, cfg, &alphas);
    for (std::size_t i = 0; i < xs.size(); ++i) CHECK(predict(m, xs[i]) == ys[i]);

    std::string why;
    CHECK_MESSAGE(oracle::kkt_ok(xs, ys, alphas, m, cfg.c, cfg.kkt_tol, &why), why);
}

TEST_CASE("separable clusters: full accuracy and KKT conditions") {
    Rng rng(31);
    std::vector<FeatureVector> xs;
    std::vector<Label> ys;
    two_clusters(rng, 10, xs, ys);
    TrainConfig cfg;
    cfg.gamma = 0.5;
    std::vector<double> alphas;
    const SvmModel m = train_smo(xs, ys, cfg, &alphas);
    for (std::size_t i = 0; i < xs.size(); ++i) CHECK(predict(m, xs[i]) == ys[i]);

    std::string why;
    CHECK_MESSAGE(oracle::kkt_ok(xs, ys, alphas, m, cfg.c, cfg.kkt_tol, &why), why);
}

TEST_CASE("decision equals an independent kernel sum") {
    Rng rng(32);
    std::vector<FeatureVector> xs;
    std::vector<Label> ys;
    two_clusters(rng, 8, xs, ys);
    TrainConfig cfg;
    cfg.gamma = 0.7;
    const SvmModel m = train_smo(xs, ys, cfg);
    for (int it = 0; it < 50; ++it) {
        FeatureVector q{rng.uniform(-4, 4), rng.uniform(-4, 4)};
        CHECK(decision(m, q) == doctest::Approx(oracle::kernel_sum(m, q)).epsilon(1e-9));
    }
}

TEST_CASE("single support vector reference behaviour") {
    SvmModel m;
    m.support_vectors = {{1.0, 2.0}};
    m.coeffs = {1.0};
    m.bias = 0.0;
    m.gamma = 0.3;
    CHECK(decision(m, {1.0, 2.0}) == 1.0);

    SUBCASE("tie at exactly zero predicts ADL") {
        m.bias = -1.0;
        CHECK(decision(m, {1.0, 2.0}) == 0.0);
        CHECK(predict(m, {1.0, 2.0}) == Label::Adl);
    }
}

TEST_CASE("single-class input is rejected") {
    const std::vector<FeatureVector> xs = {{0, 0}, {1, 1}};
    const std::vector<Label> ys = {Label::Adl, Label::Adl};
    CHECK_THROWS_WITH_AS(train_smo(xs, ys, TrainConfig{}), "both classes required", Error);
}

TEST_CASE("duplicating every training point keeps confident predictions") {
    Rng rng(33);
    std::vector<FeatureVector> xs;
    std::vector<Label> ys;
    two_clusters(rng, 10, xs, ys);
    TrainConfig cfg;
    cfg.gamma = 0.5;
    const SvmModel m1 = train_smo(xs, ys, cfg);

    std::vector<FeatureVector> xs2 = xs;
    std::vector<Label> ys2 = ys;
    xs2.insert(xs2.end(), xs.begin(), xs.end());
    ys2.insert(ys2.end(), ys.begin(), ys.end());
    const SvmModel m2 = train_smo(xs2, ys2, cfg);

    for (double gx = -4.0; gx <= 4.0; gx += 0.5) {
        for (double gy = -4.0; gy <= 4.0; gy += 0.5) {
            const FeatureVector q{gx, gy};
            const double f1 = decision(m1, q);
            if (std::fabs(f1) <= 0.1) continue;  // skip the boundary band
            CHECK(std::signbit(f1) == std::signbit(decision(m2, q)));
        }
    }
}

TEST_CASE("training is deterministic under a fixed seed") {
    Rng rng(34);
    std::vector<FeatureVector> xs;
    std::vector<Label> ys;
    two_clusters(rng, 12, xs, ys);
    TrainConfig cfg;
    cfg.seed = 99;
    const SvmModel a = train_smo(xs, ys, cfg);
    const SvmModel b = train_smo(xs, ys, cfg);
    CHECK(serialize_model(a) == serialize_model(b));
}

TEST_SUITE_END();
