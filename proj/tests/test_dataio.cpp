#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "tabuq/dataio.hpp"
#include "tabuq/gbdt.hpp"
#include "tabuq/metrics.hpp"

using namespace tabuq;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

SyntheticSpec small_spec(std::uint64_t seed) {
    SyntheticSpec spec;
    spec.n_features = 8;
    spec.n_train = 2000;
    spec.n_test = 500;
    spec.n_ood = 400;
    spec.seed = seed;
    return spec;
}

}  // namespace

TEST_CASE("generate_synthetic is deterministic per seed") {
    const SyntheticData a = generate_synthetic(small_spec(5));
    const SyntheticData b = generate_synthetic(small_spec(5));
    const SyntheticData c = generate_synthetic(small_spec(6));
    CHECK(a.train.x == b.train.x);
    CHECK(a.train.y == b.train.y);
    CHECK(a.test.x == b.test.x);
    CHECK(a.ood.x == b.ood.x);
    CHECK_FALSE(a.train.x == c.train.x);
    CHECK(a.train.subgroup.front() == "core");
    CHECK(a.ood.subgroup.front() == "shifted");
}

TEST_CASE("zero subgroup shift makes the ood split indistinguishable") {
    SyntheticSpec spec = small_spec(7);
    spec.subgroup_shift = 0.0;
    spec.subgroup_cov_scale = 1.0;
    spec.subgroup_label_shift = 0.0;
    spec.n_train = 3000;
    spec.n_ood = 3000;
    const SyntheticData d = generate_synthetic(spec);

    // A discriminator trained to tell core from ood on half the rows should
    // sit at chance on the held-out half.
    const std::size_t n_half = d.train.n() / 2, o_half = d.ood.n() / 2;
    const auto build = [&](std::size_t core_from, std::size_t ood_from, std::size_t core_n,
                           std::size_t ood_n) {
        std::pair<Matrix, std::vector<int>> out{Matrix(core_n + ood_n, spec.n_features), {}};
        out.second.resize(core_n + ood_n);
        for (std::size_t i = 0; i < core_n; ++i) {
            for (std::size_t j = 0; j < spec.n_features; ++j)
                out.first(i, j) = d.train.x(core_from + i, j);
            out.second[i] = 0;
        }
        for (std::size_t i = 0; i < ood_n; ++i) {
            for (std::size_t j = 0; j < spec.n_features; ++j)
                out.first(core_n + i, j) = d.ood.x(ood_from + i, j);
            out.second[core_n + i] = 1;
        }
        return out;
    };
    const auto [xtr, ytr] = build(0, 0, n_half, o_half);
    const auto [xev, yev] = build(n_half, o_half, n_half, o_half);
    GbdtConfig config;
    config.n_trees = 20;
    const GbdtModel disc = train_gbdt(xtr, ytr, config);
    const double auc = auroc(predict_gbdt(disc, xev), yev);
    CHECK(auc > 0.44);
    CHECK(auc < 0.56);
}

TEST_CASE("label base rate tracks the configured prior") {
    SyntheticSpec spec;
    spec.n_features = 12;
    spec.n_train = 45000;
    spec.n_test = 5000;
    spec.n_ood = 10;
    spec.class_prior = 0.35;
    spec.seed = 8;
    const SyntheticData d = generate_synthetic(spec);
    double rate = 0.0;
    for (int y : d.train.y) rate += y;
    for (int y : d.test.y) rate += y;
    rate /= static_cast<double>(d.train.n() + d.test.n());
    CHECK(rate == doctest::Approx(0.35).epsilon(0.02 / 0.35));
}

TEST_CASE("a logistic fit recovers the generator's coefficient signs") {
    SyntheticSpec spec;
    spec.n_features = 10;
    spec.n_train = 50000;
    spec.n_test = 100;
    spec.n_ood = 10;
    spec.seed = 21;
    const SyntheticData d = generate_synthetic(spec);

    // Plain gradient-descent logistic regression as the sanity oracle.
    const std::size_t n = d.train.n(), dim = spec.n_features;
    std::vector<double> w(dim, 0.0);
    double b = 0.0;
    for (int iter = 0; iter < 300; ++iter) {
        std::vector<double> gw(dim, 0.0);
        double gb = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double z = b;
            for (std::size_t j = 0; j < dim; ++j) z += w[j] * d.train.x(i, j);
            const double err = sigmoid_scalar(z) - d.train.y[i];
            for (std::size_t j = 0; j < dim; ++j) gw[j] += err * d.train.x(i, j);
            gb += err;
        }
        for (std::size_t j = 0; j < dim; ++j) w[j] -= 0.5 * gw[j] / static_cast<double>(n);
        b -= 0.5 * gb / static_cast<double>(n);
    }

    // The fitted signs must agree with the generator's calibrated linear
    // coefficients wherever those are clearly nonzero.
    double cmax = 0.0;
    for (double c : d.label_coefficients) cmax = std::max(cmax, std::fabs(c));
    std::size_t checked = 0, agreed = 0;
    for (std::size_t j = 0; j < dim; ++j) {
        if (std::fabs(d.label_coefficients[j]) < 0.25 * cmax) continue;
        ++checked;
        if ((d.label_coefficients[j] > 0) == (w[j] > 0)) ++agreed;
    }
    CHECK(checked >= 3);
    CHECK(agreed == checked);
}

TEST_CASE("csv round-trip preserves values, labels, subgroups and missing cells") {
    SyntheticData d = generate_synthetic(small_spec(9));
    d.test.x(3, 2) = std::numeric_limits<double>::quiet_NaN();
    const std::string path = temp_path("tabuq_roundtrip.csv");
    write_csv(d.test, path, "config_digest=deadbeef");

    CsvSchema schema;
    schema.subgroup_column = "subgroup";
    const Dataset back = load_csv(path, schema);
    REQUIRE(back.n() == d.test.n());
    REQUIRE(back.dim() == d.test.dim());
    CHECK(back.feature_names == d.test.feature_names);
    CHECK(back.y == d.test.y);
    CHECK(back.subgroup == d.test.subgroup);
    for (std::size_t i = 0; i < back.n(); ++i)
        for (std::size_t j = 0; j < back.dim(); ++j) {
            if (i == 3 && j == 2)
                CHECK(std::isnan(back.x(i, j)));
            else
                CHECK(back.x(i, j) == d.test.x(i, j));
        }
    std::remove(path.c_str());
}

TEST_CASE("csv loader accepts CRLF line endings") {
    const std::string path = temp_path("tabuq_crlf.csv");
    {
        std::ofstream f(path, std::ios::binary);
        f << "a,b,label\r\n1.5,2.5,1\r\n3.5,,0\r\n";
    }
    const Dataset ds = load_csv(path, CsvSchema{});
    REQUIRE(ds.n() == 2);
    CHECK(ds.x(0, 0) == 1.5);
    CHECK(ds.y == std::vector<int>{1, 0});
    CHECK(std::isnan(ds.x(1, 1)));
    std::remove(path.c_str());
}

TEST_CASE("csv loader reports schema and parse problems precisely") {
    const std::string path = temp_path("tabuq_bad.csv");
    {
        std::ofstream f(path);
        f << "a,b,label\n1.0,2.0,1\nx,2.0,0\n";
    }
    CHECK_THROWS_WITH_AS(load_csv(path, CsvSchema{}), doctest::Contains("line 3"),
                         std::invalid_argument);
    {
        std::ofstream f(path);
        f << "a,b,label\n1.0,2.0,1\n2.0,3.0\n";
    }
    CHECK_THROWS_WITH_AS(load_csv(path, CsvSchema{}), doctest::Contains("line 3"),
                         std::invalid_argument);
    {
        std::ofstream f(path);
        f << "a,b,label\n1.0,2.0,2\n";
    }
    CHECK_THROWS_WITH_AS(load_csv(path, CsvSchema{}), doctest::Contains("label"),
                         std::invalid_argument);
    {
        std::ofstream f(path);
        f << "a,b,outcome\n1.0,2.0,1\n";
    }
    CHECK_THROWS_WITH_AS(load_csv(path, CsvSchema{}), doctest::Contains("'label' not found"),
                         std::invalid_argument);
    {
        CsvSchema schema;
        schema.feature_columns = {"a", "missing_col"};
        std::ofstream f(path);
        f << "a,b,label\n1.0,2.0,1\n";
    }
    CsvSchema schema;
    schema.feature_columns = {"a", "missing_col"};
    CHECK_THROWS_WITH_AS(load_csv(path, schema), doctest::Contains("'missing_col' not found"),
                         std::invalid_argument);
    std::remove(path.c_str());
}

TEST_CASE("preprocess: the 8-IQR window from the worked example") {
    // Fit feature values {1,3,5,7,9}: Q1=3, Q3=7, window [-29, 39].
    Dataset fit;
    fit.feature_names = {"v"};
    fit.x = Matrix(5, 1);
    const double vals[5] = {1, 3, 5, 7, 9};
    for (std::size_t i = 0; i < 5; ++i) fit.x(i, 0) = vals[i];
    fit.y = {0, 1, 0, 1, 0};

    const Preprocessor pp = Preprocessor::fit(fit);
    CHECK(pp.stats().q1[0] == doctest::Approx(3.0));
    CHECK(pp.stats().q3[0] == doctest::Approx(7.0));
    CHECK(pp.stats().window_lo[0] == doctest::Approx(-29.0));
    CHECK(pp.stats().window_hi[0] == doctest::Approx(39.0));

    Dataset probe;
    probe.feature_names = {"v"};
    probe.x = Matrix(3, 1);
    probe.x(0, 0) = 1000.0;  // removed
    probe.x(1, 0) = 38.0;    // kept
    probe.x(2, 0) = -29.0;   // kept (boundary)
    probe.y = {1, 0, 1};
    const Dataset out = pp.apply(probe);
    REQUIRE(out.n() == 2);
    CHECK(out.y == std::vector<int>{0, 1});
}

TEST_CASE("preprocess is idempotent on already-standardized data") {
    Rng rng(31);
    Dataset ds;
    ds.feature_names = {"a", "b", "c"};
    ds.x = tabuq::testing::random_matrix(500, 3, rng, -3.0, 3.0);
    ds.y.assign(500, 0);
    for (std::size_t i = 0; i < 250; ++i) ds.y[i] = 1;

    const Dataset once = Preprocessor::fit(ds).apply(ds);
    const Dataset twice = Preprocessor::fit(once).apply(once);
    REQUIRE(once.n() == twice.n());
    for (std::size_t i = 0; i < once.x.size(); ++i)
        CHECK(std::fabs(once.x[i] - twice.x[i]) < 1e-12);
}

TEST_CASE("statistics come from the fit split only") {
    Rng rng(32);
    Dataset train;
    train.feature_names = {"a", "b"};
    train.x = tabuq::testing::random_matrix(300, 2, rng);
    train.y.assign(300, 1);
    for (std::size_t i = 0; i < 150; ++i) train.y[i] = 0;

    const Preprocessor pp = Preprocessor::fit(train);
    const std::vector<double> mean_before = pp.stats().mean;

    Dataset test;
    test.feature_names = {"a", "b"};
    test.x = tabuq::testing::random_matrix(100, 2, rng);
    test.y.assign(100, 0);
    test.y[0] = 1;
    const Dataset t1 = pp.apply(test);
    CHECK(t1.n() == 100);
    // Perturb the test data wildly; the fitted statistics must not move and
    // the transform stays the same affine map.
    for (std::size_t i = 0; i < test.x.size(); ++i) test.x[i] *= 5.0;
    const Dataset t2 = pp.apply(test);
    CHECK(pp.stats().mean == mean_before);
    for (std::size_t j = 0; j < 2; ++j)
        CHECK(t2.x(0, j) ==
              doctest::Approx((test.x(0, j) - pp.stats().mean[j]) / pp.stats().sd[j]));
}

TEST_CASE("missing cells are imputed with fit means, optionally flagged") {
    Dataset train;
    train.feature_names = {"a", "b"};
    train.x = Matrix(4, 2);
    train.x(0, 0) = 1.0;
    train.x(1, 0) = 3.0;
    train.x(2, 0) = std::numeric_limits<double>::quiet_NaN();
    train.x(3, 0) = 2.0;
    for (std::size_t i = 0; i < 4; ++i) train.x(i, 1) = static_cast<double>(i);
    train.y = {0, 1, 0, 1};

    {
        const Preprocessor pp = Preprocessor::fit(train);
        const Dataset out = pp.apply(train);
        REQUIRE(out.n() == 4);
        CHECK(out.dim() == 2);
        // Imputed cell standardizes to exactly zero (it equals the mean).
        CHECK(out.x(2, 0) == doctest::Approx(0.0));
        CHECK(out.x.all_finite());
    }
    {
        PreprocessOptions opts;
        opts.add_missing_indicators = true;
        const Preprocessor pp = Preprocessor::fit(train, opts);
        const Dataset out = pp.apply(train);
        CHECK(out.dim() == 3);
        CHECK(out.feature_names.back() == "a_missing");
        CHECK(out.x(2, 2) == 1.0);
        CHECK(out.x(0, 2) == 0.0);
    }
}

TEST_CASE("zero-variance features standardize with sd 1 and a warning") {
    Dataset train;
    train.feature_names = {"flat", "ok"};
    train.x = Matrix(10, 2);
    for (std::size_t i = 0; i < 10; ++i) {
        train.x(i, 0) = 7.0;
        train.x(i, 1) = static_cast<double>(i);
    }
    train.y.assign(10, 0);
    train.y[1] = 1;
    const Preprocessor pp = Preprocessor::fit(train);
    CHECK(pp.stats().sd[0] == 1.0);
    REQUIRE(!pp.warnings().empty());
    CHECK(pp.warnings()[0].find("flat") != std::string::npos);
    const Dataset out = pp.apply(train);
    for (std::size_t i = 0; i < 10; ++i) CHECK(out.x(i, 0) == 0.0);
}

TEST_CASE("make_ood_holdout removes the subgroup and masks with training means") {
    Dataset pool;
    pool.feature_names = {"a", "b", "c"};
    pool.x = Matrix(6, 3);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            pool.x(i, j) = static_cast<double>(i * 3 + j);
    pool.y = {0, 1, 0, 1, 0, 1};
    pool.subgroup = {"core", "core", "core", "core", "newborn", "newborn"};

    const auto [train, ood] = make_ood_holdout(pool, "newborn", {"a"});
    CHECK(train.n() == 4);
    CHECK(ood.n() == 2);
    // Mean of 'a' over the four core rows: (0+3+6+9)/4 = 4.5.
    CHECK(ood.x(0, 0) == doctest::Approx(4.5));
    CHECK(ood.x(1, 0) == doctest::Approx(4.5));
    // Unmasked features untouched.
    CHECK(ood.x(0, 1) == 13.0);
    CHECK(ood.x(1, 2) == 17.0);

    // Masking nothing returns the raw subgroup.
    const auto [train2, ood2] = make_ood_holdout(pool, "newborn", {});
    CHECK(ood2.x(0, 0) == 12.0);

    // Masking everything collapses the subgroup onto the training mean row.
    const auto [train3, ood3] = make_ood_holdout(pool, "newborn", {"a", "b", "c"});
    for (std::size_t i = 0; i < ood3.n(); ++i) {
        CHECK(ood3.x(i, 0) == doctest::Approx(4.5));
        CHECK(ood3.x(i, 1) == doctest::Approx(5.5));
        CHECK(ood3.x(i, 2) == doctest::Approx(6.5));
    }

    CHECK_THROWS_AS(make_ood_holdout(pool, "absent", {"a"}), std::invalid_argument);
    CHECK_THROWS_AS(make_ood_holdout(pool, "newborn", {"zz"}), std::invalid_argument);
}

TEST_CASE("top_shifted_features ranks by magnitude") {
    const std::vector<double> shift = {0.1, -4.0, 2.0, 0.0, 3.0};
    const auto top = top_shifted_features(shift, 2);
    REQUIRE(top.size() == 2);
    CHECK(top[0] == 1);
    CHECK(top[1] == 4);
}

TEST_CASE("outlier removal and missing handling interact as specified") {
    // A record with a missing cell in one feature and an outlier in another
    // is removed; a record with only the missing cell survives imputation.
    Dataset train;
    train.feature_names = {"a", "b"};
    train.x = Matrix(40, 2);
    Rng rng(77);
    for (std::size_t i = 0; i < 40; ++i) {
        train.x(i, 0) = rng.uniform(0.0, 1.0);
        train.x(i, 1) = rng.uniform(0.0, 1.0);
    }
    train.y.assign(40, 0);
    train.y[0] = 1;
    const Preprocessor pp = Preprocessor::fit(train);

    Dataset probe;
    probe.feature_names = {"a", "b"};
    probe.x = Matrix(2, 2);
    probe.x(0, 0) = std::numeric_limits<double>::quiet_NaN();
    probe.x(0, 1) = 1e9;  // outlier -> row removed
    probe.x(1, 0) = std::numeric_limits<double>::quiet_NaN();
    probe.x(1, 1) = 0.5;  // kept, imputed
    probe.y = {1, 1};
    const Dataset out = pp.apply(probe);
    REQUIRE(out.n() == 1);
    CHECK(out.x.all_finite());
}
