#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "tabuq/training.hpp"

using namespace tabuq;
using tabuq::testing::rel_err;

namespace {

BnnModel tiny_model(std::uint64_t seed = 3) {
    NetworkSpec spec;
    spec.input_dim = 3;
    spec.hidden = {2};
    return init_bnn(spec, MixturePrior{0.5, 1.0, std::exp(-6.0)}, seed);
}

struct TinyData {
    Matrix x;
    std::vector<int> y;
};

TinyData tiny_batch() {
    TinyData d;
    d.x = Matrix::from_rows({{0.3, -1.2, 0.5}, {1.1, 0.2, -0.4}, {-0.7, 0.9, 1.3}, {0.0, -0.3, -1.0}});
    d.y = {1, 0, 1, 0};
    return d;
}

// Two-feature linearly separable set.
TinyData separable(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    TinyData d;
    d.x = Matrix(n, 2);
    d.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double a = rng.uniform(-2.0, 2.0);
        const double b = rng.uniform(-2.0, 2.0);
        d.x(i, 0) = a;
        d.x(i, 1) = b;
        d.y[i] = a + b > 0.0 ? 1 : 0;
    }
    return d;
}

}  // namespace

TEST_CASE("kl batch weights sum to one") {
    for (std::size_t m : {1ul, 2ul, 7ul, 79ul, 500ul}) {
        for (auto scheme :
             {TrainConfig::KlWeighting::Uniform, TrainConfig::KlWeighting::Geometric}) {
            const auto w = kl_batch_weights(m, scheme);
            double sum = 0.0;
            for (double v : w) {
                CHECK(v > 0.0);
                sum += v;
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
    // Geometric weights decay by halves.
    const auto w = kl_batch_weights(4, TrainConfig::KlWeighting::Geometric);
    CHECK(w[0] == doctest::Approx(8.0 / 15.0).epsilon(1e-12));
    CHECK(w[3] == doctest::Approx(1.0 / 15.0).epsilon(1e-12));
}

TEST_CASE("elbo components combine as total = nll + kl_weight * kl") {
    const BnnModel m = tiny_model();
    const TinyData d = tiny_batch();
    Rng rng(5);
    const auto noise = draw_noise(m.params, rng);
    const ElboValue lo = elbo_loss(m, d.x, d.y, noise, 1e-9);
    const ElboValue hi = elbo_loss(m, d.x, d.y, noise, 1.0);
    CHECK(lo.nll == hi.nll);
    CHECK(lo.kl == hi.kl);
    CHECK(lo.total == doctest::Approx(lo.nll + 1e-9 * lo.kl).epsilon(1e-12));
    CHECK(hi.total == doctest::Approx(hi.nll + hi.kl).epsilon(1e-12));
    // kl_weight -> 0 recovers the pure likelihood term.
    CHECK(rel_err(lo.total, lo.nll) < 1e-6);
    CHECK(std::isfinite(hi.total));
}

TEST_CASE("single-record elbo at p=0.5 is ln2 plus weighted kl") {
    BnnModel m = tiny_model();
    for (auto& l : m.params.layers) {
        l.mu_w = Matrix(l.mu_w.rows(), l.mu_w.cols(), 0.0);
        l.mu_b = Matrix(l.mu_b.rows(), l.mu_b.cols(), 0.0);
    }
    const Matrix x = Matrix::from_rows({{0.4, -0.2, 1.0}});
    const std::vector<int> y = {1};
    // Zero noise keeps the sampled weights at mu = 0, so the logit is 0.
    const auto noise = zero_noise(m.params);
    const double kl_weight = 0.25;
    const ElboValue v = elbo_loss(m, x, y, noise, kl_weight);
    CHECK(v.nll == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(v.total == doctest::Approx(std::log(2.0) + kl_weight * v.kl).epsilon(1e-12));
}

TEST_CASE("elbo rejects bad labels and bad kl weights") {
    const BnnModel m = tiny_model();
    const TinyData d = tiny_batch();
    const auto noise = zero_noise(m.params);
    std::vector<int> bad = d.y;
    bad[1] = 2;
    CHECK_THROWS_AS(elbo_loss(m, d.x, bad, noise, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(elbo_loss(m, d.x, d.y, noise, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(elbo_loss(m, d.x, d.y, noise, 1.5), std::invalid_argument);
}

TEST_CASE("elbo gradients match central finite differences on a 3-2-1 network") {
    BnnModel model = tiny_model(11);
    const TinyData d = tiny_batch();
    Rng rng(13);
    const auto noise = draw_noise(model.params, rng);
    const double kl_weight = 0.5;

    const ElboGradients eg = elbo_gradients(model, d.x, d.y, noise, kl_weight);

    const auto params = flatten_params(model.params);
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        for (std::size_t i = 0; i < params[k]->size(); ++i) {
            const double keep = (*params[k])[i];
            (*params[k])[i] = keep + h;
            const double up = elbo_loss(model, d.x, d.y, noise, kl_weight).total;
            (*params[k])[i] = keep - h;
            const double down = elbo_loss(model, d.x, d.y, noise, kl_weight).total;
            (*params[k])[i] = keep;
            worst = std::max(worst, rel_err(eg.grads[k][i], (up - down) / (2.0 * h)));
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
    BnnModel m = tiny_model();
    const auto params = flatten_params(m.params);
    const VariationalParams before = m.params;
    AdamState state(params);
    std::vector<Matrix> grads;
    for (const Matrix* p : params) grads.emplace_back(p->rows(), p->cols(), 0.0);
    adam_step(params, grads, state, TrainConfig{});
    for (std::size_t l = 0; l < m.params.layers.size(); ++l)
        CHECK(m.params.layers[l].mu_w == before.layers[l].mu_w);
}

TEST_CASE("adam: first bias-corrected step has magnitude ~ learning rate") {
    Matrix w(1, 1, 2.0);
    std::vector<Matrix*> params = {&w};
    AdamState state(params);
    std::vector<Matrix> grads = {Matrix(1, 1, 1.0)};
    TrainConfig config;
    adam_step(params, grads, state, config);
    // mhat = 1, vhat = 1 => step = lr / (1 + eps)
    CHECK(w[0] == doctest::Approx(2.0 - 1e-3).epsilon(1e-9));
    CHECK(state.step_count() == 1);
}

TEST_CASE("adam: identical inputs update identically") {
    Matrix a(2, 2, 0.7), b(2, 2, 0.7);
    std::vector<Matrix*> pa = {&a}, pb = {&b};
    AdamState sa(pa), sb(pb);
    Rng rng(19);
    const Matrix g = tabuq::testing::random_matrix(2, 2, rng);
    TrainConfig config;
    for (int step = 0; step < 5; ++step) {
        adam_step(pa, {g}, sa, config);
        adam_step(pb, {g}, sb, config);
    }
    CHECK(a == b);
}

TEST_CASE("adam rejects non-finite gradients with a diagnostic") {
    Matrix w(1, 1, 0.0);
    std::vector<Matrix*> params = {&w};
    AdamState state(params);
    std::vector<Matrix> grads = {Matrix(1, 1, std::numeric_limits<double>::quiet_NaN())};
    CHECK_THROWS_WITH_AS(adam_step(params, grads, state, TrainConfig{}),
                         doctest::Contains("non-finite gradient"), std::runtime_error);
}

TEST_CASE("training is deterministic and improves the objective") {
    const TinyData d = separable(500, 101);
    TrainConfig config;
    config.epochs = 20;
    config.batch_size = 64;
    config.seed = 77;

    NetworkSpec spec;
    spec.input_dim = 2;
    spec.hidden = {8};
    const MixturePrior prior{0.5, 1.0, std::exp(-6.0)};

    BnnModel m1 = init_bnn(spec, prior, 55);
    BnnModel m2 = init_bnn(spec, prior, 55);
    const TrainHistory h1 = train(m1, d.x, d.y, config);
    const TrainHistory h2 = train(m2, d.x, d.y, config);

    for (std::size_t l = 0; l < m1.params.layers.size(); ++l) {
        CHECK(m1.params.layers[l].mu_w == m2.params.layers[l].mu_w);
        CHECK(m1.params.layers[l].rho_w == m2.params.layers[l].rho_w);
    }
    CHECK(h1.elbo == h2.elbo);
    CHECK(h1.val_bce.back() < h1.val_bce.front());
    CHECK(h1.elbo.back() < h1.elbo.front());
}

TEST_CASE("geometric KL weighting trains end to end") {
    const TinyData d = separable(400, 109);
    TrainConfig config;
    config.epochs = 12;
    config.batch_size = 64;
    config.seed = 81;
    config.kl_weighting = TrainConfig::KlWeighting::Geometric;
    NetworkSpec spec;
    spec.input_dim = 2;
    spec.hidden = {8};
    BnnModel m = init_bnn(spec, MixturePrior{0.5, 1.0, std::exp(-6.0)}, 57);
    const TrainHistory h = train(m, d.x, d.y, config);
    CHECK(h.elbo.back() < h.elbo.front());
    CHECK(h.val_bce.back() < h.val_bce.front());
}

TEST_CASE("deterministic baseline trains and improves") {
    const TinyData d = separable(500, 103);
    TrainConfig config;
    config.epochs = 15;
    config.batch_size = 64;
    config.seed = 79;
    NetworkSpec spec;
    spec.input_dim = 2;
    spec.hidden = {8};
    DeterministicModel det = init_deterministic(spec, 56);
    const TrainHistory h = train_deterministic(det, d.x, d.y, config);
    CHECK(h.val_bce.back() < h.val_bce.front());
    CHECK(h.nll.back() < h.nll.front());
}

TEST_CASE("training rejects an empty dataset") {
    BnnModel m = tiny_model();
    Matrix empty(0, 3);
    std::vector<int> y;
    CHECK_THROWS_AS(train(m, empty, y, TrainConfig{}), std::invalid_argument);
}

TEST_CASE("training aborts on numerical blowup with a diagnostic") {
    // All-ones means with 1e308 inputs overflow the first matmul to +inf,
    // which reaches the weight gradients.
    NetworkSpec spec;
    spec.input_dim = 8;
    spec.hidden = {4, 4};
    BnnModel m = init_bnn(spec, MixturePrior{}, 2);
    for (auto& l : m.params.layers) {
        l.mu_w = Matrix(l.mu_w.rows(), l.mu_w.cols(), 1.0);
        l.mu_b = Matrix(l.mu_b.rows(), l.mu_b.cols(), 0.0);
    }
    Matrix x(4, 8, 1e308);
    std::vector<int> y = {0, 0, 0, 0};
    TrainConfig config;
    config.epochs = 1;
    config.batch_size = 4;
    CHECK_THROWS_WITH_AS(train(m, x, y, config), doctest::Contains("non-finite"),
                         std::runtime_error);
}
