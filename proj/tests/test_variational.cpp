#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "tabuq/variational.hpp"

using namespace tabuq;
using tabuq::testing::rel_err;

namespace {

VariationalParams single_weight_params(double mu, double rho) {
    VariationalParams p;
    LayerPosterior l;
    l.mu_w = Matrix(1, 1, mu);
    l.rho_w = Matrix(1, 1, rho);
    l.mu_b = Matrix(1, 0);
    l.rho_b = Matrix(1, 0);
    p.layers.push_back(std::move(l));
    return p;
}

std::vector<LayerNoise> single_noise(const VariationalParams& p, double eps) {
    auto noise = zero_noise(p);
    noise[0].eps_w[0] = eps;
    return noise;
}

}  // namespace

TEST_CASE("sample_weights reparameterization") {
    const VariationalParams p = single_weight_params(0.1, 0.0);
    {
        const WeightSample s = sample_weights(p, single_noise(p, 0.0));
        CHECK(s.layers[0].w[0] == 0.1);
    }
    {
        const WeightSample s = sample_weights(p, single_noise(p, 1.0));
        CHECK(s.layers[0].w[0] == doctest::Approx(0.1 + std::log(2.0)).epsilon(1e-14));
    }
    {
        auto bad = single_noise(p, 0.0);
        bad[0].eps_w = Matrix(2, 1, 0.0);
        CHECK_THROWS_AS(sample_weights(p, bad), std::invalid_argument);
    }
}

TEST_CASE("sample mean of w over many draws stays near mu") {
    const VariationalParams p = single_weight_params(0.0, 0.0);
    Rng rng(17);
    const std::size_t n = 100000;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        sum += sample_weights(p, draw_noise(p, rng)).layers[0].w[0];
    const double mean = sum / static_cast<double>(n);
    // sd of w is softplus(0) = ln 2; allow 3 standard errors.
    CHECK(std::fabs(mean) < 3.0 * std::log(2.0) / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("log_gaussian values") {
    CHECK(log_gaussian(0.0, 0.0, 1.0) == doctest::Approx(-0.9189385332046727).epsilon(1e-12));
    CHECK(log_gaussian(1.0, 0.0, 1.0) == doctest::Approx(-1.4189385332046727).epsilon(1e-12));
    CHECK(log_gaussian(0.5, 0.5, 2.0) == doctest::Approx(-1.612085713764618).epsilon(1e-12));
    CHECK_THROWS_AS(log_gaussian(0.0, 0.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(log_gaussian(0.0, 0.0, -1.0), std::invalid_argument);
}

TEST_CASE("log_prior of the scale mixture") {
    MixturePrior degenerate{1.0, 1.0, 0.5};
    CHECK(log_prior(0.7, degenerate) == doctest::Approx(log_gaussian(0.7, 0.0, 1.0)));

    MixturePrior mixed{0.5, 1.0, 0.5};
    // Direct-formula oracle: ln(0.5*N(0|0,1) + 0.5*N(0|0,0.25)).
    const double want = std::log(0.5 * 0.3989422804014327 + 0.5 * 0.7978845608028654);
    CHECK(want == doctest::Approx(-0.5134734250965083).epsilon(1e-12));
    CHECK(log_prior(0.0, mixed) == doctest::Approx(want).epsilon(1e-9));

    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        const double w = rng.uniform(-3.0, 3.0);
        CHECK(log_prior(w, mixed) == doctest::Approx(log_prior(-w, mixed)).epsilon(1e-14));
    }

    MixturePrior bad{1.5, 1.0, 0.5};
    CHECK_THROWS_AS(log_prior(0.0, bad), std::invalid_argument);
    MixturePrior bad2{0.5, 0.1, 0.5};  // sigma1 < sigma2
    CHECK_THROWS_AS(log_prior(0.0, bad2), std::invalid_argument);
}

TEST_CASE("log_prior is continuous and maximal at zero") {
    const MixturePrior prior{0.5, 1.0, std::exp(-6.0)};
    const double at_zero = log_prior(0.0, prior);
    double prev = log_prior(-2.0, prior);
    for (double w = -2.0 + 1e-3; w <= 2.0; w += 1e-3) {
        const double cur = log_prior(w, prior);
        CHECK(std::fabs(cur - prev) < 1.0);  // no jumps on a fine grid
        CHECK(cur <= at_zero + 1e-12);
        prev = cur;
    }
}

TEST_CASE("kl_mc_term is zero when prior equals posterior at the draw") {
    // Posterior N(0, softplus(rho)) with eps=0 draws w=0; prior pi=1 with
    // sigma1 = softplus(rho) has the same density there.
    const double rho = 0.3;
    const VariationalParams p = single_weight_params(0.0, rho);
    const WeightSample s = sample_weights(p, single_noise(p, 0.0));
    const MixturePrior prior{1.0, softplus_scalar(rho), softplus_scalar(rho)};
    CHECK(kl_mc_term(s, p, prior) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("kl_mc_term single-weight value matches direct evaluation") {
    const VariationalParams p = single_weight_params(0.0, 0.0);
    const WeightSample s = sample_weights(p, single_noise(p, 1.0));
    const MixturePrior prior{1.0, 1.0, 1.0};
    const double w = std::log(2.0);  // softplus(0) * 1
    const double want = log_gaussian(w, 0.0, std::log(2.0)) - log_gaussian(w, 0.0, 1.0);
    CHECK(kl_mc_term(s, p, prior) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("averaged kl_mc_term over many draws is nonnegative") {
    const VariationalParams p = single_weight_params(0.2, -1.0);
    const MixturePrior prior{0.5, 1.0, std::exp(-6.0)};
    Rng rng(23);
    const std::size_t n = 10000;
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double kl = kl_mc_term(sample_weights(p, draw_noise(p, rng)), p, prior);
        sum += kl;
        sumsq += kl * kl;
    }
    const double mean = sum / static_cast<double>(n);
    const double var = sumsq / static_cast<double>(n) - mean * mean;
    const double se = std::sqrt(std::max(var, 0.0) / static_cast<double>(n));
    CHECK(mean > -3.0 * se);
}

TEST_CASE("reparameterization derivatives: dw/dmu = 1, dw/drho = eps*sigmoid(rho)") {
    Rng rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        const double mu = rng.uniform(-1.0, 1.0);
        const double rho = rng.uniform(-3.0, 1.0);
        const double eps = rng.uniform(-2.0, 2.0);

        Tape t;
        const TapedGaussian g = tape_sample(t, Matrix(1, 1, mu), Matrix(1, 1, rho),
                                            Matrix(1, 1, eps));
        t.backward(t.sum(g.w));
        CHECK(std::fabs(t.grad(g.mu)[0] - 1.0) < 1e-10);
        CHECK(std::fabs(t.grad(g.rho)[0] - eps * sigmoid_scalar(rho)) < 1e-10);
    }
}

TEST_CASE("tape kl pieces agree with the scalar kl_mc_term") {
    Rng rng(41);
    VariationalParams p;
    LayerPosterior l;
    l.mu_w = tabuq::testing::random_matrix(3, 2, rng, -0.5, 0.5);
    l.rho_w = tabuq::testing::random_matrix(3, 2, rng, -3.0, 0.0);
    l.mu_b = tabuq::testing::random_matrix(1, 2, rng, -0.5, 0.5);
    l.rho_b = tabuq::testing::random_matrix(1, 2, rng, -3.0, 0.0);
    p.layers.push_back(l);
    const MixturePrior prior{0.5, 1.0, std::exp(-6.0)};

    auto noise = draw_noise(p, rng);
    const WeightSample s = sample_weights(p, noise);

    Tape t;
    const TapedGaussian gw = tape_sample(t, l.mu_w, l.rho_w, noise[0].eps_w);
    const TapedGaussian gb = tape_sample(t, l.mu_b, l.rho_b, noise[0].eps_b);
    const Var kl = t.sub(t.add(tape_log_q(t, gw), tape_log_q(t, gb)),
                         t.add(tape_log_prior(t, gw.w, prior), tape_log_prior(t, gb.w, prior)));
    CHECK(rel_err(t.scalar(kl), kl_mc_term(s, p, prior)) < 1e-12);
}
