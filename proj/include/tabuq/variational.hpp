#pragma once

#include <cstdint>
#include <vector>

#include "tabuq/matrix.hpp"
#include "tabuq/rng.hpp"
#include "tabuq/tape.hpp"

namespace tabuq {

// Gaussian posterior parameters for one dense layer: weight matrix (in x out)
// and bias row (1 x out), each with a mean and a rho. sigma = softplus(rho).
struct LayerPosterior {
    Matrix mu_w, rho_w;
    Matrix mu_b, rho_b;
};

struct VariationalParams {
    std::vector<LayerPosterior> layers;

    // Entries in one (mu or rho) set, weights plus biases.
    std::size_t parameter_count() const;
};

// Two-component zero-mean Gaussian scale mixture. The defaults follow the
// usual Bayes-by-backprop recommendation; both are experiment-config knobs,
// never hard-coded downstream.
struct MixturePrior {
    double pi = 0.5;
    double sigma1 = 1.0;
    double sigma2 = 0.0024787521766663585;  // exp(-6)

    void validate() const;
};

struct LayerNoise {
    Matrix eps_w, eps_b;
};

struct LayerWeights {
    Matrix w, b;
};

// A concrete draw from the posterior together with the noise that produced
// it: w = mu + softplus(rho) * eps elementwise.
struct WeightSample {
    std::vector<LayerWeights> layers;
    std::vector<LayerNoise> noise;
};

std::vector<LayerNoise> draw_noise(const VariationalParams& params, Rng& rng);
std::vector<LayerNoise> zero_noise(const VariationalParams& params);

WeightSample sample_weights(const VariationalParams& params, std::vector<LayerNoise> noise);

// log N(w | mu, sigma^2); sigma must be positive.
double log_gaussian(double w, double mu, double sigma);

// log( pi N(w|0,s1^2) + (1-pi) N(w|0,s2^2) ), evaluated in log space.
double log_prior(double w, const MixturePrior& prior);

// Single-sample Monte Carlo KL estimate: sum over every sampled weight and
// bias of log q(w | mu, sigma) - log P(w).
double kl_mc_term(const WeightSample& sample, const VariationalParams& params,
                  const MixturePrior& prior);

// --- tape-side building blocks -------------------------------------------
// The training objective needs the same quantities recorded on a tape so the
// reparameterized gradients flow back into mu and rho.

struct TapedGaussian {
    Var mu, rho, sigma, w;
};

// Records mu and rho as leaves and builds w = mu + softplus(rho) * eps.
TapedGaussian tape_sample(Tape& t, const Matrix& mu, const Matrix& rho, const Matrix& eps);

// Sum over entries of log q(w | mu, sigma), as a 1x1 node.
Var tape_log_q(Tape& t, const TapedGaussian& g);

// Sum over entries of log P(w) under the mixture prior, as a 1x1 node.
Var tape_log_prior(Tape& t, Var w, const MixturePrior& prior);

}  // namespace tabuq
