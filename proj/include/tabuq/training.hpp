#pragma once

#include <cstdint>
#include <vector>

#include "tabuq/network.hpp"

namespace tabuq {

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 256;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    // Monte Carlo samples per training step.
    std::size_t mc_samples = 1;

    enum class KlWeighting { Uniform, Geometric };
    KlWeighting kl_weighting = KlWeighting::Uniform;

    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainHistory {
    std::vector<double> elbo;
    std::vector<double> nll;
    std::vector<double> kl;
    std::vector<double> val_bce;
};

struct ElboValue {
    double total = 0.0;
    double nll = 0.0;
    double kl = 0.0;
};

// Per-minibatch KL weights for one epoch; they always sum to 1 so the epoch
// total estimates the full-dataset objective.
std::vector<double> kl_batch_weights(std::size_t n_batches, TrainConfig::KlWeighting scheme);

// Negated one-sample ELBO estimate for a batch:
//   total = sum of BCE-with-logits + kl_weight * KL-MC-term,
// with the KL evaluated at the same weight draw as the likelihood.
ElboValue elbo_loss(const BnnModel& model, const Matrix& x, const std::vector<int>& y,
                    const std::vector<LayerNoise>& noise, double kl_weight);

// Same objective plus reverse-mode gradients for every posterior parameter,
// ordered per layer as {mu_w, rho_w, mu_b, rho_b}.
struct ElboGradients {
    ElboValue value;
    std::vector<Matrix> grads;
};
ElboGradients elbo_gradients(const BnnModel& model, const Matrix& x, const std::vector<int>& y,
                             const std::vector<LayerNoise>& noise, double kl_weight);

// Parameter matrices in the canonical flatten order used by the optimizer.
std::vector<Matrix*> flatten_params(VariationalParams& params);
std::vector<Matrix*> flatten_params(std::vector<LayerWeights>& layers);

class AdamState {
public:
    AdamState() = default;
    explicit AdamState(const std::vector<Matrix*>& params);

    std::size_t step_count() const { return step_; }
    const std::vector<Matrix>& first_moment() const { return m_; }
    const std::vector<Matrix>& second_moment() const { return v_; }

    friend void adam_step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads,
                          AdamState& state, const TrainConfig& config);

private:
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
    std::size_t step_ = 0;
};

// One bias-corrected Adam update. Aborts with a diagnostic on non-finite
// gradients.
void adam_step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads,
               AdamState& state, const TrainConfig& config);

// Minibatch Bayes-by-backprop training; deterministic for a fixed config.
// Validation BCE is evaluated on the posterior-mean network, against
// (val_x, val_y) when given, else against the training split.
TrainHistory train(BnnModel& model, const Matrix& x, const std::vector<int>& y,
                   const TrainConfig& config, const Matrix* val_x = nullptr,
                   const std::vector<int>* val_y = nullptr);

// Identical loop without weight sampling or the KL term.
TrainHistory train_deterministic(DeterministicModel& model, const Matrix& x,
                                 const std::vector<int>& y, const TrainConfig& config,
                                 const Matrix* val_x = nullptr,
                                 const std::vector<int>* val_y = nullptr);

}  // namespace tabuq
