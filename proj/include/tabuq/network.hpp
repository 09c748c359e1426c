#pragma once

#include <cstdint>
#include <vector>

#include "tabuq/variational.hpp"

namespace tabuq {

// Feed-forward binary classifier shape: ReLU hidden layers, one sigmoid
// output unit. Input width is data-driven.
struct NetworkSpec {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden = {128, 128};

    void validate() const;
    // {input, hidden..., 1}
    std::vector<std::size_t> layer_dims() const;
};

struct BnnModel {
    NetworkSpec spec;
    VariationalParams params;
    MixturePrior prior;
    std::uint64_t init_seed = 0;
    std::size_t trained_epochs = 0;
};

// Point-estimate twin of the BNN, used as the deterministic baseline.
struct DeterministicModel {
    NetworkSpec spec;
    std::vector<LayerWeights> layers;
    std::size_t trained_epochs = 0;
};

// mu ~ U(-0.2, 0.2), rho ~ U(-5, -4), reproducible per seed.
BnnModel init_bnn(const NetworkSpec& spec, const MixturePrior& prior, std::uint64_t seed);
DeterministicModel init_deterministic(const NetworkSpec& spec, std::uint64_t seed);

// Logits for a batch (n x input_dim) given concrete layer weights; n x 1.
Matrix forward_logits(const NetworkSpec& spec, const std::vector<LayerWeights>& layers,
                      const Matrix& x);

// Class-1 probabilities, strictly inside (0,1) for finite inputs.
Matrix forward(const BnnModel& model, const WeightSample& sample, const Matrix& x);
Matrix forward_det(const DeterministicModel& model, const Matrix& x);

// The posterior-mean point network (the eps = 0 draw).
DeterministicModel mean_network(const BnnModel& model);

// Tape-side forward pass to the logit column for training. w and b hold one
// tape node per layer, outermost first.
Var logits_on_tape(Tape& t, const NetworkSpec& spec, const std::vector<Var>& w,
                   const std::vector<Var>& b, const Matrix& x);

}  // namespace tabuq
