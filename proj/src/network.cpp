#include "tabuq/network.hpp"

namespace tabuq {

void NetworkSpec::validate() const {
    detail::require(input_dim > 0, "NetworkSpec: input_dim must be positive");
    for (std::size_t h : hidden)
        detail::require(h > 0, "NetworkSpec: hidden sizes must be positive");
}

std::vector<std::size_t> NetworkSpec::layer_dims() const {
    std::vector<std::size_t> dims;
    dims.push_back(input_dim);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(1);
    return dims;
}

namespace {
Matrix uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform(lo, hi);
    return m;
}
}  // namespace

BnnModel init_bnn(const NetworkSpec& spec, const MixturePrior& prior, std::uint64_t seed) {
    spec.validate();
    prior.validate();
    BnnModel model;
    model.spec = spec;
    model.prior = prior;
    model.init_seed = seed;
    Rng rng(seed);
    const auto dims = spec.layer_dims();
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        LayerPosterior p;
        p.mu_w = uniform_matrix(dims[l], dims[l + 1], -0.2, 0.2, rng);
        p.rho_w = uniform_matrix(dims[l], dims[l + 1], -5.0, -4.0, rng);
        p.mu_b = uniform_matrix(1, dims[l + 1], -0.2, 0.2, rng);
        p.rho_b = uniform_matrix(1, dims[l + 1], -5.0, -4.0, rng);
        model.params.layers.push_back(std::move(p));
    }
    return model;
}

DeterministicModel init_deterministic(const NetworkSpec& spec, std::uint64_t seed) {
    spec.validate();
    DeterministicModel model;
    model.spec = spec;
    Rng rng(seed);
    const auto dims = spec.layer_dims();
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        LayerWeights lw;
        lw.w = uniform_matrix(dims[l], dims[l + 1], -0.2, 0.2, rng);
        lw.b = uniform_matrix(1, dims[l + 1], -0.2, 0.2, rng);
        model.layers.push_back(std::move(lw));
    }
    return model;
}

Matrix forward_logits(const NetworkSpec& spec, const std::vector<LayerWeights>& layers,
                      const Matrix& x) {
    detail::require(x.cols() == spec.input_dim, "forward: input dimension mismatch");
    detail::require(layers.size() == spec.hidden.size() + 1, "forward: layer count mismatch");
    Matrix h = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Matrix z = matmul(h, layers[l].w);
        for (std::size_t r = 0; r < z.rows(); ++r) {
            double* row = z.row_ptr(r);
            for (std::size_t c = 0; c < z.cols(); ++c) row[c] += layers[l].b[c];
        }
        h = (l + 1 < layers.size()) ? relu(z) : std::move(z);
    }
    return h;
}

Matrix forward(const BnnModel& model, const WeightSample& sample, const Matrix& x) {
    return sigmoid(forward_logits(model.spec, sample.layers, x));
}

Matrix forward_det(const DeterministicModel& model, const Matrix& x) {
    return sigmoid(forward_logits(model.spec, model.layers, x));
}

DeterministicModel mean_network(const BnnModel& model) {
    DeterministicModel det;
    det.spec = model.spec;
    det.trained_epochs = model.trained_epochs;
    for (const auto& l : model.params.layers) det.layers.push_back({l.mu_w, l.mu_b});
    return det;
}

Var logits_on_tape(Tape& t, const NetworkSpec& spec, const std::vector<Var>& w,
                   const std::vector<Var>& b, const Matrix& x) {
    detail::require(x.cols() == spec.input_dim, "logits_on_tape: input dimension mismatch");
    detail::require(w.size() == spec.hidden.size() + 1 && b.size() == w.size(),
                    "logits_on_tape: layer count mismatch");
    Var h = t.constant(x);
    for (std::size_t l = 0; l < w.size(); ++l) {
        Var z = t.add_rowvec(t.matmul(h, w[l]), b[l]);
        h = (l + 1 < w.size()) ? t.relu(z) : z;
    }
    return h;
}

}  // namespace tabuq
