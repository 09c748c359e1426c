#include "tabuq/training.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace tabuq {

void TrainConfig::validate() const {
    detail::require(epochs > 0, "TrainConfig: epochs must be positive");
    detail::require(batch_size > 0, "TrainConfig: batch_size must be positive");
    detail::require(learning_rate > 0.0, "TrainConfig: learning_rate must be positive");
    detail::require(beta1 > 0.0 && beta1 < 1.0, "TrainConfig: beta1 must be in (0,1)");
    detail::require(beta2 > 0.0 && beta2 < 1.0, "TrainConfig: beta2 must be in (0,1)");
    detail::require(epsilon > 0.0, "TrainConfig: epsilon must be positive");
    detail::require(mc_samples > 0, "TrainConfig: mc_samples must be positive");
}

std::vector<double> kl_batch_weights(std::size_t n_batches, TrainConfig::KlWeighting scheme) {
    detail::require(n_batches > 0, "kl_batch_weights: need at least one batch");
    std::vector<double> w(n_batches);
    if (scheme == TrainConfig::KlWeighting::Uniform) {
        std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(n_batches));
    } else {
        // 2^(M-i) / (2^M - 1), computed as 2^-i / (1 - 2^-M) to stay finite
        // for any M.
        const double norm = 1.0 - std::pow(0.5, static_cast<double>(n_batches));
        for (std::size_t i = 0; i < n_batches; ++i)
            w[i] = std::pow(0.5, static_cast<double>(i + 1)) / norm;
    }
    return w;
}

namespace {

Matrix labels_to_column(const std::vector<int>& y) {
    Matrix m(y.size(), 1);
    for (std::size_t i = 0; i < y.size(); ++i) {
        detail::require(y[i] == 0 || y[i] == 1, "labels must be 0 or 1");
        m[i] = static_cast<double>(y[i]);
    }
    return m;
}

struct ElboGraph {
    Tape tape;
    std::vector<TapedGaussian> taped;  // per layer: weights then biases
    Var nll, kl, total;
};

ElboGraph build_elbo_graph(const BnnModel& model, const Matrix& x, const Matrix& ycol,
                           const std::vector<LayerNoise>& noise, double kl_weight) {
    detail::require(kl_weight > 0.0 && kl_weight <= 1.0, "elbo: kl_weight must be in (0,1]");
    detail::require(noise.size() == model.params.layers.size(),
                    "elbo: noise layer count mismatch");
    detail::require(x.rows() == ycol.rows(), "elbo: feature/label row mismatch");

    ElboGraph g;
    Tape& t = g.tape;
    std::vector<Var> w(model.params.layers.size()), b(model.params.layers.size());
    Var log_q, log_p;
    bool first = true;
    for (std::size_t l = 0; l < model.params.layers.size(); ++l) {
        const auto& p = model.params.layers[l];
        TapedGaussian tw = tape_sample(t, p.mu_w, p.rho_w, noise[l].eps_w);
        TapedGaussian tb = tape_sample(t, p.mu_b, p.rho_b, noise[l].eps_b);
        w[l] = tw.w;
        b[l] = tb.w;
        Var q = t.add(tape_log_q(t, tw), tape_log_q(t, tb));
        Var pr = t.add(tape_log_prior(t, tw.w, model.prior),
                       tape_log_prior(t, tb.w, model.prior));
        log_q = first ? q : t.add(log_q, q);
        log_p = first ? pr : t.add(log_p, pr);
        first = false;
        g.taped.push_back(tw);
        g.taped.push_back(tb);
    }
    g.kl = t.sub(log_q, log_p);

    Var logits = logits_on_tape(t, model.spec, w, b, x);
    g.nll = t.sum(t.bce_with_logits(logits, ycol));
    g.total = t.add(g.nll, t.scale(g.kl, kl_weight));
    return g;
}

double mean_bce_from_logits(const Matrix& logits, const std::vector<int>& y) {
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
        acc += softplus_scalar(logits[i]) - static_cast<double>(y[i]) * logits[i];
    return y.empty() ? 0.0 : acc / static_cast<double>(y.size());
}

void check_finite_grads(const std::vector<Matrix>& grads, const std::string& where) {
    for (const auto& g : grads)
        if (!g.all_finite())
            throw std::runtime_error("training aborted: non-finite gradient (" + where + ")");
}

struct Batch {
    Matrix x;
    std::vector<int> y;
};

Batch gather_batch(const Matrix& x, const std::vector<int>& y,
                   const std::vector<std::size_t>& order, std::size_t begin, std::size_t end) {
    Batch b;
    b.x = Matrix(end - begin, x.cols());
    b.y.resize(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
        const std::size_t src = order[i];
        const double* from = x.row_ptr(src);
        double* to = b.x.row_ptr(i - begin);
        for (std::size_t c = 0; c < x.cols(); ++c) to[c] = from[c];
        b.y[i - begin] = y[src];
    }
    return b;
}

}  // namespace

ElboValue elbo_loss(const BnnModel& model, const Matrix& x, const std::vector<int>& y,
                    const std::vector<LayerNoise>& noise, double kl_weight) {
    ElboGraph g = build_elbo_graph(model, x, labels_to_column(y), noise, kl_weight);
    return {g.tape.scalar(g.total), g.tape.scalar(g.nll), g.tape.scalar(g.kl)};
}

ElboGradients elbo_gradients(const BnnModel& model, const Matrix& x, const std::vector<int>& y,
                             const std::vector<LayerNoise>& noise, double kl_weight) {
    ElboGraph g = build_elbo_graph(model, x, labels_to_column(y), noise, kl_weight);
    g.tape.backward(g.total);
    ElboGradients out;
    out.value = {g.tape.scalar(g.total), g.tape.scalar(g.nll), g.tape.scalar(g.kl)};
    for (std::size_t l = 0; l < model.params.layers.size(); ++l) {
        const TapedGaussian& tw = g.taped[2 * l];
        const TapedGaussian& tb = g.taped[2 * l + 1];
        out.grads.push_back(g.tape.grad(tw.mu));
        out.grads.push_back(g.tape.grad(tw.rho));
        out.grads.push_back(g.tape.grad(tb.mu));
        out.grads.push_back(g.tape.grad(tb.rho));
    }
    return out;
}

std::vector<Matrix*> flatten_params(VariationalParams& params) {
    std::vector<Matrix*> out;
    for (auto& l : params.layers) {
        out.push_back(&l.mu_w);
        out.push_back(&l.rho_w);
        out.push_back(&l.mu_b);
        out.push_back(&l.rho_b);
    }
    return out;
}

std::vector<Matrix*> flatten_params(std::vector<LayerWeights>& layers) {
    std::vector<Matrix*> out;
    for (auto& l : layers) {
        out.push_back(&l.w);
        out.push_back(&l.b);
    }
    return out;
}

AdamState::AdamState(const std::vector<Matrix*>& params) {
    for (const Matrix* p : params) {
        m_.emplace_back(p->rows(), p->cols(), 0.0);
        v_.emplace_back(p->rows(), p->cols(), 0.0);
    }
}

void adam_step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads,
               AdamState& state, const TrainConfig& config) {
    detail::require(params.size() == grads.size() && params.size() == state.m_.size(),
                    "adam_step: parameter/gradient/state count mismatch");
    check_finite_grads(grads, "adam step " + std::to_string(state.step_ + 1));
    state.step_ += 1;
    const double t = static_cast<double>(state.step_);
    const double bc1 = 1.0 - std::pow(config.beta1, t);
    const double bc2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        Matrix& p = *params[k];
        Matrix& m = state.m_[k];
        Matrix& v = state.v_[k];
        const Matrix& g = grads[k];
        detail::require(p.same_shape(g), "adam_step: gradient shape mismatch");
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.epsilon);
        }
    }
}

namespace {

// Shared minibatch scaffolding for both trainers. step(batch, kl_weight)
// returns the batch objective pieces after applying one optimizer update.
template <typename StepFn, typename ValBceFn>
TrainHistory run_epochs(const Matrix& x, const std::vector<int>& y, const TrainConfig& config,
                        StepFn step, ValBceFn val_bce) {
    config.validate();
    detail::require(x.rows() > 0, "train: empty dataset");
    detail::require(x.rows() == y.size(), "train: feature/label row mismatch");
    detail::require(x.all_finite(), "train: dataset contains non-finite values");

    const std::size_t n = x.rows();
    const std::size_t n_batches = (n + config.batch_size - 1) / config.batch_size;
    const std::vector<double> klw = kl_batch_weights(n_batches, config.kl_weighting);

    Rng rng(config.seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    TrainHistory history;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle(order, rng);
        double epoch_elbo = 0.0, epoch_nll = 0.0, epoch_kl = 0.0;
        for (std::size_t bi = 0; bi < n_batches; ++bi) {
            const std::size_t begin = bi * config.batch_size;
            const std::size_t end = std::min(begin + config.batch_size, n);
            Batch batch = gather_batch(x, y, order, begin, end);
            const ElboValue v = step(batch, klw[bi], rng);
            epoch_elbo += v.total;
            epoch_nll += v.nll;
            epoch_kl += klw[bi] * v.kl;
        }
        history.elbo.push_back(epoch_elbo);
        history.nll.push_back(epoch_nll);
        history.kl.push_back(epoch_kl);
        history.val_bce.push_back(val_bce());
    }
    return history;
}

}  // namespace

TrainHistory train(BnnModel& model, const Matrix& x, const std::vector<int>& y,
                   const TrainConfig& config, const Matrix* val_x,
                   const std::vector<int>* val_y) {
    std::vector<Matrix*> params = flatten_params(model.params);
    AdamState state(params);
    const double inv_s = 1.0 / static_cast<double>(config.mc_samples);

    auto step = [&](const Batch& batch, double kl_weight, Rng& rng) {
        ElboValue value;
        std::vector<Matrix> grads;
        for (std::size_t s = 0; s < config.mc_samples; ++s) {
            ElboGradients eg = elbo_gradients(model, batch.x, batch.y,
                                              draw_noise(model.params, rng), kl_weight);
            value.total += inv_s * eg.value.total;
            value.nll += inv_s * eg.value.nll;
            value.kl += inv_s * eg.value.kl;
            if (grads.empty()) {
                grads = std::move(eg.grads);
                if (config.mc_samples > 1)
                    for (auto& g : grads)
                        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= inv_s;
            } else {
                for (std::size_t k = 0; k < grads.size(); ++k)
                    for (std::size_t i = 0; i < grads[k].size(); ++i)
                        grads[k][i] += inv_s * eg.grads[k][i];
            }
        }
        adam_step(params, grads, state, config);
        return value;
    };

    auto val_bce = [&]() {
        const DeterministicModel mean = mean_network(model);
        const Matrix& vx = val_x ? *val_x : x;
        const std::vector<int>& vy = val_y ? *val_y : y;
        return mean_bce_from_logits(forward_logits(mean.spec, mean.layers, vx), vy);
    };

    TrainHistory history = run_epochs(x, y, config, step, val_bce);
    model.trained_epochs += config.epochs;
    return history;
}

TrainHistory train_deterministic(DeterministicModel& model, const Matrix& x,
                                 const std::vector<int>& y, const TrainConfig& config,
                                 const Matrix* val_x, const std::vector<int>* val_y) {
    std::vector<Matrix*> params = flatten_params(model.layers);
    AdamState state(params);

    auto step = [&](const Batch& batch, double, Rng&) {
        Tape t;
        std::vector<Var> w, b;
        for (auto& l : model.layers) {
            w.push_back(t.leaf(l.w));
            b.push_back(t.leaf(l.b));
        }
        Var logits = logits_on_tape(t, model.spec, w, b, batch.x);
        Var nll = t.sum(t.bce_with_logits(logits, labels_to_column(batch.y)));
        t.backward(nll);
        std::vector<Matrix> grads;
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            grads.push_back(t.grad(w[l]));
            grads.push_back(t.grad(b[l]));
        }
        adam_step(params, grads, state, config);
        const double v = t.scalar(nll);
        return ElboValue{v, v, 0.0};
    };

    auto val_bce = [&]() {
        const Matrix& vx = val_x ? *val_x : x;
        const std::vector<int>& vy = val_y ? *val_y : y;
        return mean_bce_from_logits(forward_logits(model.spec, model.layers, vx), vy);
    };

    TrainHistory history = run_epochs(x, y, config, step, val_bce);
    model.trained_epochs += config.epochs;
    return history;
}

}  // namespace tabuq
