#include "tabuq/variational.hpp"

#include <cmath>

namespace tabuq {

namespace {
constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * ln(2*pi)
}

std::size_t VariationalParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.mu_w.size() + l.mu_b.size();
    return n;
}

void MixturePrior::validate() const {
    detail::require(pi >= 0.0 && pi <= 1.0, "MixturePrior: pi must be in [0,1]");
    detail::require(sigma2 > 0.0, "MixturePrior: sigma2 must be positive");
    detail::require(sigma1 >= sigma2, "MixturePrior: sigma1 must be >= sigma2");
}

std::vector<LayerNoise> draw_noise(const VariationalParams& params, Rng& rng) {
    std::vector<LayerNoise> noise;
    noise.reserve(params.layers.size());
    for (const auto& l : params.layers) {
        LayerNoise n;
        n.eps_w = Matrix(l.mu_w.rows(), l.mu_w.cols());
        for (std::size_t i = 0; i < n.eps_w.size(); ++i) n.eps_w[i] = rng.normal();
        n.eps_b = Matrix(l.mu_b.rows(), l.mu_b.cols());
        for (std::size_t i = 0; i < n.eps_b.size(); ++i) n.eps_b[i] = rng.normal();
        noise.push_back(std::move(n));
    }
    return noise;
}

std::vector<LayerNoise> zero_noise(const VariationalParams& params) {
    std::vector<LayerNoise> noise;
    noise.reserve(params.layers.size());
    for (const auto& l : params.layers) {
        LayerNoise n;
        n.eps_w = Matrix(l.mu_w.rows(), l.mu_w.cols(), 0.0);
        n.eps_b = Matrix(l.mu_b.rows(), l.mu_b.cols(), 0.0);
        noise.push_back(std::move(n));
    }
    return noise;
}

WeightSample sample_weights(const VariationalParams& params, std::vector<LayerNoise> noise) {
    detail::require(noise.size() == params.layers.size(),
                    "sample_weights: noise layer count mismatch");
    WeightSample s;
    s.layers.reserve(params.layers.size());
    for (std::size_t li = 0; li < params.layers.size(); ++li) {
        const auto& p = params.layers[li];
        const auto& n = noise[li];
        detail::require(n.eps_w.same_shape(p.mu_w) && n.eps_b.same_shape(p.mu_b),
                        "sample_weights: noise shape mismatch");
        LayerWeights lw;
        lw.w = p.mu_w;
        for (std::size_t i = 0; i < lw.w.size(); ++i)
            lw.w[i] += softplus_scalar(p.rho_w[i]) * n.eps_w[i];
        lw.b = p.mu_b;
        for (std::size_t i = 0; i < lw.b.size(); ++i)
            lw.b[i] += softplus_scalar(p.rho_b[i]) * n.eps_b[i];
        s.layers.push_back(std::move(lw));
    }
    s.noise = std::move(noise);
    return s;
}

double log_gaussian(double w, double mu, double sigma) {
    detail::require(sigma > 0.0, "log_gaussian: sigma must be positive");
    const double z = (w - mu) / sigma;
    return -kHalfLog2Pi - std::log(sigma) - 0.5 * z * z;
}

double log_prior(double w, const MixturePrior& prior) {
    prior.validate();
    if (prior.pi == 1.0) return log_gaussian(w, 0.0, prior.sigma1);
    if (prior.pi == 0.0) return log_gaussian(w, 0.0, prior.sigma2);
    const double a = std::log(prior.pi) + log_gaussian(w, 0.0, prior.sigma1);
    const double b = std::log1p(-prior.pi) + log_gaussian(w, 0.0, prior.sigma2);
    const double m = a > b ? a : b;
    return m + std::log1p(std::exp(-std::fabs(a - b)));
}

double kl_mc_term(const WeightSample& sample, const VariationalParams& params,
                  const MixturePrior& prior) {
    detail::require(sample.layers.size() == params.layers.size(),
                    "kl_mc_term: sample/params layer count mismatch");
    double acc = 0.0;
    for (std::size_t li = 0; li < params.layers.size(); ++li) {
        const auto& p = params.layers[li];
        const auto& s = sample.layers[li];
        for (std::size_t i = 0; i < s.w.size(); ++i) {
            const double w = s.w[i];
            acc += log_gaussian(w, p.mu_w[i], softplus_scalar(p.rho_w[i])) - log_prior(w, prior);
        }
        for (std::size_t i = 0; i < s.b.size(); ++i) {
            const double b = s.b[i];
            acc += log_gaussian(b, p.mu_b[i], softplus_scalar(p.rho_b[i])) - log_prior(b, prior);
        }
    }
    return acc;
}

TapedGaussian tape_sample(Tape& t, const Matrix& mu, const Matrix& rho, const Matrix& eps) {
    detail::require(mu.same_shape(rho) && mu.same_shape(eps),
                    "tape_sample: mu/rho/eps shape mismatch");
    TapedGaussian g;
    g.mu = t.leaf(mu);
    g.rho = t.leaf(rho);
    g.sigma = t.softplus(g.rho);
    g.w = t.add(g.mu, t.mul(g.sigma, t.constant(eps)));
    return g;
}

Var tape_log_q(Tape& t, const TapedGaussian& g) {
    Var d2 = t.square(t.sub(g.w, g.mu));
    Var s2 = t.square(g.sigma);
    Var quad = t.scale(t.div(d2, s2), -0.5);
    Var per = t.add_scalar(t.sub(quad, t.log(g.sigma)), -kHalfLog2Pi);
    return t.sum(per);
}

Var tape_log_prior(Tape& t, Var w, const MixturePrior& prior) {
    prior.validate();
    Var w2 = t.square(w);
    const auto component = [&](double sigma, double log_weight) {
        const double c = log_weight - kHalfLog2Pi - std::log(sigma);
        return t.add_scalar(t.scale(w2, -0.5 / (sigma * sigma)), c);
    };
    if (prior.pi == 1.0) return t.sum(component(prior.sigma1, 0.0));
    if (prior.pi == 0.0) return t.sum(component(prior.sigma2, 0.0));
    Var a = component(prior.sigma1, std::log(prior.pi));
    Var b = component(prior.sigma2, std::log1p(-prior.pi));
    return t.sum(t.logaddexp(a, b));
}

}  // namespace tabuq
