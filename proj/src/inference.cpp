#include "tabuq/inference.hpp"

#include <fstream>
#include <stdexcept>

#include "tabuq/strings.hpp"

namespace tabuq {

namespace {
double kahan_sum(const std::vector<double>& v, double (*f)(double, double), double arg) {
    double sum = 0.0, comp = 0.0;
    for (double x : v) {
        const double term = f(x, arg) - comp;
        const double next = sum + term;
        comp = (next - sum) - term;
        sum = next;
    }
    return sum;
}

double identity_term(double x, double) { return x; }
double squared_dev(double x, double mean) { return (x - mean) * (x - mean); }
}  // namespace

double predictive_mean(const std::vector<double>& probs) {
    detail::require(!probs.empty(), "predictive_mean: empty sample set");
    return kahan_sum(probs, identity_term, 0.0) / static_cast<double>(probs.size());
}

double predictive_variance(const std::vector<double>& probs) {
    detail::require(probs.size() >= 2, "predictive_variance: need at least two samples");
    bool constant = true;
    for (double p : probs) {
        detail::require(p >= 0.0 && p <= 1.0, "predictive_variance: probability outside [0,1]");
        constant = constant && p == probs.front();
    }
    if (constant) return 0.0;  // exact, regardless of mean roundoff
    const double mean = predictive_mean(probs);
    return kahan_sum(probs, squared_dev, mean) / static_cast<double>(probs.size());
}

std::vector<PredictionSummary> predict(const BnnModel& model, const Matrix& x, std::size_t t,
                                       std::uint64_t seed, bool retain_samples) {
    detail::require(t >= 2, "predict: need T >= 2 samples for a variance");
    detail::require(x.cols() == model.spec.input_dim, "predict: input dimension mismatch");

    const std::size_t n = x.rows();
    // probs[s] holds the class-1 probability of every record for draw s.
    std::vector<Matrix> probs;
    probs.reserve(t);
    Rng rng(seed);
    for (std::size_t s = 0; s < t; ++s) {
        WeightSample ws = sample_weights(model.params, draw_noise(model.params, rng));
        probs.push_back(forward(model, ws, x));
    }

    std::vector<PredictionSummary> out(n);
    std::vector<double> record(t);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t s = 0; s < t; ++s) record[s] = probs[s][i];
        PredictionSummary& ps = out[i];
        ps.t = t;
        ps.mean = predictive_mean(record);
        ps.variance = predictive_variance(record);
        if (retain_samples) ps.samples = record;
        // Bhatia-Davis on [0,1]; anything larger indicates an upstream bug.
        if (ps.variance > ps.mean * (1.0 - ps.mean) + 1e-12 || ps.variance > 0.25 + 1e-12)
            throw std::runtime_error("predict: predictive variance exceeds the admissible bound");
    }
    return out;
}

void write_predictions_csv(const std::string& path,
                           const std::vector<PredictionSummary>& summaries,
                           const std::string& comment) {
    std::ofstream f(path);
    detail::require(f.good(), "write_predictions_csv: cannot open " + path);
    if (!comment.empty()) f << "# " << comment << "\n";
    f << "record_id,mean,variance,std\n";
    for (std::size_t i = 0; i < summaries.size(); ++i) {
        const auto& s = summaries[i];
        f << i << ',' << format_double(s.mean) << ',' << format_double(s.variance) << ','
          << format_double(s.std_dev()) << '\n';
    }
}

}  // namespace tabuq
