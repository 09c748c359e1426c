#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tabuq/network.hpp"

namespace tabuq {

// Monte Carlo predictive distribution for one record: mean of the T sampled
// probabilities and their population (1/T) variance. The variance can never
// exceed mean*(1-mean) <= 0.25; that is asserted at construction time.
struct PredictionSummary {
    double mean = 0.0;
    double variance = 0.0;
    std::size_t t = 0;
    std::vector<double> samples;  // retained only on request

    double std_dev() const { return std::sqrt(variance); }
};

// Compensated (Kahan) mean; order-insensitive to ~1e-16.
double predictive_mean(const std::vector<double>& probs);

// Population variance (1/T) of at least two probabilities in [0,1].
double predictive_variance(const std::vector<double>& probs);

// T >= 2 posterior draws per record, deterministic per seed.
std::vector<PredictionSummary> predict(const BnnModel& model, const Matrix& x, std::size_t t,
                                       std::uint64_t seed, bool retain_samples = false);

// record_id, mean, variance, std. An optional leading comment line carries
// provenance (e.g. the experiment config digest).
void write_predictions_csv(const std::string& path,
                           const std::vector<PredictionSummary>& summaries,
                           const std::string& comment = "");

}  // namespace tabuq
