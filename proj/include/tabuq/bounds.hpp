#pragma once

#include <vector>

#include "tabuq/inference.hpp"

namespace tabuq {

// Admissible binary cross-entropy range implied by a predictive variance.
//
// For probabilities supported on [0,1] the Bhatia-Davis inequality forces
// variance <= mean*(1-mean), which pins the mean to
//   1/2 - s/2 <= mean <= 1/2 + s/2,   s = sqrt(1 - 4*variance),
// and therefore the loss -log(mean or 1-mean) to
//   -log(1/2 + s/2) <= L <= -log(1/2 - s/2).
// At variance 0 the upper endpoint is a genuine +infinity; at 0.25 the
// interval collapses to log 2.
struct BoundInterval {
    double variance = 0.0;
    double lower = 0.0;
    double upper = 0.0;  // may be +infinity
};

// Valid for variance in [0, 0.25]; roundoff up to 1e-12 past 0.25 is clamped,
// anything larger is rejected because genuine [0,1] samples cannot produce it.
BoundInterval loss_bounds(double variance);

// The admissible predictive-mean interval for the same variance.
std::pair<double, double> mean_bounds(double variance);

struct BoundViolation {
    std::size_t index = 0;
    double mean = 0.0;
    double variance = 0.0;
    double bce = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    double margin = 0.0;  // min(bce - lower, upper - bce); negative = outside
};

struct BoundCheck {
    std::size_t index = 0;
    double mean = 0.0;
    double variance = 0.0;
    double bce = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};

struct BoundReport {
    std::size_t checked = 0;
    double tolerance = 0.0;
    double worst_margin = std::numeric_limits<double>::infinity();
    std::vector<BoundViolation> violations;
    std::vector<BoundCheck> records;  // one row per prediction, for the CSV view

    bool clean() const { return violations.empty(); }
};

// Checks lower - tol <= BCE(label, mean) <= upper + tol for every summary.
// Violations are data in the report, not errors.
BoundReport verify_bounds(const std::vector<PredictionSummary>& summaries,
                          const std::vector<int>& labels, double tol = 1e-9);

}  // namespace tabuq
