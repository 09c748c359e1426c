#pragma once

#include <limits>
#include <string>
#include <vector>

#include "tabuq/matrix.hpp"

namespace tabuq {

// Binary cross-entropy with p clamped to [1e-12, 1 - 1e-12].
double bce(double p, int y);

// Mann-Whitney AUROC: P(random positive outscores random negative), ties
// counted half. Rejects single-class inputs.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

// Area under precision-recall with step-wise interpolation over the distinct
// score thresholds. positive_class selects which label counts as positive;
// for positive_class == 0 the scores are negated internally so that higher
// confidence in class 1 maps to lower rank for class 0.
double aupr(const std::vector<double>& scores, const std::vector<int>& labels,
            int positive_class);

struct RiskCoveragePoint {
    double coverage = 0.0;
    double cumulative_loss = 0.0;
    // AUROC over the records retained at this coverage. NaN while the prefix
    // holds a single class or when the curve was built without scores.
    double auroc = std::numeric_limits<double>::quiet_NaN();
};

struct RiskCoverageCurve {
    std::vector<RiskCoveragePoint> points;   // one per record, coverage ascending
    std::vector<std::size_t> order;          // record indices, most certain first
    double total_loss() const { return points.empty() ? 0.0 : points.back().cumulative_loss; }
};

// Records sorted ascending by uncertainty (stable on ties); point k carries
// the compensated sum of the first k losses.
RiskCoverageCurve risk_coverage(const std::vector<double>& losses,
                                const std::vector<double>& uncertainties);

// Same curve with per-prefix AUROC of (scores, labels) filled in.
RiskCoverageCurve risk_coverage(const std::vector<double>& losses,
                                const std::vector<double>& uncertainties,
                                const std::vector<double>& scores,
                                const std::vector<int>& labels);

// Loss carried by the most-uncertain q-slice over the most-certain q-slice.
double quantile_loss_ratio(const RiskCoverageCurve& curve, double q);

// One detection task row: a named confidence score evaluated against a
// binary condition (success/error or in/out of domain).
struct DetectionInput {
    std::string method;
    std::vector<double> confidence;
    std::vector<int> condition;
};

struct DetectionRow {
    std::string method;
    double auroc = 0.0;
    double aupr_positive = 0.0;  // condition == 1 as the positive class
    double aupr_negative = 0.0;  // condition == 0 as the positive class
};

struct DetectionReport {
    std::string task;
    std::vector<DetectionRow> rows;
};

DetectionReport detection_benchmark(const std::string& task,
                                    const std::vector<DetectionInput>& inputs);

// Score conventions for the detection tasks: higher must mean more
// confident for every method.
inline double max_prob_confidence(double p) { return p > 1.0 - p ? p : 1.0 - p; }
inline double negated_variance_confidence(double variance) { return -variance; }

// Two-sided Mann-Whitney U test p-value (normal approximation with tie
// correction and continuity correction).
double mann_whitney_p(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace tabuq
