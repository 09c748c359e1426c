#include "tabuq/bounds.hpp"

#include <cmath>

#include "tabuq/metrics.hpp"

namespace tabuq {

namespace {
constexpr double kLn2 = 0.69314718055994530942;
constexpr double kSlack = 1e-12;

double checked_variance(double variance) {
    detail::require(variance >= -kSlack && variance <= 0.25 + kSlack,
                    "bounds: variance outside [0, 0.25] violates Popoviciu on [0,1]; "
                    "this signals an upstream bug");
    return std::min(std::max(variance, 0.0), 0.25);
}
}  // namespace

BoundInterval loss_bounds(double variance) {
    const double v = checked_variance(variance);
    const double s = std::sqrt(1.0 - 4.0 * v);
    BoundInterval b;
    b.variance = v;
    b.lower = kLn2 - std::log1p(s);
    // 1/2 - s/2 == 2v / (1 + s); the quotient form avoids cancellation, so
    // upper = -log(2v/(1+s)) = log1p(s) - log2 - log(v).
    b.upper = v == 0.0 ? std::numeric_limits<double>::infinity()
                       : std::log1p(s) - kLn2 - std::log(v);
    return b;
}

std::pair<double, double> mean_bounds(double variance) {
    const double v = checked_variance(variance);
    const double s = std::sqrt(1.0 - 4.0 * v);
    const double lo = v == 0.0 ? 0.0 : 2.0 * v / (1.0 + s);
    return {lo, 0.5 + 0.5 * s};
}

BoundReport verify_bounds(const std::vector<PredictionSummary>& summaries,
                          const std::vector<int>& labels, double tol) {
    detail::require(summaries.size() == labels.size(), "verify_bounds: length mismatch");
    BoundReport report;
    report.tolerance = tol;
    report.records.reserve(summaries.size());
    for (std::size_t i = 0; i < summaries.size(); ++i) {
        const PredictionSummary& s = summaries[i];
        const BoundInterval b = loss_bounds(s.variance);
        const double loss = bce(s.mean, labels[i]);
        const double margin = std::min(loss - b.lower, b.upper - loss);
        report.records.push_back({i, s.mean, s.variance, loss, b.lower, b.upper});
        report.worst_margin = std::min(report.worst_margin, margin);
        if (margin < -tol)
            report.violations.push_back({i, s.mean, s.variance, loss, b.lower, b.upper, margin});
        ++report.checked;
    }
    return report;
}

}  // namespace tabuq
