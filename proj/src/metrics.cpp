#include "tabuq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace tabuq {

double bce(double p, int y) {
    detail::require(y == 0 || y == 1, "bce: label must be 0 or 1");
    const double lo = 1e-12;
    p = std::min(std::max(p, lo), 1.0 - lo);
    return y == 1 ? -std::log(p) : -std::log1p(-p);
}

namespace {

// Average ranks (1-based) with ties shared.
std::vector<double> average_ranks(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[idx[j + 1]] == values[idx[i]]) ++j;
        const double shared = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = shared;
        i = j + 1;
    }
    return ranks;
}

void check_binary(const std::vector<int>& labels, const char* who) {
    for (int y : labels)
        detail::require(y == 0 || y == 1, std::string(who) + ": labels must be 0 or 1");
}

// Fenwick tree over score ranks, for incremental prefix AUROC.
class Fenwick {
public:
    explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}
    void add(std::size_t i) {  // 0-based rank
        for (std::size_t k = i + 1; k < tree_.size(); k += k & (~k + 1)) tree_[k] += 1;
    }
    long long prefix(std::size_t i) const {  // count of inserted ranks <= i
        long long s = 0;
        for (std::size_t k = i + 1; k > 0; k -= k & (~k + 1)) s += tree_[k];
        return s;
    }

private:
    std::vector<long long> tree_;
};

}  // namespace

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    detail::require(scores.size() == labels.size(), "auroc: length mismatch");
    check_binary(labels, "auroc");
    std::size_t pos = 0;
    for (int y : labels) pos += static_cast<std::size_t>(y);
    const std::size_t neg = labels.size() - pos;
    detail::require(pos > 0 && neg > 0,
                    "auroc: both classes must be present (got " + std::to_string(pos) +
                        " positives, " + std::to_string(neg) + " negatives)");
    const std::vector<double> ranks = average_ranks(scores);
    double rank_sum_pos = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == 1) rank_sum_pos += ranks[i];
    const double u = rank_sum_pos - 0.5 * static_cast<double>(pos) * (static_cast<double>(pos) + 1.0);
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

double aupr(const std::vector<double>& scores, const std::vector<int>& labels,
            int positive_class) {
    detail::require(scores.size() == labels.size(), "aupr: length mismatch");
    detail::require(positive_class == 0 || positive_class == 1,
                    "aupr: positive_class must be 0 or 1");
    check_binary(labels, "aupr");

    std::vector<double> s = scores;
    std::vector<int> y = labels;
    if (positive_class == 0) {
        for (double& v : s) v = -v;
        for (int& v : y) v = 1 - v;
    }
    std::size_t total_pos = 0;
    for (int v : y) total_pos += static_cast<std::size_t>(v);
    detail::require(total_pos > 0 && total_pos < y.size(),
                    "aupr: both classes must be present");

    std::vector<std::size_t> idx(s.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });

    // Step-wise area over the distinct thresholds, highest first.
    double area = 0.0, prev_recall = 0.0;
    std::size_t tp = 0, fp = 0, i = 0;
    const double p_total = static_cast<double>(total_pos);
    while (i < idx.size()) {
        std::size_t j = i;
        while (j + 1 < idx.size() && s[idx[j + 1]] == s[idx[i]]) ++j;
        for (std::size_t k = i; k <= j; ++k) {
            if (y[idx[k]] == 1)
                ++tp;
            else
                ++fp;
        }
        const double recall = static_cast<double>(tp) / p_total;
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    return area;
}

namespace {

std::vector<std::size_t> uncertainty_order(const std::vector<double>& uncertainties) {
    for (double u : uncertainties)
        detail::require(std::isfinite(u), "risk_coverage: uncertainties must be finite");
    std::vector<std::size_t> order(uncertainties.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return uncertainties[a] < uncertainties[b];
    });
    return order;
}

RiskCoverageCurve build_curve(const std::vector<double>& losses,
                              const std::vector<double>& uncertainties,
                              const std::vector<double>* scores,
                              const std::vector<int>* labels) {
    detail::require(losses.size() == uncertainties.size(), "risk_coverage: length mismatch");
    detail::require(!losses.empty(), "risk_coverage: empty input");
    if (scores) {
        detail::require(scores->size() == losses.size() && labels->size() == losses.size(),
                        "risk_coverage: score/label length mismatch");
        check_binary(*labels, "risk_coverage");
    }

    RiskCoverageCurve curve;
    curve.order = uncertainty_order(uncertainties);
    const std::size_t n = losses.size();
    curve.points.resize(n);

    // Rank compression for the incremental AUROC bookkeeping.
    std::vector<std::size_t> rank;
    std::size_t n_ranks = 0;
    if (scores) {
        std::vector<double> sorted = *scores;
        std::sort(sorted.begin(), sorted.end());
        sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
        n_ranks = sorted.size();
        rank.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            rank[i] = static_cast<std::size_t>(
                std::lower_bound(sorted.begin(), sorted.end(), (*scores)[i]) - sorted.begin());
    }
    Fenwick pos_tree(n_ranks ? n_ranks : 1), neg_tree(n_ranks ? n_ranks : 1);
    std::vector<long long> pos_at(n_ranks, 0), neg_at(n_ranks, 0);
    double u_stat = 0.0;
    long long n_pos = 0, n_neg = 0;

    double sum = 0.0, comp = 0.0;  // Kahan
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t rec = curve.order[k];
        const double term = losses[rec] - comp;
        const double next = sum + term;
        comp = (next - sum) - term;
        sum = next;

        RiskCoveragePoint& pt = curve.points[k];
        pt.coverage = static_cast<double>(k + 1) / static_cast<double>(n);
        pt.cumulative_loss = sum;

        if (scores) {
            const std::size_t r = rank[rec];
            if ((*labels)[rec] == 1) {
                const long long less = r > 0 ? neg_tree.prefix(r - 1) : 0;
                u_stat += static_cast<double>(less) + 0.5 * static_cast<double>(neg_at[r]);
                pos_tree.add(r);
                ++pos_at[r];
                ++n_pos;
            } else {
                const long long leq = pos_tree.prefix(r);
                const long long greater = n_pos - leq;
                u_stat += static_cast<double>(greater) + 0.5 * static_cast<double>(pos_at[r]);
                neg_tree.add(r);
                ++neg_at[r];
                ++n_neg;
            }
            if (n_pos > 0 && n_neg > 0)
                pt.auroc = u_stat / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
        }
    }
    return curve;
}

}  // namespace

RiskCoverageCurve risk_coverage(const std::vector<double>& losses,
                                const std::vector<double>& uncertainties) {
    return build_curve(losses, uncertainties, nullptr, nullptr);
}

RiskCoverageCurve risk_coverage(const std::vector<double>& losses,
                                const std::vector<double>& uncertainties,
                                const std::vector<double>& scores,
                                const std::vector<int>& labels) {
    return build_curve(losses, uncertainties, &scores, &labels);
}

double quantile_loss_ratio(const RiskCoverageCurve& curve, double q) {
    detail::require(q > 0.0 && q <= 0.5, "quantile_loss_ratio: q must be in (0, 0.5]");
    const std::size_t n = curve.points.size();
    const std::size_t k = static_cast<std::size_t>(std::floor(q * static_cast<double>(n)));
    detail::require(k >= 1, "quantile_loss_ratio: slice is empty at this q");
    const double bottom = curve.points[k - 1].cumulative_loss;
    const double top = curve.total_loss() - curve.points[n - k - 1].cumulative_loss;
    if (bottom == 0.0) return top == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    return top / bottom;
}

DetectionReport detection_benchmark(const std::string& task,
                                    const std::vector<DetectionInput>& inputs) {
    detail::require(!inputs.empty(), "detection_benchmark: no methods given");
    DetectionReport report;
    report.task = task;
    for (const auto& in : inputs) {
        detail::require(in.confidence.size() == in.condition.size(),
                        "detection_benchmark: confidence/condition length mismatch");
        bool has0 = false, has1 = false;
        for (int c : in.condition) (c == 0 ? has0 : has1) = true;
        detail::require(has0 && has1,
                        "detection_benchmark: condition labels are degenerate for method '" +
                            in.method + "'");
        DetectionRow row;
        row.method = in.method;
        row.auroc = auroc(in.confidence, in.condition);
        row.aupr_positive = aupr(in.confidence, in.condition, 1);
        row.aupr_negative = aupr(in.confidence, in.condition, 0);
        report.rows.push_back(std::move(row));
    }
    return report;
}

double mann_whitney_p(const std::vector<double>& a, const std::vector<double>& b) {
    detail::require(!a.empty() && !b.empty(), "mann_whitney_p: empty sample");
    const std::size_t n1 = a.size(), n2 = b.size(), n = n1 + n2;
    std::vector<double> all;
    all.reserve(n);
    all.insert(all.end(), a.begin(), a.end());
    all.insert(all.end(), b.begin(), b.end());
    const std::vector<double> ranks = average_ranks(all);

    double r1 = 0.0;
    for (std::size_t i = 0; i < n1; ++i) r1 += ranks[i];
    const double u1 = r1 - 0.5 * static_cast<double>(n1) * (static_cast<double>(n1) + 1.0);
    const double mean_u = 0.5 * static_cast<double>(n1) * static_cast<double>(n2);

    // Tie-corrected variance.
    std::vector<double> sorted = all;
    std::sort(sorted.begin(), sorted.end());
    double tie_term = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
        const double t = static_cast<double>(j - i + 1);
        tie_term += t * t * t - t;
        i = j + 1;
    }
    const double nn = static_cast<double>(n);
    const double var_u = (static_cast<double>(n1) * static_cast<double>(n2) / 12.0) *
                         ((nn + 1.0) - tie_term / (nn * (nn - 1.0)));
    if (var_u <= 0.0) return 1.0;

    double z = u1 - mean_u;
    // Continuity correction toward the mean.
    z += (z > 0 ? -0.5 : (z < 0 ? 0.5 : 0.0));
    z /= std::sqrt(var_u);
    const double p = std::erfc(std::fabs(z) / std::sqrt(2.0));
    return std::min(1.0, p);
}

}  // namespace tabuq
