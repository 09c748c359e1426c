#include "tabuq/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tabuq {

namespace {
constexpr double kHessGuard = 1e-16;
constexpr double kMinGain = 1e-12;

double leaf_value(double g, double h) { return -g / (h + kHessGuard); }

double half_gain(double g, double h) { return g * g / (h + kHessGuard); }
}  // namespace

void GbdtConfig::validate() const {
    detail::require(n_trees > 0, "GbdtConfig: n_trees must be positive");
    detail::require(max_depth > 0, "GbdtConfig: max_depth must be positive");
    detail::require(learning_rate > 0.0, "GbdtConfig: learning_rate must be positive");
    detail::require(min_samples_leaf > 0, "GbdtConfig: min_samples_leaf must be positive");
}

double Tree::eval(const double* row) const {
    int at = 0;
    while (!nodes[at].is_leaf())
        at = row[nodes[at].feature] < nodes[at].threshold ? nodes[at].left : nodes[at].right;
    return nodes[at].value;
}

namespace {

struct SplitCandidate {
    double gain = 0.0;
    int feature = -1;
    double threshold = 0.0;
};

struct LeafAccumulator {
    double g_left = 0.0, h_left = 0.0;
    std::size_t n_left = 0;
    double prev_value = 0.0;
    bool seen = false;
};

}  // namespace

GbdtModel train_gbdt(const Matrix& x, const std::vector<int>& y, const GbdtConfig& config) {
    config.validate();
    detail::require(x.rows() == y.size(), "train_gbdt: feature/label row mismatch");
    detail::require(x.rows() > 0, "train_gbdt: empty dataset");
    const std::size_t n = x.rows(), d = x.cols();

    std::size_t pos = 0;
    for (int v : y) {
        detail::require(v == 0 || v == 1, "train_gbdt: labels must be 0 or 1");
        pos += static_cast<std::size_t>(v);
    }
    detail::require(pos > 0 && pos < n, "train_gbdt: training set contains a single class");

    GbdtModel model;
    model.learning_rate = config.learning_rate;
    model.n_features = d;
    const double rate = static_cast<double>(pos) / static_cast<double>(n);
    model.base_logodds = std::log(rate / (1.0 - rate));

    // Global presort per feature; per-node scans reuse it.
    std::vector<std::vector<std::size_t>> sorted(d);
    for (std::size_t j = 0; j < d; ++j) {
        sorted[j].resize(n);
        std::iota(sorted[j].begin(), sorted[j].end(), 0);
        std::sort(sorted[j].begin(), sorted[j].end(), [&](std::size_t a, std::size_t b) {
            if (x(a, j) != x(b, j)) return x(a, j) < x(b, j);
            return a < b;
        });
    }

    std::vector<double> f(n, model.base_logodds);
    std::vector<double> grad(n), hess(n);
    std::vector<int> node_of(n);

    for (std::size_t t = 0; t < config.n_trees; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
            const double p = sigmoid_scalar(f[i]);
            grad[i] = p - static_cast<double>(y[i]);
            hess[i] = p * (1.0 - p);
        }

        Tree tree;
        tree.nodes.push_back(TreeNode{});
        std::fill(node_of.begin(), node_of.end(), 0);
        std::vector<int> active = {0};

        for (std::size_t depth = 0; depth < config.max_depth && !active.empty(); ++depth) {
            // Per-active-node totals.
            const int max_node = *std::max_element(active.begin(), active.end());
            std::vector<double> g_total(max_node + 1, 0.0), h_total(max_node + 1, 0.0);
            std::vector<std::size_t> n_total(max_node + 1, 0);
            std::vector<char> is_active(max_node + 1, 0);
            for (int a : active) is_active[a] = 1;
            for (std::size_t i = 0; i < n; ++i) {
                const int nd = node_of[i];
                if (nd <= max_node && is_active[nd]) {
                    g_total[nd] += grad[i];
                    h_total[nd] += hess[i];
                    n_total[nd] += 1;
                }
            }

            std::vector<SplitCandidate> best(max_node + 1);
            std::vector<LeafAccumulator> acc(max_node + 1);
            for (std::size_t j = 0; j < d; ++j) {
                for (int a : active) acc[a] = LeafAccumulator{};
                for (const std::size_t r : sorted[j]) {
                    const int nd = node_of[r];
                    if (nd > max_node || !is_active[nd]) continue;
                    LeafAccumulator& A = acc[nd];
                    const double v = x(r, j);
                    if (A.seen && v > A.prev_value && A.n_left >= config.min_samples_leaf &&
                        n_total[nd] - A.n_left >= config.min_samples_leaf) {
                        const double g_r = g_total[nd] - A.g_left;
                        const double h_r = h_total[nd] - A.h_left;
                        const double gain = half_gain(A.g_left, A.h_left) + half_gain(g_r, h_r) -
                                            half_gain(g_total[nd], h_total[nd]);
                        if (gain > best[nd].gain + kMinGain) {
                            best[nd].gain = gain;
                            best[nd].feature = static_cast<int>(j);
                            best[nd].threshold = 0.5 * (A.prev_value + v);
                        }
                    }
                    A.g_left += grad[r];
                    A.h_left += hess[r];
                    A.n_left += 1;
                    A.prev_value = v;
                    A.seen = true;
                }
            }

            std::vector<int> next_active;
            for (int a : active) {
                if (best[a].feature < 0) {
                    tree.nodes[a].value = leaf_value(g_total[a], h_total[a]);
                    continue;
                }
                const int left = static_cast<int>(tree.nodes.size());
                tree.nodes.push_back(TreeNode{});
                const int right = static_cast<int>(tree.nodes.size());
                tree.nodes.push_back(TreeNode{});
                tree.nodes[a].feature = best[a].feature;
                tree.nodes[a].threshold = best[a].threshold;
                tree.nodes[a].left = left;
                tree.nodes[a].right = right;
                next_active.push_back(left);
                next_active.push_back(right);
            }
            for (std::size_t i = 0; i < n; ++i) {
                const TreeNode& nd = tree.nodes[node_of[i]];
                if (!nd.is_leaf())
                    node_of[i] = x(i, nd.feature) < nd.threshold ? nd.left : nd.right;
            }
            active = std::move(next_active);
        }

        // Depth limit reached: anything still active becomes a leaf.
        if (!active.empty()) {
            std::vector<double> g_total(tree.nodes.size(), 0.0), h_total(tree.nodes.size(), 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                g_total[node_of[i]] += grad[i];
                h_total[node_of[i]] += hess[i];
            }
            for (int a : active) tree.nodes[a].value = leaf_value(g_total[a], h_total[a]);
        }

        for (std::size_t i = 0; i < n; ++i)
            f[i] += config.learning_rate * tree.nodes[node_of[i]].value;
        model.trees.push_back(std::move(tree));
    }
    return model;
}

std::vector<double> predict_gbdt(const GbdtModel& model, const Matrix& x) {
    return predict_gbdt(model, x, model.trees.size());
}

std::vector<double> predict_gbdt(const GbdtModel& model, const Matrix& x, std::size_t first_k) {
    detail::require(x.cols() == model.n_features, "predict_gbdt: feature dimension mismatch");
    detail::require(first_k <= model.trees.size(), "predict_gbdt: not that many trees");
    std::vector<double> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double* row = x.row_ptr(i);
        double f = model.base_logodds;
        for (std::size_t t = 0; t < first_k; ++t)
            f += model.learning_rate * model.trees[t].eval(row);
        out[i] = sigmoid_scalar(f);
    }
    return out;
}

}  // namespace tabuq
