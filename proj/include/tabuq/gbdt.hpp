#pragma once

#include <cstdint>
#include <vector>

#include "tabuq/matrix.hpp"

namespace tabuq {

struct GbdtConfig {
    std::size_t n_trees = 100;
    std::size_t max_depth = 3;
    double learning_rate = 0.1;
    std::size_t min_samples_leaf = 20;
    std::uint64_t seed = 0;  // reserved; the exact greedy splitter is deterministic

    void validate() const;
};

// Axis-aligned regression tree over log-odds residuals. feature < 0 marks a
// leaf; interior nodes route rows with value < threshold to the left child.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;

    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;
    double eval(const double* row) const;
};

// Boosted binary classifier: sigma(base_logodds + lr * sum of tree outputs).
// Leaf values are raw Newton steps; shrinkage is applied at accumulation.
struct GbdtModel {
    double base_logodds = 0.0;
    double learning_rate = 0.1;
    std::size_t n_features = 0;
    std::vector<Tree> trees;
};

// Exact greedy second-order boosting on the binary cross-entropy objective.
// Rejects single-class training sets.
GbdtModel train_gbdt(const Matrix& x, const std::vector<int>& y, const GbdtConfig& config);

std::vector<double> predict_gbdt(const GbdtModel& model, const Matrix& x);
// Prediction using only the first k trees (staged evaluation).
std::vector<double> predict_gbdt(const GbdtModel& model, const Matrix& x, std::size_t first_k);

}  // namespace tabuq
