#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tabuq/matrix.hpp"
#include "tabuq/rng.hpp"

namespace tabuq {

// Fit-split statistics applied to every split. Missing cells are NaN until
// imputation; after Preprocessor::apply the matrix carries no NaNs.
struct Standardization {
    std::vector<std::string> feature_names;
    std::vector<double> mean;          // post outlier-removal fit-split means
    std::vector<double> sd;            // population sd; zero-variance mapped to 1
    std::vector<double> q1, q3;        // fit-split quartiles (linear interpolation)
    std::vector<double> window_lo, window_hi;  // [q1 - 8*iqr, q3 + 8*iqr]
    bool add_missing_indicators = false;
    std::vector<std::size_t> indicator_features;  // features with missing fit cells
};

struct Dataset {
    Matrix x;
    std::vector<int> y;
    std::vector<std::string> feature_names;
    std::vector<std::string> subgroup;  // per-record tag, e.g. "core" / "shifted"
    std::optional<Standardization> standardization;

    std::size_t n() const { return x.rows(); }
    std::size_t dim() const { return x.cols(); }
    void validate() const;
};

// Synthetic ICU-flavoured tabular generator. In-domain records come from a
// mixture of correlated Gaussian clusters with labels from a calibrated
// logistic model (plus a few pairwise interactions); the out-of-domain
// subgroup is mean-shifted, covariance-scaled and labelled by a perturbed
// coefficient vector. All knobs at zero make the subgroup coincide with the
// in-domain population.
struct SyntheticSpec {
    std::size_t n_features = 25;
    std::size_t n_train = 40000;
    std::size_t n_test = 10000;
    std::size_t n_ood = 5000;
    std::size_t clusters = 3;
    double class_prior = 0.35;
    double label_sharpness = 2.5;      // logit standard deviation before the offset
    double subgroup_shift = 4.0;       // scales the per-feature shift profile, in sd units
    double subgroup_cov_scale = 1.6;   // within-cluster spread multiplier for the subgroup
    double subgroup_label_shift = 1.0; // relative perturbation of the label coefficients
    std::uint64_t seed = 0;

    void validate() const;
};

struct SyntheticData {
    Dataset train, test, ood;
    // Applied mean shift per feature, in core-population sd units; the
    // masking protocol targets the largest entries.
    std::vector<double> shift;
    // Calibrated linear coefficients of the in-domain label model (the
    // recoverability oracle compares fitted signs against these).
    std::vector<double> label_coefficients;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

struct CsvSchema {
    std::string label_column = "label";
    std::string subgroup_column;                // optional
    std::vector<std::string> feature_columns;   // empty = every remaining column
};

// Strict CSV reader: header row, '.' decimals, empty or "NA" cells become
// missing values (NaN). Malformed rows are rejected with their line number.
Dataset load_csv(const std::string& path, const CsvSchema& schema = {});
void write_csv(const Dataset& ds, const std::string& path, const std::string& comment = "");

struct PreprocessOptions {
    bool add_missing_indicators = false;
};

// The tabular pipeline fitted on the training split only: 8-IQR outlier
// windows, mean imputation and standardization. apply() never recomputes
// statistics, so test/ood splits cannot leak into them.
class Preprocessor {
public:
    static Preprocessor fit(const Dataset& train, PreprocessOptions options = {});
    // Rehydrates a fitted pipeline, e.g. from a stored model artifact.
    static Preprocessor from_stats(Standardization stats);

    Dataset apply(const Dataset& ds) const;
    const Standardization& stats() const { return stats_; }
    const std::vector<std::string>& warnings() const { return warnings_; }

private:
    Standardization stats_;
    std::vector<std::string> warnings_;
};

// Linear-interpolation quantile of a sorted sample.
double quantile_sorted(const std::vector<double>& sorted, double p);

// Splits off a tagged subgroup: the remainder keeps training, the subgroup
// becomes the out-of-domain set with each masked feature overwritten by the
// remainder's mean for that feature.
std::pair<Dataset, Dataset> make_ood_holdout(const Dataset& pool, const std::string& subgroup_tag,
                                             const std::vector<std::string>& masked_features);

// Overwrite the given feature columns with fixed values (one per feature).
Dataset mask_features(const Dataset& ds, const std::vector<std::size_t>& features,
                      const std::vector<double>& values);

std::vector<std::size_t> top_shifted_features(const std::vector<double>& shift, std::size_t k);

}  // namespace tabuq
