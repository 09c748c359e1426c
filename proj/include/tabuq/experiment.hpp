#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "tabuq/dataio.hpp"
#include "tabuq/gbdt.hpp"
#include "tabuq/training.hpp"

namespace tabuq {

// One experiment = data -> train -> predict -> bound check -> metrics ->
// out-of-domain report. Every stage reads and writes files under the output
// directory, and run_experiment() is exactly the chained stages, so the CLI
// subcommands compose to the same result.
struct ExperimentConfig {
    std::uint64_t seed = 42;
    std::string output_dir = "out";

    struct Data {
        std::string source = "synthetic";  // "synthetic" | "csv"
        SyntheticSpec synthetic;
        std::string csv_train, csv_test, csv_ood;
        CsvSchema schema;
        // Out-of-domain masking: explicit feature names win; otherwise the
        // top-k most shifted features from the generator metadata.
        std::vector<std::string> mask_features;
        std::size_t mask_top_shifted = 2;
        bool add_missing_indicators = false;
    } data;

    std::vector<std::size_t> hidden = {128, 128};
    MixturePrior prior;
    TrainConfig train;
    GbdtConfig gbdt;
    std::size_t predict_samples = 100;  // T

    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig from_file(const std::string& path);
    nlohmann::json to_json() const;

    // FNV-1a over the canonical JSON form; stamped into every output so
    // mixed-provenance inputs are refused downstream.
    std::string digest() const;

    void validate() const;
};

// A row of the predictions file; everything every report needs is here, so
// each emitted number is recomputable from the CSV alone.
struct PredictionRow {
    std::size_t record_id = 0;
    std::string tag;
    int label = 0;
    double bnn_mean = 0.0;
    double bnn_variance = 0.0;
    double bnn_std = 0.0;
    double det_prob = 0.0;
    double gbdt_prob = 0.0;
};

struct PredictionFile {
    std::string config_digest;
    std::vector<PredictionRow> rows;
};

PredictionFile read_predictions(const std::string& path);

struct ExperimentSummary {
    std::string config_digest;
    std::size_t n_train = 0, n_test = 0, n_ood = 0;
    double first_epoch_elbo = 0.0, final_epoch_elbo = 0.0;
    double test_auroc_bnn = 0.0, test_auroc_det = 0.0, test_auroc_gbdt = 0.0;
    double quantile_ratio_bnn = 0.0, quantile_ratio_gbdt = 0.0;
    double auroc_at_20pct = 0.0, auroc_full = 0.0;
    double variance_ratio = 0.0, mann_whitney_p_value = 1.0;
    double ood_auroc_bnn = 0.0, ood_auroc_det = 0.0;
    double error_detection_auroc_bnn = 0.0, error_detection_auroc_det = 0.0;
    std::size_t bound_violations = 0;
    std::size_t bound_checked = 0;

    bool ok() const { return bound_violations == 0; }
};

// Individual stages; file names are relative to the directory arguments.
void stage_generate(const ExperimentConfig& config, const std::string& dir);
void stage_train(const ExperimentConfig& config, const std::string& train_csv,
                 const std::string& val_csv, const std::string& model_path,
                 const std::string& history_path);
void stage_predict(const ExperimentConfig& config, const std::string& model_path,
                   const std::string& data_csv, const std::string& tag,
                   const std::vector<std::string>& mask_features, const std::string& out_csv);
// Returns the number of violations (expected: zero).
std::size_t stage_verify_bounds(const std::string& predictions_csv,
                                const std::string& report_json, const std::string& report_csv);
void stage_evaluate(const std::string& predictions_csv, const std::string& dir);
void stage_ood_report(const std::string& predictions_in_csv, const std::string& predictions_out_csv,
                      const std::string& report_json);

ExperimentSummary run_experiment(const ExperimentConfig& config);

}  // namespace tabuq
