// tabuq: Bayes-by-backprop uncertainty toolkit for tabular binary
// classification. Subcommands mirror the experiment stages; `run` chains
// them all.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tabuq/experiment.hpp"
#include "tabuq/strings.hpp"

namespace {

// Config-field overrides: every flag that was actually passed wins over the
// JSON config value.
struct Overrides {
    CLI::App* app = nullptr;

    std::uint64_t seed = 42;
    std::string out_dir;
    std::size_t epochs = 0, batch_size = 0, mc_samples = 0, predict_samples = 0;
    double learning_rate = 0, prior_pi = 0, prior_sigma1 = 0, prior_sigma2 = 0;
    std::string kl_weighting;
    std::vector<std::size_t> hidden;
    std::size_t n_train = 0, n_test = 0, n_ood = 0, n_features = 0;
    double subgroup_shift = 0;
    std::size_t gbdt_trees = 0;

    void attach(CLI::App& a) {
        app = &a;
        a.add_option("--seed", seed, "Master seed");
        a.add_option("--out-dir", out_dir, "Output directory");
        a.add_option("--epochs", epochs, "Training epochs");
        a.add_option("--batch-size", batch_size, "Minibatch size");
        a.add_option("--learning-rate", learning_rate, "Adam learning rate");
        a.add_option("--mc-samples", mc_samples, "Monte Carlo samples per training step");
        a.add_option("--kl-weighting", kl_weighting, "Minibatch KL scheme: uniform|geometric");
        a.add_option("--predict-samples", predict_samples, "Posterior draws per prediction (T)");
        a.add_option("--hidden", hidden, "Hidden layer widths");
        a.add_option("--prior-pi", prior_pi, "Prior mixture weight");
        a.add_option("--prior-sigma1", prior_sigma1, "Prior wide component sd");
        a.add_option("--prior-sigma2", prior_sigma2, "Prior narrow component sd");
        a.add_option("--n-train", n_train, "Synthetic training rows");
        a.add_option("--n-test", n_test, "Synthetic test rows");
        a.add_option("--n-ood", n_ood, "Synthetic out-of-domain rows");
        a.add_option("--n-features", n_features, "Synthetic feature count");
        a.add_option("--subgroup-shift", subgroup_shift, "Synthetic subgroup shift scale");
        a.add_option("--gbdt-trees", gbdt_trees, "Boosting rounds");
    }

    bool passed(const std::string& flag) const { return app->count(flag) > 0; }

    tabuq::ExperimentConfig resolve(const std::string& config_path) const {
        tabuq::ExperimentConfig c;
        if (!config_path.empty()) c = tabuq::ExperimentConfig::from_file(config_path);
        if (passed("--seed")) c.seed = seed;
        if (passed("--out-dir")) c.output_dir = out_dir;
        if (passed("--epochs")) c.train.epochs = epochs;
        if (passed("--batch-size")) c.train.batch_size = batch_size;
        if (passed("--learning-rate")) c.train.learning_rate = learning_rate;
        if (passed("--mc-samples")) c.train.mc_samples = mc_samples;
        if (passed("--kl-weighting"))
            c.train.kl_weighting = kl_weighting == "geometric"
                                       ? tabuq::TrainConfig::KlWeighting::Geometric
                                       : tabuq::TrainConfig::KlWeighting::Uniform;
        if (passed("--predict-samples")) c.predict_samples = predict_samples;
        if (passed("--hidden")) c.hidden = hidden;
        if (passed("--prior-pi")) c.prior.pi = prior_pi;
        if (passed("--prior-sigma1")) c.prior.sigma1 = prior_sigma1;
        if (passed("--prior-sigma2")) c.prior.sigma2 = prior_sigma2;
        if (passed("--n-train")) c.data.synthetic.n_train = n_train;
        if (passed("--n-test")) c.data.synthetic.n_test = n_test;
        if (passed("--n-ood")) c.data.synthetic.n_ood = n_ood;
        if (passed("--n-features")) c.data.synthetic.n_features = n_features;
        if (passed("--subgroup-shift")) c.data.synthetic.subgroup_shift = subgroup_shift;
        if (passed("--gbdt-trees")) c.gbdt.n_trees = gbdt_trees;
        return c;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian uncertainty toolkit for tabular binary classification"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "Experiment config (JSON)")->envname("TABUQ_CONFIG");
    Overrides overrides;
    overrides.attach(app);

    auto* gen = app.add_subcommand("generate-data", "Write synthetic train/test/ood CSVs");
    std::string gen_dir;
    gen->add_option("--dir", gen_dir, "Target directory (default <out-dir>/data)");

    auto* train_cmd = app.add_subcommand("train", "Fit the BNN, deterministic and GBDT models");
    std::string train_csv, val_csv, model_path = "model.json", history_path = "history.csv";
    train_cmd->add_option("--train", train_csv, "Training CSV")->required();
    train_cmd->add_option("--val", val_csv, "Validation CSV (history only)");
    train_cmd->add_option("--model", model_path, "Model artifact to write");
    train_cmd->add_option("--history", history_path, "Training history CSV to write");

    auto* predict_cmd = app.add_subcommand("predict", "Monte Carlo predictions for a CSV");
    std::string pred_model = "model.json", pred_data, pred_tag = "test", pred_out;
    std::vector<std::string> pred_mask;
    predict_cmd->add_option("--model", pred_model, "Model artifact");
    predict_cmd->add_option("--data", pred_data, "Input CSV")->required();
    predict_cmd->add_option("--tag", pred_tag, "Dataset tag stored in the output");
    predict_cmd->add_option("--mask", pred_mask,
                            "Features to overwrite with the training mean");
    predict_cmd->add_option("--out", pred_out, "Predictions CSV to write")->required();

    auto* eval_cmd = app.add_subcommand("evaluate", "Metrics and risk-coverage curves");
    std::string eval_pred, eval_dir = ".";
    eval_cmd->add_option("--predictions", eval_pred, "Predictions CSV")->required();
    eval_cmd->add_option("--dir", eval_dir, "Directory for reports");

    auto* ood_cmd = app.add_subcommand("ood-report", "In- vs out-of-domain uncertainty report");
    std::string ood_in, ood_out, ood_json = "ood_report.json";
    ood_cmd->add_option("--in", ood_in, "In-domain predictions CSV")->required();
    ood_cmd->add_option("--out", ood_out, "Out-of-domain predictions CSV")->required();
    ood_cmd->add_option("--report", ood_json, "Report JSON to write");

    auto* verify_cmd = app.add_subcommand("verify-bounds", "Check the loss-bound theorem");
    std::string verify_pred, verify_json = "bounds.json", verify_csv = "bounds.csv";
    verify_cmd->add_option("--predictions", verify_pred, "Predictions CSV")->required();
    verify_cmd->add_option("--report", verify_json, "Report JSON to write");
    verify_cmd->add_option("--records", verify_csv, "Per-record CSV to write");

    auto* run_cmd = app.add_subcommand("run", "Full experiment (all stages chained)");
    (void)run_cmd;

    CLI11_PARSE(app, argc, argv);

    try {
        tabuq::ExperimentConfig config = overrides.resolve(config_path);

        if (gen->parsed()) {
            tabuq::stage_generate(config,
                                  gen_dir.empty() ? config.output_dir + "/data" : gen_dir);
        } else if (train_cmd->parsed()) {
            tabuq::stage_train(config, train_csv, val_csv, model_path, history_path);
        } else if (predict_cmd->parsed()) {
            tabuq::stage_predict(config, pred_model, pred_data, pred_tag, pred_mask, pred_out);
        } else if (eval_cmd->parsed()) {
            tabuq::stage_evaluate(eval_pred, eval_dir);
        } else if (ood_cmd->parsed()) {
            tabuq::stage_ood_report(ood_in, ood_out, ood_json);
        } else if (verify_cmd->parsed()) {
            const std::size_t violations =
                tabuq::stage_verify_bounds(verify_pred, verify_json, verify_csv);
            if (violations != 0) {
                std::fprintf(stderr, "tabuq: %zu bound violation(s) found\n", violations);
                return 1;
            }
        } else if (run_cmd->parsed()) {
            const tabuq::ExperimentSummary summary = tabuq::run_experiment(config);
            std::printf("experiment complete: digest=%s test_auroc=%.4f bound_violations=%zu\n",
                        summary.config_digest.c_str(), summary.test_auroc_bnn,
                        summary.bound_violations);
            if (!summary.ok()) {
                std::fprintf(stderr, "tabuq: bound violations detected\n");
                return 1;
            }
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "tabuq: %s\n", e.what());
        return 1;
    }
    return 0;
}
