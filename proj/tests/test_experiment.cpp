#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "tabuq/experiment.hpp"
#include "tabuq/metrics.hpp"

using namespace tabuq;
namespace fs = std::filesystem;

namespace {

ExperimentConfig micro_config(std::uint64_t seed) {
    ExperimentConfig c;
    c.seed = seed;
    c.data.synthetic.n_features = 6;
    c.data.synthetic.n_train = 800;
    c.data.synthetic.n_test = 400;
    c.data.synthetic.n_ood = 300;
    c.hidden = {16, 16};
    c.train.epochs = 4;
    c.train.batch_size = 128;
    c.gbdt.n_trees = 15;
    c.gbdt.min_samples_leaf = 10;
    c.predict_samples = 24;
    return c;
}

std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("config digest is stable and independent of the output directory") {
    ExperimentConfig a = micro_config(5);
    ExperimentConfig b = micro_config(5);
    b.output_dir = "/somewhere/else";
    CHECK(a.digest() == b.digest());
    ExperimentConfig c = micro_config(6);
    CHECK(a.digest() != c.digest());
    // Round-trip through JSON preserves the digest.
    CHECK(ExperimentConfig::from_json(a.to_json()).digest() == a.digest());
}

TEST_CASE("run_experiment emits a complete, self-consistent bundle") {
    TempDir dir("tabuq_exp_bundle");
    ExperimentConfig config = micro_config(11);
    config.output_dir = dir.path.string();
    const ExperimentSummary s = run_experiment(config);

    for (const char* name :
         {"data/train.csv", "data/test.csv", "data/ood.csv", "data/data_meta.json",
          "model.json", "history.csv", "predictions_test.csv", "predictions_ood.csv",
          "bounds_test.json", "bounds_test.csv", "bounds_ood.json", "bounds_ood.csv",
          "metrics.json", "risk_coverage_bnn.csv", "risk_coverage_gbdt.csv", "scatter.csv",
          "ood_report.json", "summary.json"}) {
        CAPTURE(name);
        CHECK(fs::exists(dir.path / name));
    }
    CHECK_FALSE(fs::exists(dir.path / "incomplete.marker"));
    CHECK(s.bound_violations == 0);
    CHECK(s.bound_checked == 700);
    CHECK(s.n_test == 400);
    CHECK(s.ok());

    // Every reported number is recomputable from the predictions CSV alone.
    const PredictionFile pf = read_predictions((dir.path / "predictions_test.csv").string());
    CHECK(pf.config_digest == s.config_digest);
    std::vector<double> means;
    std::vector<int> labels;
    for (const auto& r : pf.rows) {
        means.push_back(r.bnn_mean);
        labels.push_back(r.label);
    }
    CHECK(auroc(means, labels) == s.test_auroc_bnn);
}

TEST_CASE("two runs with the same seed are byte-identical") {
    TempDir da("tabuq_exp_det_a"), db("tabuq_exp_det_b");
    ExperimentConfig config = micro_config(21);
    config.output_dir = da.path.string();
    run_experiment(config);
    config.output_dir = db.path.string();
    run_experiment(config);

    std::size_t compared = 0;
    for (const auto& entry : fs::recursive_directory_iterator(da.path)) {
        if (!entry.is_regular_file()) continue;
        const fs::path rel = fs::relative(entry.path(), da.path);
        CAPTURE(rel.string());
        REQUIRE(fs::exists(db.path / rel));
        CHECK(read_file(entry.path()) == read_file(db.path / rel));
        ++compared;
    }
    CHECK(compared >= 18);

    // A different seed changes the outputs.
    TempDir dc("tabuq_exp_det_c");
    ExperimentConfig other = micro_config(22);
    other.output_dir = dc.path.string();
    run_experiment(other);
    CHECK(read_file(da.path / "predictions_test.csv") !=
          read_file(dc.path / "predictions_test.csv"));
}

TEST_CASE("ood-report refuses mixed config digests") {
    TempDir dir("tabuq_exp_mix");
    ExperimentConfig config = micro_config(31);
    config.output_dir = dir.path.string();
    run_experiment(config);

    // Tamper with the digest line of the ood predictions.
    const fs::path ood_csv = dir.path / "predictions_ood.csv";
    std::string content = read_file(ood_csv);
    const auto at = content.find("config_digest=");
    REQUIRE(at != std::string::npos);
    content[at + 14] = content[at + 14] == '0' ? '1' : '0';
    std::ofstream(ood_csv, std::ios::binary) << content;

    CHECK_THROWS_WITH_AS(
        stage_ood_report((dir.path / "predictions_test.csv").string(), ood_csv.string(),
                         (dir.path / "ood2.json").string()),
        doctest::Contains("different config digests"), std::invalid_argument);
}

TEST_CASE("predict refuses a model trained under a different config") {
    TempDir dir("tabuq_exp_modelmix");
    ExperimentConfig config = micro_config(41);
    config.output_dir = dir.path.string();
    run_experiment(config);

    ExperimentConfig other = micro_config(42);
    other.output_dir = dir.path.string();
    CHECK_THROWS_WITH_AS(
        stage_predict(other, (dir.path / "model.json").string(),
                      (dir.path / "data/test.csv").string(), "test", {},
                      (dir.path / "p2.csv").string()),
        doctest::Contains("different config"), std::invalid_argument);
}

TEST_CASE("evaluate rejects single-class predictions with a clear error") {
    TempDir dir("tabuq_exp_oneclass");
    const fs::path pred = dir.path / "one_class.csv";
    {
        std::ofstream f(pred);
        f << "# config_digest=abc\n";
        f << "record_id,tag,label,bnn_mean,bnn_variance,bnn_std,det_prob,gbdt_prob\n";
        for (int i = 0; i < 10; ++i)
            f << i << ",test,1,0.9,0.001,0.0316,0.8,0.85\n";
    }
    CHECK_THROWS_WITH_AS(stage_evaluate(pred.string(), dir.path.string()),
                         doctest::Contains("single label class"), std::invalid_argument);
}

TEST_CASE("csv-source experiments run without an out-of-domain split") {
    TempDir dir("tabuq_exp_csvsrc");
    // Materialize a small dataset as external CSVs first.
    SyntheticSpec spec;
    spec.n_features = 5;
    spec.n_train = 600;
    spec.n_test = 300;
    spec.n_ood = 10;
    spec.seed = 61;
    const SyntheticData d = generate_synthetic(spec);
    write_csv(d.train, (dir.path / "train.csv").string());
    write_csv(d.test, (dir.path / "test.csv").string());

    ExperimentConfig config = micro_config(61);
    config.output_dir = (dir.path / "out").string();
    config.data.source = "csv";
    config.data.csv_train = (dir.path / "train.csv").string();
    config.data.csv_test = (dir.path / "test.csv").string();
    config.data.schema.subgroup_column = "subgroup";

    const ExperimentSummary s = run_experiment(config);
    CHECK(s.ok());
    CHECK(s.n_ood == 0);
    CHECK(fs::exists(dir.path / "out/metrics.json"));
    CHECK(fs::exists(dir.path / "out/predictions_test.csv"));
    CHECK_FALSE(fs::exists(dir.path / "out/predictions_ood.csv"));
    CHECK_FALSE(fs::exists(dir.path / "out/ood_report.json"));
}

TEST_CASE("masking in predict pins features at the standardized training mean") {
    TempDir dir("tabuq_exp_mask");
    ExperimentConfig config = micro_config(51);
    config.output_dir = dir.path.string();
    run_experiment(config);

    // Re-run the ood prediction masking every feature: the records collapse
    // onto the training centroid, where predictive variance is low.
    const auto meta_names = [&] {
        std::ifstream f(dir.path / "data/data_meta.json");
        nlohmann::json j;
        f >> j;
        return j["feature_names"].get<std::vector<std::string>>();
    }();
    stage_predict(config, (dir.path / "model.json").string(),
                  (dir.path / "data/ood.csv").string(), "ood", meta_names,
                  (dir.path / "predictions_ood_allmask.csv").string());
    const PredictionFile all_masked =
        read_predictions((dir.path / "predictions_ood_allmask.csv").string());
    // Identical inputs give identical outputs.
    for (const auto& r : all_masked.rows) {
        CHECK(r.bnn_mean == all_masked.rows[0].bnn_mean);
        CHECK(r.bnn_variance == all_masked.rows[0].bnn_variance);
    }
    // And the centroid is a low-uncertainty point compared with the raw
    // shifted subgroup.
    stage_predict(config, (dir.path / "model.json").string(),
                  (dir.path / "data/ood.csv").string(), "ood", {},
                  (dir.path / "predictions_ood_raw.csv").string());
    const PredictionFile raw =
        read_predictions((dir.path / "predictions_ood_raw.csv").string());
    double raw_mean_var = 0.0;
    for (const auto& r : raw.rows) raw_mean_var += r.bnn_variance;
    raw_mean_var /= static_cast<double>(raw.rows.size());
    CHECK(all_masked.rows[0].bnn_variance < raw_mean_var);
}
