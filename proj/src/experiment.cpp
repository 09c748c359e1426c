#include "tabuq/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include "tabuq/bounds.hpp"
#include "tabuq/inference.hpp"
#include "tabuq/metrics.hpp"
#include "tabuq/model_io.hpp"
#include "tabuq/strings.hpp"

namespace tabuq {

namespace fs = std::filesystem;
using nlohmann::json;

// --- configuration -----------------------------------------------------------

void ExperimentConfig::validate() const {
    detail::require(data.source == "synthetic" || data.source == "csv",
                    "ExperimentConfig: data.source must be 'synthetic' or 'csv'");
    if (data.source == "synthetic") data.synthetic.validate();
    if (data.source == "csv")
        detail::require(!data.csv_train.empty() && !data.csv_test.empty(),
                        "ExperimentConfig: csv source needs train and test paths");
    prior.validate();
    train.validate();
    gbdt.validate();
    detail::require(predict_samples >= 2, "ExperimentConfig: predict_samples must be >= 2");
    detail::require(!hidden.empty(), "ExperimentConfig: need at least one hidden layer");
}

json ExperimentConfig::to_json() const {
    // output_dir is a runtime location, not part of the experiment identity,
    // so it is deliberately absent here (and from the digest).
    json synth{{"n_features", data.synthetic.n_features},
               {"n_train", data.synthetic.n_train},
               {"n_test", data.synthetic.n_test},
               {"n_ood", data.synthetic.n_ood},
               {"clusters", data.synthetic.clusters},
               {"class_prior", data.synthetic.class_prior},
               {"label_sharpness", data.synthetic.label_sharpness},
               {"subgroup_shift", data.synthetic.subgroup_shift},
               {"subgroup_cov_scale", data.synthetic.subgroup_cov_scale},
               {"subgroup_label_shift", data.synthetic.subgroup_label_shift}};
    json j;
    j["seed"] = seed;
    j["data"] = json{{"source", data.source},
                     {"synthetic", std::move(synth)},
                     {"csv",
                      json{{"train", data.csv_train},
                           {"test", data.csv_test},
                           {"ood", data.csv_ood},
                           {"label_column", data.schema.label_column},
                           {"subgroup_column", data.schema.subgroup_column},
                           {"feature_columns", data.schema.feature_columns}}},
                     {"mask_features", data.mask_features},
                     {"mask_top_shifted", data.mask_top_shifted},
                     {"add_missing_indicators", data.add_missing_indicators}};
    j["network"] = json{{"hidden", hidden}};
    j["prior"] = json{{"pi", prior.pi}, {"sigma1", prior.sigma1}, {"sigma2", prior.sigma2}};
    j["train"] = json{{"epochs", train.epochs},
                      {"batch_size", train.batch_size},
                      {"learning_rate", train.learning_rate},
                      {"beta1", train.beta1},
                      {"beta2", train.beta2},
                      {"epsilon", train.epsilon},
                      {"mc_samples", train.mc_samples},
                      {"kl_weighting",
                       train.kl_weighting == TrainConfig::KlWeighting::Uniform ? "uniform"
                                                                               : "geometric"}};
    j["gbdt"] = json{{"n_trees", gbdt.n_trees},
                     {"max_depth", gbdt.max_depth},
                     {"learning_rate", gbdt.learning_rate},
                     {"min_samples_leaf", gbdt.min_samples_leaf}};
    j["predict_samples"] = predict_samples;
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    ExperimentConfig c;
    c.seed = j.value("seed", c.seed);
    c.output_dir = j.value("output_dir", c.output_dir);
    if (j.contains("data")) {
        const json& d = j["data"];
        c.data.source = d.value("source", c.data.source);
        if (d.contains("synthetic")) {
            const json& s = d["synthetic"];
            SyntheticSpec& sp = c.data.synthetic;
            sp.n_features = s.value("n_features", sp.n_features);
            sp.n_train = s.value("n_train", sp.n_train);
            sp.n_test = s.value("n_test", sp.n_test);
            sp.n_ood = s.value("n_ood", sp.n_ood);
            sp.clusters = s.value("clusters", sp.clusters);
            sp.class_prior = s.value("class_prior", sp.class_prior);
            sp.label_sharpness = s.value("label_sharpness", sp.label_sharpness);
            sp.subgroup_shift = s.value("subgroup_shift", sp.subgroup_shift);
            sp.subgroup_cov_scale = s.value("subgroup_cov_scale", sp.subgroup_cov_scale);
            sp.subgroup_label_shift = s.value("subgroup_label_shift", sp.subgroup_label_shift);
        }
        if (d.contains("csv")) {
            const json& v = d["csv"];
            c.data.csv_train = v.value("train", std::string());
            c.data.csv_test = v.value("test", std::string());
            c.data.csv_ood = v.value("ood", std::string());
            c.data.schema.label_column = v.value("label_column", std::string("label"));
            c.data.schema.subgroup_column = v.value("subgroup_column", std::string());
            c.data.schema.feature_columns =
                v.value("feature_columns", std::vector<std::string>());
        }
        c.data.mask_features = d.value("mask_features", c.data.mask_features);
        c.data.mask_top_shifted = d.value("mask_top_shifted", c.data.mask_top_shifted);
        c.data.add_missing_indicators =
            d.value("add_missing_indicators", c.data.add_missing_indicators);
    }
    if (j.contains("network")) c.hidden = j["network"].value("hidden", c.hidden);
    if (j.contains("prior")) {
        c.prior.pi = j["prior"].value("pi", c.prior.pi);
        c.prior.sigma1 = j["prior"].value("sigma1", c.prior.sigma1);
        c.prior.sigma2 = j["prior"].value("sigma2", c.prior.sigma2);
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        c.train.epochs = t.value("epochs", c.train.epochs);
        c.train.batch_size = t.value("batch_size", c.train.batch_size);
        c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
        c.train.beta1 = t.value("beta1", c.train.beta1);
        c.train.beta2 = t.value("beta2", c.train.beta2);
        c.train.epsilon = t.value("epsilon", c.train.epsilon);
        c.train.mc_samples = t.value("mc_samples", c.train.mc_samples);
        const std::string klw = t.value("kl_weighting", std::string("uniform"));
        detail::require(klw == "uniform" || klw == "geometric",
                        "config: kl_weighting must be 'uniform' or 'geometric'");
        c.train.kl_weighting = klw == "uniform" ? TrainConfig::KlWeighting::Uniform
                                                : TrainConfig::KlWeighting::Geometric;
    }
    if (j.contains("gbdt")) {
        const json& g = j["gbdt"];
        c.gbdt.n_trees = g.value("n_trees", c.gbdt.n_trees);
        c.gbdt.max_depth = g.value("max_depth", c.gbdt.max_depth);
        c.gbdt.learning_rate = g.value("learning_rate", c.gbdt.learning_rate);
        c.gbdt.min_samples_leaf = g.value("min_samples_leaf", c.gbdt.min_samples_leaf);
    }
    c.predict_samples = j.value("predict_samples", c.predict_samples);
    return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream f(path);
    detail::require(f.good(), "config: cannot open " + path);
    json j;
    f >> j;
    return from_json(j);
}

std::string ExperimentConfig::digest() const {
    const std::uint64_t h = fnv1a64(to_json().dump());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// --- small file helpers ------------------------------------------------------

namespace {

constexpr double kRiskQuantile = 0.2;

std::string digest_comment(const std::string& digest) { return "config_digest=" + digest; }

std::string read_digest(const std::string& path) {
    std::ifstream f(path);
    detail::require(f.good(), "cannot open " + path);
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        if (line[0] != '#') break;
        const std::size_t at = line.find("config_digest=");
        if (at != std::string::npos) return trim(line.substr(at + 14));
    }
    return "";
}

void write_json_file(const json& j, const std::string& path) {
    std::ofstream f(path);
    detail::require(f.good(), "cannot open " + path + " for writing");
    f << j.dump(1) << "\n";
}

json read_json_file(const std::string& path) {
    std::ifstream f(path);
    detail::require(f.good(), "cannot open " + path);
    json j;
    f >> j;
    return j;
}

CsvSchema effective_schema(const ExperimentConfig& config) {
    if (config.data.source == "csv") return config.data.schema;
    CsvSchema s;
    s.label_column = "label";
    s.subgroup_column = "subgroup";
    return s;
}

void log_stage(const std::string& msg) { std::fprintf(stderr, "[tabuq] %s\n", msg.c_str()); }

}  // namespace

PredictionFile read_predictions(const std::string& path) {
    PredictionFile pf;
    pf.config_digest = read_digest(path);
    std::ifstream f(path);
    detail::require(f.good(), "read_predictions: cannot open " + path);
    std::string line;
    bool header_seen = false;
    std::size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            detail::require(line == "record_id,tag,label,bnn_mean,bnn_variance,bnn_std,"
                                    "det_prob,gbdt_prob",
                            "read_predictions: unexpected header in " + path);
            header_seen = true;
            continue;
        }
        const auto cells = split(line, ',');
        detail::require(cells.size() == 8, "read_predictions: line " + std::to_string(line_no) +
                                               ": expected 8 cells");
        PredictionRow r;
        r.record_id = std::stoull(cells[0]);
        r.tag = cells[1];
        r.label = std::stoi(cells[2]);
        r.bnn_mean = std::strtod(cells[3].c_str(), nullptr);
        r.bnn_variance = std::strtod(cells[4].c_str(), nullptr);
        r.bnn_std = std::strtod(cells[5].c_str(), nullptr);
        r.det_prob = std::strtod(cells[6].c_str(), nullptr);
        r.gbdt_prob = std::strtod(cells[7].c_str(), nullptr);
        pf.rows.push_back(std::move(r));
    }
    detail::require(header_seen, "read_predictions: no header in " + path);
    return pf;
}

// --- stages -------------------------------------------------------------------

void stage_generate(const ExperimentConfig& config, const std::string& dir) {
    detail::require(config.data.source == "synthetic",
                    "generate-data: config data.source must be 'synthetic'");
    SyntheticSpec spec = config.data.synthetic;
    spec.seed = config.seed;
    const SyntheticData data = generate_synthetic(spec);
    const std::string digest = config.digest();

    fs::create_directories(dir);
    write_csv(data.train, dir + "/train.csv", digest_comment(digest));
    write_csv(data.test, dir + "/test.csv", digest_comment(digest));
    write_csv(data.ood, dir + "/ood.csv", digest_comment(digest));

    std::vector<std::string> mask = config.data.mask_features;
    if (mask.empty()) {
        for (std::size_t j : top_shifted_features(data.shift, config.data.mask_top_shifted))
            mask.push_back(data.train.feature_names[j]);
    }
    json meta;
    meta["config_digest"] = digest;
    meta["feature_names"] = data.train.feature_names;
    meta["shift_sd_units"] = data.shift;
    meta["mask_features"] = mask;
    meta["n_train"] = data.train.n();
    meta["n_test"] = data.test.n();
    meta["n_ood"] = data.ood.n();
    meta["class_prior"] = spec.class_prior;
    write_json_file(meta, dir + "/data_meta.json");
}

void stage_train(const ExperimentConfig& config, const std::string& train_csv,
                 const std::string& val_csv, const std::string& model_path,
                 const std::string& history_path) {
    const std::string digest = config.digest();
    const CsvSchema schema = effective_schema(config);

    const std::string data_digest = read_digest(train_csv);
    detail::require(data_digest.empty() || data_digest == digest,
                    "train: data file " + train_csv + " was generated under a different config");

    Dataset raw_train = load_csv(train_csv, schema);
    PreprocessOptions opts;
    opts.add_missing_indicators = config.data.add_missing_indicators;
    const Preprocessor pp = Preprocessor::fit(raw_train, opts);
    for (const auto& w : pp.warnings()) log_stage("preprocess warning: " + w);
    const Dataset train_ds = pp.apply(raw_train);

    Dataset val_ds;
    const bool have_val = !val_csv.empty();
    if (have_val) val_ds = pp.apply(load_csv(val_csv, schema));

    NetworkSpec spec;
    spec.input_dim = train_ds.dim();
    spec.hidden = config.hidden;

    BnnModel bnn = init_bnn(spec, config.prior, derive_seed(config.seed, "init.bnn"));
    TrainConfig tc = config.train;
    tc.seed = derive_seed(config.seed, "training.bnn");
    const TrainHistory history =
        train(bnn, train_ds.x, train_ds.y, tc, have_val ? &val_ds.x : nullptr,
              have_val ? &val_ds.y : nullptr);

    DeterministicModel det = init_deterministic(spec, derive_seed(config.seed, "init.det"));
    TrainConfig dc = config.train;
    dc.seed = derive_seed(config.seed, "training.det");
    train_deterministic(det, train_ds.x, train_ds.y, dc, have_val ? &val_ds.x : nullptr,
                        have_val ? &val_ds.y : nullptr);

    GbdtConfig gc = config.gbdt;
    gc.seed = derive_seed(config.seed, "training.gbdt");
    GbdtModel gbdt = train_gbdt(train_ds.x, train_ds.y, gc);

    ModelArtifact artifact;
    artifact.config_digest = digest;
    artifact.seed = config.seed;
    artifact.bnn = std::move(bnn);
    artifact.det = std::move(det);
    artifact.gbdt = std::move(gbdt);
    artifact.standardization = pp.stats();
    save_model(artifact, model_path);

    std::ofstream hf(history_path);
    detail::require(hf.good(), "train: cannot open " + history_path);
    hf << "# " << digest_comment(digest) << "\n";
    hf << "epoch,elbo,nll,kl,val_bce\n";
    for (std::size_t e = 0; e < history.elbo.size(); ++e)
        hf << e << ',' << format_double(history.elbo[e]) << ',' << format_double(history.nll[e])
           << ',' << format_double(history.kl[e]) << ',' << format_double(history.val_bce[e])
           << '\n';
}

void stage_predict(const ExperimentConfig& config, const std::string& model_path,
                   const std::string& data_csv, const std::string& tag,
                   const std::vector<std::string>& mask_features_by_name,
                   const std::string& out_csv) {
    const ModelArtifact artifact = load_model(model_path);
    const std::string digest = config.digest();
    detail::require(artifact.config_digest == digest,
                    "predict: model " + model_path + " was trained under a different config");
    detail::require(artifact.bnn && artifact.det && artifact.gbdt && artifact.standardization,
                    "predict: model artifact is missing a section");

    const std::string data_digest = read_digest(data_csv);
    detail::require(data_digest.empty() || data_digest == digest,
                    "predict: data file " + data_csv + " was generated under a different config");

    const Preprocessor pp = Preprocessor::from_stats(*artifact.standardization);
    Dataset ds = pp.apply(load_csv(data_csv, effective_schema(config)));

    if (!mask_features_by_name.empty()) {
        std::vector<std::size_t> idx;
        for (const auto& name : mask_features_by_name) {
            const auto it =
                std::find(ds.feature_names.begin(), ds.feature_names.end(), name);
            detail::require(it != ds.feature_names.end(),
                            "predict: mask feature '" + name + "' not found");
            idx.push_back(static_cast<std::size_t>(it - ds.feature_names.begin()));
        }
        // Post-standardization the training mean of every feature is zero.
        ds = mask_features(ds, idx, std::vector<double>(idx.size(), 0.0));
    }

    const std::vector<PredictionSummary> summaries =
        predict(*artifact.bnn, ds.x, config.predict_samples,
                derive_seed(config.seed, "inference." + tag));
    const Matrix det_probs = forward_det(*artifact.det, ds.x);
    const std::vector<double> gbdt_probs = predict_gbdt(*artifact.gbdt, ds.x);

    std::ofstream f(out_csv);
    detail::require(f.good(), "predict: cannot open " + out_csv);
    f << "# " << digest_comment(digest) << "\n";
    f << "record_id,tag,label,bnn_mean,bnn_variance,bnn_std,det_prob,gbdt_prob\n";
    for (std::size_t i = 0; i < ds.n(); ++i) {
        f << i << ',' << tag << ',' << ds.y[i] << ',' << format_double(summaries[i].mean) << ','
          << format_double(summaries[i].variance) << ',' << format_double(summaries[i].std_dev())
          << ',' << format_double(det_probs[i]) << ',' << format_double(gbdt_probs[i]) << '\n';
    }
}

std::size_t stage_verify_bounds(const std::string& predictions_csv,
                                const std::string& report_json, const std::string& report_csv) {
    const PredictionFile pf = read_predictions(predictions_csv);
    std::vector<PredictionSummary> summaries(pf.rows.size());
    std::vector<int> labels(pf.rows.size());
    for (std::size_t i = 0; i < pf.rows.size(); ++i) {
        summaries[i].mean = pf.rows[i].bnn_mean;
        summaries[i].variance = pf.rows[i].bnn_variance;
        labels[i] = pf.rows[i].label;
    }
    const BoundReport report = verify_bounds(summaries, labels);

    json j;
    j["config_digest"] = pf.config_digest;
    j["records"] = report.checked;
    j["violations"] = report.violations.size();
    j["tolerance"] = report.tolerance;
    j["worst_margin"] = std::isfinite(report.worst_margin)
                            ? json(report.worst_margin)
                            : json(format_double(report.worst_margin));
    write_json_file(j, report_json);

    std::ofstream f(report_csv);
    detail::require(f.good(), "verify-bounds: cannot open " + report_csv);
    f << "# " << digest_comment(pf.config_digest) << "\n";
    f << "record_id,mean,variance,bce,lower,upper\n";
    for (const auto& r : report.records)
        f << r.index << ',' << format_double(r.mean) << ',' << format_double(r.variance) << ','
          << format_double(r.bce) << ',' << format_double(r.lower) << ','
          << format_double(r.upper) << '\n';
    return report.violations.size();
}

namespace {

void write_curve_csv(const RiskCoverageCurve& curve, const std::string& digest,
                     const std::string& path) {
    std::ofstream f(path);
    detail::require(f.good(), "evaluate: cannot open " + path);
    f << "# " << digest_comment(digest) << "\n";
    f << "k,coverage,cumulative_loss,prefix_auroc\n";
    for (std::size_t k = 0; k < curve.points.size(); ++k) {
        const auto& p = curve.points[k];
        f << (k + 1) << ',' << format_double(p.coverage) << ','
          << format_double(p.cumulative_loss) << ',' << format_double(p.auroc) << '\n';
    }
}

json detection_to_json(const DetectionReport& report, const char* pos_name,
                       const char* neg_name) {
    json rows = json::array();
    for (const auto& r : report.rows) {
        json row;
        row["method"] = r.method;
        row["auroc"] = r.auroc;
        row[pos_name] = r.aupr_positive;
        row[neg_name] = r.aupr_negative;
        rows.push_back(std::move(row));
    }
    return json{{"task", report.task}, {"rows", std::move(rows)}};
}

}  // namespace

void stage_evaluate(const std::string& predictions_csv, const std::string& dir) {
    const PredictionFile pf = read_predictions(predictions_csv);
    const std::size_t n = pf.rows.size();
    detail::require(n > 0, "evaluate: empty predictions file");
    {
        bool has0 = false, has1 = false;
        for (const auto& r : pf.rows) (r.label == 0 ? has0 : has1) = true;
        detail::require(has0 && has1,
                        "evaluate: predictions contain a single label class; both classes are "
                        "required for AUROC/AUPR");
    }

    std::vector<int> labels(n);
    std::vector<double> bnn_mean(n), bnn_var(n), det_prob(n), gbdt_prob(n);
    std::vector<double> bnn_loss(n), det_loss(n), gbdt_loss(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& r = pf.rows[i];
        labels[i] = r.label;
        bnn_mean[i] = r.bnn_mean;
        bnn_var[i] = r.bnn_variance;
        det_prob[i] = r.det_prob;
        gbdt_prob[i] = r.gbdt_prob;
        bnn_loss[i] = bce(r.bnn_mean, r.label);
        det_loss[i] = bce(r.det_prob, r.label);
        gbdt_loss[i] = bce(r.gbdt_prob, r.label);
    }

    const RiskCoverageCurve bnn_curve = risk_coverage(bnn_loss, bnn_var, bnn_mean, labels);
    const RiskCoverageCurve gbdt_curve = risk_coverage(gbdt_loss, bnn_var, gbdt_prob, labels);
    write_curve_csv(bnn_curve, pf.config_digest, dir + "/risk_coverage_bnn.csv");
    write_curve_csv(gbdt_curve, pf.config_digest, dir + "/risk_coverage_gbdt.csv");

    // Error/success detection: each method flags its own mistakes.
    std::vector<DetectionInput> det_inputs(2);
    det_inputs[0].method = "bnn_variance";
    det_inputs[1].method = "det_max_prob";
    for (std::size_t i = 0; i < n; ++i) {
        det_inputs[0].confidence.push_back(negated_variance_confidence(bnn_var[i]));
        det_inputs[0].condition.push_back((bnn_mean[i] >= 0.5 ? 1 : 0) == labels[i] ? 1 : 0);
        det_inputs[1].confidence.push_back(max_prob_confidence(det_prob[i]));
        det_inputs[1].condition.push_back((det_prob[i] >= 0.5 ? 1 : 0) == labels[i] ? 1 : 0);
    }
    const DetectionReport error_detection = detection_benchmark("error-detection", det_inputs);

    const std::size_t k20 =
        static_cast<std::size_t>(std::floor(kRiskQuantile * static_cast<double>(n)));
    const double mean_n = static_cast<double>(n);

    json m;
    m["config_digest"] = pf.config_digest;
    m["n_records"] = n;
    m["auroc"] = json{{"bnn", auroc(bnn_mean, labels)},
                      {"det", auroc(det_prob, labels)},
                      {"gbdt", auroc(gbdt_prob, labels)}};
    double bnn_total = 0, det_total = 0, gbdt_total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        bnn_total += bnn_loss[i];
        det_total += det_loss[i];
        gbdt_total += gbdt_loss[i];
    }
    m["mean_bce"] = json{{"bnn", bnn_total / mean_n},
                         {"det", det_total / mean_n},
                         {"gbdt", gbdt_total / mean_n}};
    m["risk_coverage"] =
        json{{"quantile", kRiskQuantile},
             {"bnn",
              json{{"quantile_loss_ratio", quantile_loss_ratio(bnn_curve, kRiskQuantile)},
                   {"auroc_at_quantile_coverage",
                    k20 >= 1 ? json(bnn_curve.points[k20 - 1].auroc) : json()},
                   {"auroc_full_coverage", bnn_curve.points.back().auroc},
                   {"total_loss", bnn_curve.total_loss()}}},
             {"gbdt_by_bnn_uncertainty",
              json{{"quantile_loss_ratio", quantile_loss_ratio(gbdt_curve, kRiskQuantile)},
                   {"total_loss", gbdt_curve.total_loss()}}}};
    m["error_detection"] = detection_to_json(error_detection, "aupr_success", "aupr_error");
    write_json_file(m, dir + "/metrics.json");

    std::ofstream sf(dir + "/scatter.csv");
    detail::require(sf.good(), "evaluate: cannot open scatter.csv");
    sf << "# " << digest_comment(pf.config_digest) << "\n";
    sf << "tag,mean,std,variance,label\n";
    for (const auto& r : pf.rows)
        sf << r.tag << ',' << format_double(r.bnn_mean) << ',' << format_double(r.bnn_std) << ','
           << format_double(r.bnn_variance) << ',' << r.label << '\n';
}

void stage_ood_report(const std::string& predictions_in_csv,
                      const std::string& predictions_out_csv, const std::string& report_json) {
    const PredictionFile in = read_predictions(predictions_in_csv);
    const PredictionFile out = read_predictions(predictions_out_csv);
    detail::require(in.config_digest == out.config_digest,
                    "ood-report: refusing to mix predictions from different config digests (" +
                        in.config_digest + " vs " + out.config_digest + ")");
    detail::require(!in.rows.empty() && !out.rows.empty(), "ood-report: empty predictions");

    std::vector<double> var_in, var_out;
    for (const auto& r : in.rows) var_in.push_back(r.bnn_variance);
    for (const auto& r : out.rows) var_out.push_back(r.bnn_variance);
    const double mean_in =
        std::accumulate(var_in.begin(), var_in.end(), 0.0) / static_cast<double>(var_in.size());
    const double mean_out = std::accumulate(var_out.begin(), var_out.end(), 0.0) /
                            static_cast<double>(var_out.size());

    std::vector<DetectionInput> inputs(2);
    inputs[0].method = "bnn_variance";
    inputs[1].method = "det_max_prob";
    const auto add_rows = [&](const PredictionFile& pf, int condition) {
        for (const auto& r : pf.rows) {
            inputs[0].confidence.push_back(negated_variance_confidence(r.bnn_variance));
            inputs[0].condition.push_back(condition);
            inputs[1].confidence.push_back(max_prob_confidence(r.det_prob));
            inputs[1].condition.push_back(condition);
        }
    };
    add_rows(in, 1);
    add_rows(out, 0);
    const DetectionReport detection = detection_benchmark("ood-detection", inputs);

    json j;
    j["config_digest"] = in.config_digest;
    j["n_in"] = in.rows.size();
    j["n_out"] = out.rows.size();
    j["mean_variance_in"] = mean_in;
    j["mean_variance_out"] = mean_out;
    j["variance_ratio"] = mean_out / mean_in;
    j["mann_whitney_p"] = mann_whitney_p(var_out, var_in);
    j["ood_detection"] = detection_to_json(detection, "aupr_in", "aupr_out");
    write_json_file(j, report_json);
}

// --- whole experiment ---------------------------------------------------------

ExperimentSummary run_experiment(const ExperimentConfig& config) {
    config.validate();
    const std::string dir = config.output_dir;
    fs::create_directories(dir);
    const std::string marker = dir + "/incomplete.marker";
    {
        std::ofstream mf(marker);
        mf << "experiment in progress or aborted; outputs may be partial\n";
    }

    const bool synthetic = config.data.source == "synthetic";
    std::string train_csv = config.data.csv_train;
    std::string test_csv = config.data.csv_test;
    std::string ood_csv = config.data.csv_ood;
    std::vector<std::string> mask = config.data.mask_features;

    const auto run_stage = [](const char* name, const std::function<void()>& fn) {
        try {
            log_stage(std::string("stage ") + name);
            fn();
        } catch (const std::exception& e) {
            throw std::runtime_error("stage " + std::string(name) + ": " + e.what());
        }
    };

    run_stage("generate-data", [&] {
        if (!synthetic) return;
        stage_generate(config, dir + "/data");
        train_csv = dir + "/data/train.csv";
        test_csv = dir + "/data/test.csv";
        ood_csv = dir + "/data/ood.csv";
        if (mask.empty())
            mask = read_json_file(dir + "/data/data_meta.json")["mask_features"]
                       .get<std::vector<std::string>>();
    });

    run_stage("train", [&] {
        stage_train(config, train_csv, test_csv, dir + "/model.json", dir + "/history.csv");
    });

    const bool have_ood = !ood_csv.empty();
    run_stage("predict", [&] {
        stage_predict(config, dir + "/model.json", test_csv, "test", {},
                      dir + "/predictions_test.csv");
        if (have_ood)
            stage_predict(config, dir + "/model.json", ood_csv, "ood", mask,
                          dir + "/predictions_ood.csv");
    });

    run_stage("verify-bounds", [&] {
        stage_verify_bounds(dir + "/predictions_test.csv", dir + "/bounds_test.json",
                            dir + "/bounds_test.csv");
        if (have_ood)
            stage_verify_bounds(dir + "/predictions_ood.csv", dir + "/bounds_ood.json",
                                dir + "/bounds_ood.csv");
    });

    run_stage("evaluate", [&] { stage_evaluate(dir + "/predictions_test.csv", dir); });

    run_stage("ood-report", [&] {
        if (have_ood)
            stage_ood_report(dir + "/predictions_test.csv", dir + "/predictions_ood.csv",
                             dir + "/ood_report.json");
    });

    // Summary, assembled from the emitted reports so it cannot disagree with
    // them.
    ExperimentSummary s;
    s.config_digest = config.digest();
    {
        const json metrics = read_json_file(dir + "/metrics.json");
        s.n_test = metrics["n_records"].get<std::size_t>();
        s.test_auroc_bnn = metrics["auroc"]["bnn"].get<double>();
        s.test_auroc_det = metrics["auroc"]["det"].get<double>();
        s.test_auroc_gbdt = metrics["auroc"]["gbdt"].get<double>();
        s.quantile_ratio_bnn =
            metrics["risk_coverage"]["bnn"]["quantile_loss_ratio"].get<double>();
        s.quantile_ratio_gbdt =
            metrics["risk_coverage"]["gbdt_by_bnn_uncertainty"]["quantile_loss_ratio"]
                .get<double>();
        const json& at_q = metrics["risk_coverage"]["bnn"]["auroc_at_quantile_coverage"];
        s.auroc_at_20pct =
            at_q.is_number() ? at_q.get<double>() : std::numeric_limits<double>::quiet_NaN();
        s.auroc_full = metrics["risk_coverage"]["bnn"]["auroc_full_coverage"].get<double>();
        for (const auto& row : metrics["error_detection"]["rows"]) {
            if (row["method"] == "bnn_variance")
                s.error_detection_auroc_bnn = row["auroc"].get<double>();
            if (row["method"] == "det_max_prob")
                s.error_detection_auroc_det = row["auroc"].get<double>();
        }
        const json bounds_test = read_json_file(dir + "/bounds_test.json");
        s.bound_checked += bounds_test["records"].get<std::size_t>();
        s.bound_violations += bounds_test["violations"].get<std::size_t>();
    }
    if (have_ood) {
        const json ood = read_json_file(dir + "/ood_report.json");
        s.n_ood = ood["n_out"].get<std::size_t>();
        s.variance_ratio = ood["variance_ratio"].get<double>();
        s.mann_whitney_p_value = ood["mann_whitney_p"].get<double>();
        for (const auto& row : ood["ood_detection"]["rows"]) {
            if (row["method"] == "bnn_variance") s.ood_auroc_bnn = row["auroc"].get<double>();
            if (row["method"] == "det_max_prob") s.ood_auroc_det = row["auroc"].get<double>();
        }
        const json bounds_ood = read_json_file(dir + "/bounds_ood.json");
        s.bound_checked += bounds_ood["records"].get<std::size_t>();
        s.bound_violations += bounds_ood["violations"].get<std::size_t>();
    }
    {
        // First/final epoch ELBO from the history file.
        std::ifstream hf(dir + "/history.csv");
        std::string line;
        bool first_row = true;
        while (std::getline(hf, line)) {
            if (line.empty() || line[0] == '#' || line[0] == 'e') continue;
            const auto cells = split(line, ',');
            const double elbo = std::strtod(cells[1].c_str(), nullptr);
            if (first_row) {
                s.first_epoch_elbo = elbo;
                first_row = false;
            }
            s.final_epoch_elbo = elbo;
        }
        const json meta = synthetic ? read_json_file(dir + "/data/data_meta.json") : json();
        s.n_train = synthetic ? meta["n_train"].get<std::size_t>() : 0;
    }

    json out;
    out["config_digest"] = s.config_digest;
    out["config"] = config.to_json();
    out["data"] = json{{"n_train", s.n_train}, {"n_test", s.n_test}, {"n_ood", s.n_ood}};
    out["training"] = json{{"first_epoch_elbo", s.first_epoch_elbo},
                           {"final_epoch_elbo", s.final_epoch_elbo}};
    out["test"] = json{{"auroc_bnn", s.test_auroc_bnn},
                       {"auroc_det", s.test_auroc_det},
                       {"auroc_gbdt", s.test_auroc_gbdt},
                       {"quantile_loss_ratio_bnn", s.quantile_ratio_bnn},
                       {"quantile_loss_ratio_gbdt", s.quantile_ratio_gbdt},
                       {"auroc_at_20pct_coverage", s.auroc_at_20pct},
                       {"auroc_full_coverage", s.auroc_full},
                       {"error_detection_auroc_bnn", s.error_detection_auroc_bnn},
                       {"error_detection_auroc_det", s.error_detection_auroc_det}};
    out["ood"] = json{{"variance_ratio", s.variance_ratio},
                      {"mann_whitney_p", s.mann_whitney_p_value},
                      {"auroc_bnn", s.ood_auroc_bnn},
                      {"auroc_det", s.ood_auroc_det}};
    out["bounds"] = json{{"checked", s.bound_checked}, {"violations", s.bound_violations}};
    write_json_file(out, dir + "/summary.json");

    fs::remove(marker);
    return s;
}

}  // namespace tabuq
