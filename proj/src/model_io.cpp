#include "tabuq/model_io.hpp"

#include <fstream>

#include "json.hpp"

namespace tabuq {

using nlohmann::json;

namespace {

json matrix_to_json(const Matrix& m) {
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

Matrix matrix_from_json(const json& j) {
    return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                  j.at("data").get<std::vector<double>>());
}

json spec_to_json(const NetworkSpec& s) {
    return json{{"input_dim", s.input_dim}, {"hidden", s.hidden}};
}

NetworkSpec spec_from_json(const json& j) {
    NetworkSpec s;
    s.input_dim = j.at("input_dim").get<std::size_t>();
    s.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    return s;
}

json prior_to_json(const MixturePrior& p) {
    return json{{"pi", p.pi}, {"sigma1", p.sigma1}, {"sigma2", p.sigma2}};
}

MixturePrior prior_from_json(const json& j) {
    MixturePrior p;
    p.pi = j.at("pi").get<double>();
    p.sigma1 = j.at("sigma1").get<double>();
    p.sigma2 = j.at("sigma2").get<double>();
    return p;
}

json standardization_to_json(const Standardization& s) {
    json j;
    j["feature_names"] = s.feature_names;
    j["mean"] = s.mean;
    j["sd"] = s.sd;
    j["q1"] = s.q1;
    j["q3"] = s.q3;
    j["window_lo"] = s.window_lo;
    j["window_hi"] = s.window_hi;
    j["add_missing_indicators"] = s.add_missing_indicators;
    j["indicator_features"] = s.indicator_features;
    return j;
}

Standardization standardization_from_json(const json& j) {
    Standardization s;
    s.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    s.mean = j.at("mean").get<std::vector<double>>();
    s.sd = j.at("sd").get<std::vector<double>>();
    s.q1 = j.at("q1").get<std::vector<double>>();
    s.q3 = j.at("q3").get<std::vector<double>>();
    s.window_lo = j.at("window_lo").get<std::vector<double>>();
    s.window_hi = j.at("window_hi").get<std::vector<double>>();
    s.add_missing_indicators = j.at("add_missing_indicators").get<bool>();
    s.indicator_features = j.at("indicator_features").get<std::vector<std::size_t>>();
    return s;
}

}  // namespace

void save_model(const ModelArtifact& artifact, const std::string& path) {
    json j;
    j["format_version"] = ModelArtifact::kFormatVersion;
    j["config_digest"] = artifact.config_digest;
    j["seed"] = artifact.seed;

    if (artifact.bnn) {
        const BnnModel& m = *artifact.bnn;
        json layers = json::array();
        for (const auto& l : m.params.layers)
            layers.push_back(json{{"mu_w", matrix_to_json(l.mu_w)},
                                  {"rho_w", matrix_to_json(l.rho_w)},
                                  {"mu_b", matrix_to_json(l.mu_b)},
                                  {"rho_b", matrix_to_json(l.rho_b)}});
        j["bnn"] = json{{"spec", spec_to_json(m.spec)},
                        {"prior", prior_to_json(m.prior)},
                        {"init_seed", m.init_seed},
                        {"trained_epochs", m.trained_epochs},
                        {"layers", std::move(layers)}};
    }
    if (artifact.det) {
        const DeterministicModel& m = *artifact.det;
        json layers = json::array();
        for (const auto& l : m.layers)
            layers.push_back(json{{"w", matrix_to_json(l.w)}, {"b", matrix_to_json(l.b)}});
        j["det"] = json{{"spec", spec_to_json(m.spec)},
                        {"trained_epochs", m.trained_epochs},
                        {"layers", std::move(layers)}};
    }
    if (artifact.gbdt) {
        const GbdtModel& m = *artifact.gbdt;
        json trees = json::array();
        for (const auto& t : m.trees) {
            json nodes = json::array();
            for (const auto& n : t.nodes)
                nodes.push_back(json::array({n.feature, n.threshold, n.left, n.right, n.value}));
            trees.push_back(std::move(nodes));
        }
        j["gbdt"] = json{{"base_logodds", m.base_logodds},
                         {"learning_rate", m.learning_rate},
                         {"n_features", m.n_features},
                         {"trees", std::move(trees)}};
    }
    if (artifact.standardization)
        j["standardization"] = standardization_to_json(*artifact.standardization);

    std::ofstream f(path);
    detail::require(f.good(), "save_model: cannot open " + path);
    f << j.dump(1) << "\n";
}

ModelArtifact load_model(const std::string& path) {
    std::ifstream f(path);
    detail::require(f.good(), "load_model: cannot open " + path);
    json j;
    f >> j;

    const int version = j.at("format_version").get<int>();
    if (version != ModelArtifact::kFormatVersion)
        throw std::runtime_error("load_model: unsupported format version " +
                                 std::to_string(version) + " (expected " +
                                 std::to_string(ModelArtifact::kFormatVersion) + ")");

    ModelArtifact artifact;
    artifact.config_digest = j.at("config_digest").get<std::string>();
    artifact.seed = j.at("seed").get<std::uint64_t>();

    if (j.contains("bnn")) {
        const json& b = j["bnn"];
        BnnModel m;
        m.spec = spec_from_json(b.at("spec"));
        m.prior = prior_from_json(b.at("prior"));
        m.init_seed = b.at("init_seed").get<std::uint64_t>();
        m.trained_epochs = b.at("trained_epochs").get<std::size_t>();
        for (const json& l : b.at("layers"))
            m.params.layers.push_back(LayerPosterior{
                matrix_from_json(l.at("mu_w")), matrix_from_json(l.at("rho_w")),
                matrix_from_json(l.at("mu_b")), matrix_from_json(l.at("rho_b"))});
        artifact.bnn = std::move(m);
    }
    if (j.contains("det")) {
        const json& d = j["det"];
        DeterministicModel m;
        m.spec = spec_from_json(d.at("spec"));
        m.trained_epochs = d.at("trained_epochs").get<std::size_t>();
        for (const json& l : d.at("layers"))
            m.layers.push_back(
                LayerWeights{matrix_from_json(l.at("w")), matrix_from_json(l.at("b"))});
        artifact.det = std::move(m);
    }
    if (j.contains("gbdt")) {
        const json& g = j["gbdt"];
        GbdtModel m;
        m.base_logodds = g.at("base_logodds").get<double>();
        m.learning_rate = g.at("learning_rate").get<double>();
        m.n_features = g.at("n_features").get<std::size_t>();
        for (const json& t : g.at("trees")) {
            Tree tree;
            for (const json& n : t) {
                TreeNode node;
                node.feature = n.at(0).get<int>();
                node.threshold = n.at(1).get<double>();
                node.left = n.at(2).get<int>();
                node.right = n.at(3).get<int>();
                node.value = n.at(4).get<double>();
                tree.nodes.push_back(node);
            }
            m.trees.push_back(std::move(tree));
        }
        artifact.gbdt = std::move(m);
    }
    if (j.contains("standardization"))
        artifact.standardization = standardization_from_json(j["standardization"]);
    return artifact;
}

}  // namespace tabuq
