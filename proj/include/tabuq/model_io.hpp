#pragma once

#include <optional>
#include <string>

#include "tabuq/dataio.hpp"
#include "tabuq/gbdt.hpp"
#include "tabuq/network.hpp"

namespace tabuq {

// Versioned, self-describing container for everything a prediction stage
// needs: the trained models and the standardization fitted on the training
// split. Loading refuses any other format version.
struct ModelArtifact {
    static constexpr int kFormatVersion = 1;

    std::string config_digest;
    std::uint64_t seed = 0;
    std::optional<BnnModel> bnn;
    std::optional<DeterministicModel> det;
    std::optional<GbdtModel> gbdt;
    std::optional<Standardization> standardization;
};

void save_model(const ModelArtifact& artifact, const std::string& path);
ModelArtifact load_model(const std::string& path);

}  // namespace tabuq
