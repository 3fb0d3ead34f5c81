#pragma once

#include "mnn/vecmath.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace mnn {

/// Gaussian class clusters in a latent space pushed through a frozen random
/// tanh map into the ambient input space, plus isotropic observation noise.
struct DatasetSpec {
    std::size_t n_classes = 10;
    std::size_t n_train = 5000;
    std::size_t n_test = 1000;
    std::size_t ambient_dim = 64;
    std::size_t latent_dim = 8;
    std::size_t hidden_dim = 32;
    double cluster_spread = 1.0;
    double center_scale = 1.3;
    double input_noise = 1.0;  // isotropic noise added after the map
    std::uint64_t nonlinearity_seed = 7;  // class centers and the tanh map
    std::uint64_t sample_seed = 11;       // per-sample latent noise

    void validate() const;
    nlohmann::json to_json() const;
    static DatasetSpec from_json(const nlohmann::json& j, DatasetSpec base);
    static DatasetSpec from_json(const nlohmann::json& j);
};

struct LabeledData {
    Matrix inputs;  // N x ambient_dim
    std::vector<int> labels;

    std::size_t size() const noexcept { return labels.size(); }
};

struct Dataset {
    LabeledData train;
    LabeledData test;
};

/// Class-balanced (label of sample i is i mod n_classes); bit-identical for a
/// given (spec, seed).
Dataset generate_dataset(const DatasetSpec& spec, std::uint64_t seed);
inline Dataset generate_dataset(const DatasetSpec& spec) { return generate_dataset(spec, spec.sample_seed); }

/// Writes `label,x0,x1,...` rows with full double precision.
void write_dataset_csv(const LabeledData& data, const std::string& path);
LabeledData read_dataset_csv(const std::string& path);

}  // namespace mnn
