#include "mnn/dataset.hpp"

#include "mnn/random.hpp"
#include "mnn/util.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace mnn {

void DatasetSpec::validate() const {
    if (n_classes < 2) throw Error("DatasetSpec: n_classes must be at least 2");
    if (n_train == 0 || n_test == 0) throw Error("DatasetSpec: empty split");
    if (latent_dim == 0 || hidden_dim == 0) throw Error("DatasetSpec: zero latent/hidden dim");
    if (ambient_dim < latent_dim) {
        throw Error("DatasetSpec: ambient_dim " + std::to_string(ambient_dim) + " < latent_dim " +
                    std::to_string(latent_dim));
    }
    if (!(cluster_spread >= 0.0)) throw Error("DatasetSpec: cluster_spread must be >= 0");
    if (!(input_noise >= 0.0)) throw Error("DatasetSpec: input_noise must be >= 0");
}

nlohmann::json DatasetSpec::to_json() const {
    return {{"n_classes", n_classes},
            {"n_train", n_train},
            {"n_test", n_test},
            {"ambient_dim", ambient_dim},
            {"latent_dim", latent_dim},
            {"hidden_dim", hidden_dim},
            {"cluster_spread", cluster_spread},
            {"center_scale", center_scale},
            {"input_noise", input_noise},
            {"nonlinearity_seed", nonlinearity_seed},
            {"sample_seed", sample_seed}};
}

DatasetSpec DatasetSpec::from_json(const nlohmann::json& j) { return from_json(j, DatasetSpec{}); }

DatasetSpec DatasetSpec::from_json(const nlohmann::json& j, DatasetSpec s) {
    s.n_classes = j.value("n_classes", s.n_classes);
    s.n_train = j.value("n_train", s.n_train);
    s.n_test = j.value("n_test", s.n_test);
    s.ambient_dim = j.value("ambient_dim", s.ambient_dim);
    s.latent_dim = j.value("latent_dim", s.latent_dim);
    s.hidden_dim = j.value("hidden_dim", s.hidden_dim);
    s.cluster_spread = j.value("cluster_spread", s.cluster_spread);
    s.center_scale = j.value("center_scale", s.center_scale);
    s.input_noise = j.value("input_noise", s.input_noise);
    s.nonlinearity_seed = j.value("nonlinearity_seed", s.nonlinearity_seed);
    s.sample_seed = j.value("sample_seed", s.sample_seed);
    return s;
}

namespace {

LabeledData sample_split(const DatasetSpec& spec, const Matrix& centers, const Matrix& a, const Vector& a_bias,
                         const Matrix& b, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    const auto latent = static_cast<Eigen::Index>(spec.latent_dim);
    Matrix z(static_cast<Eigen::Index>(n), latent);
    LabeledData out;
    out.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % spec.n_classes);
        out.labels[i] = label;
        for (Eigen::Index c = 0; c < latent; ++c) {
            z(static_cast<Eigen::Index>(i), c) = centers(label, c) + spec.cluster_spread * gaussian(rng);
        }
    }
    Matrix h = z * a.transpose();
    h.rowwise() += a_bias.transpose();
    h = h.array().tanh().matrix();
    out.inputs = h * b.transpose();
    if (spec.input_noise > 0.0) {
        Rng noise(derive_seed(seed, {tag(Stream::dataset), 3}));
        for (Eigen::Index i = 0; i < out.inputs.size(); ++i) out.inputs.data()[i] += spec.input_noise * gaussian(noise);
    }
    return out;
}

}  // namespace

Dataset generate_dataset(const DatasetSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(derive_seed(spec.nonlinearity_seed, {tag(Stream::dataset)}));
    const auto latent = static_cast<Eigen::Index>(spec.latent_dim);
    const auto hidden = static_cast<Eigen::Index>(spec.hidden_dim);
    const auto ambient = static_cast<Eigen::Index>(spec.ambient_dim);

    Matrix centers(static_cast<Eigen::Index>(spec.n_classes), latent);
    for (Eigen::Index i = 0; i < centers.size(); ++i) centers.data()[i] = spec.center_scale * gaussian(rng);
    // first layer gain ~1/sqrt(latent) keeps tanh in its bent but unsaturated range
    Matrix a(hidden, latent);
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        a.data()[i] = gaussian(rng) / std::sqrt(static_cast<double>(latent));
    }
    Vector a_bias(hidden);
    for (Eigen::Index i = 0; i < hidden; ++i) a_bias[i] = 0.5 * gaussian(rng);
    Matrix b(ambient, hidden);
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = gaussian(rng) / std::sqrt(static_cast<double>(hidden));

    Dataset d;
    d.train = sample_split(spec, centers, a, a_bias, b, spec.n_train, derive_seed(seed, {tag(Stream::dataset), 1}));
    d.test = sample_split(spec, centers, a, a_bias, b, spec.n_test, derive_seed(seed, {tag(Stream::dataset), 2}));
    return d;
}

void write_dataset_csv(const LabeledData& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write dataset file '" + path + "'");
    out << "label";
    for (Eigen::Index c = 0; c < data.inputs.cols(); ++c) out << ",x" << c;
    out << '\n';
    for (std::size_t i = 0; i < data.size(); ++i) {
        out << data.labels[i];
        for (Eigen::Index c = 0; c < data.inputs.cols(); ++c) {
            out << ',' << format_double(data.inputs(static_cast<Eigen::Index>(i), c));
        }
        out << '\n';
    }
    if (!out) throw Error("failed writing dataset file '" + path + "'");
}

LabeledData read_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read dataset file '" + path + "'");
    std::string line;
    std::getline(in, line);
    std::vector<std::vector<double>> rows;
    LabeledData out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split(line, ',');
        out.labels.push_back(std::stoi(cells.at(0)));
        std::vector<double> row;
        for (std::size_t c = 1; c < cells.size(); ++c) row.push_back(parse_double(cells[c]));
        if (!rows.empty() && row.size() != rows.front().size()) throw Error("dataset csv: ragged row");
        rows.push_back(std::move(row));
    }
    const auto cols = rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size());
    out.inputs.resize(static_cast<Eigen::Index>(rows.size()), cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (Eigen::Index c = 0; c < cols; ++c) out.inputs(static_cast<Eigen::Index>(i), c) = rows[i][static_cast<std::size_t>(c)];
    }
    return out;
}

}  // namespace mnn
