#pragma once

#include "mnn/vecmath.hpp"

#include <vector>

namespace mnn {

/// Frozen features with labels; rows are unit-normalized on construction.
struct FeatureBank {
    Matrix features;
    std::vector<int> labels;

    FeatureBank() = default;
    FeatureBank(Matrix raw_features, std::vector<int> labels);

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(features.cols()); }
};

/// Unweighted majority vote over the `k` most cosine-similar bank rows.
/// Vote ties go to the larger summed similarity, then the smaller class id.
int knn_classify(const FeatureBank& bank, const Vector& query, std::size_t k);

/// Top-1 accuracy of `knn_classify` for every row of `test`.
double knn_accuracy(const FeatureBank& train, const FeatureBank& test, std::size_t k);

struct ProbeConfig {
    std::size_t epochs = 100;
    double lr = 0.1;
    std::vector<std::size_t> milestones{60, 80};
    double decay = 0.1;
    double momentum = 0.9;
    double weight_decay = 0.0;
};

struct ProbeResult {
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
};

/// Softmax regression on frozen features, trained by full-batch gradient
/// descent with momentum from a zero initialization.
ProbeResult linear_probe(const FeatureBank& train, const FeatureBank& test, const ProbeConfig& cfg = {});

}  // namespace mnn
