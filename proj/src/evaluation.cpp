#include "mnn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace mnn {

FeatureBank::FeatureBank(Matrix raw_features, std::vector<int> lbls)
    : features(std::move(raw_features)), labels(std::move(lbls)) {
    if (static_cast<std::size_t>(features.rows()) != labels.size()) {
        throw Error("FeatureBank: row count does not match label count");
    }
    l2_normalize_rows(features);
}

namespace {

int vote(const FeatureBank& bank, const Eigen::Ref<const Vector>& sims, std::size_t k) {
    const auto n = bank.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                          const double sa = sims[static_cast<Eigen::Index>(a)];
                          const double sb = sims[static_cast<Eigen::Index>(b)];
                          if (sa != sb) return sa > sb;
                          return a < b;
                      });
    // class -> (votes, summed similarity); std::map iterates in class order
    std::map<int, std::pair<std::size_t, double>> tally;
    for (std::size_t i = 0; i < k; ++i) {
        auto& t = tally[bank.labels[idx[i]]];
        t.first += 1;
        t.second += sims[static_cast<Eigen::Index>(idx[i])];
    }
    int best = tally.begin()->first;
    auto best_t = tally.begin()->second;
    for (const auto& [cls, t] : tally) {
        if (t.first > best_t.first || (t.first == best_t.first && t.second > best_t.second)) {
            best = cls;
            best_t = t;
        }
    }
    return best;
}

void check_query(const FeatureBank& bank, std::size_t k) {
    if (bank.size() == 0) throw Error("knn: empty feature bank");
    if (k == 0 || k > bank.size()) {
        throw Error("knn: K_eval=" + std::to_string(k) + " must lie in [1, " + std::to_string(bank.size()) + "]");
    }
}

}  // namespace

int knn_classify(const FeatureBank& bank, const Vector& query, std::size_t k) {
    check_query(bank, k);
    if (static_cast<std::size_t>(query.size()) != bank.dim()) throw Error("knn: query dim mismatch");
    const Vector sims = bank.features * query;
    return vote(bank, sims, k);
}

double knn_accuracy(const FeatureBank& train, const FeatureBank& test, std::size_t k) {
    check_query(train, k);
    if (test.size() == 0) throw Error("knn_accuracy: empty test bank");
    if (train.dim() != test.dim()) throw Error("knn_accuracy: feature dim mismatch");
    std::size_t correct = 0;
    constexpr Eigen::Index kChunk = 256;
    for (Eigen::Index start = 0; start < test.features.rows(); start += kChunk) {
        const Eigen::Index rows = std::min(kChunk, test.features.rows() - start);
        const Matrix sims = test.features.middleRows(start, rows) * train.features.transpose();
        for (Eigen::Index r = 0; r < rows; ++r) {
            const Vector row = sims.row(r).transpose();
            if (vote(train, row, k) == test.labels[static_cast<std::size_t>(start + r)]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

namespace {

double accuracy(const Matrix& x, const std::vector<int>& labels, const Matrix& w, const Vector& b) {
    Matrix logits = x * w.transpose();
    logits.rowwise() += b.transpose();
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        Eigen::Index arg = 0;
        logits.row(i).maxCoeff(&arg);
        if (static_cast<int>(arg) == labels[static_cast<std::size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

}  // namespace

ProbeResult linear_probe(const FeatureBank& train, const FeatureBank& test, const ProbeConfig& cfg) {
    if (train.size() == 0 || test.size() == 0) throw Error("linear_probe: empty bank");
    if (train.dim() != test.dim()) throw Error("linear_probe: train/test feature dims differ");
    const auto [lo, hi] = std::minmax_element(train.labels.begin(), train.labels.end());
    if (*lo == *hi) throw Error("linear_probe: training set has a single class");
    if (*lo < 0) throw Error("linear_probe: negative class id");
    const int test_max = *std::max_element(test.labels.begin(), test.labels.end());
    const auto classes = static_cast<Eigen::Index>(std::max(*hi, test_max) + 1);

    const Matrix& x = train.features;
    const auto n = static_cast<double>(train.size());
    Matrix onehot = Matrix::Zero(x.rows(), classes);
    for (Eigen::Index i = 0; i < x.rows(); ++i) onehot(i, train.labels[static_cast<std::size_t>(i)]) = 1.0;

    Matrix w = Matrix::Zero(classes, x.cols());
    Vector b = Vector::Zero(classes);
    Matrix vw = w;
    Vector vb = b;
    double lr = cfg.lr;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (std::find(cfg.milestones.begin(), cfg.milestones.end(), epoch) != cfg.milestones.end()) {
            lr *= cfg.decay;
        }
        Matrix logits = x * w.transpose();
        logits.rowwise() += b.transpose();
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
            logits.row(i).array() -= logits.row(i).maxCoeff();
            logits.row(i) = logits.row(i).array().exp().matrix();
            logits.row(i) /= logits.row(i).sum();
        }
        const Matrix delta = (logits - onehot) / n;
        const Matrix gw = delta.transpose() * x + cfg.weight_decay * w;
        const Vector gb = delta.colwise().sum().transpose();
        vw = cfg.momentum * vw + gw;
        vb = cfg.momentum * vb + gb;
        w -= lr * vw;
        b -= lr * vb;
    }
    return {accuracy(x, train.labels, w, b), accuracy(test.features, test.labels, w, b)};
}

}  // namespace mnn
