#pragma once

// Linear future-token probes: a softmax classifier over hidden states that
// predicts the token generated n steps after the next one.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "blueprint/corpus.hpp"

namespace blueprint::probe {

struct ProbeDataset {
    std::shared_ptr<const std::vector<float>> features;  // row-major, count x dim (may hold extra rows)
    std::size_t dim = 0;
    std::vector<std::int64_t> labels;  // one per pair
    std::int64_t vocab_size = 0;
    int offset_n = 1;
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;

    std::size_t size() const { return labels.size(); }
    std::span<const float> row(std::size_t i) const { return {features->data() + i * dim, dim}; }
};

/// Pairs (hidden row t, token t+1+n) for t = 0..T-2-n, split by a seeded
/// shuffle into train/validation.
ProbeDataset build_probe_dataset(const corpus::HiddenStateDataset& h, int n, double val_fraction = 0.1,
                                 std::uint64_t split_seed = 0);

/// Wraps already-paired features and labels (e.g. synthetic data).
ProbeDataset make_dataset(std::vector<float> features, std::size_t dim, std::vector<std::int64_t> labels,
                          std::int64_t vocab_size, double val_fraction = 0.1, std::uint64_t split_seed = 0,
                          int offset_n = 1);

struct TrainOptions {
    int epochs = 20;
    double lr = 0.1;
    std::size_t batch = 32;
    std::uint64_t seed = 0;
};

struct LinearProbe {
    std::int64_t vocab_size = 0;
    std::size_t dim = 0;
    std::vector<float> weights;  // vocab_size x dim, row-major
    std::vector<float> bias;     // vocab_size
    int trained_offset = 0;
    std::uint64_t seed = 0;
    TrainOptions options;
    double initial_loss = 0.0;
    double final_loss = 0.0;

    static LinearProbe zeros(std::int64_t vocab_size, std::size_t dim);
    /// argmax of W x + b, ties to the smallest token id.
    std::int64_t predict(std::span<const float> x) const;
};

/// Mean softmax cross-entropy (natural log) over the given pair indices,
/// evaluated in double precision.
double mean_loss(const LinearProbe& p, const ProbeDataset& ds, std::span<const std::size_t> indices);

/// Mini-batch SGD from a zero probe. Deterministic for a given dataset, seed
/// and hyperparameters.
LinearProbe train_probe(const ProbeDataset& ds, const TrainOptions& options);

/// Top-1 accuracy on the validation split.
double probe_accuracy(const LinearProbe& p, const ProbeDataset& ds);
/// Top-1 accuracy on an explicit index set.
double probe_accuracy(const LinearProbe& p, const ProbeDataset& ds, std::span<const std::size_t> indices);

struct Gradient {
    std::vector<double> weights;
    std::vector<double> bias;
};

/// Analytic gradient of mean_loss with respect to the probe parameters.
Gradient loss_gradient(const LinearProbe& p, const ProbeDataset& ds, std::span<const std::size_t> indices);

/// Max relative error between the analytic gradient and central finite
/// differences over a seeded subset of at least 100 coordinates (all of them
/// if fewer exist). Uses every pair of the dataset, which must hold <= 64.
double gradient_check(const ProbeDataset& ds, const LinearProbe& p, double epsilon, std::uint64_t seed = 0);

void save_probe(const std::filesystem::path& meta_path, const std::filesystem::path& weights_path,
                const LinearProbe& p);
LinearProbe load_probe(const std::filesystem::path& meta_path, const std::filesystem::path& weights_path);

}  // namespace blueprint::probe
