#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tfl/encoding.hpp"

namespace tfl::fl {

struct FlError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DimensionMismatch : FlError {
    using FlError::FlError;
};
struct NonFiniteLoss : FlError {
    using FlError::FlError;
};
struct MalformedPayload : FlError {
    using FlError::FlError;
};
struct TooFewRows : FlError {
    using FlError::FlError;
};
struct EmptyMatrix : FlError {
    using FlError::FlError;
};

enum class Activation : std::uint8_t { sigmoid = 0, relu = 1 };

struct Dataset {
    std::vector<std::vector<double>> features;  // n x d
    std::vector<int> labels;                    // n, binary

    std::size_t rows() const { return features.size(); }
    std::size_t dim() const { return features.empty() ? 0 : features.front().size(); }
};

// Single linear layer with an activation head.
struct ModelParams {
    std::vector<double> weights;
    double bias = 0.0;
    Activation activation = Activation::sigmoid;

    bool finite() const;
    bool operator==(const ModelParams&) const = default;
};

struct TrainConfig {
    double learning_rate = 0.01;
    int epochs = 10;
    int batch_size = 8;
    double train_fraction = 1.0 / 3.0;
    std::uint64_t seed = 0;
};

struct ConfusionMatrix {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fn = 0;

    std::uint64_t total() const { return tp + fp + tn + fn; }
    bool operator==(const ConfusionMatrix&) const = default;
};

// Disjoint training partitions plus one validation partition; shuffle driven
// by seed. Validation gets floor(n / (n_parties + 1)) rows; the remainder
// goes to the training parts.
std::pair<std::vector<Dataset>, Dataset> partition_dataset(const Dataset& full,
                                                           std::size_t n_parties,
                                                           std::uint64_t seed);

// Mini-batch gradient descent; deterministic given (model, data, cfg.seed).
ModelParams train_local(const ModelParams& model, const Dataset& data,
                        const TrainConfig& cfg);

ConfusionMatrix evaluate(const ModelParams& model, const Dataset& data);

double accuracy(const ConfusionMatrix& cm);  // throws EmptyMatrix

// Mean binary cross-entropy over all rows (sigmoid head); used by the
// finite-difference gradient check.
double bce_loss(const ModelParams& model, const Dataset& data);
std::pair<std::vector<double>, double> bce_gradient(const ModelParams& model,
                                                    const Dataset& data);

// 1-byte activation tag, little-endian u32 weight count, IEEE-754 binary64
// little-endian weights, then bias. Roundtrip is bit-exact.
Bytes serialize_model(const ModelParams& model);
ModelParams deserialize_model(std::span<const std::uint8_t> payload);

// Two Gaussian clusters at +/- separation * unit vector, labels by cluster.
Dataset synthetic_dataset(std::uint64_t seed, std::size_t n, std::size_t d,
                          double separation);

// CSV with header; final column is the binary label. Unparseable rows dropped.
Dataset load_csv(const std::string& path);

}  // namespace tfl::fl
