#include "tfl/fl.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace tfl::fl {

namespace {

double sigmoid(double z) {
    return 1.0 / (1.0 + std::exp(-z));
}

double linear_score(const ModelParams& model, const std::vector<double>& x) {
    double z = model.bias;
    for (std::size_t j = 0; j < x.size(); ++j) z += model.weights[j] * x[j];
    return z;
}

void check_dims(const ModelParams& model, const Dataset& data) {
    if (data.rows() == 0 || model.weights.size() != data.dim())
        throw DimensionMismatch("model dimension does not match dataset");
    for (const auto& row : data.features)
        if (row.size() != model.weights.size())
            throw DimensionMismatch("ragged feature row");
}

}  // namespace

bool ModelParams::finite() const {
    if (!std::isfinite(bias)) return false;
    return std::all_of(weights.begin(), weights.end(),
                       [](double w) { return std::isfinite(w); });
}

std::pair<std::vector<Dataset>, Dataset> partition_dataset(const Dataset& full,
                                                           std::size_t n_parties,
                                                           std::uint64_t seed) {
    const std::size_t n = full.rows();
    if (n_parties < 1) throw FlError("need at least one party");
    if (n <= n_parties + 1) throw TooFewRows("dataset too small to partition");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    const std::size_t base = n / (n_parties + 1);
    const std::size_t remainder = n - (n_parties + 1) * base;

    std::vector<Dataset> training(n_parties);
    Dataset validation;
    std::size_t cursor = 0;
    for (std::size_t p = 0; p < n_parties; ++p) {
        std::size_t size = base + (p < remainder ? 1 : 0);
        for (std::size_t i = 0; i < size; ++i, ++cursor) {
            training[p].features.push_back(full.features[order[cursor]]);
            training[p].labels.push_back(full.labels[order[cursor]]);
        }
    }
    for (; cursor < n; ++cursor) {
        validation.features.push_back(full.features[order[cursor]]);
        validation.labels.push_back(full.labels[order[cursor]]);
    }
    return {std::move(training), std::move(validation)};
}

ModelParams train_local(const ModelParams& model, const Dataset& data,
                        const TrainConfig& cfg) {
    check_dims(model, data);
    const std::size_t d = model.weights.size();

    std::vector<std::size_t> order(data.rows());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(cfg.seed);
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t used =
        std::max<std::size_t>(1, static_cast<std::size_t>(cfg.train_fraction * data.rows()));
    order.resize(std::min(used, data.rows()));

    ModelParams out = model;
    const std::size_t batch = static_cast<std::size_t>(std::max(1, cfg.batch_size));
    std::vector<double> grad_w(d);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(start + batch, order.size());
            std::fill(grad_w.begin(), grad_w.end(), 0.0);
            double grad_b = 0.0;
            for (std::size_t i = start; i < end; ++i) {
                const auto& x = data.features[order[i]];
                const double y = data.labels[order[i]];
                const double z = linear_score(out, x);
                double dz;
                if (out.activation == Activation::sigmoid) {
                    dz = sigmoid(z) - y;  // binary cross-entropy
                } else {
                    const double a = std::max(0.0, z);
                    dz = z > 0.0 ? 2.0 * (a - y) : 0.0;  // squared surrogate
                }
                for (std::size_t j = 0; j < d; ++j) grad_w[j] += dz * x[j];
                grad_b += dz;
            }
            const double scale = cfg.learning_rate / static_cast<double>(end - start);
            for (std::size_t j = 0; j < d; ++j) out.weights[j] -= scale * grad_w[j];
            out.bias -= scale * grad_b;
        }
        if (!out.finite()) throw NonFiniteLoss("training diverged to non-finite parameters");
    }
    return out;
}

ConfusionMatrix evaluate(const ModelParams& model, const Dataset& data) {
    check_dims(model, data);
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < data.rows(); ++i) {
        const double z = linear_score(model, data.features[i]);
        // sigmoid: output > 0.5; relu: score > 0. Ties go negative.
        const bool predicted = z > 0.0;
        const bool actual = data.labels[i] != 0;
        if (predicted && actual)
            ++cm.tp;
        else if (predicted && !actual)
            ++cm.fp;
        else if (!predicted && !actual)
            ++cm.tn;
        else
            ++cm.fn;
    }
    return cm;
}

double accuracy(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw EmptyMatrix("confusion matrix is empty");
    return static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
}

double bce_loss(const ModelParams& model, const Dataset& data) {
    check_dims(model, data);
    double total = 0.0;
    for (std::size_t i = 0; i < data.rows(); ++i) {
        const double p = sigmoid(linear_score(model, data.features[i]));
        const double y = data.labels[i];
        total += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    }
    return total / static_cast<double>(data.rows());
}

std::pair<std::vector<double>, double> bce_gradient(const ModelParams& model,
                                                    const Dataset& data) {
    check_dims(model, data);
    std::vector<double> grad_w(model.weights.size(), 0.0);
    double grad_b = 0.0;
    for (std::size_t i = 0; i < data.rows(); ++i) {
        const double dz = sigmoid(linear_score(model, data.features[i])) - data.labels[i];
        for (std::size_t j = 0; j < grad_w.size(); ++j)
            grad_w[j] += dz * data.features[i][j];
        grad_b += dz;
    }
    const double inv_n = 1.0 / static_cast<double>(data.rows());
    for (auto& g : grad_w) g *= inv_n;
    return {std::move(grad_w), grad_b * inv_n};
}

namespace {

void put_f64(Bytes& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

double get_f64(std::span<const std::uint8_t> in, std::size_t offset) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t(in[offset + i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

}  // namespace

Bytes serialize_model(const ModelParams& model) {
    if (!model.finite()) throw MalformedPayload("refusing to serialize non-finite model");
    Bytes out;
    out.push_back(static_cast<std::uint8_t>(model.activation));
    const std::uint32_t d = static_cast<std::uint32_t>(model.weights.size());
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(d >> (8 * i)));
    for (double w : model.weights) put_f64(out, w);
    put_f64(out, model.bias);
    return out;
}

ModelParams deserialize_model(std::span<const std::uint8_t> payload) {
    if (payload.size() < 5) throw MalformedPayload("model payload truncated");
    const std::uint8_t tag = payload[0];
    if (tag > 1) throw MalformedPayload("unknown activation tag");
    std::uint32_t d = 0;
    for (int i = 0; i < 4; ++i) d |= std::uint32_t(payload[1 + i]) << (8 * i);
    const std::size_t expected = 5 + (std::size_t(d) + 1) * 8;
    if (payload.size() != expected) throw MalformedPayload("model payload length mismatch");
    ModelParams model;
    model.activation = static_cast<Activation>(tag);
    model.weights.resize(d);
    for (std::uint32_t j = 0; j < d; ++j) model.weights[j] = get_f64(payload, 5 + 8 * j);
    model.bias = get_f64(payload, 5 + 8 * std::size_t(d));
    if (!model.finite()) throw MalformedPayload("model payload contains non-finite values");
    return model;
}

Dataset synthetic_dataset(std::uint64_t seed, std::size_t n, std::size_t d,
                          double separation) {
    if (n == 0 || d == 0) throw FlError("synthetic dataset needs n, d > 0");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    const double unit = 1.0 / std::sqrt(static_cast<double>(d));

    Dataset data;
    data.features.reserve(n);
    data.labels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % 2);
        const double center = (label == 1 ? 1.0 : -1.0) * separation * unit;
        std::vector<double> row(d);
        for (auto& v : row) v = center + noise(rng);
        data.features.push_back(std::move(row));
        data.labels.push_back(label);
    }
    return data;
}

Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FlError("cannot open dataset: " + path);
    std::string line;
    if (!std::getline(in, line)) throw FlError("dataset has no header: " + path);

    Dataset data;
    std::size_t dims = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> values;
        std::stringstream ss(line);
        std::string cell;
        bool ok = true;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                double v = std::stod(cell, &used);
                if (used != cell.size()) throw std::invalid_argument(cell);
                values.push_back(v);
            } catch (...) {
                ok = false;
                break;
            }
        }
        if (!ok || values.size() < 2) continue;
        if (dims == 0) dims = values.size();
        if (values.size() != dims) continue;
        const int label = values.back() > 0.5 ? 1 : 0;
        values.pop_back();
        data.features.push_back(std::move(values));
        data.labels.push_back(label);
    }
    if (data.rows() == 0) throw TooFewRows("no usable rows in " + path);
    return data;
}

}  // namespace tfl::fl
