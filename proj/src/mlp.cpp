#include "deformcert/mlp.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <ostream>
#include <string>

#include "deformcert/cloud_io.hpp"

namespace deformcert {

namespace {

constexpr std::array<char, 4> kMagic = {'M', 'L', 'P', 'W'};
constexpr std::uint16_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "weight I/O assumes a little-endian host");

double relu(double v) { return v > 0.0 ? v : 0.0; }

void affine(const DenseLayer& layer, const double* in, double* out) {
    for (std::size_t r = 0; r < layer.rows; ++r) {
        const double* w = &layer.weight[r * layer.cols];
        double acc = layer.bias[r];
        for (std::size_t c = 0; c < layer.cols; ++c) acc += w[c] * in[c];
        out[r] = acc;
    }
}

void check_layers(const std::vector<DenseLayer>& layers) {
    using M = MlpClassifier;
    if (layers.size() != M::kLayerCount) {
        throw ShapeError("MLP expects " + std::to_string(M::kLayerCount) + " layers, got " +
                         std::to_string(layers.size()));
    }
    const std::array<std::pair<std::size_t, std::size_t>, 3> fixed = {
        {{M::kPointHidden, M::kInput}, {M::kPointFeatures, M::kPointHidden}, {M::kHeadHidden, M::kPointFeatures}}};
    for (std::size_t i = 0; i < fixed.size(); ++i) {
        if (layers[i].rows != fixed[i].first || layers[i].cols != fixed[i].second) {
            throw ShapeError("MLP layer " + std::to_string(i) + " has shape " + std::to_string(layers[i].rows) +
                             "x" + std::to_string(layers[i].cols) + ", expected " +
                             std::to_string(fixed[i].first) + "x" + std::to_string(fixed[i].second));
        }
    }
    if (layers[3].cols != M::kHeadHidden || layers[3].rows < 2) {
        throw ShapeError("MLP output layer must be Cx" + std::to_string(M::kHeadHidden) + " with C >= 2");
    }
    for (const auto& l : layers) {
        if (l.weight.size() != l.rows * l.cols || l.bias.size() != l.rows) {
            throw ShapeError("MLP layer storage does not match its shape");
        }
    }
}

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError("MLPW: truncated weight file");
    return v;
}

// Activations of one forward pass, kept for backprop.
struct Trace {
    std::vector<double> z1, z2;        // per point, row-major [point][unit]
    std::vector<double> pooled;        // max over points of relu(z2)
    std::vector<std::size_t> argmax;   // winning point per pooled channel
    std::vector<double> z3, h3, scores;
};

Trace run_forward(const std::vector<DenseLayer>& layers, const PointCloud& cloud) {
    using M = MlpClassifier;
    const std::size_t n = cloud.size();
    Trace t;
    t.z1.resize(n * M::kPointHidden);
    t.z2.resize(n * M::kPointFeatures);
    t.pooled.assign(M::kPointFeatures, 0.0);
    t.argmax.assign(M::kPointFeatures, 0);
    std::array<double, M::kPointHidden> h1{};
    for (std::size_t i = 0; i < n; ++i) {
        const double in[3] = {cloud[i].x, cloud[i].y, cloud[i].z};
        double* z1 = &t.z1[i * M::kPointHidden];
        double* z2 = &t.z2[i * M::kPointFeatures];
        affine(layers[0], in, z1);
        for (std::size_t k = 0; k < M::kPointHidden; ++k) h1[k] = relu(z1[k]);
        affine(layers[1], h1.data(), z2);
        for (std::size_t k = 0; k < M::kPointFeatures; ++k) {
            const double h = relu(z2[k]);
            if (i == 0 || h > t.pooled[k]) {
                t.pooled[k] = h;
                t.argmax[k] = i;
            }
        }
    }
    t.z3.resize(M::kHeadHidden);
    t.h3.resize(M::kHeadHidden);
    affine(layers[2], t.pooled.data(), t.z3.data());
    for (std::size_t k = 0; k < M::kHeadHidden; ++k) t.h3[k] = relu(t.z3[k]);
    t.scores.resize(layers[3].rows);
    affine(layers[3], t.h3.data(), t.scores.data());
    return t;
}

Label argmax_label(std::span<const double> scores) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[best]) best = i;
    }
    return static_cast<Label>(best);
}

}  // namespace

DenseLayer DenseLayer::zeros(std::size_t rows, std::size_t cols) {
    return {rows, cols, std::vector<double>(rows * cols, 0.0), std::vector<double>(rows, 0.0)};
}

MlpClassifier::MlpClassifier(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    check_layers(layers_);
    for (const auto& l : layers_) {
        for (double v : l.weight) {
            if (!std::isfinite(v)) throw ShapeError("MLP weights must be finite");
        }
        for (double v : l.bias) {
            if (!std::isfinite(v)) throw ShapeError("MLP biases must be finite");
        }
    }
}

MlpClassifier MlpClassifier::zeros(std::size_t classes) {
    return MlpClassifier({DenseLayer::zeros(kPointHidden, kInput), DenseLayer::zeros(kPointFeatures, kPointHidden),
                          DenseLayer::zeros(kHeadHidden, kPointFeatures), DenseLayer::zeros(classes, kHeadHidden)});
}

MlpClassifier MlpClassifier::initialize(std::size_t classes, std::uint64_t seed) {
    MlpClassifier model = zeros(classes);
    Rng rng(derive_seed(seed, {0x6d6c70ULL}));
    for (auto& layer : model.layers_) {
        std::normal_distribution<double> draw(0.0, std::sqrt(2.0 / static_cast<double>(layer.cols)));
        for (double& w : layer.weight) w = draw(rng);
    }
    model.round_to_storage();
    return model;
}

std::vector<double> MlpClassifier::forward(const PointCloud& cloud) const { return run_forward(layers_, cloud).scores; }

Label MlpClassifier::predict(const PointCloud& cloud) const { return argmax_label(forward(cloud)); }

std::vector<Label> MlpClassifier::classify_batch(std::span<const PointCloud> clouds) const {
    std::vector<Label> labels;
    labels.reserve(clouds.size());
    for (const auto& cloud : clouds) labels.push_back(predict(cloud));
    return labels;
}

void MlpClassifier::round_to_storage() {
    for (auto& layer : layers_) {
        for (double& w : layer.weight) w = static_cast<float>(w);
        for (double& b : layer.bias) b = static_cast<float>(b);
    }
}

void MlpClassifier::write(std::ostream& out) const {
    out.write(kMagic.data(), kMagic.size());
    put<std::uint16_t>(out, kVersion);
    put<std::uint16_t>(out, static_cast<std::uint16_t>(layers_.size()));
    for (const auto& layer : layers_) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(layer.rows));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(layer.cols));
        for (double w : layer.weight) put<float>(out, static_cast<float>(w));
        for (double b : layer.bias) put<float>(out, static_cast<float>(b));
    }
}

void MlpClassifier::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    write(out);
}

MlpClassifier MlpClassifier::read(std::istream& in) {
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw FormatError("MLPW: bad magic");
    const auto version = get<std::uint16_t>(in);
    if (version != kVersion) throw FormatError("MLPW: unsupported version " + std::to_string(version));
    const auto count = get<std::uint16_t>(in);
    if (count != kLayerCount) {
        throw ShapeError("MLPW: expected " + std::to_string(kLayerCount) + " layers, file has " +
                         std::to_string(count));
    }
    std::vector<DenseLayer> layers;
    for (std::uint16_t i = 0; i < count; ++i) {
        const auto rows = get<std::uint32_t>(in);
        const auto cols = get<std::uint32_t>(in);
        // Reject absurd shapes before allocating for them.
        if (rows > 4096 || cols > 4096) throw ShapeError("MLPW: implausible layer shape");
        DenseLayer layer = DenseLayer::zeros(rows, cols);
        for (double& w : layer.weight) w = get<float>(in);
        for (double& b : layer.bias) b = get<float>(in);
        layers.push_back(std::move(layer));
    }
    return MlpClassifier(std::move(layers));
}

MlpClassifier MlpClassifier::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    return read(in);
}

std::vector<double> mlp_forward(const MlpClassifier& model, const PointCloud& cloud) { return model.forward(cloud); }

double cross_entropy(std::span<const double> scores, Label label) {
    if (label < 0 || static_cast<std::size_t>(label) >= scores.size()) {
        throw std::out_of_range("cross_entropy: label outside the score vector");
    }
    const double top = *std::max_element(scores.begin(), scores.end());
    double sum = 0.0;
    for (double s : scores) sum += std::exp(s - top);
    return std::log(sum) + top - scores[label];
}

double mlp_loss_and_gradient(const MlpClassifier& model, const PointCloud& cloud, Label label,
                             std::vector<DenseLayer>* grad, Label* predicted) {
    using M = MlpClassifier;
    const auto& layers = model.layers();
    const Trace t = run_forward(layers, cloud);
    const double loss = cross_entropy(t.scores, label);
    if (predicted != nullptr) *predicted = argmax_label(t.scores);
    if (grad == nullptr) return loss;
    auto& g = *grad;

    const std::size_t classes = t.scores.size();
    const double top = *std::max_element(t.scores.begin(), t.scores.end());
    std::vector<double> d_scores(classes);
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) sum += (d_scores[c] = std::exp(t.scores[c] - top));
    for (std::size_t c = 0; c < classes; ++c) d_scores[c] /= sum;
    d_scores[label] -= 1.0;

    // Head.
    std::vector<double> d_z3(M::kHeadHidden, 0.0);
    for (std::size_t c = 0; c < classes; ++c) {
        g[3].bias[c] += d_scores[c];
        for (std::size_t k = 0; k < M::kHeadHidden; ++k) {
            g[3].w(c, k) += d_scores[c] * t.h3[k];
            d_z3[k] += layers[3].w(c, k) * d_scores[c];
        }
    }
    for (std::size_t k = 0; k < M::kHeadHidden; ++k) {
        if (t.z3[k] <= 0.0) d_z3[k] = 0.0;
    }
    std::vector<double> d_pooled(M::kPointFeatures, 0.0);
    for (std::size_t r = 0; r < M::kHeadHidden; ++r) {
        if (d_z3[r] == 0.0) continue;
        g[2].bias[r] += d_z3[r];
        for (std::size_t k = 0; k < M::kPointFeatures; ++k) {
            g[2].w(r, k) += d_z3[r] * t.pooled[k];
            d_pooled[k] += layers[2].w(r, k) * d_z3[r];
        }
    }

    // Max pool routes each channel's gradient to its winning point only.
    std::vector<std::size_t> winners(t.argmax.begin(), t.argmax.end());
    std::sort(winners.begin(), winners.end());
    winners.erase(std::unique(winners.begin(), winners.end()), winners.end());
    std::array<double, M::kPointFeatures> d_z2{};
    std::array<double, M::kPointHidden> h1{}, d_z1{};
    for (std::size_t i : winners) {
        const double* z2 = &t.z2[i * M::kPointFeatures];
        bool any = false;
        for (std::size_t k = 0; k < M::kPointFeatures; ++k) {
            d_z2[k] = (t.argmax[k] == i && z2[k] > 0.0) ? d_pooled[k] : 0.0;
            any = any || d_z2[k] != 0.0;
        }
        if (!any) continue;
        const double* z1 = &t.z1[i * M::kPointHidden];
        for (std::size_t k = 0; k < M::kPointHidden; ++k) h1[k] = relu(z1[k]);
        d_z1.fill(0.0);
        for (std::size_t r = 0; r < M::kPointFeatures; ++r) {
            if (d_z2[r] == 0.0) continue;
            g[1].bias[r] += d_z2[r];
            for (std::size_t k = 0; k < M::kPointHidden; ++k) {
                g[1].w(r, k) += d_z2[r] * h1[k];
                d_z1[k] += layers[1].w(r, k) * d_z2[r];
            }
        }
        const double in[3] = {cloud[i].x, cloud[i].y, cloud[i].z};
        for (std::size_t r = 0; r < M::kPointHidden; ++r) {
            if (z1[r] <= 0.0 || d_z1[r] == 0.0) continue;
            g[0].bias[r] += d_z1[r];
            for (std::size_t k = 0; k < M::kInput; ++k) g[0].w(r, k) += d_z1[r] * in[k];
        }
    }
    return loss;
}

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw std::invalid_argument("learning rate must be finite and non-negative");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
    if (batch_size < 1) throw std::invalid_argument("batch size must be at least 1");
    if (augmentation && !(augmentation->distribution.scale > 0.0)) {
        throw std::invalid_argument("augmentation scale must be positive");
    }
}

MlpClassifier mlp_train(const Dataset& data, const TrainConfig& config, std::vector<EpochLog>* log) {
    config.validate();
    if (data.empty()) throw std::invalid_argument("mlp_train: empty dataset");
    const std::size_t classes = class_count(data);
    if (classes < 2) throw std::invalid_argument("mlp_train: need at least two classes");

    MlpClassifier model = MlpClassifier::initialize(classes, config.seed);
    std::vector<DenseLayer> velocity;
    std::vector<DenseLayer> grad;
    for (const auto& l : model.layers()) {
        velocity.push_back(DenseLayer::zeros(l.rows, l.cols));
        grad.push_back(DenseLayer::zeros(l.rows, l.cols));
    }
    Rng rng(derive_seed(config.seed, {0x747261696eULL}));
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t hits = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            for (auto& g : grad) {
                std::fill(g.weight.begin(), g.weight.end(), 0.0);
                std::fill(g.bias.begin(), g.bias.end(), 0.0);
            }
            for (std::size_t idx = start; idx < stop; ++idx) {
                const auto& item = data[order[idx]];
                double loss = 0.0;
                Label predicted = kAbstain;
                if (config.augmentation) {
                    const auto params = sample_params(config.augmentation->kind, config.augmentation->distribution,
                                                      item.cloud.size(), rng);
                    loss = mlp_loss_and_gradient(model, deform(item.cloud, params), item.label, &grad, &predicted);
                } else {
                    loss = mlp_loss_and_gradient(model, item.cloud, item.label, &grad, &predicted);
                }
                hits += predicted == item.label;
                if (!std::isfinite(loss)) {
                    throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                                          " (non-finite loss)");
                }
                loss_sum += loss;
            }
            const double scale = 1.0 / static_cast<double>(stop - start);
            auto& layers = model.layers();
            for (std::size_t l = 0; l < layers.size(); ++l) {
                for (std::size_t i = 0; i < layers[l].weight.size(); ++i) {
                    auto& v = velocity[l].weight[i];
                    v = config.momentum * v - config.learning_rate * scale * grad[l].weight[i];
                    layers[l].weight[i] += v;
                }
                for (std::size_t i = 0; i < layers[l].bias.size(); ++i) {
                    auto& v = velocity[l].bias[i];
                    v = config.momentum * v - config.learning_rate * scale * grad[l].bias[i];
                    layers[l].bias[i] += v;
                }
            }
        }
        const double mean_loss = loss_sum / static_cast<double>(data.size());
        if (!std::isfinite(mean_loss)) {
            throw DivergenceError("training diverged at epoch " + std::to_string(epoch));
        }
        if (log != nullptr) {
            log->push_back({epoch, mean_loss, static_cast<double>(hits) / static_cast<double>(data.size())});
        }
    }
    model.round_to_storage();
    return model;
}

void write_training_log(std::ostream& out, std::span<const EpochLog> log) {
    out << "epoch,loss,train_acc\n";
    for (const auto& e : log) out << e.epoch << ',' << e.loss << ',' << e.train_acc << '\n';
}

}  // namespace deformcert
