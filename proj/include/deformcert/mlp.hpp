#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "deformcert/classifier.hpp"
#include "deformcert/dataset.hpp"
#include "deformcert/deformation.hpp"

namespace deformcert {

/// y = W x + b with W stored row-major (rows x cols).
struct DenseLayer {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> weight;
    std::vector<double> bias;

    static DenseLayer zeros(std::size_t rows, std::size_t cols);
    double& w(std::size_t r, std::size_t c) { return weight[r * cols + c]; }
    double w(std::size_t r, std::size_t c) const { return weight[r * cols + c]; }

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// PointNet-lite: shared per-point layers 3 -> 32 -> 64 (ReLU), max pool over
/// points, head 64 -> 32 (ReLU) -> C. Argmax label, ties to the lowest class.
///
/// Weights are kept in double but always hold float32-representable values
/// outside of training, so the float32 weight file round-trips exactly.
class MlpClassifier final : public Classifier {
public:
    static constexpr std::size_t kInput = 3;
    static constexpr std::size_t kPointHidden = 32;
    static constexpr std::size_t kPointFeatures = 64;
    static constexpr std::size_t kHeadHidden = 32;
    static constexpr std::size_t kLayerCount = 4;

    /// Throws ShapeError if the layer chain does not match the architecture.
    explicit MlpClassifier(std::vector<DenseLayer> layers);

    /// Fan-in scaled Gaussian weights N(0, 2 / fan_in), zero biases.
    static MlpClassifier initialize(std::size_t classes, std::uint64_t seed);
    static MlpClassifier zeros(std::size_t classes);

    std::size_t num_classes() const { return layers_.back().rows; }
    const std::vector<DenseLayer>& layers() const { return layers_; }
    std::vector<DenseLayer>& layers() { return layers_; }

    std::vector<double> forward(const PointCloud& cloud) const;
    Label predict(const PointCloud& cloud) const;

    /// Rounds every parameter to the nearest float32.
    void round_to_storage();

    void save(const std::filesystem::path& path) const;
    void write(std::ostream& out) const;
    static MlpClassifier load(const std::filesystem::path& path);
    static MlpClassifier read(std::istream& in);

    friend bool operator==(const MlpClassifier& a, const MlpClassifier& b) { return a.layers_ == b.layers_; }

protected:
    std::vector<Label> classify_batch(std::span<const PointCloud> clouds) const override;

private:
    std::vector<DenseLayer> layers_;
};

std::vector<double> mlp_forward(const MlpClassifier& model, const PointCloud& cloud);

/// Softmax cross-entropy of a score vector against a label.
double cross_entropy(std::span<const double> scores, Label label);

/// Loss of one labeled cloud; accumulates dLoss/dparams into `grad` (same layer shapes) when non-null.
double mlp_loss_and_gradient(const MlpClassifier& model, const PointCloud& cloud, Label label,
                             std::vector<DenseLayer>* grad, Label* predicted = nullptr);

struct Augmentation {
    DeformationKind kind = DeformationKind::RotZ;
    Distribution distribution = Distribution::uniform(3.14159265358979323846);
};

struct TrainConfig {
    std::size_t epochs = 20;
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
    std::optional<Augmentation> augmentation;

    void validate() const;
};

struct EpochLog {
    std::size_t epoch = 0;
    double loss = 0.0;
    double train_acc = 0.0;
};

class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Minibatch SGD with momentum on cross-entropy. With augmentation set, every
/// training cloud is deformed by freshly sampled parameters before its forward
/// pass. Deterministic in config.seed. Throws DivergenceError on a non-finite loss.
MlpClassifier mlp_train(const Dataset& data, const TrainConfig& config, std::vector<EpochLog>* log = nullptr);

/// CSV with header "epoch,loss,train_acc".
void write_training_log(std::ostream& out, std::span<const EpochLog> log);

}  // namespace deformcert
