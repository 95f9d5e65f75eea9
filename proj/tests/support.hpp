#pragma once

// Hand-rolled generators and small classifiers shared by the test binaries.

#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "deformcert/classifier.hpp"
#include "deformcert/deformation.hpp"
#include "deformcert/point_cloud.hpp"
#include "deformcert/random.hpp"

namespace testing {

using namespace deformcert;

inline Vec3 random_point(Rng& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    return {u(rng), u(rng), u(rng)};
}

inline PointCloud random_cloud(Rng& rng, std::size_t n, double scale = 1.0) {
    std::vector<Vec3> pts(n);
    for (auto& p : pts) p = random_point(rng, scale);
    return PointCloud(std::move(pts));
}

inline std::size_t random_size(Rng& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline DeformationParams random_params(Rng& rng, DeformationKind kind, std::size_t n_points, double scale = 1.0) {
    auto params = DeformationParams::zeros(kind, n_points);
    std::uniform_real_distribution<double> u(-scale, scale);
    for (auto& v : params.values) v = u(rng);
    return params;
}

inline DeformationKind random_kind(Rng& rng, bool matrix_only) {
    for (;;) {
        const auto k = kAllDeformationKinds[random_size(rng, 0, kAllDeformationKinds.size() - 1)];
        if (!matrix_only || has_matrix_form(k)) return k;
    }
}

/// Label 1 when the cloud's mean x exceeds the threshold, else 0.
class ThresholdClassifier final : public Classifier {
public:
    explicit ThresholdClassifier(double threshold = 0.0) : threshold_(threshold) {}

protected:
    std::vector<Label> classify_batch(std::span<const PointCloud> clouds) const override {
        std::vector<Label> out;
        for (const auto& c : clouds) out.push_back(c.centroid().x > threshold_ ? 1 : 0);
        return out;
    }

private:
    double threshold_;
};

/// Labels drawn uniformly from [0, classes) by an internal stream; serial so draws stay ordered.
class RandomClassifier final : public Classifier {
public:
    RandomClassifier(int classes, std::uint64_t seed) : classes_(classes), rng_(seed) {}
    bool serial() const override { return true; }

protected:
    std::vector<Label> classify_batch(std::span<const PointCloud> clouds) const override {
        std::uniform_int_distribution<int> d(0, classes_ - 1);
        std::vector<Label> out;
        for (std::size_t i = 0; i < clouds.size(); ++i) out.push_back(d(rng_));
        return out;
    }

private:
    int classes_;
    mutable Rng rng_;
};

/// Always fails, as a lost remote peer would.
class FailingClassifier final : public Classifier {
protected:
    std::vector<Label> classify_batch(std::span<const PointCloud>) const override {
        throw ClassifierError("peer unavailable");
    }
};

/// Returns a fixed label vector regardless of input (for protocol misuse tests).
class WrongCountClassifier final : public Classifier {
protected:
    std::vector<Label> classify_batch(std::span<const PointCloud> clouds) const override {
        return std::vector<Label>(clouds.size() + 1, 0);
    }
};

}  // namespace testing
