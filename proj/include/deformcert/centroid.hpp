#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "deformcert/classifier.hpp"
#include "deformcert/dataset.hpp"

namespace deformcert {

/// Per-axis means, per-axis (population) standard deviations, mean point norm.
using FeatureVector = std::array<double, 7>;

FeatureVector cloud_features(const PointCloud& cloud);

/// Nearest class centroid in feature space; ties go to the lowest class.
class CentroidClassifier final : public Classifier {
public:
    explicit CentroidClassifier(std::vector<FeatureVector> centroids);

    std::size_t num_classes() const { return centroids_.size(); }
    const std::vector<FeatureVector>& centroids() const { return centroids_; }

    Label predict(const PointCloud& cloud) const;

    void save(const std::filesystem::path& path) const;
    static CentroidClassifier load(const std::filesystem::path& path);

protected:
    std::vector<Label> classify_batch(std::span<const PointCloud> clouds) const override;

private:
    std::vector<FeatureVector> centroids_;
};

/// Per-class mean feature vector. Every label in [0, C) needs at least one example, C >= 2.
CentroidClassifier centroid_fit(const Dataset& data);

}  // namespace deformcert
