#include "deformcert/centroid.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "deformcert/cloud_io.hpp"

namespace deformcert {

FeatureVector cloud_features(const PointCloud& cloud) {
    const double n = static_cast<double>(cloud.size());
    double sx = 0, sy = 0, sz = 0, snorm = 0;
    for (const auto& p : cloud) {
        sx += p.x;
        sy += p.y;
        sz += p.z;
        snorm += p.norm();
    }
    const double mx = sx / n, my = sy / n, mz = sz / n;
    double vx = 0, vy = 0, vz = 0;
    for (const auto& p : cloud) {
        vx += (p.x - mx) * (p.x - mx);
        vy += (p.y - my) * (p.y - my);
        vz += (p.z - mz) * (p.z - mz);
    }
    return {mx, my, mz, std::sqrt(vx / n), std::sqrt(vy / n), std::sqrt(vz / n), snorm / n};
}

CentroidClassifier::CentroidClassifier(std::vector<FeatureVector> centroids) : centroids_(std::move(centroids)) {
    if (centroids_.size() < 2) throw std::invalid_argument("centroid classifier needs at least two classes");
    for (const auto& c : centroids_) {
        for (double v : c) {
            if (!std::isfinite(v)) throw std::invalid_argument("centroid classifier: non-finite centroid");
        }
    }
}

Label CentroidClassifier::predict(const PointCloud& cloud) const {
    const FeatureVector f = cloud_features(cloud);
    Label best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids_.size(); ++c) {
        double d = 0.0;
        for (std::size_t i = 0; i < f.size(); ++i) d += (f[i] - centroids_[c][i]) * (f[i] - centroids_[c][i]);
        if (d < best_dist) {
            best_dist = d;
            best = static_cast<Label>(c);
        }
    }
    return best;
}

std::vector<Label> CentroidClassifier::classify_batch(std::span<const PointCloud> clouds) const {
    std::vector<Label> labels;
    labels.reserve(clouds.size());
    for (const auto& cloud : clouds) labels.push_back(predict(cloud));
    return labels;
}

void CentroidClassifier::save(const std::filesystem::path& path) const {
    nlohmann::json doc;
    doc["model"] = "centroid";
    doc["version"] = 1;
    doc["centroids"] = centroids_;
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    out << doc.dump() << '\n';
}

CentroidClassifier CentroidClassifier::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    try {
        const auto doc = nlohmann::json::parse(in);
        if (doc.at("model") != "centroid" || doc.at("version") != 1) {
            throw FormatError("not a version-1 centroid model: " + path.string());
        }
        return CentroidClassifier(doc.at("centroids").get<std::vector<FeatureVector>>());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad centroid model " + path.string() + ": " + e.what());
    }
}

CentroidClassifier centroid_fit(const Dataset& data) {
    const std::size_t classes = class_count(data);
    std::vector<FeatureVector> sums(classes, FeatureVector{});
    std::vector<std::size_t> counts(classes, 0);
    for (const auto& item : data) {
        const auto f = cloud_features(item.cloud);
        for (std::size_t i = 0; i < f.size(); ++i) sums[item.label][i] += f[i];
        ++counts[item.label];
    }
    for (std::size_t c = 0; c < classes; ++c) {
        if (counts[c] == 0) throw std::invalid_argument("centroid_fit: class " + std::to_string(c) + " is empty");
        for (double& v : sums[c]) v /= static_cast<double>(counts[c]);
    }
    return CentroidClassifier(std::move(sums));
}

}  // namespace deformcert
