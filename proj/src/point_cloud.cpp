#include "deformcert/point_cloud.hpp"

#include <algorithm>

namespace deformcert {

PointCloud::PointCloud(std::vector<Vec3> points, bool normalized)
    : points_(std::move(points)), normalized_(normalized) {
    if (points_.empty()) {
        throw ShapeError("point cloud must contain at least one point");
    }
    for (const auto& p : points_) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
            throw ShapeError("point cloud contains a non-finite coordinate");
        }
    }
    if (normalized_) {
        const Vec3 c = centroid();
        if (std::abs(c.x) >= kNormalizedTolerance || std::abs(c.y) >= kNormalizedTolerance ||
            std::abs(c.z) >= kNormalizedTolerance) {
            throw ShapeError("cloud flagged normalized is not centered");
        }
        if (std::abs(max_norm() - 1.0) > kNormalizedTolerance) {
            throw ShapeError("cloud flagged normalized does not have unit max norm");
        }
    }
}

Vec3 PointCloud::centroid() const {
    Vec3 sum;
    for (const auto& p : points_) sum = sum + p;
    return (1.0 / static_cast<double>(points_.size())) * sum;
}

double PointCloud::max_norm() const {
    double m = 0.0;
    for (const auto& p : points_) m = std::max(m, p.norm());
    return m;
}

FlowField FlowField::operator-() const {
    FlowField out;
    out.vectors.reserve(vectors.size());
    for (const auto& v : vectors) out.vectors.push_back({-v.x, -v.y, -v.z});
    return out;
}

}  // namespace deformcert
