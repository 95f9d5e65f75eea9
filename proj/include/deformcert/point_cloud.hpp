#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace deformcert {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
    friend Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
    friend Vec3 operator*(double s, const Vec3& v) { return {s * v.x, s * v.y, s * v.z}; }
    friend bool operator==(const Vec3&, const Vec3&) = default;

    double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

/// Thrown when a cloud, flow or parameter vector violates its shape contract.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An ordered set of N >= 1 points with finite coordinates.
///
/// A cloud may be flagged as normalized at construction, in which case the
/// constructor checks that it is origin-centered (every centroid component
/// below 1e-6 in magnitude) and that its largest point norm is 1 within 1e-6.
class PointCloud {
public:
    static constexpr double kNormalizedTolerance = 1e-6;

    PointCloud() = default;
    explicit PointCloud(std::vector<Vec3> points, bool normalized = false);

    std::size_t size() const { return points_.size(); }
    bool empty() const { return points_.empty(); }
    bool normalized() const { return normalized_; }

    std::span<const Vec3> points() const { return points_; }
    const Vec3& operator[](std::size_t i) const { return points_[i]; }

    auto begin() const { return points_.begin(); }
    auto end() const { return points_.end(); }

    Vec3 centroid() const;
    double max_norm() const;

    friend bool operator==(const PointCloud& a, const PointCloud& b) { return a.points_ == b.points_; }

private:
    std::vector<Vec3> points_;
    bool normalized_ = false;
};

/// Per-point displacement field; p' = p + field.
struct FlowField {
    std::vector<Vec3> vectors;

    std::size_t size() const { return vectors.size(); }
    FlowField operator-() const;
};

}  // namespace deformcert
