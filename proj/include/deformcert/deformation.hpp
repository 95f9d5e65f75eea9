#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "deformcert/point_cloud.hpp"
#include "deformcert/random.hpp"

namespace deformcert {

/// Parametric spatial deformations. Angles are radians.
enum class DeformationKind {
    Translation,    // [tx, ty, tz]
    RotX,           // [alpha]
    RotY,           // [beta]
    RotZ,           // [gamma]
    RotXZ,          // [alpha, gamma], x first then z
    RotXYZ,         // [alpha, beta, gamma], extrinsic x, then y, then z
    ShearZ,         // [a, b]
    TwistZ,         // [gamma], angle per unit z
    TaperZ,         // [a, b]
    Affine,         // [a .. l], row-major 3x4 offset from identity
    AffineNT,       // [a .. i], row-major 3x3 offset from identity
    GaussianNoise,  // 3N per-point offsets
};

inline constexpr std::array kAllDeformationKinds = {
    DeformationKind::Translation, DeformationKind::RotX,   DeformationKind::RotY,
    DeformationKind::RotZ,        DeformationKind::RotXZ,  DeformationKind::RotXYZ,
    DeformationKind::ShearZ,      DeformationKind::TwistZ, DeformationKind::TaperZ,
    DeformationKind::Affine,      DeformationKind::AffineNT, DeformationKind::GaussianNoise,
};

std::string_view to_string(DeformationKind kind);
/// Accepts the names produced by to_string (e.g. "rotz", "affine_nt"); throws std::invalid_argument.
DeformationKind parse_deformation_kind(std::string_view name);

bool is_rotation(DeformationKind kind);
bool has_matrix_form(DeformationKind kind);

std::size_t param_dim(DeformationKind kind, std::size_t n_points);

struct DeformationParams {
    DeformationKind kind = DeformationKind::Translation;
    std::vector<double> values;

    static DeformationParams zeros(DeformationKind kind, std::size_t n_points);
};

/// Thrown when a parameter vector does not have param_dim(kind, N) entries.
class ArityError : public ShapeError {
public:
    using ShapeError::ShapeError;
};

/// Thrown for a kind that has no homogeneous matrix form.
class UnsupportedKindError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

FlowField flow(const DeformationParams& params, const PointCloud& cloud);

/// p' = p + field, pointwise. The result is never flagged normalized.
PointCloud apply(const PointCloud& cloud, const FlowField& field);

/// Convenience for apply(cloud, flow(params, cloud)).
PointCloud deform(const PointCloud& cloud, const DeformationParams& params);

using Mat4 = std::array<std::array<double, 4>, 4>;

/// Homogeneous transform T(phi) with T(phi) * [p; 1] = [p + flow(p); 1].
/// Twisting and tapering depend on the point's z, hence the point argument.
Mat4 homogeneous_point_map(const DeformationParams& params, const Vec3& point);

/// T * [p; 1], dehomogenized.
Vec3 transform_point(const Mat4& t, const Vec3& p);

/// Smoothing distribution over the parameter space.
struct Distribution {
    enum class Family { Uniform, Gaussian };

    Family family = Family::Gaussian;
    double scale = 0.0;  // lambda for Uniform, sigma for Gaussian

    static Distribution uniform(double lambda) { return {Family::Uniform, lambda}; }
    static Distribution gaussian(double sigma) { return {Family::Gaussian, sigma}; }
};

std::string_view to_string(Distribution::Family family);
Distribution::Family parse_distribution_family(std::string_view name);

/// I.i.d. draws of every parameter coordinate from the distribution.
/// A zero scale yields the zero vector; a negative or non-finite scale throws.
DeformationParams sample_params(DeformationKind kind, const Distribution& dist, std::size_t n_points,
                                Rng& rng);

}  // namespace deformcert
