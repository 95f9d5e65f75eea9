#include "deformcert/deformation.hpp"

#include <cmath>
#include <stdexcept>

namespace deformcert {

namespace {

struct KindName {
    DeformationKind kind;
    std::string_view name;
};

constexpr std::array<KindName, 12> kKindNames = {{
    {DeformationKind::Translation, "translation"},
    {DeformationKind::RotX, "rotx"},
    {DeformationKind::RotY, "roty"},
    {DeformationKind::RotZ, "rotz"},
    {DeformationKind::RotXZ, "rotxz"},
    {DeformationKind::RotXYZ, "rotxyz"},
    {DeformationKind::ShearZ, "shearz"},
    {DeformationKind::TwistZ, "twistz"},
    {DeformationKind::TaperZ, "taperz"},
    {DeformationKind::Affine, "affine"},
    {DeformationKind::AffineNT, "affine_nt"},
    {DeformationKind::GaussianNoise, "gaussian_noise"},
}};

void check_arity(const DeformationParams& params, std::size_t n_points) {
    const std::size_t expected = param_dim(params.kind, n_points);
    if (params.values.size() != expected) {
        throw ArityError("deformation '" + std::string(to_string(params.kind)) + "' expects " +
                         std::to_string(expected) + " parameters, got " +
                         std::to_string(params.values.size()));
    }
    for (double v : params.values) {
        if (!std::isfinite(v)) throw ArityError("deformation parameters must be finite");
    }
}

// Per-point flows, written term by term from the flow tables.
Vec3 point_flow(const DeformationParams& params, const Vec3& p) {
    const auto& v = params.values;
    const double x = p.x, y = p.y, z = p.z;
    switch (params.kind) {
        case DeformationKind::Translation:
            return {v[0], v[1], v[2]};
        case DeformationKind::RotX: {
            const double ca = std::cos(v[0]), sa = std::sin(v[0]);
            return {0.0, (ca - 1.0) * y - sa * z, sa * y + (ca - 1.0) * z};
        }
        case DeformationKind::RotY: {
            const double cb = std::cos(v[0]), sb = std::sin(v[0]);
            return {(cb - 1.0) * x + sb * z, 0.0, -sb * x + (cb - 1.0) * z};
        }
        case DeformationKind::RotZ: {
            const double cg = std::cos(v[0]), sg = std::sin(v[0]);
            return {(cg - 1.0) * x - sg * y, sg * x + (cg - 1.0) * y, 0.0};
        }
        case DeformationKind::RotXZ: {
            const double ca = std::cos(v[0]), sa = std::sin(v[0]);
            const double cg = std::cos(v[1]), sg = std::sin(v[1]);
            return {(cg - 1.0) * x - sg * ca * y + sg * sa * z,
                    sg * x + (cg * ca - 1.0) * y - cg * sa * z,
                    sa * y + (ca - 1.0) * z};
        }
        case DeformationKind::RotXYZ: {
            const double ca = std::cos(v[0]), sa = std::sin(v[0]);
            const double cb = std::cos(v[1]), sb = std::sin(v[1]);
            const double cg = std::cos(v[2]), sg = std::sin(v[2]);
            return {(cg * cb - 1.0) * x + (cg * sb * sa - sg * ca) * y + (cg * sb * ca + sg * sa) * z,
                    (sg * cb) * x + (sg * sb * sa + cg * ca - 1.0) * y + (sg * sb * ca - cg * sa) * z,
                    -sb * x + cb * sa * y + (cb * ca - 1.0) * z};
        }
        case DeformationKind::ShearZ:
            return {v[0] * z, v[1] * z, 0.0};
        case DeformationKind::TwistZ: {
            const double angle = v[0] * z;
            const double c = std::cos(angle), s = std::sin(angle);
            return {(c - 1.0) * x - s * y, s * x + (c - 1.0) * y, 0.0};
        }
        case DeformationKind::TaperZ: {
            const double k = (0.5 * v[0] * v[0] + v[1]) * z;
            return {k * x, k * y, 0.0};
        }
        case DeformationKind::Affine:
            return {v[0] * x + v[1] * y + v[2] * z + v[3],
                    v[4] * x + v[5] * y + v[6] * z + v[7],
                    v[8] * x + v[9] * y + v[10] * z + v[11]};
        case DeformationKind::AffineNT:
            return {v[0] * x + v[1] * y + v[2] * z,
                    v[3] * x + v[4] * y + v[5] * z,
                    v[6] * x + v[7] * y + v[8] * z};
        case DeformationKind::GaussianNoise:
            break;
    }
    throw std::logic_error("point_flow: unhandled deformation kind");
}

Mat4 identity4() {
    Mat4 m{};
    for (std::size_t i = 0; i < 4; ++i) m[i][i] = 1.0;
    return m;
}

}  // namespace

std::string_view to_string(DeformationKind kind) {
    for (const auto& entry : kKindNames) {
        if (entry.kind == kind) return entry.name;
    }
    return "unknown";
}

DeformationKind parse_deformation_kind(std::string_view name) {
    for (const auto& entry : kKindNames) {
        if (entry.name == name) return entry.kind;
    }
    throw std::invalid_argument("unknown deformation kind: " + std::string(name));
}

bool is_rotation(DeformationKind kind) {
    switch (kind) {
        case DeformationKind::RotX:
        case DeformationKind::RotY:
        case DeformationKind::RotZ:
        case DeformationKind::RotXZ:
        case DeformationKind::RotXYZ:
            return true;
        default:
            return false;
    }
}

bool has_matrix_form(DeformationKind kind) { return kind != DeformationKind::GaussianNoise; }

std::size_t param_dim(DeformationKind kind, std::size_t n_points) {
    if (n_points == 0) throw ShapeError("param_dim: n_points must be at least 1");
    switch (kind) {
        case DeformationKind::Translation: return 3;
        case DeformationKind::RotX:
        case DeformationKind::RotY:
        case DeformationKind::RotZ: return 1;
        case DeformationKind::RotXZ: return 2;
        case DeformationKind::RotXYZ: return 3;
        case DeformationKind::ShearZ: return 2;
        case DeformationKind::TwistZ: return 1;
        case DeformationKind::TaperZ: return 2;
        case DeformationKind::Affine: return 12;
        case DeformationKind::AffineNT: return 9;
        case DeformationKind::GaussianNoise: return 3 * n_points;
    }
    throw std::logic_error("param_dim: unhandled deformation kind");
}

DeformationParams DeformationParams::zeros(DeformationKind kind, std::size_t n_points) {
    return {kind, std::vector<double>(param_dim(kind, n_points), 0.0)};
}

FlowField flow(const DeformationParams& params, const PointCloud& cloud) {
    check_arity(params, cloud.size());
    FlowField field;
    field.vectors.resize(cloud.size());
    if (params.kind == DeformationKind::GaussianNoise) {
        const auto& v = params.values;
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            field.vectors[i] = {v[3 * i], v[3 * i + 1], v[3 * i + 2]};
        }
        return field;
    }
    for (std::size_t i = 0; i < cloud.size(); ++i) field.vectors[i] = point_flow(params, cloud[i]);
    return field;
}

PointCloud apply(const PointCloud& cloud, const FlowField& field) {
    if (field.size() != cloud.size()) {
        throw ShapeError("flow field has " + std::to_string(field.size()) + " vectors for a cloud of " +
                         std::to_string(cloud.size()) + " points");
    }
    std::vector<Vec3> out(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) out[i] = cloud[i] + field.vectors[i];
    return PointCloud(std::move(out));
}

PointCloud deform(const PointCloud& cloud, const DeformationParams& params) {
    return apply(cloud, flow(params, cloud));
}

Mat4 homogeneous_point_map(const DeformationParams& params, const Vec3& point) {
    if (!has_matrix_form(params.kind)) {
        throw UnsupportedKindError("deformation '" + std::string(to_string(params.kind)) +
                                   "' has no homogeneous matrix form");
    }
    check_arity(params, 1);
    const auto& v = params.values;
    Mat4 t = identity4();
    switch (params.kind) {
        case DeformationKind::Translation:
            t[0][3] = v[0];
            t[1][3] = v[1];
            t[2][3] = v[2];
            break;
        case DeformationKind::RotX: {
            const double c = std::cos(v[0]), s = std::sin(v[0]);
            t[1][1] = c;
            t[1][2] = -s;
            t[2][1] = s;
            t[2][2] = c;
            break;
        }
        case DeformationKind::RotY: {
            const double c = std::cos(v[0]), s = std::sin(v[0]);
            t[0][0] = c;
            t[0][2] = s;
            t[2][0] = -s;
            t[2][2] = c;
            break;
        }
        case DeformationKind::RotZ: {
            const double c = std::cos(v[0]), s = std::sin(v[0]);
            t[0][0] = c;
            t[0][1] = -s;
            t[1][0] = s;
            t[1][1] = c;
            break;
        }
        case DeformationKind::RotXZ: {
            const double ca = std::cos(v[0]), sa = std::sin(v[0]);
            const double cg = std::cos(v[1]), sg = std::sin(v[1]);
            t[0] = {cg, -sg * ca, sg * sa, 0.0};
            t[1] = {sg, cg * ca, -cg * sa, 0.0};
            t[2] = {0.0, sa, ca, 0.0};
            break;
        }
        case DeformationKind::RotXYZ: {
            const double ca = std::cos(v[0]), sa = std::sin(v[0]);
            const double cb = std::cos(v[1]), sb = std::sin(v[1]);
            const double cg = std::cos(v[2]), sg = std::sin(v[2]);
            t[0] = {cg * cb, cg * sb * sa - sg * ca, cg * sb * ca + sg * sa, 0.0};
            t[1] = {sg * cb, sg * sb * sa + cg * ca, sg * sb * ca - cg * sa, 0.0};
            t[2] = {-sb, cb * sa, cb * ca, 0.0};
            break;
        }
        case DeformationKind::ShearZ:
            t[0][2] = v[0];
            t[1][2] = v[1];
            break;
        case DeformationKind::TwistZ: {
            const double angle = v[0] * point.z;
            const double c = std::cos(angle), s = std::sin(angle);
            t[0][0] = c;
            t[0][1] = -s;
            t[1][0] = s;
            t[1][1] = c;
            break;
        }
        case DeformationKind::TaperZ: {
            const double k = 0.5 * v[0] * v[0] * point.z + v[1] * point.z + 1.0;
            t[0][0] = k;
            t[1][1] = k;
            break;
        }
        case DeformationKind::Affine:
            t[0] = {v[0] + 1.0, v[1], v[2], v[3]};
            t[1] = {v[4], v[5] + 1.0, v[6], v[7]};
            t[2] = {v[8], v[9], v[10] + 1.0, v[11]};
            break;
        case DeformationKind::AffineNT:
            t[0] = {v[0] + 1.0, v[1], v[2], 0.0};
            t[1] = {v[3], v[4] + 1.0, v[5], 0.0};
            t[2] = {v[6], v[7], v[8] + 1.0, 0.0};
            break;
        case DeformationKind::GaussianNoise:
            break;
    }
    return t;
}

Vec3 transform_point(const Mat4& t, const Vec3& p) {
    const std::array<double, 4> h = {p.x, p.y, p.z, 1.0};
    std::array<double, 4> r{};
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) r[i] += t[i][j] * h[j];
    }
    return {r[0] / r[3], r[1] / r[3], r[2] / r[3]};
}

std::string_view to_string(Distribution::Family family) {
    return family == Distribution::Family::Uniform ? "uniform" : "gaussian";
}

Distribution::Family parse_distribution_family(std::string_view name) {
    if (name == "uniform") return Distribution::Family::Uniform;
    if (name == "gaussian") return Distribution::Family::Gaussian;
    throw std::invalid_argument("unknown distribution: " + std::string(name));
}

DeformationParams sample_params(DeformationKind kind, const Distribution& dist, std::size_t n_points,
                                Rng& rng) {
    if (!std::isfinite(dist.scale) || dist.scale < 0.0) {
        throw std::invalid_argument("smoothing scale must be a finite non-negative number");
    }
    DeformationParams params = DeformationParams::zeros(kind, n_points);
    if (dist.scale == 0.0) return params;
    if (dist.family == Distribution::Family::Uniform) {
        std::uniform_real_distribution<double> draw(-dist.scale, dist.scale);
        for (double& v : params.values) v = draw(rng);
    } else {
        std::normal_distribution<double> draw(0.0, dist.scale);
        for (double& v : params.values) v = draw(rng);
    }
    return params;
}

}  // namespace deformcert
