#include <algorithm>
#include <cmath>
#include <span>
#include <numbers>
#include <stdexcept>

#include "deformcert/harness.hpp"

namespace deformcert {

namespace {

constexpr double kPi = std::numbers::pi;

Vec3 random_unit(Rng& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    for (;;) {
        const Vec3 v{g(rng), g(rng), g(rng)};
        const double n = v.norm();
        if (n > 1e-12) return (1.0 / n) * v;
    }
}

// Antipodal pairs (plus one zero-sum triple when N is odd) keep the centroid
// at the origin exactly, so normalization leaves every point on the unit sphere.
std::vector<Vec3> sample_sphere(std::size_t n, Rng& rng) {
    std::vector<Vec3> pts;
    pts.reserve(n);
    if (n % 2 == 1) {
        const Vec3 u = random_unit(rng);
        Vec3 w = random_unit(rng);
        const double d = u.x * w.x + u.y * w.y + u.z * w.z;
        w = w - d * u;
        const Vec3 v = (1.0 / w.norm()) * w;
        for (int k = 0; k < 3; ++k) {
            const double a = 2.0 * kPi * k / 3.0;
            pts.push_back(std::cos(a) * u + std::sin(a) * v);
        }
    }
    while (pts.size() < n) {
        const Vec3 p = random_unit(rng);
        pts.push_back(p);
        pts.push_back(-1.0 * p);
    }
    return pts;
}

// Surface samples are stratified rather than i.i.d.: each region gets its
// area share of the points (largest remainder), and positions inside a region
// follow a randomly shifted 2D low-discrepancy sequence. Small clouds then
// cover the surface evenly, like resampled mesh data.
std::vector<std::size_t> apportion(std::size_t n, std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    std::vector<std::size_t> counts(weights.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t used = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double exact = static_cast<double>(n) * weights[i] / total;
        counts[i] = static_cast<std::size_t>(exact);
        used += counts[i];
        remainders.push_back({exact - static_cast<double>(counts[i]), i});
    }
    std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; used < n; ++k, ++used) ++counts[remainders[k].second];
    return counts;
}

class Stratified2D {
public:
    explicit Stratified2D(Rng& rng) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        shift_[0] = u(rng);
        shift_[1] = u(rng);
    }
    std::pair<double, double> next() {
        // R2 sequence (inverse powers of the plastic number).
        constexpr double a1 = 0.7548776662466927, a2 = 0.5698402909980532;
        ++i_;
        return {std::fmod(shift_[0] + a1 * static_cast<double>(i_), 1.0),
                std::fmod(shift_[1] + a2 * static_cast<double>(i_), 1.0)};
    }

private:
    double shift_[2] = {0.0, 0.0};
    std::size_t i_ = 0;
};

std::vector<Vec3> sample_box(std::size_t n, Rng& rng) {
    std::uniform_real_distribution<double> extent(0.8, 1.2);
    const double e[3] = {extent(rng), extent(rng), extent(rng)};
    const double areas[6] = {e[1] * e[2], e[1] * e[2], e[0] * e[2], e[0] * e[2], e[0] * e[1], e[0] * e[1]};
    const auto counts = apportion(n, areas);
    std::vector<Vec3> pts;
    pts.reserve(n);
    for (int f = 0; f < 6; ++f) {
        const int axis = f / 2;
        const double sign = f % 2 == 0 ? 1.0 : -1.0;
        const int a = (axis + 1) % 3, b = (axis + 2) % 3;
        Stratified2D seq(rng);
        for (std::size_t k = 0; k < counts[f]; ++k) {
            const auto [u, v] = seq.next();
            double c[3];
            c[axis] = sign * e[axis];
            c[a] = (2.0 * u - 1.0) * e[a];
            c[b] = (2.0 * v - 1.0) * e[b];
            pts.push_back({c[0], c[1], c[2]});
        }
    }
    return pts;
}

std::vector<Vec3> sample_cylinder(std::size_t n, Rng& rng) {
    std::uniform_real_distribution<double> radius_draw(0.25, 0.35);
    const double r = radius_draw(rng);
    const double h = 1.0;
    const double lateral = 2.0 * kPi * r * 2.0 * h;
    const double cap = kPi * r * r;
    const double areas[3] = {lateral, cap, cap};
    const auto counts = apportion(n, areas);
    std::vector<Vec3> pts;
    pts.reserve(n);
    for (int region = 0; region < 3; ++region) {
        Stratified2D seq(rng);
        for (std::size_t k = 0; k < counts[region]; ++k) {
            const auto [u, v] = seq.next();
            const double theta = 2.0 * kPi * v;
            if (region == 0) {
                pts.push_back({h * (2.0 * u - 1.0), r * std::cos(theta), r * std::sin(theta)});
            } else {
                const double rho = r * std::sqrt(u);
                pts.push_back({region == 1 ? h : -h, rho * std::cos(theta), rho * std::sin(theta)});
            }
        }
    }
    return pts;
}

std::vector<Vec3> sample_cone(std::size_t n, Rng& rng) {
    std::uniform_real_distribution<double> radius_draw(0.8, 1.0);
    const double r = radius_draw(rng);
    const double h = 0.4;  // flat: apex at +h, base at -h
    const double lateral = kPi * r * std::sqrt(r * r + 4.0 * h * h);
    const double base = kPi * r * r;
    const double areas[2] = {lateral, base};
    const auto counts = apportion(n, areas);
    std::vector<Vec3> pts;
    pts.reserve(n);
    for (int region = 0; region < 2; ++region) {
        Stratified2D seq(rng);
        for (std::size_t k = 0; k < counts[region]; ++k) {
            const auto [u, v] = seq.next();
            const double theta = 2.0 * kPi * v;
            if (region == 0) {
                const double t = std::sqrt(u);  // fraction of the way from apex to base
                pts.push_back({h - 2.0 * h * t, r * t * std::cos(theta), r * t * std::sin(theta)});
            } else {
                const double rho = r * std::sqrt(u);
                pts.push_back({-h, rho * std::cos(theta), rho * std::sin(theta)});
            }
        }
    }
    return pts;
}

}  // namespace

std::string_view to_string(ShapeFamily family) {
    switch (family) {
        case ShapeFamily::Sphere: return "sphere";
        case ShapeFamily::Cube: return "cube";
        case ShapeFamily::Cylinder: return "cylinder";
        case ShapeFamily::Cone: return "cone";
    }
    return "unknown";
}

ShapeFamily parse_shape_family(std::string_view name) {
    for (auto f : {ShapeFamily::Sphere, ShapeFamily::Cube, ShapeFamily::Cylinder, ShapeFamily::Cone}) {
        if (to_string(f) == name) return f;
    }
    throw std::invalid_argument("unknown shape family: " + std::string(name));
}

PointCloud generate_shape(const ShapeSpec& spec) {
    if (spec.n_points < 8) throw std::invalid_argument("generate_shape: n_points must be at least 8");
    if (!(spec.jitter >= 0.0)) throw std::invalid_argument("generate_shape: jitter must be non-negative");
    Rng rng(derive_seed(spec.seed, {static_cast<std::uint64_t>(spec.family)}));
    std::vector<Vec3> pts;
    switch (spec.family) {
        case ShapeFamily::Sphere: pts = sample_sphere(spec.n_points, rng); break;
        case ShapeFamily::Cube: pts = sample_box(spec.n_points, rng); break;
        case ShapeFamily::Cylinder: pts = sample_cylinder(spec.n_points, rng); break;
        case ShapeFamily::Cone: pts = sample_cone(spec.n_points, rng); break;
    }
    if (spec.jitter > 0.0) {
        std::normal_distribution<double> noise(0.0, spec.jitter);
        for (auto& p : pts) p = p + Vec3{noise(rng), noise(rng), noise(rng)};
    }
    Vec3 c;
    for (const auto& p : pts) c = c + p;
    c = (1.0 / static_cast<double>(pts.size())) * c;
    double max_norm = 0.0;
    for (auto& p : pts) {
        p = p - c;
        max_norm = std::max(max_norm, p.norm());
    }
    for (auto& p : pts) p = (1.0 / max_norm) * p;
    return PointCloud(std::move(pts), /*normalized=*/true);
}

Dataset synthetic_dataset(const SyntheticSetSpec& spec) {
    Dataset data;
    data.reserve(spec.per_class * kShapeFamilyCount);
    for (std::size_t i = 0; i < spec.per_class; ++i) {
        for (std::size_t f = 0; f < kShapeFamilyCount; ++f) {
            const ShapeSpec shape{static_cast<ShapeFamily>(f), spec.n_points, spec.jitter,
                                  derive_seed(spec.seed, {i, f})};
            data.push_back({generate_shape(shape), static_cast<Label>(f)});
        }
    }
    return data;
}

}  // namespace deformcert
