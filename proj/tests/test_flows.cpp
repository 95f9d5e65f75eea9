#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "deformcert/cloud_io.hpp"
#include "deformcert/deformation.hpp"
#include "support.hpp"

using namespace deformcert;
using testing::random_cloud;
using testing::random_params;

namespace {

constexpr double kPi = std::numbers::pi;

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 matmul(const Mat3& a, const Mat3& b) {
    Mat3 c{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) c[i][j] += a[i][k] * b[k][j];
    return c;
}

Mat3 rx(double a) { return {{{1, 0, 0}, {0, std::cos(a), -std::sin(a)}, {0, std::sin(a), std::cos(a)}}}; }
Mat3 ry(double b) { return {{{std::cos(b), 0, std::sin(b)}, {0, 1, 0}, {-std::sin(b), 0, std::cos(b)}}}; }
Mat3 rz(double g) { return {{{std::cos(g), -std::sin(g), 0}, {std::sin(g), std::cos(g), 0}, {0, 0, 1}}}; }

Vec3 mul(const Mat3& m, const Vec3& p) {
    return {m[0][0] * p.x + m[0][1] * p.y + m[0][2] * p.z, m[1][0] * p.x + m[1][1] * p.y + m[1][2] * p.z,
            m[2][0] * p.x + m[2][1] * p.y + m[2][2] * p.z};
}

double dist(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

PointCloud single(Vec3 p) { return PointCloud({p}); }

}  // namespace

TEST_SUITE("point cloud") {
    TEST_CASE("construction rejects empty and non-finite clouds") {
        CHECK_THROWS_AS(PointCloud(std::vector<Vec3>{}), ShapeError);
        CHECK_THROWS_AS(PointCloud({{0.0, std::nan(""), 0.0}}), ShapeError);
        CHECK_THROWS_AS(PointCloud({{0.0, 0.0, INFINITY}}), ShapeError);
        CHECK_NOTHROW(PointCloud({{1.0, 2.0, 3.0}}));
    }

    TEST_CASE("normalized flag is checked") {
        CHECK_NOTHROW(PointCloud({{1, 0, 0}, {-1, 0, 0}}, true));
        CHECK_THROWS_AS(PointCloud({{1, 0, 0}, {0, 0, 0}}, true), ShapeError);  // off-center
        CHECK_THROWS_AS(PointCloud({{2, 0, 0}, {-2, 0, 0}}, true), ShapeError);  // norm 2
        const PointCloud c({{0.5, 0, 0}, {-0.5, 0, 0}}, false);
        CHECK_FALSE(c.normalized());
    }

    TEST_CASE("degenerate clouds are legal and flows stay defined") {
        const PointCloud c({{0.3, 0.3, 0.3}, {0.3, 0.3, 0.3}, {0.3, 0.3, 0.3}});
        Rng rng(1);
        for (auto kind : kAllDeformationKinds) {
            const auto field = flow(random_params(rng, kind, c.size()), c);
            CHECK(field.size() == 3);
            if (kind != DeformationKind::GaussianNoise) CHECK(field.vectors[0] == field.vectors[1]);
        }
    }
}

TEST_SUITE("deform-flows") {
    TEST_CASE("param_dim per kind") {
        CHECK(param_dim(DeformationKind::Affine, 1024) == 12);
        CHECK(param_dim(DeformationKind::RotZ, 17) == 1);
        CHECK(param_dim(DeformationKind::GaussianNoise, 1024) == 3072);
        CHECK(param_dim(DeformationKind::Translation, 5) == 3);
        CHECK(param_dim(DeformationKind::RotXZ, 5) == 2);
        CHECK(param_dim(DeformationKind::RotXYZ, 5) == 3);
        CHECK(param_dim(DeformationKind::ShearZ, 5) == 2);
        CHECK(param_dim(DeformationKind::TwistZ, 5) == 1);
        CHECK(param_dim(DeformationKind::TaperZ, 5) == 2);
        CHECK(param_dim(DeformationKind::AffineNT, 5) == 9);
        for (auto kind : kAllDeformationKinds) {
            if (kind == DeformationKind::GaussianNoise) continue;
            CHECK(param_dim(kind, 1) == param_dim(kind, 999));
        }
    }

    TEST_CASE("kind names round-trip") {
        for (auto kind : kAllDeformationKinds) CHECK(parse_deformation_kind(to_string(kind)) == kind);
        CHECK_THROWS_AS(parse_deformation_kind("spin"), std::invalid_argument);
        CHECK(parse_distribution_family("uniform") == Distribution::Family::Uniform);
        CHECK(parse_distribution_family("gaussian") == Distribution::Family::Gaussian);
        CHECK_THROWS(parse_distribution_family("laplace"));
    }

    TEST_CASE("translation flow is constant") {
        Rng rng(2);
        const auto cloud = random_cloud(rng, 50);
        const auto field = flow({DeformationKind::Translation, {0.1, -0.2, 0.3}}, cloud);
        for (const auto& v : field.vectors) CHECK(v == Vec3{0.1, -0.2, 0.3});
    }

    TEST_CASE("quarter turn about z") {
        const auto field = flow({DeformationKind::RotZ, {kPi / 2}}, single({1, 0, 0}));
        CHECK(dist(field.vectors[0], {-1, 1, 0}) < 1e-15);
    }

    TEST_CASE("twist by pi at z = 1") {
        const auto field = flow({DeformationKind::TwistZ, {kPi}}, single({1, 0, 1}));
        CHECK(dist(field.vectors[0], {-2, 0, 0}) < 1e-15);
    }

    TEST_CASE("taper with a = 0, b = 1") {
        const auto field = flow({DeformationKind::TaperZ, {0.0, 1.0}}, single({1, 1, 2}));
        CHECK(field.vectors[0] == Vec3{2, 2, 0});
    }

    TEST_CASE("taper factor uses a squared over two") {
        const auto field = flow({DeformationKind::TaperZ, {2.0, 0.0}}, single({1, -1, 0.5}));
        CHECK(dist(field.vectors[0], {1.0, -1.0, 0.0}) < 1e-15);
    }

    TEST_CASE("shear displaces x and y by z only") {
        const auto field = flow({DeformationKind::ShearZ, {0.5, -2.0}}, single({7, 8, 2}));
        CHECK(field.vectors[0] == Vec3{1.0, -4.0, 0.0});
    }

    TEST_CASE("gaussian noise reshapes the parameter vector in point order") {
        const PointCloud cloud({{0, 0, 0}, {1, 1, 1}});
        const auto field = flow({DeformationKind::GaussianNoise, {1, 2, 3, 4, 5, 6}}, cloud);
        CHECK(field.vectors[0] == Vec3{1, 2, 3});
        CHECK(field.vectors[1] == Vec3{4, 5, 6});
    }

    TEST_CASE("arity mismatch is rejected") {
        const PointCloud cloud({{0, 0, 0}, {1, 1, 1}});
        CHECK_THROWS_AS(flow({DeformationKind::RotZ, {0.1, 0.2}}, cloud), ArityError);
        CHECK_THROWS_AS(flow({DeformationKind::Affine, std::vector<double>(9, 0.0)}, cloud), ArityError);
        CHECK_THROWS_AS(flow({DeformationKind::GaussianNoise, std::vector<double>(3, 0.0)}, cloud), ArityError);
        CHECK_THROWS_AS(flow({DeformationKind::Translation, {0.0, NAN, 0.0}}, cloud), ShapeError);
    }

    TEST_CASE("property: zero parameters give the zero field") {
        Rng rng(3);
        for (int trial = 0; trial < 200; ++trial) {
            const auto kind = testing::random_kind(rng, false);
            const auto cloud = random_cloud(rng, testing::random_size(rng, 1, 40));
            const auto field = flow(DeformationParams::zeros(kind, cloud.size()), cloud);
            REQUIRE(field.size() == cloud.size());
            for (const auto& v : field.vectors) CHECK(v == Vec3{});
        }
    }

    TEST_CASE("property: rotations are isometries") {
        Rng rng(4);
        const DeformationKind kinds[] = {DeformationKind::RotX, DeformationKind::RotY, DeformationKind::RotZ,
                                         DeformationKind::RotXZ, DeformationKind::RotXYZ};
        for (int trial = 0; trial < 500; ++trial) {
            const auto kind = kinds[trial % 5];
            const auto cloud = random_cloud(rng, 20, 3.0);
            const auto moved = deform(cloud, random_params(rng, kind, cloud.size(), 2 * kPi));
            for (std::size_t i = 0; i < cloud.size(); ++i) {
                CHECK(std::abs(moved[i].norm() - cloud[i].norm()) < 1e-9);
            }
        }
    }

    TEST_CASE("property: twist keeps z and the xy radius") {
        Rng rng(5);
        for (int trial = 0; trial < 300; ++trial) {
            const auto cloud = random_cloud(rng, 20, 2.0);
            const auto moved = deform(cloud, random_params(rng, DeformationKind::TwistZ, 20, 10.0));
            for (std::size_t i = 0; i < cloud.size(); ++i) {
                CHECK(moved[i].z == cloud[i].z);
                CHECK(std::abs(std::hypot(moved[i].x, moved[i].y) - std::hypot(cloud[i].x, cloud[i].y)) < 1e-9);
            }
        }
    }

    TEST_CASE("property: rotation flows match independent matrix products") {
        Rng rng(6);
        for (int trial = 0; trial < 500; ++trial) {
            const auto p = testing::random_point(rng, 2.0);
            const auto v = random_params(rng, DeformationKind::RotXYZ, 1, kPi).values;
            const auto cloud = single(p);
            const Mat3 r = matmul(rz(v[2]), matmul(ry(v[1]), rx(v[0])));
            CHECK(dist(deform(cloud, {DeformationKind::RotXYZ, v})[0], mul(r, p)) < 1e-12);
            CHECK(dist(deform(cloud, {DeformationKind::RotXZ, {v[0], v[2]}})[0], mul(matmul(rz(v[2]), rx(v[0])), p)) <
                  1e-12);
            CHECK(dist(deform(cloud, {DeformationKind::RotX, {v[0]}})[0], mul(rx(v[0]), p)) < 1e-12);
            CHECK(dist(deform(cloud, {DeformationKind::RotY, {v[1]}})[0], mul(ry(v[1]), p)) < 1e-12);
            CHECK(dist(deform(cloud, {DeformationKind::RotZ, {v[2]}})[0], mul(rz(v[2]), p)) < 1e-12);
        }
    }

    TEST_CASE("property: RotXYZ reduces to single-axis rotations") {
        Rng rng(7);
        for (int trial = 0; trial < 200; ++trial) {
            const auto cloud = random_cloud(rng, 10);
            const double a = random_params(rng, DeformationKind::RotX, 1, kPi).values[0];
            const auto fx = flow({DeformationKind::RotXYZ, {a, 0, 0}}, cloud);
            const auto gx = flow({DeformationKind::RotX, {a}}, cloud);
            const auto fz = flow({DeformationKind::RotXYZ, {0, 0, a}}, cloud);
            const auto gz = flow({DeformationKind::RotZ, {a}}, cloud);
            for (std::size_t i = 0; i < cloud.size(); ++i) {
                CHECK(dist(fx.vectors[i], gx.vectors[i]) < 1e-12);
                CHECK(dist(fz.vectors[i], gz.vectors[i]) < 1e-12);
            }
        }
    }

    TEST_CASE("property: affine subsumes translation and rotations") {
        Rng rng(8);
        for (int trial = 0; trial < 200; ++trial) {
            const auto cloud = random_cloud(rng, 10);
            const auto t = random_params(rng, DeformationKind::Translation, 1).values;
            std::vector<double> a(12, 0.0);
            a[3] = t[0];
            a[7] = t[1];
            a[11] = t[2];
            const auto f1 = flow({DeformationKind::Affine, a}, cloud);
            const auto f2 = flow({DeformationKind::Translation, t}, cloud);
            for (std::size_t i = 0; i < cloud.size(); ++i) CHECK(dist(f1.vectors[i], f2.vectors[i]) < 1e-12);

            const auto r = random_params(rng, DeformationKind::RotXYZ, 1, kPi);
            const Mat3 m = matmul(rz(r.values[2]), matmul(ry(r.values[1]), rx(r.values[0])));
            std::vector<double> rot(12, 0.0), rot_nt(9, 0.0);
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) {
                    rot[4 * i + j] = m[i][j] - (i == j ? 1.0 : 0.0);
                    rot_nt[3 * i + j] = rot[4 * i + j];
                }
            const auto g1 = flow({DeformationKind::Affine, rot}, cloud);
            const auto g2 = flow({DeformationKind::AffineNT, rot_nt}, cloud);
            const auto g3 = flow(r, cloud);
            for (std::size_t i = 0; i < cloud.size(); ++i) {
                CHECK(dist(g1.vectors[i], g3.vectors[i]) < 1e-9);
                CHECK(dist(g2.vectors[i], g3.vectors[i]) < 1e-9);
            }
        }
    }

    TEST_CASE("apply adds pointwise and F then -F restores the cloud") {
        const auto moved = apply(single({1, 0, 0}), FlowField{{{-1, 1, 0}}});
        CHECK(moved[0] == Vec3{0, 1, 0});
        CHECK_FALSE(moved.normalized());

        Rng rng(9);
        for (int trial = 0; trial < 100; ++trial) {
            const auto cloud = random_cloud(rng, 30);
            const auto kind = testing::random_kind(rng, false);
            const auto f = flow(random_params(rng, kind, cloud.size()), cloud);
            const auto back = apply(apply(cloud, f), -f);
            for (std::size_t i = 0; i < cloud.size(); ++i) CHECK(dist(back[i], cloud[i]) < 1e-12);
            CHECK(apply(cloud, FlowField{std::vector<Vec3>(cloud.size())}) == cloud);
        }
        CHECK_THROWS_AS(apply(single({0, 0, 0}), FlowField{{{1, 1, 1}, {2, 2, 2}}}), ShapeError);
    }

    TEST_CASE("homogeneous matrices") {
        const auto t = homogeneous_point_map({DeformationKind::Translation, {0.1, 0.2, 0.3}}, {5, 5, 5});
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 3; ++j) CHECK(t[i][j] == (i == j ? 1.0 : 0.0));
        CHECK(t[0][3] == 0.1);
        CHECK(t[1][3] == 0.2);
        CHECK(t[2][3] == 0.3);
        CHECK(t[3][3] == 1.0);

        const auto identity = homogeneous_point_map(DeformationParams::zeros(DeformationKind::Affine, 1), {1, 2, 3});
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) CHECK(identity[i][j] == (i == j ? 1.0 : 0.0));

        Rng rng(10);
        for (int trial = 0; trial < 100; ++trial) {
            const double g = random_params(rng, DeformationKind::RotZ, 1, kPi).values[0];
            const auto p = testing::random_point(rng);
            CHECK(homogeneous_point_map({DeformationKind::RotXYZ, {0, 0, g}}, p) ==
                  homogeneous_point_map({DeformationKind::RotZ, {g}}, p));
        }
        CHECK_THROWS_AS(homogeneous_point_map({DeformationKind::GaussianNoise, {0, 0, 0}}, {0, 0, 0}),
                        UnsupportedKindError);
        CHECK_FALSE(has_matrix_form(DeformationKind::GaussianNoise));
    }

    TEST_CASE("property: flow equals the homogeneous matrix map") {
        Rng rng(11);
        double worst = 0.0;
        for (int trial = 0; trial < 3000; ++trial) {
            const auto kind = testing::random_kind(rng, true);
            const auto p = testing::random_point(rng, 1.5);
            const auto params = random_params(rng, kind, 1, 2.0);
            const auto via_flow = deform(single(p), params)[0];
            const auto via_matrix = transform_point(homogeneous_point_map(params, p), p);
            worst = std::max(worst, dist(via_flow, via_matrix));
        }
        CHECK(worst < 1e-9);
    }

    TEST_CASE("sample_params") {
        Rng a(12), b(12);
        const auto pa = sample_params(DeformationKind::Translation, Distribution::gaussian(0.2), 1, a);
        const auto pb = sample_params(DeformationKind::Translation, Distribution::gaussian(0.2), 1, b);
        CHECK(pa.values == pb.values);
        CHECK(pa.values.size() == 3);

        Rng rng(13);
        const auto zero = sample_params(DeformationKind::Affine, Distribution::gaussian(0.0), 1, rng);
        for (double v : zero.values) CHECK(v == 0.0);
        for (int i = 0; i < 1000; ++i) {
            const auto u = sample_params(DeformationKind::RotZ, Distribution::uniform(1.0), 1, rng);
            REQUIRE(u.values.size() == 1);
            CHECK(std::abs(u.values[0]) <= 1.0);
        }
        CHECK(sample_params(DeformationKind::GaussianNoise, Distribution::gaussian(1.0), 7, rng).values.size() == 21);
        CHECK_THROWS_AS(sample_params(DeformationKind::RotZ, Distribution::uniform(-1.0), 1, rng),
                        std::invalid_argument);
        CHECK_THROWS_AS(sample_params(DeformationKind::RotZ, Distribution::gaussian(NAN), 1, rng),
                        std::invalid_argument);
    }

    TEST_CASE("gaussian sample moment") {
        Rng rng(14);
        double sum = 0.0, sq = 0.0;
        const std::size_t draws = 1000000;
        for (std::size_t i = 0; i < draws / 3 + 1; ++i) {
            for (double v : sample_params(DeformationKind::Translation, Distribution::gaussian(0.2), 1, rng).values) {
                sum += v;
                sq += v * v;
            }
        }
        const double n = 3.0 * static_cast<double>(draws / 3 + 1);
        const double sd = std::sqrt(sq / n - (sum / n) * (sum / n));
        CHECK(std::abs(sd - 0.2) < 0.01 * 0.2);
    }

    TEST_CASE("uniform sample moments") {
        Rng rng(15);
        double sq = 0.0;
        const int draws = 200000;
        for (int i = 0; i < draws; ++i) {
            const double v = sample_params(DeformationKind::RotZ, Distribution::uniform(0.5), 1, rng).values[0];
            sq += v * v;
        }
        CHECK(std::abs(sq / draws - 0.25 / 3.0) < 0.01 * 0.25 / 3.0);
    }
}

TEST_SUITE("cloud files") {
    TEST_CASE("xyz round trip and comments") {
        Rng rng(20);
        const auto cloud = random_cloud(rng, 40);
        std::stringstream ss;
        write_xyz(ss, cloud);
        CHECK(read_xyz(ss) == cloud);

        std::istringstream in("# header\n1 2 3\n\n  4 5 6   # trailing\n");
        const auto parsed = read_xyz(in);
        REQUIRE(parsed.size() == 2);
        CHECK(parsed[1] == Vec3{4, 5, 6});

        std::istringstream bad("1 2\n");
        CHECK_THROWS_AS(read_xyz(bad), FormatError);
        std::istringstream extra("1 2 3 4\n");
        CHECK_THROWS_AS(read_xyz(extra), FormatError);
        std::istringstream empty("# nothing\n");
        CHECK_THROWS(read_xyz(empty));
    }

    TEST_CASE("pcb1 layout is bit exact") {
        const PointCloud cloud({{1.0, -2.0, 0.5}});
        std::stringstream ss;
        write_pcb1(ss, cloud);
        const std::string bytes = ss.str();
        REQUIRE(bytes.size() == 4 + 4 + 12);
        CHECK(bytes.substr(0, 4) == "PCB1");
        CHECK(bytes.substr(4, 4) == std::string("\x01\x00\x00\x00", 4));
        CHECK(bytes.substr(8, 4) == std::string("\x00\x00\x80\x3f", 4));   // 1.0f
        CHECK(bytes.substr(12, 4) == std::string("\x00\x00\x00\xc0", 4));  // -2.0f
        CHECK(bytes.substr(16, 4) == std::string("\x00\x00\x00\x3f", 4));  // 0.5f
        std::stringstream back(bytes);
        CHECK(read_pcb1(back) == cloud);
    }

    TEST_CASE("pcb1 rejects bad magic and truncation") {
        std::stringstream wrong("PCB2\x01\x00\x00\x00");
        CHECK_THROWS_AS(read_pcb1(wrong), FormatError);
        const PointCloud cloud({{1, 2, 3}, {4, 5, 6}});
        std::stringstream ss;
        write_pcb1(ss, cloud);
        std::stringstream cut(ss.str().substr(0, ss.str().size() - 3));
        CHECK_THROWS_AS(read_pcb1(cut), FormatError);
    }

    TEST_CASE("read_cloud detects the format") {
        const auto dir = std::filesystem::temp_directory_path() / "deformcert_flows_io";
        std::filesystem::create_directories(dir);
        const PointCloud cloud({{0.25, 0.5, -1.0}, {2.0, 0.0, 1.0}});
        write_cloud(dir / "a.pcb", cloud);
        write_cloud(dir / "a.xyz", cloud);
        CHECK(read_cloud(dir / "a.pcb") == cloud);
        CHECK(read_cloud(dir / "a.xyz") == cloud);
        std::filesystem::remove_all(dir);
    }
}
