#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <bit>
#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>
#include <thread>

#include "deformcert/centroid.hpp"
#include "deformcert/harness.hpp"
#include "deformcert/oracle.hpp"
#include "support.hpp"

using namespace deformcert;

#ifndef DEFORMCERT_CLI
#error "DEFORMCERT_CLI must point at the command line binary"
#endif

namespace {

/// Serves a classifier on an ephemeral loopback port for the lifetime of the object.
class LoopbackServer {
public:
    explicit LoopbackServer(const Classifier& classifier) : server_(classifier, "127.0.0.1", 0) {
        thread_ = std::jthread([this] { server_.run(); });
    }
    ~LoopbackServer() {
        server_.stop();
        thread_.join();
    }
    std::string endpoint() const { return "tcp:127.0.0.1:" + std::to_string(server_.port()); }

private:
    TcpOracleServer server_;
    std::jthread thread_;
};

CentroidClassifier fixture_model() {
    return centroid_fit(synthetic_dataset({.per_class = 3, .n_points = 64, .jitter = 0.01, .seed = 5}));
}

std::filesystem::path model_file(const CentroidClassifier& model) {
    const auto dir = std::filesystem::temp_directory_path() / "deformcert_oracle_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "centroid.json";
    model.save(path);
    return path;
}

std::vector<PointCloud> random_batch(Rng& rng, std::size_t count) {
    std::vector<PointCloud> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(testing::random_cloud(rng, testing::random_size(rng, 1, 40)));
    return out;
}

ConnectOptions quick(int ms) {
    ConnectOptions o;
    o.timeout = std::chrono::milliseconds(ms);
    return o;
}

}  // namespace

TEST_SUITE("wire format") {
    TEST_CASE("request text is exact") {
        const std::vector<PointCloud> clouds{PointCloud({{1, 2, 3}}), PointCloud({{0.1, -0.5, 1e-7}, {0, -0.0, 2.5}})};
        CHECK(encode_request(5, clouds) ==
              "{\"id\":5,\"clouds\":[[[1.0,2.0,3.0]],[[0.1,-0.5,1e-07],[0.0,-0.0,2.5]]]}\n");
        CHECK(encode_request(0, {}) == "{\"id\":0,\"clouds\":[]}\n");
    }

    TEST_CASE("response and error text is exact") {
        const std::vector<Label> labels{1, 0, 12};
        CHECK(encode_response(7, labels) == "{\"id\":7,\"labels\":[1,0,12]}\n");
        CHECK(encode_error(8, "bad \"cloud\"\n") == "{\"id\":8,\"error\":\"bad \\\"cloud\\\"\\n\"}\n");
    }

    TEST_CASE("property: coordinates round-trip bit exactly") {
        Rng rng(1);
        std::uniform_int_distribution<std::uint64_t> bits;
        for (int trial = 0; trial < 300; ++trial) {
            std::vector<Vec3> pts;
            for (int i = 0; i < 20; ++i) {
                double v[3];
                for (double& x : v) {
                    do x = std::bit_cast<double>(bits(rng));
                    while (!std::isfinite(x));
                }
                pts.push_back({v[0], v[1], v[2]});
            }
            pts.push_back({std::numeric_limits<double>::denorm_min(), -std::numeric_limits<double>::max(), 1e300});
            const std::vector<PointCloud> clouds{PointCloud(pts)};
            const auto line = encode_request(static_cast<std::uint64_t>(trial), clouds);
            CHECK(line.find('\n') == line.size() - 1);
            const auto req = decode_request(line);
            CHECK(req.id == static_cast<std::uint64_t>(trial));
            REQUIRE(req.clouds.size() == 1);
            CHECK(req.clouds[0] == clouds[0]);
        }
    }

    TEST_CASE("large ids survive") {
        const auto max = std::numeric_limits<std::uint64_t>::max();
        CHECK(decode_request(encode_request(max, {})).id == max);
        CHECK(decode_response(encode_response(max, {})).id == max);
    }

    TEST_CASE("decode errors carry the id when it is recoverable") {
        CHECK_THROWS_AS(decode_request("not json"), ProtocolError);
        try {
            decode_request("{\"clouds\":[]}");
            FAIL("expected an error");
        } catch (const ProtocolError& e) {
            CHECK_FALSE(e.id().has_value());
        }
        for (const char* bad : {"{\"id\":3,\"clouds\":5}", "{\"id\":3}", "{\"id\":3,\"clouds\":[[]]}",
                                "{\"id\":3,\"clouds\":[[[1,2]]]}", "{\"id\":3,\"clouds\":[[[1,2,\"x\"]]]}"}) {
            try {
                decode_request(bad);
                FAIL("expected an error for " << bad);
            } catch (const ProtocolError& e) {
                CHECK(e.id() == std::optional<std::uint64_t>(3));
            }
        }
        CHECK_THROWS_AS(decode_request("{\"id\":-1,\"clouds\":[]}"), ProtocolError);
        CHECK_THROWS_AS(decode_response("{\"id\":1}"), ProtocolError);
        CHECK_THROWS_AS(decode_response("{\"id\":1,\"labels\":[0.5]}"), ProtocolError);
        const auto err = decode_response("{\"id\":4,\"error\":\"boom\"}");
        CHECK(err.error == std::optional<std::string>("boom"));
    }

    TEST_CASE("answer_frame") {
        const ConstantClassifier f(3);
        CHECK(answer_frame(f, "{\"id\":9,\"clouds\":[[[0,0,0]],[[1,1,1]]]}") == "{\"id\":9,\"labels\":[3,3]}\n");
        const auto err = answer_frame(f, "{\"id\":9,\"clouds\":7}");
        REQUIRE(err.has_value());
        CHECK(decode_response(*err).id == 9);
        CHECK(decode_response(*err).error.has_value());
        CHECK_FALSE(answer_frame(f, "{{{").has_value());
        const testing::FailingClassifier fail;
        const auto failed = answer_frame(fail, "{\"id\":2,\"clouds\":[[[0,0,0]]]}");
        REQUIRE(failed.has_value());
        CHECK(decode_response(*failed).error.has_value());
    }
}

TEST_SUITE("serve_stream") {
    TEST_CASE("answers in order, error frames keep the stream alive") {
        const ConstantClassifier f(1);
        std::istringstream in(
            "{\"id\":1,\"clouds\":[[[0,0,0]]]}\n"
            "\n"
            "{\"id\":2,\"clouds\":\"x\"}\r\n"
            "{\"id\":3,\"clouds\":[[[0,0,0]],[[0,0,1]]]}\n");
        std::ostringstream out;
        CHECK(serve_stream(f, in, out) == ServeStatus::Closed);
        std::istringstream lines(out.str());
        std::string l1, l2, l3;
        std::getline(lines, l1);
        std::getline(lines, l2);
        std::getline(lines, l3);
        CHECK(l1 == "{\"id\":1,\"labels\":[1]}");
        CHECK(decode_response(l2).id == 2);
        CHECK(decode_response(l2).error.has_value());
        CHECK(l3 == "{\"id\":3,\"labels\":[1,1]}");
    }

    TEST_CASE("unparsable or oversized frames drop the connection") {
        const ConstantClassifier f(1);
        std::istringstream garbage("{\"id\":1,\"clouds\":[[[0,0,0]]]}\nhello\n{\"id\":2,\"clouds\":[]}\n");
        std::ostringstream out;
        CHECK(serve_stream(f, garbage, out) == ServeStatus::ProtocolError);
        CHECK(out.str() == "{\"id\":1,\"labels\":[1]}\n");

        std::istringstream big("{\"id\":1,\"clouds\":[[[0,0,0]]]}\n");
        std::ostringstream out2;
        CHECK(serve_stream(f, big, out2, {.max_frame_bytes = 10}) == ServeStatus::ProtocolError);
        CHECK(out2.str().empty());
    }
}

TEST_SUITE("endpoints") {
    TEST_CASE("parse") {
        const auto t = OracleEndpoint::parse("tcp:localhost:8123");
        CHECK(t.transport == OracleEndpoint::Transport::Tcp);
        CHECK(t.host == "localhost");
        CHECK(t.port == 8123);
        const auto s = OracleEndpoint::parse("stdio:python3 -m adapter --stdio");
        CHECK(s.transport == OracleEndpoint::Transport::Stdio);
        CHECK(s.command == "python3 -m adapter --stdio");
        for (const char* bad : {"tcp:host", "tcp:host:0", "tcp:host:70000", "tcp:host:x", "stdio:", "udp:a:1", ""}) {
            CHECK_THROWS_AS(OracleEndpoint::parse(bad), std::invalid_argument);
        }
    }

    TEST_CASE("unreachable tcp peer") {
        // Bind then close to find a port nobody listens on.
        std::uint16_t port = 0;
        {
            const ConstantClassifier f(0);
            TcpOracleServer probe(f, "127.0.0.1", 0);
            port = probe.port();
        }
        CHECK_THROWS_AS(connect(OracleEndpoint::parse("tcp:127.0.0.1:" + std::to_string(port))), TransportError);
    }
}

TEST_SUITE("loopback") {
    TEST_CASE("tcp: labels equal in-process labels") {
        const auto model = fixture_model();
        LoopbackServer server(model);
        const auto client = connect(OracleEndpoint::parse(server.endpoint()));
        CHECK(client->serial());
        Rng rng(2);
        for (int trial = 0; trial < 50; ++trial) {
            const auto batch = random_batch(rng, testing::random_size(rng, 1, 30));
            CHECK(client->classify(batch) == model.classify(batch));
        }
        CHECK(client->classify({}).empty());
    }

    TEST_CASE("tcp: 10^4 sequential frames without an id mismatch") {
        const auto model = fixture_model();
        LoopbackServer server(model);
        const auto client = connect(OracleEndpoint::parse(server.endpoint()));
        Rng rng(3);
        const auto batch = random_batch(rng, 2);
        const auto expected = model.classify(batch);
        int mismatches = 0;
        for (int i = 0; i < 10000; ++i) {
            // The client verifies every echoed id and throws on a mismatch.
            if (client->classify(batch) != expected) ++mismatches;
        }
        CHECK(mismatches == 0);
    }

    TEST_CASE("tcp: several connections at once") {
        const auto model = fixture_model();
        LoopbackServer server(model);
        std::vector<std::jthread> workers;
        std::atomic<int> bad{0};
        for (int w = 0; w < 4; ++w) {
            workers.emplace_back([&, w] {
                const auto client = connect(OracleEndpoint::parse(server.endpoint()));
                Rng rng(static_cast<std::uint64_t>(100 + w));
                for (int i = 0; i < 200; ++i) {
                    const auto batch = random_batch(rng, 3);
                    if (client->classify(batch) != model.classify(batch)) ++bad;
                }
            });
        }
        workers.clear();
        CHECK(bad == 0);
    }

    TEST_CASE("tcp: server-side classifier failure becomes a ClassifierError") {
        const testing::FailingClassifier fail;
        LoopbackServer server(fail);
        const auto client = connect(OracleEndpoint::parse(server.endpoint()));
        const std::vector<PointCloud> batch{PointCloud({{0, 0, 0}})};
        CHECK_THROWS_AS(client->classify(batch), ClassifierError);
        // An error frame keeps the stream in step.
        CHECK_THROWS_AS(client->classify(batch), ClassifierError);
    }

    TEST_CASE("certification is transport invariant") {
        const auto model = fixture_model();
        LoopbackServer server(model);
        const auto tcp = connect(OracleEndpoint::parse(server.endpoint()));
        const auto stdio = connect(OracleEndpoint::parse(std::string("stdio:") + DEFORMCERT_CLI +
                                                          " serve-oracle --stdio --model centroid:" +
                                                          model_file(model).string()));
        const auto data = synthetic_dataset({.per_class = 2, .n_points = 64, .jitter = 0.01, .seed = 9});
        SmoothingConfig config;
        config.distribution = Distribution::uniform(0.4);
        config.n = 300;
        config.batch = 64;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const auto local = smooth_certify(model, data[i].cloud, DeformationKind::RotZ, config, i);
            for (const Classifier* remote : {static_cast<const Classifier*>(tcp.get()),
                                             static_cast<const Classifier*>(stdio.get())}) {
                const auto r = smooth_certify(*remote, data[i].cloud, DeformationKind::RotZ, config, i);
                CHECK(r.predicted == local.predicted);
                CHECK(r.candidate == local.candidate);
                CHECK(r.selection_count == local.selection_count);
                CHECK(r.estimation_count == local.estimation_count);
                CHECK(r.pa_lower == local.pa_lower);
                CHECK(r.radius == local.radius);
            }
        }

        SweepSpec spec;
        spec.kind = DeformationKind::TwistZ;
        spec.family = Distribution::Family::Gaussian;
        spec.scales = {0.1, 0.4};
        spec.n = 200;
        spec.record_time = false;
        std::ostringstream a, b, c;
        write_csv(a, run_sweep(spec, data, model));
        write_csv(b, run_sweep(spec, data, *tcp));
        write_csv(c, run_sweep(spec, data, *stdio));
        CHECK(a.str() == b.str());
        CHECK(a.str() == c.str());
    }
}

TEST_SUITE("misbehaving peers") {
    TEST_CASE("wrong label count is a protocol error") {
        const auto client = connect(OracleEndpoint::parse(
            "stdio:while read -r line; do echo '{\"id\":1,\"labels\":[0,0,0]}'; done"));
        const std::vector<PointCloud> batch{PointCloud({{0, 0, 0}}), PointCloud({{1, 0, 0}})};
        CHECK_THROWS_AS(client->classify(batch), ProtocolError);
    }

    TEST_CASE("id mismatch is a protocol error and poisons the connection") {
        const auto client = connect(
            OracleEndpoint::parse("stdio:while read -r line; do echo '{\"id\":77,\"labels\":[0]}'; done"));
        const std::vector<PointCloud> batch{PointCloud({{0, 0, 0}})};
        CHECK_THROWS_AS(client->classify(batch), ProtocolError);
        CHECK_THROWS_AS(client->classify(batch), TransportError);
    }

    TEST_CASE("silent peer times out") {
        const auto client = connect(OracleEndpoint::parse("stdio:sleep 5"), quick(200));
        const std::vector<PointCloud> batch{PointCloud({{0, 0, 0}})};
        const auto start = std::chrono::steady_clock::now();
        CHECK_THROWS_AS(client->classify(batch), TransportError);
        CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(3));
    }

    TEST_CASE("peer that exits is a transport error") {
        const auto client = connect(OracleEndpoint::parse("stdio:true"), quick(2000));
        const std::vector<PointCloud> batch{PointCloud({{0, 0, 0}})};
        CHECK_THROWS_AS(client->classify(batch), TransportError);
    }

    TEST_CASE("garbage reply is a protocol error") {
        const auto client = connect(OracleEndpoint::parse("stdio:while read -r line; do echo nope; done"));
        const std::vector<PointCloud> batch{PointCloud({{0, 0, 0}})};
        CHECK_THROWS_AS(client->classify(batch), ProtocolError);
    }

    TEST_CASE("sweep records transport failures per row") {
        const auto client = connect(OracleEndpoint::parse("stdio:true"), quick(2000));
        const auto data = synthetic_dataset({.per_class = 1, .n_points = 16, .jitter = 0.0, .seed = 1});
        SweepSpec spec;
        spec.scales = {0.1};
        spec.n = 10;
        spec.n0 = 10;
        const auto table = run_sweep(spec, data, *client);
        REQUIRE(table.rows.size() == data.size());
        for (const auto& row : table.rows) {
            CHECK_FALSE(row.error.empty());
            CHECK(row.result.abstained());
        }
    }
}
