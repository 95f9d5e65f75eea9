#include <charconv>
#include <cmath>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "deformcert/centroid.hpp"
#include "deformcert/cloud_io.hpp"
#include "deformcert/dataset.hpp"
#include "deformcert/harness.hpp"
#include "deformcert/mlp.hpp"
#include "deformcert/oracle.hpp"

namespace fs = std::filesystem;
using namespace deformcert;

namespace {

constexpr double kDegree = std::numbers::pi / 180.0;

double parse_number(std::string_view text, const std::string& what) {
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw CLI::ValidationError(what, "not a number: '" + std::string(text) + "'");
    }
    return v;
}

std::vector<std::string> split(std::string_view text, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = text.find(sep, start);
        out.emplace_back(text.substr(start, pos - start));
        if (pos == std::string_view::npos) return out;
        start = pos + 1;
    }
}

// "0.05,0.1" or, for rotations, "5deg,10deg".
std::vector<double> parse_scales(const std::string& text, DeformationKind kind) {
    std::vector<double> out;
    for (auto item : split(text, ',')) {
        double factor = 1.0;
        if (item.ends_with("deg")) {
            if (!is_rotation(kind)) throw CLI::ValidationError("--scales", "degrees only apply to rotations");
            item.resize(item.size() - 3);
            factor = kDegree;
        }
        out.push_back(parse_number(item, "--scales") * factor);
    }
    return out;
}

Augmentation parse_augmentation(const std::string& text) {
    const auto parts = split(text, ':');
    if (parts.size() != 3) throw CLI::ValidationError("--augment", "expected kind:dist:scale");
    Augmentation aug;
    aug.kind = parse_deformation_kind(parts[0]);
    std::string scale = parts[2];
    double factor = 1.0;
    if (scale.ends_with("deg") && is_rotation(aug.kind)) {
        scale.resize(scale.size() - 3);
        factor = kDegree;
    }
    aug.distribution = {parse_distribution_family(parts[1]), parse_number(scale, "--augment") * factor};
    return aug;
}

// "centroid:FILE", "mlp:FILE" or "constant:LABEL".
std::unique_ptr<Classifier> load_model(const std::string& ref) {
    const auto colon = ref.find(':');
    if (colon == std::string::npos) throw CLI::ValidationError("--model", "expected TYPE:PATH");
    const std::string type = ref.substr(0, colon);
    const std::string arg = ref.substr(colon + 1);
    if (type == "centroid") return std::make_unique<CentroidClassifier>(CentroidClassifier::load(arg));
    if (type == "mlp") return std::make_unique<MlpClassifier>(MlpClassifier::load(arg));
    if (type == "constant") return std::make_unique<ConstantClassifier>(static_cast<Label>(parse_number(arg, "--model")));
    throw CLI::ValidationError("--model", "unknown model type '" + type + "'");
}

std::unique_ptr<Classifier> resolve_classifier(const std::string& model, const std::string& oracle,
                                               double timeout_s) {
    if (model.empty() == oracle.empty()) {
        throw CLI::ValidationError("classifier", "give exactly one of --model and --oracle");
    }
    if (!model.empty()) return load_model(model);
    ConnectOptions options;
    options.timeout = std::chrono::milliseconds(static_cast<long long>(timeout_s * 1000.0));
    return connect(OracleEndpoint::parse(oracle), options);
}

Dataset load_limited(const std::string& dir, std::size_t limit) {
    Dataset data = load_dataset(dir);
    if (limit > 0 && data.size() > limit) data.resize(limit);
    return data;
}

template <typename Write>
void write_output(const std::string& path, Write&& write) {
    if (path.empty() || path == "-") {
        write(std::cout);
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    write(out);
    if (!out) throw std::runtime_error("write failed: " + path);
}

SweepTable read_table(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return read_csv(in);
}

// Rotation radii are reported in degrees as well; the table itself stays in radians.
void add_degrees(nlohmann::ordered_json& summary, const SweepTable& table) {
    if (!is_rotation(table.kind)) return;
    for (auto& s : summary["scales"]) {
        s["scale_deg"] = s["scale"].get<double>() / kDegree;
        s["acr_deg"] = s["acr"].get<double>() / kDegree;
    }
    summary["envelope_acr_deg"] = summary["envelope_acr"].get<double>() / kDegree;
    for (auto& p : summary["envelope"]) p["radius_deg"] = p["radius"].get<double>() / kDegree;
}

struct SweepFlags {
    std::string kind = "rotz";
    std::string dist;
    std::string scales;
    std::size_t n0 = 100;
    std::size_t n = 1000;
    double alpha = 1e-3;
    std::size_t batch = 200;
    std::uint64_t seed = 0;
    std::size_t workers = 1;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--kind", kind, "Deformation kind (translation, rotz, twistz, ...)")->capture_default_str();
        cmd->add_option("--dist", dist, "Smoothing distribution: uniform or gaussian (default: preset)");
        cmd->add_option("--scales", scales, "Comma-separated sigma/lambda grid; rotations accept a 'deg' suffix");
        cmd->add_option("--n0", n0, "Selection samples")->capture_default_str();
        cmd->add_option("--n", n, "Estimation samples")->capture_default_str();
        cmd->add_option("--alpha", alpha, "Failure probability")->capture_default_str();
        cmd->add_option("--batch", batch, "Clouds per classifier query")->capture_default_str();
        cmd->add_option("--seed", seed, "Base seed")->capture_default_str();
        cmd->add_option("--workers", workers, "Worker threads (0 = hardware concurrency)")->capture_default_str();
    }

    SweepSpec spec() const {
        SweepSpec s;
        s.kind = parse_deformation_kind(kind);
        const auto preset = default_preset(s.kind);
        s.family = dist.empty() ? preset.family : parse_distribution_family(dist);
        s.scales = scales.empty() ? preset.scales : parse_scales(scales, s.kind);
        s.n0 = n0;
        s.n = n;
        s.alpha = alpha;
        s.batch = batch;
        s.base_seed = seed;
        s.workers = workers == 0 ? std::max(1u, std::thread::hardware_concurrency()) : workers;
        s.validate();
        return s;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Certified robustness of point cloud classifiers under parametric deformations"};
    app.require_subcommand(1);

    // gen
    SyntheticSetSpec gen_spec;
    std::string gen_out;
    auto* gen = app.add_subcommand("gen", "Write a synthetic 4-class shape dataset");
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--per-class", gen_spec.per_class)->capture_default_str();
    gen->add_option("--points", gen_spec.n_points)->capture_default_str();
    gen->add_option("--jitter", gen_spec.jitter)->capture_default_str();
    gen->add_option("--seed", gen_spec.seed)->capture_default_str();
    gen->callback([&] {
        const auto data = synthetic_dataset(gen_spec);
        save_dataset(gen_out, data);
        std::cerr << "wrote " << data.size() << " clouds to " << gen_out << '\n';
    });

    // train
    std::string train_data, train_out, train_model = "mlp", train_augment, train_log;
    TrainConfig train_config;
    auto* train = app.add_subcommand("train", "Fit a base classifier");
    train->add_option("--data", train_data, "Dataset directory")->required();
    train->add_option("--out", train_out, "Model file")->required();
    train->add_option("--model", train_model, "mlp or centroid")->capture_default_str();
    train->add_option("--epochs", train_config.epochs)->capture_default_str();
    train->add_option("--lr", train_config.learning_rate)->capture_default_str();
    train->add_option("--momentum", train_config.momentum)->capture_default_str();
    train->add_option("--batch-size", train_config.batch_size)->capture_default_str();
    train->add_option("--seed", train_config.seed)->capture_default_str();
    train->add_option("--augment", train_augment, "Augment with kind:dist:scale, e.g. rotz:uniform:3.14159");
    train->add_option("--log", train_log, "Per-epoch CSV log");
    train->callback([&] {
        const auto data = load_dataset(train_data);
        if (train_model == "centroid") {
            const auto model = centroid_fit(data);
            model.save(train_out);
            std::cerr << "train accuracy " << accuracy(model, data) << '\n';
            return;
        }
        if (train_model != "mlp") throw CLI::ValidationError("--model", "expected mlp or centroid");
        if (!train_augment.empty()) train_config.augmentation = parse_augmentation(train_augment);
        std::vector<EpochLog> log;
        const auto model = mlp_train(data, train_config, &log);
        model.save(train_out);
        if (!train_log.empty()) write_output(train_log, [&](std::ostream& o) { write_training_log(o, log); });
        std::cerr << "train accuracy " << accuracy(model, data) << '\n';
    });

    // certify
    SweepFlags certify_flags;
    std::string certify_data, certify_model, certify_oracle, certify_out, certify_jsonl;
    std::size_t certify_limit = 0;
    double certify_timeout = 30.0;
    bool certify_deterministic = false;
    auto* certify = app.add_subcommand("certify", "Run one certification sweep");
    certify_flags.add_to(certify);
    certify->add_option("--data", certify_data, "Dataset directory")->required();
    certify->add_option("--model", certify_model, "centroid:FILE, mlp:FILE or constant:LABEL");
    certify->add_option("--oracle", certify_oracle, "tcp:HOST:PORT or stdio:CMD");
    certify->add_option("--timeout", certify_timeout, "Oracle timeout per batch, seconds")->capture_default_str();
    certify->add_option("--limit", certify_limit, "Use only the first K clouds (0 = all)");
    certify->add_option("--out", certify_out, "Results CSV (default stdout)");
    certify->add_option("--jsonl", certify_jsonl, "Also write the rows as JSON lines");
    certify->add_flag("--deterministic", certify_deterministic, "Record 0 seconds so output is byte-stable");
    certify->callback([&] {
        auto spec = certify_flags.spec();
        spec.record_time = !certify_deterministic;
        const auto classifier = resolve_classifier(certify_model, certify_oracle, certify_timeout);
        const auto data = load_limited(certify_data, certify_limit);
        const auto table = run_sweep(spec, data, *classifier);
        write_output(certify_out, [&](std::ostream& o) { write_csv(o, table); });
        if (!certify_jsonl.empty()) write_output(certify_jsonl, [&](std::ostream& o) { write_jsonl(o, table); });
    });

    // envelope
    std::string envelope_table, envelope_out;
    auto* env_cmd = app.add_subcommand("envelope", "Envelope certified-accuracy curve of a sweep");
    env_cmd->add_option("--table", envelope_table, "Results CSV")->required();
    env_cmd->add_option("--out", envelope_out, "Curve CSV (default stdout)");
    env_cmd->callback([&] {
        const auto table = read_table(envelope_table);
        const auto env = envelope(table);
        write_output(envelope_out, [&](std::ostream& o) {
            o << "curve,radius,accuracy\n";
            auto shortest = [](double v) {
                char buf[32];
                return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
            };
            auto dump = [&](const std::string& name, const StepCurve& curve) {
                for (const auto& p : curve.points()) {
                    o << name << ',' << shortest(p.radius) << ',' << shortest(p.accuracy) << '\n';
                }
            };
            dump("envelope", env.curve);
            for (const auto& [scale, curve] : env.members) dump("scale=" + shortest(scale), curve);
        });
    });

    // report
    std::string report_table, report_out;
    std::size_t report_samples = 64;
    auto* report = app.add_subcommand("report", "JSON summary: ACR per scale, envelope ACR, envelope curve");
    report->add_option("--table", report_table, "Results CSV")->required();
    report->add_option("--out", report_out, "Summary JSON (default stdout)");
    report->add_option("--samples", report_samples, "Envelope curve sample count")->capture_default_str();
    report->callback([&] {
        const auto table = read_table(report_table);
        auto summary = summary_json(table, report_samples);
        add_degrees(summary, table);
        write_output(report_out, [&](std::ostream& o) { o << summary.dump(2) << '\n'; });
    });

    // bench
    SweepFlags bench_flags;
    std::string bench_data, bench_model, bench_oracle, bench_out, bench_device = "unspecified";
    std::size_t bench_limit = 0, bench_repeats = 3;
    auto* bench_cmd = app.add_subcommand("bench", "Wall time of a certification pass per scale");
    bench_flags.add_to(bench_cmd);
    bench_cmd->add_option("--data", bench_data, "Dataset directory")->required();
    bench_cmd->add_option("--model", bench_model, "centroid:FILE, mlp:FILE or constant:LABEL");
    bench_cmd->add_option("--oracle", bench_oracle, "tcp:HOST:PORT or stdio:CMD");
    bench_cmd->add_option("--limit", bench_limit, "Use only the first K clouds (0 = all)");
    bench_cmd->add_option("--repeats", bench_repeats, "Timed passes per scale (median kept)")->capture_default_str();
    bench_cmd->add_option("--device", bench_device, "Free-form machine description")->capture_default_str();
    bench_cmd->add_option("--out", bench_out, "Report JSON (default stdout)");
    bench_cmd->callback([&] {
        const auto spec = bench_flags.spec();
        const auto classifier = resolve_classifier(bench_model, bench_oracle, 30.0);
        const auto data = load_limited(bench_data, bench_limit);
        const auto result = bench(spec, data, *classifier, bench_device, bench_repeats);
        write_output(bench_out, [&](std::ostream& o) { o << to_json(result).dump(2) << '\n'; });
    });

    // serve-oracle
    std::string serve_model, serve_tcp;
    bool serve_stdio = false;
    auto* serve = app.add_subcommand("serve-oracle", "Answer oracle protocol requests with a local model");
    serve->add_option("--model", serve_model, "centroid:FILE, mlp:FILE or constant:LABEL")->required();
    auto* stdio_flag = serve->add_flag("--stdio", serve_stdio, "Serve on stdin/stdout");
    auto* tcp_opt = serve->add_option("--tcp", serve_tcp, "Listen on HOST:PORT (port 0 = ephemeral)");
    stdio_flag->excludes(tcp_opt);
    serve->callback([&] {
        const auto classifier = load_model(serve_model);
        if (serve_stdio) {
            std::ios::sync_with_stdio(false);
            const auto status = serve_stream(*classifier, std::cin, std::cout);
            std::cout.flush();
            if (status == ServeStatus::ProtocolError) throw std::runtime_error("unparsable frame; connection dropped");
            return;
        }
        if (serve_tcp.empty()) throw CLI::ValidationError("serve-oracle", "give --stdio or --tcp HOST:PORT");
        const auto colon = serve_tcp.rfind(':');
        if (colon == std::string::npos) throw CLI::ValidationError("--tcp", "expected HOST:PORT");
        const auto port = static_cast<std::uint16_t>(parse_number(serve_tcp.substr(colon + 1), "--tcp"));
        TcpOracleServer server(*classifier, serve_tcp.substr(0, colon), port);
        std::cout << "listening on " << serve_tcp.substr(0, colon) << ':' << server.port() << std::endl;
        server.run();
    });

    // soundness
    std::string sound_table, sound_data, sound_model, sound_oracle;
    SoundnessSpec sound_spec;
    auto* sound = app.add_subcommand("soundness", "Vote the smooth classifier at in-radius offsets of every certificate");
    sound->add_option("--table", sound_table, "Results CSV from certify")->required();
    sound->add_option("--data", sound_data, "Dataset directory used for the table")->required();
    sound->add_option("--model", sound_model, "centroid:FILE, mlp:FILE or constant:LABEL");
    sound->add_option("--oracle", sound_oracle, "tcp:HOST:PORT or stdio:CMD");
    sound->add_option("--offsets", sound_spec.offsets)->capture_default_str();
    sound->add_option("--votes", sound_spec.votes)->capture_default_str();
    sound->add_option("--seed", sound_spec.seed)->capture_default_str();
    sound->add_option("--workers", sound_spec.workers)->capture_default_str();
    sound->callback([&] {
        const auto table = read_table(sound_table);
        const auto classifier = resolve_classifier(sound_model, sound_oracle, 30.0);
        const auto data = load_dataset(sound_data);
        const auto r = soundness_check(table, data, *classifier, sound_spec);
        nlohmann::ordered_json out{{"certificates", r.certificates},
                                   {"checks", r.checks},
                                   {"failures", r.failures},
                                   {"failure_fraction", r.failure_fraction()}};
        std::cout << out.dump(2) << '\n';
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
