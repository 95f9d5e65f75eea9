#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "deformcert/harness.hpp"

namespace deformcert {

BenchReport bench(const SweepSpec& spec, const Dataset& data, const Classifier& classifier,
                  const std::string& device_note, std::size_t repeats) {
    spec.validate();
    if (repeats < 1) throw std::invalid_argument("bench: repeats must be at least 1");
    BenchReport report;
    report.device = device_note;
    if (data.empty()) return report;
    std::vector<std::vector<double>> times(spec.scales.size());
    {
        SweepSpec warm = spec;
        warm.scales = {spec.scales.front()};
        run_sweep(warm, data, classifier);
    }
    for (std::size_t rep = 0; rep < repeats; ++rep) {
        for (std::size_t step = 0; step < spec.scales.size(); ++step) {
            const std::size_t s = (step + rep) % spec.scales.size();
            SweepSpec one = spec;
            one.scales = {spec.scales[s]};
            one.base_seed = derive_seed(spec.base_seed, {s, rep});
            const auto start = std::chrono::steady_clock::now();
            run_sweep(one, data, classifier);
            times[s].push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
        }
    }
    for (std::size_t s = 0; s < spec.scales.size(); ++s) {
        auto& t = times[s];
        std::sort(t.begin(), t.end());
        const double median = t.size() % 2 == 1 ? t[t.size() / 2] : 0.5 * (t[t.size() / 2 - 1] + t[t.size() / 2]);
        report.rows.push_back({spec.scales[s], data.size(), median});
    }
    return report;
}

nlohmann::ordered_json to_json(const BenchReport& report) {
    nlohmann::ordered_json out;
    out["device"] = report.device;
    out["hardware_threads"] = std::thread::hardware_concurrency();
    auto& rows = out["rows"] = nlohmann::ordered_json::array();
    for (const auto& row : report.rows) {
        rows.push_back({{"scale", row.scale},
                        {"samples", row.samples},
                        {"seconds", row.seconds},
                        {"seconds_per_sample", row.seconds / static_cast<double>(row.samples)}});
    }
    return out;
}

std::vector<AlphaRow> alpha_ablation(const SweepSpec& spec, const Dataset& data, const Classifier& classifier,
                                     const std::vector<double>& alphas) {
    std::vector<AlphaRow> out;
    for (double alpha : alphas) {
        SweepSpec run = spec;
        run.alpha = alpha;
        AlphaRow row;
        row.alpha = alpha;
        row.table = run_sweep(run, data, classifier);
        row.acr = envelope_acr(row.table);
        row.clean_accuracy = envelope(row.table).curve.at(0.0);
        out.push_back(std::move(row));
    }
    return out;
}

DeformationParams sample_offset_in_ball(DeformationKind kind, Distribution::Family family, double radius,
                                        std::size_t n_points, Rng& rng) {
    if (!(radius >= 0.0) || !std::isfinite(radius)) {
        throw std::invalid_argument("sample_offset_in_ball: radius must be finite and non-negative");
    }
    auto params = DeformationParams::zeros(kind, n_points);
    auto& v = params.values;
    const std::size_t d = v.size();
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    if (family == Distribution::Family::Uniform) {
        // l1 ball: magnitudes E_i / (E_1 + .. + E_{d+1}) with E exponential, random signs.
        std::exponential_distribution<double> e(1.0);
        double total = 0.0;
        for (auto& x : v) {
            x = e(rng);
            total += x;
        }
        total += e(rng);
        for (auto& x : v) x = radius * x / total * (u01(rng) < 0.5 ? -1.0 : 1.0);
    } else {
        std::normal_distribution<double> g(0.0, 1.0);
        double norm = 0.0;
        do {
            norm = 0.0;
            for (auto& x : v) {
                x = g(rng);
                norm += x * x;
            }
            norm = std::sqrt(norm);
        } while (norm == 0.0);
        const double r = radius * std::pow(u01(rng), 1.0 / static_cast<double>(d));
        for (auto& x : v) x *= r / norm;
    }
    return params;
}

SoundnessReport soundness_check(const SweepTable& table, const Dataset& data, const Classifier& classifier,
                                const SoundnessSpec& spec) {
    if (spec.workers < 1) throw std::invalid_argument("soundness_check: workers must be at least 1");
    std::vector<const SweepRow*> certified;
    for (const auto& row : table.rows) {
        if (!row.error.empty() || row.result.abstained()) continue;
        if (row.index >= data.size()) throw std::invalid_argument("soundness_check: row index outside dataset");
        certified.push_back(&row);
    }
    const std::size_t items = certified.size() * spec.offsets;
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> failures{0};
    auto work = [&] {
        for (;;) {
            const std::size_t item = next.fetch_add(1);
            if (item >= items) return;
            const SweepRow& row = *certified[item / spec.offsets];
            const std::size_t j = item % spec.offsets;
            const PointCloud& cloud = data[row.index].cloud;
            Rng rng(derive_seed(spec.seed, {row.index, row.scale_index, j, 0}));
            const auto offset = sample_offset_in_ball(table.kind, table.family, row.result.radius, cloud.size(), rng);
            SmoothingConfig config;
            config.distribution = {table.family, row.scale};
            config.n0 = table.n0;
            config.n = table.n;
            config.alpha = table.alpha;
            const Label vote =
                smooth_vote(classifier, cloud, offset, config, spec.votes,
                            derive_seed(spec.seed, {row.index, row.scale_index, j, 1}));
            if (vote != row.result.predicted) ++failures;
        }
    };
    const std::size_t workers = std::min(spec.workers, std::max<std::size_t>(1, items));
    if (workers == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    }
    SoundnessReport report;
    report.certificates = certified.size();
    report.checks = items;
    report.failures = failures.load();
    return report;
}

}  // namespace deformcert
