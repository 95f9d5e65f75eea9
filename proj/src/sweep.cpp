#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "deformcert/cloud_io.hpp"
#include "deformcert/harness.hpp"

namespace deformcert {

namespace {

std::string shortest(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& text) {
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw FormatError("sweep CSV: bad number '" + text + "'");
    }
    return v;
}

std::vector<double> ladder(double first, std::size_t count) {
    std::vector<double> out;
    for (std::size_t k = 0; k < count; ++k) out.push_back(first * std::ldexp(1.0, static_cast<int>(k)));
    return out;
}

// CSV fields never contain commas except `error`, which is written last and quoted.
std::string csv_quote(const std::string& text) {
    std::string out = "\"";
    for (char c : text) {
        if (c == '"') out.push_back('"');
        if (c == '\n' || c == '\r') c = ' ';
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

constexpr const char* kCsvHeader =
    "index,label_true,predicted,pa_lower,radius,abstain,sigma_or_lambda,kind,n0,n,alpha,seconds,dist,error";

}  // namespace

ScalePreset default_preset(DeformationKind kind) {
    if (is_rotation(kind)) return {Distribution::Family::Uniform, ladder(0.025, 8)};  // 0.025 .. 3.2 rad
    switch (kind) {
        case DeformationKind::TwistZ: return {Distribution::Family::Gaussian, ladder(0.0125, 7)};
        case DeformationKind::GaussianNoise: return {Distribution::Family::Gaussian, ladder(0.0025, 6)};
        default: return {Distribution::Family::Gaussian, ladder(0.0125, 6)};
    }
}

void SweepSpec::validate() const {
    if (scales.empty()) throw std::invalid_argument("sweep: scale grid is empty");
    for (std::size_t i = 0; i < scales.size(); ++i) {
        if (!(scales[i] > 0.0) || !std::isfinite(scales[i])) {
            throw std::invalid_argument("sweep: scales must be positive");
        }
        if (i > 0 && !(scales[i] > scales[i - 1])) {
            throw std::invalid_argument("sweep: scales must be strictly increasing");
        }
    }
    if (workers < 1) throw std::invalid_argument("sweep: workers must be at least 1");
    config_for(scales.front()).validate();
}

SmoothingConfig SweepSpec::config_for(double scale) const {
    SmoothingConfig config;
    config.distribution = {family, scale};
    config.n0 = n0;
    config.n = n;
    config.alpha = alpha;
    config.batch = batch;
    return config;
}

std::size_t SweepTable::sample_count() const {
    std::size_t count = 0;
    for (const auto& row : rows) count = std::max(count, row.index + 1);
    return count;
}

std::uint64_t row_seed(std::uint64_t base_seed, std::size_t sample_index, std::size_t scale_index) {
    return derive_seed(base_seed, {sample_index, scale_index});
}

SweepTable run_sweep(const SweepSpec& spec, const Dataset& data, const Classifier& classifier) {
    spec.validate();
    SweepTable table;
    table.kind = spec.kind;
    table.family = spec.family;
    table.n0 = spec.n0;
    table.n = spec.n;
    table.alpha = spec.alpha;
    table.scales = spec.scales;
    const std::size_t per_sample = spec.scales.size();
    table.rows.resize(data.size() * per_sample);

    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (;;) {
            const std::size_t item = next.fetch_add(1);
            if (item >= table.rows.size()) return;
            const std::size_t sample = item / per_sample;
            const std::size_t scale_index = item % per_sample;
            SweepRow& row = table.rows[item];
            row.index = sample;
            row.label_true = data[sample].label;
            row.scale_index = scale_index;
            row.scale = spec.scales[scale_index];
            try {
                row.result = smooth_certify(classifier, data[sample].cloud, spec.kind, spec.config_for(row.scale),
                                            row_seed(spec.base_seed, sample, scale_index));
            } catch (const std::exception& e) {
                row.result = CertificationResult{};
                row.error = e.what();
            }
            if (!spec.record_time) row.result.seconds = 0.0;
        }
    };
    const std::size_t workers = std::min(spec.workers, std::max<std::size_t>(1, table.rows.size()));
    if (workers == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    }
    return table;
}

void write_csv(std::ostream& out, const SweepTable& table) {
    out << kCsvHeader << '\n';
    for (const auto& row : table.rows) {
        const auto& r = row.result;
        out << row.index << ',' << row.label_true << ',' << r.predicted << ',' << shortest(r.pa_lower) << ','
            << shortest(r.radius) << ',' << (r.abstained() ? 1 : 0) << ',' << shortest(row.scale) << ','
            << to_string(table.kind) << ',' << table.n0 << ',' << table.n << ',' << shortest(table.alpha) << ','
            << shortest(r.seconds) << ',' << to_string(table.family) << ','
            << (row.error.empty() ? std::string() : csv_quote(row.error)) << '\n';
    }
}

SweepTable read_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader) throw FormatError("sweep CSV: unexpected header");
    SweepTable table;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 14) throw FormatError("sweep CSV: expected 14 fields, got " + std::to_string(f.size()));
        SweepRow row;
        try {
            row.index = std::stoul(f[0]);
            row.label_true = std::stoi(f[1]);
            row.result.predicted = std::stoi(f[2]);
            row.result.pa_lower = parse_double(f[3]);
            row.result.radius = parse_double(f[4]);
            row.scale = parse_double(f[6]);
            row.result.seconds = parse_double(f[11]);
        } catch (const std::logic_error&) {
            throw FormatError("sweep CSV: malformed row: " + line);
        }
        row.result.candidate = row.result.predicted;
        row.error = f[13];
        const auto kind = parse_deformation_kind(f[7]);
        const auto family = parse_distribution_family(f[12]);
        const std::size_t n0 = std::stoul(f[8]);
        const std::size_t n = std::stoul(f[9]);
        const double alpha = parse_double(f[10]);
        if (first) {
            table.kind = kind;
            table.family = family;
            table.n0 = n0;
            table.n = n;
            table.alpha = alpha;
            first = false;
        } else if (kind != table.kind || family != table.family || n0 != table.n0 || n != table.n ||
                   alpha != table.alpha) {
            throw FormatError("sweep CSV: rows from different sweeps are mixed");
        }
        auto it = std::find(table.scales.begin(), table.scales.end(), row.scale);
        if (it == table.scales.end()) {
            table.scales.push_back(row.scale);
            it = table.scales.end() - 1;
        }
        row.scale_index = static_cast<std::size_t>(it - table.scales.begin());
        table.rows.push_back(std::move(row));
    }
    // Scale indices follow the sorted grid.
    std::vector<double> sorted = table.scales;
    std::sort(sorted.begin(), sorted.end());
    for (auto& row : table.rows) {
        row.scale_index = static_cast<std::size_t>(std::find(sorted.begin(), sorted.end(), row.scale) - sorted.begin());
    }
    table.scales = std::move(sorted);
    return table;
}

void write_jsonl(std::ostream& out, const SweepTable& table) {
    for (const auto& row : table.rows) {
        const auto& r = row.result;
        nlohmann::ordered_json obj;
        obj["index"] = row.index;
        obj["label_true"] = row.label_true;
        obj["predicted"] = r.predicted;
        obj["pa_lower"] = r.pa_lower;
        obj["radius"] = r.radius;
        obj["abstain"] = r.abstained();
        obj["sigma_or_lambda"] = row.scale;
        obj["kind"] = std::string(to_string(table.kind));
        obj["n0"] = table.n0;
        obj["n"] = table.n;
        obj["alpha"] = table.alpha;
        obj["seconds"] = r.seconds;
        obj["dist"] = std::string(to_string(table.family));
        if (!row.error.empty()) obj["error"] = row.error;
        out << obj.dump() << '\n';
    }
}

}  // namespace deformcert
