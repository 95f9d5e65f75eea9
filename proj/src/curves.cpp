#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "deformcert/harness.hpp"

namespace deformcert {

StepCurve::StepCurve(std::vector<CurvePoint> points) : points_(std::move(points)) {
    for (std::size_t i = 1; i < points_.size(); ++i) {
        if (!(points_[i].radius > points_[i - 1].radius) || points_[i].accuracy > points_[i - 1].accuracy) {
            throw std::invalid_argument("StepCurve: radii must increase and accuracy must not");
        }
    }
}

double StepCurve::at(double radius) const {
    const auto it = std::lower_bound(points_.begin(), points_.end(), radius,
                                     [](const CurvePoint& p, double r) { return p.radius < r; });
    return it == points_.end() ? 0.0 : it->accuracy;
}

namespace {

std::vector<const SweepRow*> rows_at(const SweepTable& table, double scale) {
    std::vector<const SweepRow*> out;
    for (const auto& row : table.rows) {
        if (row.scale == scale) out.push_back(&row);
    }
    if (out.empty()) throw std::invalid_argument("no rows at scale " + std::to_string(scale));
    return out;
}

// Curve from the multiset of correct radii over `total` samples.
StepCurve curve_from_radii(std::vector<double> radii, std::size_t total) {
    std::sort(radii.begin(), radii.end());
    std::vector<CurvePoint> points;
    for (std::size_t i = 0; i < radii.size(); ++i) {
        if (i + 1 < radii.size() && radii[i + 1] == radii[i]) continue;
        // Samples with radius >= radii[i]: everything from the first occurrence on.
        const auto first = std::lower_bound(radii.begin(), radii.end(), radii[i]);
        const auto above = static_cast<double>(radii.end() - first);
        points.push_back({radii[i], above / static_cast<double>(total)});
    }
    return StepCurve(std::move(points));
}

}  // namespace

double certified_accuracy_at(const SweepTable& table, double scale, double radius) {
    const auto rows = rows_at(table, scale);
    std::size_t hits = 0;
    for (const auto* row : rows) {
        if (row->correct() && row->result.radius >= radius) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(rows.size());
}

StepCurve certified_accuracy_curve(const SweepTable& table, double scale) {
    const auto rows = rows_at(table, scale);
    std::vector<double> radii;
    for (const auto* row : rows) {
        if (row->correct()) radii.push_back(row->result.radius);
    }
    return curve_from_radii(std::move(radii), rows.size());
}

EnvelopeCurve envelope(const SweepTable& table) {
    EnvelopeCurve env;
    std::vector<double> breaks;
    for (double scale : table.scales) {
        env.members.emplace_back(scale, certified_accuracy_curve(table, scale));
        for (const auto& p : env.members.back().second.points()) breaks.push_back(p.radius);
    }
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
    // Every member is constant on (b[i-1], b[i]], so the max is too.
    std::vector<CurvePoint> points;
    for (double r : breaks) {
        double best = 0.0;
        for (const auto& [scale, curve] : env.members) best = std::max(best, curve.at(r));
        if (!points.empty() && points.back().accuracy == best) {
            points.back().radius = r;
            continue;
        }
        points.push_back({r, best});
    }
    env.curve = StepCurve(std::move(points));
    return env;
}

double acr(const SweepTable& table, double scale) {
    const auto rows = rows_at(table, scale);
    double sum = 0.0;
    for (const auto* row : rows) {
        if (row->correct()) sum += row->result.radius;
    }
    return sum / static_cast<double>(rows.size());
}

double envelope_acr(const SweepTable& table) {
    const std::size_t count = table.sample_count();
    if (count == 0) throw std::invalid_argument("envelope_acr: empty table");
    std::vector<double> best(count, 0.0);
    for (const auto& row : table.rows) {
        if (row.correct()) best[row.index] = std::max(best[row.index], row.result.radius);
    }
    double sum = 0.0;
    for (double r : best) sum += r;
    return sum / static_cast<double>(count);
}

nlohmann::ordered_json summary_json(const SweepTable& table, std::size_t samples) {
    nlohmann::ordered_json out;
    out["kind"] = std::string(to_string(table.kind));
    out["dist"] = std::string(to_string(table.family));
    out["n0"] = table.n0;
    out["n"] = table.n;
    out["alpha"] = table.alpha;
    out["samples"] = table.sample_count();
    auto& per_scale = out["scales"] = nlohmann::ordered_json::array();
    for (double scale : table.scales) {
        std::size_t abstains = 0, errors = 0, rows = 0;
        for (const auto& row : table.rows) {
            if (row.scale != scale) continue;
            ++rows;
            if (!row.error.empty()) ++errors;
            else if (row.result.abstained()) ++abstains;
        }
        per_scale.push_back({{"scale", scale},
                             {"acr", acr(table, scale)},
                             {"clean_certified_accuracy", certified_accuracy_at(table, scale, 0.0)},
                             {"abstain_rate", static_cast<double>(abstains) / static_cast<double>(rows)},
                             {"errors", errors}});
    }
    const auto env = envelope(table);
    out["envelope_acr"] = envelope_acr(table);
    auto& curve = out["envelope"] = nlohmann::ordered_json::array();
    const double top = env.curve.max_radius();
    for (std::size_t i = 0; i < samples; ++i) {
        const double r = samples == 1 ? 0.0 : top * static_cast<double>(i) / static_cast<double>(samples - 1);
        curve.push_back({{"radius", r}, {"accuracy", env.curve.at(r)}});
    }
    return out;
}

}  // namespace deformcert
