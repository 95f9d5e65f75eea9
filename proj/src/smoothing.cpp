#include "deformcert/smoothing.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>
#include <stdexcept>

#include "deformcert/stats.hpp"

namespace deformcert {

namespace {

constexpr std::uint64_t kSelectionStream = 0;
constexpr std::uint64_t kEstimationStream = 1;
constexpr std::uint64_t kVoteStream = 2;
constexpr std::uint64_t kPredictStream = 3;

// Index of the largest count; lowest index wins ties.
std::size_t argmax(const std::vector<std::size_t>& counts, bool* tie = nullptr) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < counts.size(); ++i) {
        if (counts[i] > counts[best]) best = i;
    }
    if (tie != nullptr) {
        *tie = std::count(counts.begin(), counts.end(), counts[best]) > 1;
    }
    return best;
}

std::size_t count_of(const std::vector<std::size_t>& counts, Label label) {
    return label >= 0 && static_cast<std::size_t>(label) < counts.size() ? counts[label] : 0;
}

}  // namespace

void SmoothingConfig::validate() const {
    if (!(distribution.scale > 0.0) || !std::isfinite(distribution.scale)) {
        throw std::invalid_argument("smoothing scale must be positive and finite");
    }
    if (n0 < 1) throw std::invalid_argument("n0 must be at least 1");
    if (n < n0) throw std::invalid_argument("n must be at least n0");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
    if (batch < 1) throw std::invalid_argument("batch must be at least 1");
}

double certified_radius(double pa_lower, const SmoothingConfig& config) {
    if (!(pa_lower >= 0.0 && pa_lower <= 1.0)) {
        throw std::domain_error("certified_radius: pa_lower must lie in [0, 1]");
    }
    if (pa_lower <= 0.5) return 0.0;
    const double scale = config.distribution.scale;
    if (config.distribution.family == Distribution::Family::Uniform) {
        return 2.0 * scale * (pa_lower - 0.5);
    }
    if (pa_lower >= 1.0) return std::numeric_limits<double>::infinity();
    return scale * std_normal_quantile(pa_lower);
}

std::vector<std::size_t> sample_counts(const Classifier& classifier, const PointCloud& cloud,
                                       const DeformationParams& offset, const Distribution& dist,
                                       std::size_t count, std::size_t batch, Rng& rng) {
    if (batch < 1) throw std::invalid_argument("batch must be at least 1");
    const std::size_t dim = param_dim(offset.kind, cloud.size());
    if (offset.values.size() != dim) {
        throw ArityError("offset has " + std::to_string(offset.values.size()) + " parameters, expected " +
                         std::to_string(dim));
    }
    std::vector<std::size_t> counts;
    std::vector<PointCloud> clouds;
    clouds.reserve(std::min(batch, count));
    std::size_t remaining = count;
    while (remaining > 0) {
        const std::size_t this_batch = std::min(batch, remaining);
        clouds.clear();
        for (std::size_t i = 0; i < this_batch; ++i) {
            DeformationParams params = sample_params(offset.kind, dist, cloud.size(), rng);
            for (std::size_t j = 0; j < dim; ++j) params.values[j] += offset.values[j];
            clouds.push_back(deform(cloud, params));
        }
        for (Label label : classifier.classify(clouds)) {
            const auto idx = static_cast<std::size_t>(label);
            if (idx >= counts.size()) counts.resize(idx + 1, 0);
            ++counts[idx];
        }
        remaining -= this_batch;
    }
    return counts;
}

CertificationResult smooth_certify(const Classifier& classifier, const PointCloud& cloud, DeformationKind kind,
                                   const SmoothingConfig& config, std::uint64_t seed) {
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    const DeformationParams base = DeformationParams::zeros(kind, cloud.size());

    Rng selection_rng(derive_seed(seed, {kSelectionStream}));
    const auto selection =
        sample_counts(classifier, cloud, base, config.distribution, config.n0, config.batch, selection_rng);
    if (selection.empty()) throw ClassifierError("classifier produced no labels");

    CertificationResult result;
    result.candidate = static_cast<Label>(argmax(selection, &result.selection_tie));
    result.selection_count = selection[result.candidate];

    Rng estimation_rng(derive_seed(seed, {kEstimationStream}));
    const auto estimation =
        sample_counts(classifier, cloud, base, config.distribution, config.n, config.batch, estimation_rng);
    result.estimation_count = count_of(estimation, result.candidate);

    result.pa_lower = clopper_pearson_lower(result.estimation_count, config.n, config.alpha);
    if (result.pa_lower > 0.5) {
        result.predicted = result.candidate;
        result.radius = certified_radius(result.pa_lower, config);
    }
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

PredictionResult smooth_predict(const Classifier& classifier, const PointCloud& cloud, DeformationKind kind,
                                const SmoothingConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(derive_seed(seed, {kPredictStream}));
    auto counts = sample_counts(classifier, cloud, DeformationParams::zeros(kind, cloud.size()),
                                config.distribution, config.n, config.batch, rng);
    if (counts.empty()) throw ClassifierError("classifier produced no labels");
    const std::size_t top = argmax(counts);
    std::size_t runner_up = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (i != top) runner_up = std::max(runner_up, counts[i]);
    }
    PredictionResult result;
    result.pvalue = binomial_two_sided_pvalue(counts[top], counts[top] + runner_up);
    if (result.pvalue <= config.alpha) result.predicted = static_cast<Label>(top);
    return result;
}

Label smooth_vote(const Classifier& classifier, const PointCloud& cloud, const DeformationParams& base_offset,
                  const SmoothingConfig& config, std::size_t m, std::uint64_t seed) {
    config.validate();
    if (m < 1) throw std::invalid_argument("smooth_vote: m must be at least 1");
    Rng rng(derive_seed(seed, {kVoteStream}));
    const auto counts = sample_counts(classifier, cloud, base_offset, config.distribution, m, config.batch, rng);
    if (counts.empty()) throw ClassifierError("classifier produced no labels");
    return static_cast<Label>(argmax(counts));
}

}  // namespace deformcert
