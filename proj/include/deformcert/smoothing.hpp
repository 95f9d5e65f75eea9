#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "deformcert/classifier.hpp"
#include "deformcert/deformation.hpp"

namespace deformcert {

/// Monte-Carlo settings of the parametric-domain smooth classifier.
struct SmoothingConfig {
    Distribution distribution = Distribution::gaussian(0.1);
    std::size_t n0 = 100;    // selection round
    std::size_t n = 1000;    // estimation round
    double alpha = 1e-3;     // failure probability
    std::size_t batch = 200; // clouds per classifier query

    /// Throws std::invalid_argument unless scale > 0, 1 <= n0 <= n, 0 < alpha < 1, batch >= 1.
    void validate() const;
};

struct CertificationResult {
    Label predicted = kAbstain;   // c_A, or kAbstain
    Label candidate = kAbstain;   // class picked in the selection round
    double pa_lower = 0.0;
    double radius = 0.0;          // l1 (uniform) or l2 (gaussian), parameter units
    std::size_t selection_count = 0;   // hits of candidate among n0
    std::size_t estimation_count = 0;  // hits of candidate among n
    bool selection_tie = false;        // candidate won the selection round on the lowest-index rule
    double seconds = 0.0;

    bool abstained() const { return predicted == kAbstain; }
};

struct PredictionResult {
    Label predicted = kAbstain;
    double pvalue = 1.0;
};

/// Hard-smoothing radius with p_B = 1 - pa_lower:
/// uniform 2*lambda*(pa_lower - 1/2), gaussian sigma * Phi^{-1}(pa_lower); 0 when pa_lower <= 1/2.
double certified_radius(double pa_lower, const SmoothingConfig& config);

/// Label tallies of f(p + flow(offset + eps)) over `count` fresh draws of eps.
/// Index = label; the vector is as long as the largest label seen plus one.
std::vector<std::size_t> sample_counts(const Classifier& classifier, const PointCloud& cloud,
                                       const DeformationParams& offset, const Distribution& dist,
                                       std::size_t count, std::size_t batch, Rng& rng);

/// Two-round certification (selection over n0 draws, estimation over n fresh
/// draws, Clopper-Pearson bound on the candidate's hit rate). Deterministic in seed.
CertificationResult smooth_certify(const Classifier& classifier, const PointCloud& cloud, DeformationKind kind,
                                   const SmoothingConfig& config, std::uint64_t seed);

/// Top-two counts over n draws tested with the exact two-sided binomial test at level alpha.
PredictionResult smooth_predict(const Classifier& classifier, const PointCloud& cloud, DeformationKind kind,
                                const SmoothingConfig& config, std::uint64_t seed);

/// Majority label of f(p + flow(offset + eps)) over m draws; ties go to the lowest label.
Label smooth_vote(const Classifier& classifier, const PointCloud& cloud, const DeformationParams& base_offset,
                  const SmoothingConfig& config, std::size_t m, std::uint64_t seed);

}  // namespace deformcert
