#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "deformcert/classifier.hpp"
#include "deformcert/dataset.hpp"
#include "deformcert/deformation.hpp"
#include "deformcert/smoothing.hpp"

namespace deformcert {

// ---------------------------------------------------------------------------
// Synthetic shapes

enum class ShapeFamily { Sphere, Cube, Cylinder, Cone };

inline constexpr std::size_t kShapeFamilyCount = 4;

std::string_view to_string(ShapeFamily family);
ShapeFamily parse_shape_family(std::string_view name);

/// Surface sample of one shape. Cylinder and cone lie along the x axis; the
/// box, cylinder and cone draw their proportions from the seed.
struct ShapeSpec {
    ShapeFamily family = ShapeFamily::Sphere;
    std::size_t n_points = 1024;
    double jitter = 0.0;  // stddev of per-coordinate Gaussian noise before normalization
    std::uint64_t seed = 0;
};

/// Seed-deterministic, centered and max-norm-normalized. Needs n_points >= 8.
PointCloud generate_shape(const ShapeSpec& spec);

struct SyntheticSetSpec {
    std::size_t per_class = 25;
    std::size_t n_points = 256;
    double jitter = 0.01;
    std::uint64_t seed = 0;
};

/// per_class clouds of every family, label = family index, interleaved by class.
Dataset synthetic_dataset(const SyntheticSetSpec& spec);

// ---------------------------------------------------------------------------
// Sweeps

/// Named scale ladder per deformation (geometric, 2x steps). Rotations smooth
/// with a uniform distribution, everything else with a Gaussian.
struct ScalePreset {
    Distribution::Family family = Distribution::Family::Gaussian;
    std::vector<double> scales;
};

ScalePreset default_preset(DeformationKind kind);

struct SweepSpec {
    DeformationKind kind = DeformationKind::RotZ;
    Distribution::Family family = Distribution::Family::Uniform;
    std::vector<double> scales;  // nonempty, strictly increasing, positive
    std::size_t n0 = 100;
    std::size_t n = 1000;
    double alpha = 1e-3;
    std::size_t batch = 200;
    std::uint64_t base_seed = 0;
    std::size_t workers = 1;
    bool record_time = true;  // false writes 0 seconds, making output files byte-stable

    void validate() const;
    SmoothingConfig config_for(double scale) const;
};

struct SweepRow {
    std::size_t index = 0;  // dataset position
    Label label_true = 0;
    std::size_t scale_index = 0;
    double scale = 0.0;
    CertificationResult result;
    std::string error;  // non-empty when the classifier failed for this row

    bool correct() const { return error.empty() && !result.abstained() && result.predicted == label_true; }
};

struct SweepTable {
    DeformationKind kind = DeformationKind::RotZ;
    Distribution::Family family = Distribution::Family::Uniform;
    std::size_t n0 = 0;
    std::size_t n = 0;
    double alpha = 0.0;
    std::vector<double> scales;
    std::vector<SweepRow> rows;  // ordered by (index, scale_index)

    std::size_t sample_count() const;
};

/// Substream of one (sample, scale) work item.
std::uint64_t row_seed(std::uint64_t base_seed, std::size_t sample_index, std::size_t scale_index);

/// Certifies every (sample, scale) pair; classifier failures are recorded per row.
SweepTable run_sweep(const SweepSpec& spec, const Dataset& data, const Classifier& classifier);

/// Columns: index,label_true,predicted,pa_lower,radius,abstain,sigma_or_lambda,kind,n0,n,alpha,seconds,dist,error
/// (predicted is -1 on abstain). Reals are written in shortest round-trip form.
void write_csv(std::ostream& out, const SweepTable& table);
SweepTable read_csv(std::istream& in);
/// Same fields, one JSON object per line.
void write_jsonl(std::ostream& out, const SweepTable& table);

// ---------------------------------------------------------------------------
// Curves

struct CurvePoint {
    double radius = 0.0;
    double accuracy = 0.0;
};

/// Nonincreasing step function: accuracy(R) = points[i].accuracy for the first
/// breakpoint with radius >= R, 0 beyond the last breakpoint.
class StepCurve {
public:
    StepCurve() = default;
    explicit StepCurve(std::vector<CurvePoint> points);

    double at(double radius) const;
    const std::vector<CurvePoint>& points() const { return points_; }
    double max_radius() const { return points_.empty() ? 0.0 : points_.back().radius; }

private:
    std::vector<CurvePoint> points_;
};

/// Fraction of samples at this scale that are correct with radius >= R (abstains count as wrong).
double certified_accuracy_at(const SweepTable& table, double scale, double radius);
StepCurve certified_accuracy_curve(const SweepTable& table, double scale);

struct EnvelopeCurve {
    StepCurve curve;                                      // pointwise max of the members
    std::vector<std::pair<double, StepCurve>> members;   // (scale, curve)
};

EnvelopeCurve envelope(const SweepTable& table);

/// Mean over samples of (radius if correct else 0) at one scale.
double acr(const SweepTable& table, double scale);
/// Same, using each sample's largest correct radius over all scales.
double envelope_acr(const SweepTable& table);

/// ACR and certified accuracy per scale, envelope ACR, and the envelope
/// sampled at `samples` evenly spaced radii from 0 to its largest radius.
nlohmann::ordered_json summary_json(const SweepTable& table, std::size_t samples = 64);

// ---------------------------------------------------------------------------
// Experiments

struct BenchRow {
    double scale = 0.0;
    std::size_t samples = 0;
    double seconds = 0.0;  // median wall time of one full pass over the dataset
};

struct BenchReport {
    std::string device;
    std::vector<BenchRow> rows;
};

/// Median wall time of a full certification pass per scale, after one untimed
/// warm-up pass. Scales are visited round-robin `repeats` times, starting one
/// further along each round, so slow drift of the machine hits every scale alike.
BenchReport bench(const SweepSpec& spec, const Dataset& data, const Classifier& classifier,
                  const std::string& device_note, std::size_t repeats = 1);

nlohmann::ordered_json to_json(const BenchReport& report);

struct AlphaRow {
    double alpha = 0.0;
    double acr = 0.0;             // envelope ACR over the spec's scales
    double clean_accuracy = 0.0;  // envelope certified accuracy at R = 0
    SweepTable table;
};

/// Reruns the sweep at each alpha with identical seeds, so per-sample counts are shared.
std::vector<AlphaRow> alpha_ablation(const SweepSpec& spec, const Dataset& data, const Classifier& classifier,
                                     const std::vector<double>& alphas);

struct SoundnessSpec {
    std::size_t offsets = 20;  // per certificate
    std::size_t votes = 1000;  // m for smooth_vote
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

struct SoundnessReport {
    std::size_t certificates = 0;
    std::size_t checks = 0;
    std::size_t failures = 0;

    double failure_fraction() const {
        return checks == 0 ? 0.0 : static_cast<double>(failures) / static_cast<double>(checks);
    }
};

/// Draws an offset uniformly from the l1 (uniform smoothing) or l2 (Gaussian) ball of the given radius.
DeformationParams sample_offset_in_ball(DeformationKind kind, Distribution::Family family, double radius,
                                        std::size_t n_points, Rng& rng);

/// For every non-abstaining row, votes the smooth classifier at `offsets`
/// in-radius parameter shifts and counts disagreements with the certified class.
SoundnessReport soundness_check(const SweepTable& table, const Dataset& data, const Classifier& classifier,
                                const SoundnessSpec& spec);

}  // namespace deformcert
