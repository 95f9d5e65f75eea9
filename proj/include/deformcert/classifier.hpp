#pragma once

#include <mutex>
#include <span>
#include <stdexcept>
#include <vector>

#include "deformcert/point_cloud.hpp"

namespace deformcert {

using Label = int;
inline constexpr Label kAbstain = -1;

/// Hard-label base classifier f. Only labels cross this boundary.
///
/// Implementations that can answer concurrent batches return false from
/// serial(); the rest are funneled through a per-instance lock by classify().
class Classifier {
public:
    Classifier() = default;
    // The lock guards calls, not state, so copies get their own.
    Classifier(const Classifier&) {}
    Classifier& operator=(const Classifier&) { return *this; }
    virtual ~Classifier() = default;

    /// One label per cloud, in order. Safe to call from several threads.
    std::vector<Label> classify(std::span<const PointCloud> clouds) const;

    virtual bool serial() const { return false; }

protected:
    virtual std::vector<Label> classify_batch(std::span<const PointCloud> clouds) const = 0;

private:
    mutable std::mutex serial_mutex_;
};

/// Raised by classifiers that cannot answer (e.g. lost remote peer).
class ClassifierError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Always answers the same label.
class ConstantClassifier final : public Classifier {
public:
    explicit ConstantClassifier(Label label) : label_(label) {}

protected:
    std::vector<Label> classify_batch(std::span<const PointCloud> clouds) const override {
        return std::vector<Label>(clouds.size(), label_);
    }

private:
    Label label_;
};

}  // namespace deformcert
