#pragma once

#include <filesystem>
#include <vector>

#include "deformcert/classifier.hpp"
#include "deformcert/point_cloud.hpp"

namespace deformcert {

struct LabeledCloud {
    PointCloud cloud;
    Label label = 0;
};

using Dataset = std::vector<LabeledCloud>;

/// Number of classes implied by the labels (largest label + 1); 0 for an empty set.
std::size_t class_count(const Dataset& data);

/// Directory layout: manifest.csv with a "file,label" header and one row per
/// cloud; cloud files are PCB1 or XYZ, paths relative to the directory.
Dataset load_dataset(const std::filesystem::path& dir);
/// Writes clouds as NNNNN.pcb next to a manifest.csv.
void save_dataset(const std::filesystem::path& dir, const Dataset& data);

double accuracy(const Classifier& classifier, const Dataset& data);

}  // namespace deformcert
