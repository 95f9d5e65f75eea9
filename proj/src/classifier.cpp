#include "deformcert/classifier.hpp"

#include <string>

namespace deformcert {

std::vector<Label> Classifier::classify(std::span<const PointCloud> clouds) const {
    std::vector<Label> labels;
    if (serial()) {
        std::lock_guard lock(serial_mutex_);
        labels = classify_batch(clouds);
    } else {
        labels = classify_batch(clouds);
    }
    if (labels.size() != clouds.size()) {
        throw ClassifierError("classifier returned " + std::to_string(labels.size()) + " labels for " +
                              std::to_string(clouds.size()) + " clouds");
    }
    for (Label l : labels) {
        if (l < 0) throw ClassifierError("classifier returned a negative label");
    }
    return labels;
}

}  // namespace deformcert
