#include "deformcert/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "deformcert/cloud_io.hpp"

namespace deformcert {

std::size_t class_count(const Dataset& data) {
    Label top = -1;
    for (const auto& item : data) top = std::max(top, item.label);
    return static_cast<std::size_t>(top + 1);
}

Dataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream manifest(dir / "manifest.csv");
    if (!manifest) throw FormatError("missing manifest.csv in " + dir.string());
    std::string line;
    if (!std::getline(manifest, line) || line.rfind("file,label", 0) != 0) {
        throw FormatError("manifest.csv must start with a 'file,label' header");
    }
    Dataset data;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw FormatError("manifest row without a label: " + line);
        const std::string file = line.substr(0, comma);
        int label = 0;
        try {
            label = std::stoi(line.substr(comma + 1));
        } catch (const std::exception&) {
            throw FormatError("manifest row with a bad label: " + line);
        }
        if (label < 0) throw FormatError("manifest labels must be non-negative");
        data.push_back({read_cloud(dir / file), label});
    }
    return data;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& data) {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir / "manifest.csv");
    if (!manifest) throw FormatError("cannot write manifest in " + dir.string());
    manifest << "file,label\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "%05zu.pcb", i);
        write_cloud(dir / name, data[i].cloud);
        manifest << name << ',' << data[i].label << '\n';
    }
}

double accuracy(const Classifier& classifier, const Dataset& data) {
    if (data.empty()) return 0.0;
    std::vector<PointCloud> clouds;
    clouds.reserve(data.size());
    for (const auto& item : data) clouds.push_back(item.cloud);
    const auto labels = classifier.classify(clouds);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.size(); ++i) hits += labels[i] == data[i].label;
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace deformcert
