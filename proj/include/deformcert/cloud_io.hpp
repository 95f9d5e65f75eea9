#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>

#include "deformcert/point_cloud.hpp"

namespace deformcert {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Text "XYZ": one point per line, three decimal fields, '#' starts a comment.
PointCloud read_xyz(std::istream& in);
void write_xyz(std::ostream& out, const PointCloud& cloud);

// Binary "PCB1": magic, u32 LE count, then 3N float32 LE in x,y,z point order.
PointCloud read_pcb1(std::istream& in);
void write_pcb1(std::ostream& out, const PointCloud& cloud);

/// Picks the format from the leading magic bytes.
PointCloud read_cloud(const std::filesystem::path& path);
/// Picks the format from the extension: ".pcb" writes PCB1, anything else XYZ.
void write_cloud(const std::filesystem::path& path, const PointCloud& cloud);

}  // namespace deformcert
