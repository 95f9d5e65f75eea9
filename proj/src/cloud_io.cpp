#include "deformcert/cloud_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

namespace deformcert {

namespace {

constexpr std::array<char, 4> kPcbMagic = {'P', 'C', 'B', '1'};

static_assert(std::endian::native == std::endian::little, "PCB1 I/O assumes a little-endian host");

template <typename T>
void write_le(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const char* what) {
    T value{};
    if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
        throw FormatError(std::string("PCB1: truncated while reading ") + what);
    }
    return value;
}

}  // namespace

PointCloud read_xyz(std::istream& in) {
    std::vector<Vec3> points;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream fields(line);
        Vec3 p;
        if (!(fields >> p.x)) continue;  // blank or comment-only
        if (!(fields >> p.y >> p.z)) {
            throw FormatError("XYZ line " + std::to_string(line_no) + ": expected three fields");
        }
        std::string extra;
        if (fields >> extra) {
            throw FormatError("XYZ line " + std::to_string(line_no) + ": trailing field '" + extra + "'");
        }
        points.push_back(p);
    }
    if (points.empty()) throw FormatError("XYZ: no points");
    return PointCloud(std::move(points));
}

void write_xyz(std::ostream& out, const PointCloud& cloud) {
    out << std::setprecision(17);
    for (const auto& p : cloud) out << p.x << ' ' << p.y << ' ' << p.z << '\n';
}

PointCloud read_pcb1(std::istream& in) {
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kPcbMagic) {
        throw FormatError("PCB1: bad magic");
    }
    const auto n = read_le<std::uint32_t>(in, "point count");
    if (n == 0) throw FormatError("PCB1: zero points");
    std::vector<Vec3> points(n);
    for (auto& p : points) {
        p.x = read_le<float>(in, "coordinates");
        p.y = read_le<float>(in, "coordinates");
        p.z = read_le<float>(in, "coordinates");
    }
    return PointCloud(std::move(points));
}

void write_pcb1(std::ostream& out, const PointCloud& cloud) {
    out.write(kPcbMagic.data(), kPcbMagic.size());
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(cloud.size()));
    for (const auto& p : cloud) {
        write_le<float>(out, static_cast<float>(p.x));
        write_le<float>(out, static_cast<float>(p.y));
        write_le<float>(out, static_cast<float>(p.z));
    }
}

PointCloud read_cloud(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::array<char, 4> head{};
    in.read(head.data(), head.size());
    const bool is_pcb = in.gcount() == 4 && head == kPcbMagic;
    in.clear();
    in.seekg(0);
    return is_pcb ? read_pcb1(in) : read_xyz(in);
}

void write_cloud(const std::filesystem::path& path, const PointCloud& cloud) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    if (path.extension() == ".pcb") {
        write_pcb1(out, cloud);
    } else {
        write_xyz(out, cloud);
    }
}

}  // namespace deformcert
