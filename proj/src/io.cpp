#include "parahom/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

namespace phom {

void write_phom_dump(const std::filesystem::path& path, int n, const std::vector<int>& axes,
                     const std::vector<double>& data) {
    if (axes.size() > 4) throw ConfigError("phom dump supports at most four axes");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open dump file " + path.string());
    char header[32] = {};
    std::memcpy(header, "PHOM", 4);
    const uint32_t version = 1, nn = static_cast<uint32_t>(n),
                   na = static_cast<uint32_t>(axes.size());
    std::memcpy(header + 4, &version, 4);
    std::memcpy(header + 8, &nn, 4);
    std::memcpy(header + 12, &na, 4);
    for (size_t k = 0; k < axes.size(); ++k) {
        const uint32_t ax = static_cast<uint32_t>(axes[k]);
        std::memcpy(header + 16 + 4 * k, &ax, 4);
    }
    out.write(header, 32);
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(double)));
}

std::pair<std::vector<int>, std::vector<double>> read_phom_dump(
    const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open dump file " + path.string());
    char header[32];
    in.read(header, 32);
    if (std::memcmp(header, "PHOM", 4) != 0) throw ConfigError("bad dump magic");
    uint32_t na;
    std::memcpy(&na, header + 12, 4);
    std::vector<int> axes(na);
    size_t count = 1;
    for (uint32_t k = 0; k < na; ++k) {
        uint32_t ax;
        std::memcpy(&ax, header + 16 + 4 * k, 4);
        axes[k] = static_cast<int>(ax);
        count *= ax;
    }
    std::vector<double> data(count);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    return {axes, data};
}

void write_field_csv(const std::filesystem::path& path, const SlowGrid& grid, const Field& f) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open csv file " + path.string());
    out << (grid.n == 1 ? "x,value\n" : "x0,x1,value\n");
    for (int i = 0; i < grid.size(); ++i) {
        const Vec2 x = grid.node(i);
        if (grid.n == 1)
            out << format_double(x[0]) << ',' << format_double(f[i]) << '\n';
        else
            out << format_double(x[0]) << ',' << format_double(x[1]) << ','
                << format_double(f[i]) << '\n';
    }
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

uint64_t fnv1a_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    uint64_t h = 1469598103934665603ull;
    char c;
    while (in.get(c)) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace phom
