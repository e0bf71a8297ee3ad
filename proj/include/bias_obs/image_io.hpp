// 8-bit PGM brightness frames and float PFM depth frames.
#pragma once

#include "bias_obs/sphere_geometry.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace bias_obs {

/// Binary P5, maxval 255, byte = round(y) - 1 for y in [1, 256].
inline void write_pgm(const std::filesystem::path& path, const ScalarField& y) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << "P5\n" << y.width << ' ' << y.height << "\n255\n";
    std::vector<unsigned char> bytes(y.size());
    for (std::size_t k = 0; k < y.size(); ++k) {
        bytes[k] = static_cast<unsigned char>(std::clamp(std::lround(y[k]) - 1L, 0L, 255L));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

namespace detail {

inline std::string read_token(std::istream& in) {
    std::string tok;
    char c = 0;
    while (in.get(c)) {
        if (c == '#') {
            std::string skip;
            std::getline(in, skip);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(c);
    }
    return tok;
}

} // namespace detail

/// Reads a P5 file back into brightness units (byte + 1).
inline ScalarField read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    if (detail::read_token(in) != "P5") throw Error(path.string() + " is not a binary PGM");
    const std::size_t w = std::stoul(detail::read_token(in));
    const std::size_t h = std::stoul(detail::read_token(in));
    if (std::stoi(detail::read_token(in)) != 255) throw Error("only 8-bit PGM is supported");
    ScalarField f(w, h);
    std::vector<unsigned char> bytes(w * h);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw Error("truncated PGM " + path.string());
    for (std::size_t k = 0; k < bytes.size(); ++k) f[k] = bytes[k] + 1.0;
    return f;
}

/// Greyscale PFM, scale -1 (little-endian). PFM stores rows bottom to top.
inline void write_pfm(const std::filesystem::path& path, const ScalarField& f) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << "Pf\n" << f.width << ' ' << f.height << "\n-1.0\n";
    std::vector<unsigned char> row(4 * f.width);
    for (std::size_t jj = 0; jj < f.height; ++jj) {
        const std::size_t j = f.height - 1 - jj;
        for (std::size_t i = 0; i < f.width; ++i) {
            auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(f(i, j)));
            for (int b = 0; b < 4; ++b) row[4 * i + b] = static_cast<unsigned char>(bits >> (8 * b));
        }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
}

inline ScalarField read_pfm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    if (detail::read_token(in) != "Pf") throw Error(path.string() + " is not a greyscale PFM");
    const std::size_t w = std::stoul(detail::read_token(in));
    const std::size_t h = std::stoul(detail::read_token(in));
    const double scale = std::stod(detail::read_token(in));
    const bool little = scale < 0.0;
    ScalarField f(w, h);
    std::vector<unsigned char> row(4 * w);
    for (std::size_t jj = 0; jj < h; ++jj) {
        in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        if (in.gcount() != static_cast<std::streamsize>(row.size())) throw Error("truncated PFM " + path.string());
        for (std::size_t i = 0; i < w; ++i) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b) {
                const int shift = little ? 8 * b : 8 * (3 - b);
                bits |= static_cast<std::uint32_t>(row[4 * i + b]) << shift;
            }
            f(i, h - 1 - jj) = std::bit_cast<float>(bits);
        }
    }
    return f;
}

} // namespace bias_obs
