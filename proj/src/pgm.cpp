#include "uld/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "uld/errors.hpp"

namespace uld {

void write_pgm16(const std::string& path, const Pgm16& img) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << "P5\n" << img.width << " " << img.height << "\n65535\n";
    std::vector<unsigned char> buf;
    buf.reserve(img.pixels.size() * 2);
    for (std::uint16_t v : img.pixels) {
        buf.push_back(static_cast<unsigned char>(v >> 8));
        buf.push_back(static_cast<unsigned char>(v & 0xff));
    }
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!f) throw IoError("write failure: " + path);
}

namespace {

// Reads one whitespace-delimited token, skipping '#' comments.
std::string next_token(std::istream& f, const std::string& path) {
    std::string tok;
    int ch;
    while ((ch = f.get()) != EOF) {
        if (ch == '#') {
            while ((ch = f.get()) != EOF && ch != '\n') {
            }
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    if (tok.empty()) throw IoError("unexpected end of PGM header at byte " +
                                   std::to_string(f.tellg() == -1 ? 0 : static_cast<long long>(f.tellg())) +
                                   ": " + path);
    return tok;
}

int parse_int(const std::string& tok, const std::string& what, const std::string& path) {
    try {
        std::size_t pos = 0;
        const int v = std::stoi(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw IoError("bad PGM " + what + " '" + tok + "': " + path);
    }
}

}  // namespace

Pgm16 read_pgm16(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    const std::string magic = next_token(f, path);
    if (magic != "P5") throw IoError("expected P5 magic, got '" + magic + "': " + path);
    Pgm16 img;
    img.width = parse_int(next_token(f, path), "width", path);
    img.height = parse_int(next_token(f, path), "height", path);
    const int maxval = parse_int(next_token(f, path), "maxval", path);
    if (img.width < 1 || img.height < 1) throw IoError("bad PGM dimensions: " + path);
    if (maxval != 65535) {
        throw IoError("expected maxval 65535, got " + std::to_string(maxval) + ": " + path);
    }
    // Exactly one whitespace byte separates header and data; next_token has
    // already consumed it.
    const std::size_t n = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height);
    std::vector<unsigned char> buf(n * 2);
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(f.gcount()) != buf.size()) {
        throw IoError("truncated PGM data: expected " + std::to_string(buf.size()) +
                      " bytes, got " + std::to_string(f.gcount()) + ": " + path);
    }
    img.pixels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        img.pixels[i] = static_cast<std::uint16_t>((buf[2 * i] << 8) | buf[2 * i + 1]);
    }
    return img;
}

Pgm16 quantize_unit(const std::vector<double>& values, int width, int height) {
    Pgm16 img;
    img.width = width;
    img.height = height;
    img.pixels.resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double v = std::clamp(values[i], 0.0, 1.0);
        img.pixels[i] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
    }
    return img;
}

std::vector<double> dequantize_unit(const Pgm16& img) {
    std::vector<double> out(img.pixels.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = img.pixels[i] / 65535.0;
    return out;
}

}  // namespace uld
