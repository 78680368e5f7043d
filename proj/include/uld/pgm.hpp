#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace uld {

// 16-bit binary PGM (P5, maxval 65535, big-endian samples), row-major.
struct Pgm16 {
    int width = 0;
    int height = 0;
    std::vector<std::uint16_t> pixels;
};

void write_pgm16(const std::string& path, const Pgm16& img);
Pgm16 read_pgm16(const std::string& path);  // IoError with byte diagnostics

// [0,1] doubles quantized to 16 bits; quantization error is at most 1/65535.
Pgm16 quantize_unit(const std::vector<double>& values, int width, int height);
std::vector<double> dequantize_unit(const Pgm16& img);

}  // namespace uld
