#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include "uld/errors.hpp"

namespace uld {

// Dense row-major f64 tensor. Shape conventions used across the library:
//   images / feature maps : {channels, height, width}
//   token matrices        : {rows, cols}
//   vectors               : {n}
struct Tensor {
    std::vector<int> shape;
    std::vector<double> v;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> data) : shape(std::move(s)), v(std::move(data)) {}

    static std::int64_t numel(const std::vector<int>& s) {
        std::int64_t n = 1;
        for (int d : s) n *= d;
        return n;
    }

    static Tensor zeros(std::vector<int> s) {
        Tensor t;
        t.v.assign(static_cast<std::size_t>(numel(s)), 0.0);
        t.shape = std::move(s);
        return t;
    }

    std::int64_t size() const { return static_cast<std::int64_t>(v.size()); }

    double* data() { return v.data(); }
    const double* data() const { return v.data(); }

    // {C,H,W} accessors
    int channels() const { return shape.size() == 3 ? shape[0] : 1; }
    int height() const { return shape.size() == 3 ? shape[1] : (shape.size() == 2 ? shape[0] : 1); }
    int width() const { return shape.size() == 3 ? shape[2] : (shape.size() == 2 ? shape[1] : shape[0]); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }

}  // namespace uld
