#pragma once

#include <string>
#include <vector>

#include "uld/covariance.hpp"
#include "uld/tensor.hpp"

namespace uld {

// Minimal SVG overlay writer for landmark/ellipse figures. Coordinates are
// image pixels (same convention as everywhere else).
class SvgOverlay {
public:
    SvgOverlay(int width, int height);

    void add_point(Vec2 p, double radius, const std::string& color, const std::string& label = "");
    void add_ellipse(const EllipseParams& e, const std::string& color);

    void write(const std::string& path) const;  // IoError on failure
    std::string str() const;

private:
    int width_, height_;
    std::string body_;
};

}  // namespace uld
