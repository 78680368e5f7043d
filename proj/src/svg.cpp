#include "uld/svg.hpp"

#include <cstdio>
#include <fstream>

#include "uld/errors.hpp"

namespace uld {

namespace {
std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}
}  // namespace

SvgOverlay::SvgOverlay(int width, int height) : width_(width), height_(height) {}

void SvgOverlay::add_point(Vec2 p, double radius, const std::string& color,
                           const std::string& label) {
    body_ += "  <circle cx=\"" + fmt(p.x) + "\" cy=\"" + fmt(p.y) + "\" r=\"" + fmt(radius) +
             "\" fill=\"" + color + "\"/>\n";
    if (!label.empty()) {
        body_ += "  <text x=\"" + fmt(p.x + radius + 1.0) + "\" y=\"" + fmt(p.y) +
                 "\" font-size=\"4\" fill=\"" + color + "\">" + label + "</text>\n";
    }
}

void SvgOverlay::add_ellipse(const EllipseParams& e, const std::string& color) {
    const double deg = e.angle * 180.0 / 3.14159265358979323846;
    body_ += "  <ellipse cx=\"0\" cy=\"0\" rx=\"" + fmt(e.semi_major) + "\" ry=\"" +
             fmt(e.semi_minor) + "\" fill=\"none\" stroke=\"" + color +
             "\" stroke-width=\"0.5\" transform=\"translate(" + fmt(e.center.x) + " " +
             fmt(e.center.y) + ") rotate(" + fmt(deg) + ")\"/>\n";
}

std::string SvgOverlay::str() const {
    std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                      std::to_string(width_ * 4) + "\" height=\"" + std::to_string(height_ * 4) +
                      "\" viewBox=\"0 0 " + std::to_string(width_) + " " + std::to_string(height_) +
                      "\">\n  <rect width=\"100%\" height=\"100%\" fill=\"#202020\"/>\n";
    out += body_;
    out += "</svg>\n";
    return out;
}

void SvgOverlay::write(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << str();
    if (!f) throw IoError("write failure: " + path);
}

}  // namespace uld
