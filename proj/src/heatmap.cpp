#include "uld/heatmap.hpp"

#include <algorithm>
#include <cmath>

#include "uld/errors.hpp"

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kMassFloor = 1e-12;
}  // namespace

namespace uld {

Heatmap render_isotropic(Vec2 center, double sigma, const HeatmapConfig& cfg, const Grid& grid) {
    Heatmap h;
    h.grid = grid;
    h.values.resize(static_cast<std::size_t>(grid.height) * grid.width);
    const double peak = cfg.gamma / (kTwoPi * sigma * sigma);
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    std::size_t i = 0;
    for (int r = 0; r < grid.height; ++r) {
        const double dy = (r + 0.5) - center.y;
        for (int c = 0; c < grid.width; ++c, ++i) {
            const double dx = (c + 0.5) - center.x;
            h.values[i] = peak * std::exp(-(dx * dx + dy * dy) * inv2s2);
        }
    }
    return h;
}

Heatmap render_anisotropic(Vec2 center, const Covariance2x2& s, const HeatmapConfig& cfg,
                           const Grid& grid) {
    const CholeskyFactor f = decompose(s);  // DefinitenessError for bad S
    const InverseLogdet inv = inverse_and_logdet(f);
    const double peak = cfg.gamma / (kTwoPi * f.a * f.c);  // a*c = sqrt|S|

    Heatmap h;
    h.grid = grid;
    h.values.resize(static_cast<std::size_t>(grid.height) * grid.width);
    std::size_t i = 0;
    for (int r = 0; r < grid.height; ++r) {
        const double dy = (r + 0.5) - center.y;
        for (int c = 0; c < grid.width; ++c, ++i) {
            const double dx = (c + 0.5) - center.x;
            const double q = inv.ixx * dx * dx + 2.0 * inv.ixy * dx * dy + inv.iyy * dy * dy;
            h.values[i] = peak * std::exp(-0.5 * q);
        }
    }
    return h;
}

namespace {

inline double activate(double v, Activation a) {
    switch (a) {
        case Activation::relu:
        case Activation::identity_clamped:
            return v > 0.0 ? v : 0.0;
        case Activation::exp_softmax:
            return v;  // handled with a max shift by the caller
    }
    return 0.0;
}

}  // namespace

Vec2 soft_argmax(const Heatmap& h, const HeatmapConfig& cfg) {
    const int H = h.grid.height, W = h.grid.width;
    double mass = 0.0, mx = 0.0, my = 0.0;
    if (cfg.activation == Activation::exp_softmax) {
        const double vmax = *std::max_element(h.values.begin(), h.values.end());
        std::size_t i = 0;
        for (int r = 0; r < H; ++r) {
            for (int c = 0; c < W; ++c, ++i) {
                const double w = std::exp(h.values[i] - vmax);
                mass += w;
                mx += w * (c + 0.5);
                my += w * (r + 0.5);
            }
        }
    } else {
        std::size_t i = 0;
        for (int r = 0; r < H; ++r) {
            for (int c = 0; c < W; ++c, ++i) {
                const double w = activate(h.values[i], cfg.activation);
                mass += w;
                mx += w * (c + 0.5);
                my += w * (r + 0.5);
            }
        }
    }
    if (!(mass > kMassFloor)) {
        throw DegenerateHeatmapError("activated heatmap mass " + std::to_string(mass) +
                                     " is too small to decode");
    }
    return {mx / mass, my / mass};
}

std::vector<double> soft_argmax_backward(const Heatmap& h, const HeatmapConfig& cfg, Vec2 d_pred) {
    const int H = h.grid.height, W = h.grid.width;
    std::vector<double> g(h.values.size(), 0.0);
    const Vec2 pred = soft_argmax(h, cfg);

    if (cfg.activation == Activation::exp_softmax) {
        const double vmax = *std::max_element(h.values.begin(), h.values.end());
        double mass = 0.0;
        for (double v : h.values) mass += std::exp(v - vmax);
        std::size_t i = 0;
        for (int r = 0; r < H; ++r) {
            for (int c = 0; c < W; ++c, ++i) {
                const double w = std::exp(h.values[i] - vmax) / mass;
                g[i] = w * (d_pred.x * ((c + 0.5) - pred.x) + d_pred.y * ((r + 0.5) - pred.y));
            }
        }
    } else {
        double mass = 0.0;
        for (double v : h.values) mass += v > 0.0 ? v : 0.0;
        std::size_t i = 0;
        for (int r = 0; r < H; ++r) {
            for (int c = 0; c < W; ++c, ++i) {
                if (h.values[i] > 0.0) {
                    g[i] = (d_pred.x * ((c + 0.5) - pred.x) + d_pred.y * ((r + 0.5) - pred.y)) / mass;
                }
            }
        }
    }
    return g;
}

const char* to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::exp_softmax: return "exp_softmax";
        case Activation::identity_clamped: return "identity_clamped";
    }
    return "relu";
}

Activation activation_from_string(const std::string& name) {
    if (name == "relu") return Activation::relu;
    if (name == "exp_softmax") return Activation::exp_softmax;
    if (name == "identity_clamped") return Activation::identity_clamped;
    throw ConfigError("unknown activation '" + name +
                      "' (expected relu, exp_softmax or identity_clamped)");
}

}  // namespace uld
