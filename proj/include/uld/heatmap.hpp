#pragma once

#include <string>
#include <vector>

#include "uld/covariance.hpp"
#include "uld/tensor.hpp"

namespace uld {

// Pixel lattice. Continuous coordinates of the pixel at (row r, col c) are
// (c + 0.5, r + 0.5); x runs along columns, y along rows. This convention
// is fixed repo-wide, including all file formats.
struct Grid {
    int height = 0;
    int width = 0;
};

// Activation applied to heatmap values before taking the weighted mean.
// relu and identity_clamped both map v -> max(v, 0) (they coincide; the
// latter exists for callers whose maps are already non-negative) and keep
// the decode invariant under positive scaling. exp_softmax uses
// exp(v - max) and is never degenerate.
enum class Activation { relu, exp_softmax, identity_clamped };

struct HeatmapConfig {
    double gamma = 1000.0;
    Activation activation = Activation::relu;
};

// Single-landmark likelihood grid, row-major values.
struct Heatmap {
    Grid grid;
    std::vector<double> values;

    double& at(int r, int c) { return values[static_cast<std::size_t>(r) * grid.width + c]; }
    double at(int r, int c) const { return values[static_cast<std::size_t>(r) * grid.width + c]; }
};

// value(x) = (gamma / 2 pi sigma^2) * exp(-|x - center|^2 / 2 sigma^2).
// The center may lie off-grid; the visible tail is rendered.
Heatmap render_isotropic(Vec2 center, double sigma, const HeatmapConfig& cfg, const Grid& grid);

// value(x) = gamma * exp(-0.5 (x-c)^T S^-1 (x-c)) / (2 pi sqrt|S|).
Heatmap render_anisotropic(Vec2 center, const Covariance2x2& s, const HeatmapConfig& cfg,
                           const Grid& grid);

// Weighted spatial mean sum(act(H(x)) * x) / sum(act(H(x))).
// Throws DegenerateHeatmapError when the activated mass is <= 1e-12.
Vec2 soft_argmax(const Heatmap& h, const HeatmapConfig& cfg);

// Pullback of the decode: given dL/d(pred), returns dL/d(values).
// d pred_j / d H(x) = act'(H(x)) * (x_j - pred_j) / mass for relu-style
// activations, and w(x) * (x_j - pred_j) for exp_softmax.
std::vector<double> soft_argmax_backward(const Heatmap& h, const HeatmapConfig& cfg, Vec2 d_pred);

const char* to_string(Activation a);
Activation activation_from_string(const std::string& name);

}  // namespace uld
