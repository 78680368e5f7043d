#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uld/covariance.hpp"
#include "uld/rng.hpp"
#include "uld/tensor.hpp"

namespace uld {

// One synthetic scene. gt_landmarks are the noise-free curve points;
// annotation is the noisy label actually used as the training target;
// true_cov is the generator's per-landmark noise covariance.
struct Sample {
    Tensor image;  // {1,H,W}, values in [0,1]
    std::vector<Vec2> gt_landmarks;
    std::vector<Vec2> annotation;
    std::vector<Covariance2x2> true_cov;
    std::uint64_t seed = 0;
};

// Family of blurred bright-inside/dark-outside ellipse arcs. Landmarks sit
// at equally spaced arc parameters; annotation noise is anisotropic with
// its dominant axis along the local tangent.
struct SceneConfig {
    int image_h = 64;
    int image_w = 64;
    int num_landmarks = 4;

    double center_jitter_px = 4.0;
    double semi_axis_x_min = 15.0;
    double semi_axis_x_max = 22.0;
    double semi_axis_y_min = 11.0;
    double semi_axis_y_max = 17.0;
    double rotation_max_rad = 0.3;
    double arc_start_rad = 0.6;
    double arc_span_rad = 2.4;
    double phase_jitter_rad = 0.2;

    double edge_blur_sigma = 1.5;
    double noise_tangent_sigma = 3.0;
    double noise_normal_sigma = 1.0;
    double background_noise = 0.02;
    double inside_level = 0.8;
    double outside_level = 0.15;

    double margin_px = 8.0;
    double pixel_spacing_mm = 0.1;

    void validate() const;  // throws ConfigError
};

// Zero-mean draw with covariance s, generated as C z with z ~ N(0, I).
Vec2 sample_gaussian_2d(const Covariance2x2& s, Rng& rng);
Vec2 sample_gaussian_2d(const Covariance2x2& s, std::uint64_t seed);

// Deterministic per seed. Throws ConfigError when no geometry satisfying
// the landmark margins can be drawn.
Sample generate_sample(const SceneConfig& cfg, std::uint64_t seed);

// Analytic tangent angles at the landmark parameters of the sample's arc;
// exposed for the orientation tests.
struct ArcGeometry {
    Vec2 center;
    double semi_x = 0.0, semi_y = 0.0, rotation = 0.0;
    std::vector<double> params;          // arc parameter per landmark
    std::vector<double> tangent_angles;  // radians from +x
};
Sample generate_sample(const SceneConfig& cfg, std::uint64_t seed, ArcGeometry* geometry);

struct Dataset {
    int image_h = 0;
    int image_w = 0;
    int num_landmarks = 0;
    double pixel_spacing_mm = 0.1;
    std::vector<Sample> samples;
};

Dataset generate_dataset(const SceneConfig& cfg, int count, std::uint64_t master_seed);

// Directory layout: manifest.json plus, per sample,
//   <name>.pgm       16-bit P5 image
//   <name>_gt.csv    x,y per landmark, 6 fractional digits
//   <name>_ann.csv   x,y per landmark
//   <name>_cov.csv   sxx,sxy,syy per landmark (omitted when unknown)
void write_dataset(const Dataset& ds, const std::string& dir);
Dataset read_dataset(const std::string& dir);

}  // namespace uld
