#pragma once

#include <map>
#include <string>
#include <vector>

#include "uld/covariance.hpp"
#include "uld/data.hpp"
#include "uld/heatmap.hpp"
#include "uld/network.hpp"

namespace uld {

// Mean radial error in millimeters over all landmark instances.
// preds/gts are flat lists of equal length.
double mre(const std::vector<Vec2>& preds, const std::vector<Vec2>& gts, double spacing_mm);

// Successful detection rate per radius, percent. A detection succeeds when
// its radial error is strictly below the radius.
std::map<double, double> sdr(const std::vector<Vec2>& preds, const std::vector<Vec2>& gts,
                             const std::vector<double>& radii_mm, double spacing_mm);

inline const std::vector<double> kDefaultSdrRadiiMm{2.0, 2.5, 3.0, 4.0};

// Second moment (1/M) sum d d^T of displacement vectors about the origin
// (displacements are already relative to ground truth). Nudged to positive
// definite with +1e-9 I when needed. Throws InsufficientSamplesError for
// fewer than two displacements.
Covariance2x2 empirical_covariance(const std::vector<Vec2>& displacements);

struct AgreementScore {
    double frobenius_rel = 0.0;   // |P - R|_F / |R|_F
    double angle_error_rad = 0.0; // acute angle between dominant axes, [0, pi/2]
};

// Isotropic references report angle 0 (no dominant axis).
AgreementScore covariance_agreement(const Covariance2x2& predicted, const Covariance2x2& reference);

struct LandmarkAgreement {
    double frobenius_rel = 0.0;
    double angle_error_rad = 0.0;
};

struct EvalReport {
    double mre_mm = 0.0;
    std::map<double, double> sdr;                     // radius_mm -> percent
    std::vector<double> per_landmark_mre;             // mm
    // Median per-sample agreement of the predicted covariance against the
    // generator covariance; empty when the dataset carries none.
    std::vector<LandmarkAgreement> covariance_agreement;
    // Predicted covariance vs the empirical displacement covariance.
    std::vector<LandmarkAgreement> displacement_agreement;
    std::vector<Covariance2x2> empirical_cov;          // per landmark
    std::vector<Covariance2x2> mean_predicted_cov;     // per landmark
};

struct PerSamplePrediction {
    std::vector<Vec2> preds;
    std::vector<Covariance2x2> cov;
};

struct EvalOptions {
    HeatmapConfig decode;                // activation/gamma used for decoding
    double covariance_scale = 1.0;       // applied to predicted covariances
    std::vector<double> radii_mm = kDefaultSdrRadiiMm;
};

// Runs the model over every sample; metrics are computed against the
// noise-free ground truth. Throws ShapeError when the checkpoint and
// dataset disagree on geometry or landmark count.
EvalReport evaluate(const Dataset& data, const ModelParams& params, const ModelConfig& cfg,
                    const EvalOptions& opts, std::vector<PerSamplePrediction>* per_sample = nullptr);

// Stable-layout JSON (no timestamps): byte-identical for identical inputs.
std::string report_to_json(const EvalReport& report);

}  // namespace uld
