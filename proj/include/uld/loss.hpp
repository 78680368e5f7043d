#pragma once

#include <array>
#include <span>
#include <vector>

#include "uld/covariance.hpp"
#include "uld/tensor.hpp"

namespace uld {

struct LossConfig {
    double alpha = 0.1;  // weight of the log-determinant regularizer
};

// Diagnostic decomposition of the objective over a set of landmark
// instances. per_landmark holds the raw per-instance value
// mahal_i + alpha * logdet_i; the scalar terms are mean-reduced so the
// objective stays comparable across batch sizes.
struct LossBreakdown {
    double mahalanobis_term = 0.0;  // mean of mahal_i
    double logdet_term = 0.0;       // alpha * mean of logdet_i
    double total = 0.0;             // mahalanobis_term + logdet_term
    std::vector<double> per_landmark;
};

// (pred-gt)^T Sigma^-1 (pred-gt) + alpha*log|Sigma| with Sigma = C C^T.
// The Mahalanobis term is evaluated as |C^-1 (pred-gt)|^2 via a forward
// triangular solve.
double nll_loss(Vec2 pred, Vec2 gt, const CholeskyFactor& c, const LossConfig& cfg);

struct NllGrad {
    Vec2 d_pred;                   // 2 Sigma^-1 (pred - gt)
    std::array<double, 3> d_raw;   // chain through cholesky_from_raw
};

NllGrad nll_loss_grad(Vec2 pred, Vec2 gt, const std::array<double, 3>& raw, PositivityMode mode,
                      const LossConfig& cfg);

// Mean of the per-instance objective. Throws ShapeError on length mismatch.
LossBreakdown batch_loss(std::span<const Vec2> preds, std::span<const Vec2> gts,
                         std::span<const std::array<double, 3>> raws, PositivityMode mode,
                         const LossConfig& cfg);

}  // namespace uld
