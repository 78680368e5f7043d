#include "uld/loss.hpp"

#include <cmath>
#include <string>

#include "uld/errors.hpp"

namespace uld {

double nll_loss(Vec2 pred, Vec2 gt, const CholeskyFactor& c, const LossConfig& cfg) {
    const double rx = pred.x - gt.x;
    const double ry = pred.y - gt.y;
    // u = C^-1 r by forward substitution
    const double u1 = rx / c.a;
    const double u2 = (ry - c.b * u1) / c.c;
    const double mahal = u1 * u1 + u2 * u2;
    const double logdet = 2.0 * (std::log(c.a) + std::log(c.c));
    return mahal + cfg.alpha * logdet;
}

NllGrad nll_loss_grad(Vec2 pred, Vec2 gt, const std::array<double, 3>& raw, PositivityMode mode,
                      const LossConfig& cfg) {
    const CholeskyFactor c = cholesky_from_raw(raw, mode);
    const double rx = pred.x - gt.x;
    const double ry = pred.y - gt.y;

    const double u1 = rx / c.a;
    const double u2 = (ry - c.b * u1) / c.c;

    // d(pred) = 2 Sigma^-1 r = 2 C^-T u: back substitution of u.
    const double w2 = u2 / c.c;
    const double w1 = (u1 - c.b * w2) / c.a;
    NllGrad g;
    g.d_pred = {2.0 * w1, 2.0 * w2};

    // Mahalanobis term through the factor elements.
    const double dm_da = -2.0 * u1 * u1 / c.a + 2.0 * u2 * c.b * u1 / (c.a * c.c);
    const double dm_db = -2.0 * u2 * u1 / c.c;
    const double dm_dc = -2.0 * u2 * u2 / c.c;

    // alpha * log|Sigma| = 2 alpha (ln a + ln c).
    const double dl_da = 2.0 * cfg.alpha / c.a;
    const double dl_dc = 2.0 * cfg.alpha / c.c;

    const std::array<double, 3> df = cholesky_from_raw_deriv(raw, mode);
    g.d_raw[0] = (dm_da + dl_da) * df[0];
    g.d_raw[1] = dm_db * df[1];
    g.d_raw[2] = (dm_dc + dl_dc) * df[2];
    return g;
}

LossBreakdown batch_loss(std::span<const Vec2> preds, std::span<const Vec2> gts,
                         std::span<const std::array<double, 3>> raws, PositivityMode mode,
                         const LossConfig& cfg) {
    const std::size_t n = preds.size();
    if (gts.size() != n || raws.size() != n) {
        throw ShapeError("batch_loss length mismatch: preds=" + std::to_string(n) +
                         " gts=" + std::to_string(gts.size()) +
                         " raws=" + std::to_string(raws.size()));
    }
    if (n == 0) throw ShapeError("batch_loss needs at least one landmark instance");

    LossBreakdown b;
    b.per_landmark.reserve(n);
    double mahal_sum = 0.0, logdet_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const CholeskyFactor c = cholesky_from_raw(raws[i], mode);
        const double rx = preds[i].x - gts[i].x;
        const double ry = preds[i].y - gts[i].y;
        const double u1 = rx / c.a;
        const double u2 = (ry - c.b * u1) / c.c;
        const double mahal = u1 * u1 + u2 * u2;
        const double logdet = 2.0 * (std::log(c.a) + std::log(c.c));
        mahal_sum += mahal;
        logdet_sum += logdet;
        b.per_landmark.push_back(mahal + cfg.alpha * logdet);
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    b.mahalanobis_term = mahal_sum * inv_n;
    b.logdet_term = cfg.alpha * logdet_sum * inv_n;
    b.total = b.mahalanobis_term + b.logdet_term;
    return b;
}

}  // namespace uld
