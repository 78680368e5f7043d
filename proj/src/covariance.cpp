#include "uld/covariance.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "uld/errors.hpp"

namespace uld {

double positivity_map(double x) { return x >= 0.0 ? x + 1.0 : std::exp(x); }

double positivity_map_deriv(double x) { return x >= 0.0 ? 1.0 : std::exp(x); }

CholeskyFactor cholesky_from_raw(const std::array<double, 3>& raw, PositivityMode mode) {
    CholeskyFactor f;
    f.a = std::max(positivity_map(raw[0]), kMinDiag);
    f.c = std::max(positivity_map(raw[2]), kMinDiag);
    f.b = mode == PositivityMode::all_positive ? positivity_map(raw[1]) : raw[1];
    return f;
}

std::array<double, 3> cholesky_from_raw_deriv(const std::array<double, 3>& raw, PositivityMode mode) {
    std::array<double, 3> d;
    d[0] = positivity_map(raw[0]) > kMinDiag ? positivity_map_deriv(raw[0]) : 0.0;
    d[2] = positivity_map(raw[2]) > kMinDiag ? positivity_map_deriv(raw[2]) : 0.0;
    d[1] = mode == PositivityMode::all_positive ? positivity_map_deriv(raw[1]) : 1.0;
    return d;
}

Covariance2x2 reconstruct(const CholeskyFactor& f) {
    Covariance2x2 s;
    s.sxx = f.a * f.a;
    s.sxy = f.a * f.b;
    s.syy = f.b * f.b + f.c * f.c;
    return s;
}

CholeskyFactor decompose(const Covariance2x2& s) {
    if (!(s.sxx > 0.0)) {
        std::ostringstream msg;
        msg << "matrix not positive definite: sxx=" << s.sxx << " must be > 0";
        throw DefinitenessError(msg.str());
    }
    CholeskyFactor f;
    f.a = std::sqrt(s.sxx);
    f.b = s.sxy / f.a;
    double c2 = s.syy - f.b * f.b;
    if (!(c2 > 0.0)) {
        std::ostringstream msg;
        msg << "matrix not positive definite: det=" << s.det() << " (sxx=" << s.sxx
            << ", sxy=" << s.sxy << ", syy=" << s.syy << ")";
        throw DefinitenessError(msg.str());
    }
    f.c = std::sqrt(c2);
    return f;
}

InverseLogdet inverse_and_logdet(const CholeskyFactor& f) {
    // Sigma^-1 = C^-T C^-1 with C^-1 = [1/a 0; -b/(ac) 1/c].
    InverseLogdet r;
    const double inv_a = 1.0 / f.a;
    const double inv_c = 1.0 / f.c;
    const double t = f.b * inv_a * inv_c;  // b/(ac)
    r.ixx = inv_a * inv_a + t * t;
    r.ixy = -t * inv_c;
    r.iyy = inv_c * inv_c;
    r.logdet = 2.0 * (std::log(f.a) + std::log(f.c));
    return r;
}

EllipseParams ellipse_from_covariance(const Covariance2x2& s, Vec2 center, double k) {
    const double mean = 0.5 * (s.sxx + s.syy);
    const double diff = 0.5 * (s.sxx - s.syy);
    const double disc = std::sqrt(diff * diff + s.sxy * s.sxy);
    const double lmax = mean + disc;
    const double lmin = std::max(mean - disc, 0.0);

    EllipseParams e;
    e.center = center;
    e.semi_major = k * std::sqrt(lmax);
    e.semi_minor = k * std::sqrt(lmin);
    // Orientation of the dominant eigenvector; atan2(0,0)=0 covers the
    // isotropic tie-break.
    e.angle = 0.5 * std::atan2(2.0 * s.sxy, s.sxx - s.syy);
    return e;
}

const char* to_string(PositivityMode mode) {
    return mode == PositivityMode::all_positive ? "all_positive" : "diag_only";
}

PositivityMode positivity_mode_from_string(const std::string& name) {
    if (name == "all_positive") return PositivityMode::all_positive;
    if (name == "diag_only") return PositivityMode::diag_only;
    throw ConfigError("unknown positivity mode '" + name + "' (expected all_positive or diag_only)");
}

}  // namespace uld
