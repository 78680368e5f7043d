#pragma once

#include <array>

#include "uld/tensor.hpp"

namespace uld {

// How raw regression outputs are turned into a valid Cholesky factor.
//   all_positive : f applied to a, b and c; factor is unique but can only
//                  express covariances with sxy >= 0.
//   diag_only    : f applied to a and c, b passes through; full sign range
//                  for the off-diagonal.
enum class PositivityMode { all_positive, diag_only };

// Lower-triangular factor [a 0; b c] of a 2x2 SPD matrix, a > 0, c > 0.
struct CholeskyFactor {
    double a = 1.0;
    double b = 0.0;
    double c = 1.0;
};

// Symmetric positive definite 2x2 matrix [[sxx, sxy], [sxy, syy]], units px^2.
struct Covariance2x2 {
    double sxx = 1.0;
    double sxy = 0.0;
    double syy = 1.0;

    double det() const { return sxx * syy - sxy * sxy; }
};

// Confidence ellipse at k standard deviations.
// angle is the direction of the major axis, in (-pi/2, pi/2] from +x.
struct EllipseParams {
    Vec2 center;
    double semi_major = 1.0;
    double semi_minor = 1.0;
    double angle = 0.0;
};

struct InverseLogdet {
    double ixx = 1.0;
    double ixy = 0.0;
    double iyy = 1.0;
    double logdet = 0.0;
};

// Smooth positive map: x+1 for x >= 0, e^x otherwise. C1 at 0 (both
// one-sided derivatives are 1), strictly increasing, range (0, inf).
double positivity_map(double x);
double positivity_map_deriv(double x);

// Diagonal entries are clamped to >= kMinDiag after mapping so that
// log-determinants stay finite.
inline constexpr double kMinDiag = 1e-6;

CholeskyFactor cholesky_from_raw(const std::array<double, 3>& raw, PositivityMode mode);

// d(a)/d(raw0), d(b)/d(raw1), d(c)/d(raw2); zero where the clamp is active.
std::array<double, 3> cholesky_from_raw_deriv(const std::array<double, 3>& raw, PositivityMode mode);

// C * C^T
Covariance2x2 reconstruct(const CholeskyFactor& f);

// Throws DefinitenessError if S is not positive definite.
CholeskyFactor decompose(const Covariance2x2& s);

// Inverse and log-determinant straight from the factor (triangular solves,
// never by inverting the reconstructed matrix).
InverseLogdet inverse_and_logdet(const CholeskyFactor& f);

// Closed-form 2x2 symmetric eigendecomposition. Equal eigenvalues report
// angle 0.
EllipseParams ellipse_from_covariance(const Covariance2x2& s, Vec2 center, double k);

const char* to_string(PositivityMode mode);
PositivityMode positivity_mode_from_string(const std::string& name);

}  // namespace uld
