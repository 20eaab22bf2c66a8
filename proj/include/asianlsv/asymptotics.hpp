#pragma once

#include <array>
#include <vector>

#include "asianlsv/models.hpp"

namespace asianlsv {

// Coefficients of x^2, x^3, x^4 in the rate function at x = log(K/S0).
struct RateSeries {
    double i2 = 0.0;
    double i3 = 0.0;
    double i4 = 0.0;
};

// Quadratic smile Sigma(x) = sigma_atm + skew x + convexity x^2.
struct SmileQuadratic {
    double sigma_atm = 0.0;
    double skew = 0.0;
    double convexity = 0.0;
};

// Optimal-path expansion g(t) = log S0 + sum_k x^k g_k(t) (same for h), with
// the Lagrange multiplier lambda(x) = lambda1 x + lambda2 x^2 + lambda3 x^3.
// Polynomials are stored as monomial coefficients, constant term first.
struct PathSeries {
    std::array<std::vector<double>, 3> g;  // g1 (deg 2), g2 (deg 4), g3 (deg 7)
    std::array<std::vector<double>, 3> h;
    double lambda1 = 0.0, lambda2 = 0.0, lambda3 = 0.0;
    double log_s0 = 0.0, log_v0 = 0.0;
};

struct PathPoint {
    double g = 0.0;
    double h = 0.0;
};

RateSeries rate_series(const ExpansionInputs& inputs);

// Same coefficients, recovered by integrating the rate functional along the
// solved optimal-path expansion instead of the closed forms. Second
// algebraic route; agreement with rate_series is tested.
RateSeries rate_series_variational(const ExpansionInputs& inputs);

// Truncated quartic i2 x^2 + i3 x^3 + i4 x^4, clamped below at zero.
double rate_at(const RateSeries& series, double x);

SmileQuadratic smile_quadratic(const ExpansionInputs& inputs);
double smile_at(const SmileQuadratic& smile, double x);

// |x| / sqrt(2 I); the ATM value must come from SmileQuadratic instead.
double sigma_from_rate(double x, double i_value);

// Limit of C(T)/sqrt(T) = P(T)/sqrt(T) at K = S0: S0 eta0 sqrt(V0 / (6 pi)).
double atm_price_slope(const MarketState& market, const ExpansionInputs& inputs);

PathSeries optimal_paths(const ExpansionInputs& inputs);

// Series paths truncated at order 3. t must lie in [0, 1].
PathPoint path_at(const PathSeries& series, double x, double t);
PathPoint path_deriv_at(const PathSeries& series, double x, double t);   // d/dt
PathPoint path_deriv2_at(const PathSeries& series, double x, double t);  // d2/dt2
double lambda_at(const PathSeries& series, double x);

double poly_eval(const std::vector<double>& coeffs, double t);
std::vector<double> poly_derivative(const std::vector<double>& coeffs);
double poly_integral01(const std::vector<double>& coeffs);
std::vector<double> poly_mul(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace asianlsv
