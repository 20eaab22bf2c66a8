#pragma once

#include <utility>
#include <vector>

#include "asianlsv/asymptotics.hpp"
#include "asianlsv/models.hpp"

namespace asianlsv {

// Discrete log-asset / log-variance path pair on a uniform grid over [0, 1].
struct DiscretePathPair {
    std::vector<double> t;
    std::vector<double> g;
    std::vector<double> h;
};

struct OracleSolution {
    double rate = 0.0;
    DiscretePathPair paths;
    double constraint_residual = 0.0;
    double lagrange_lambda = 0.0;
    bool converged = false;
    int n_iterations = 0;
};

struct OracleOptions {
    std::vector<int> grid_sizes = {101, 201, 401};  // node counts, refined + extrapolated
    double tol_constraint = 1e-8;
    double tol_gradient = 1e-8;
    int max_outer = 200;
    int max_inner = 5000;
    double homotopy_threshold = 0.3;  // |x| above which the solve is staged
};

// Trapezoid quadrature of the rate integrand with centered interior and
// one-sided endpoint derivative estimates.
double lambda_functional(const DiscretePathPair& paths, const ModelSpec& model);

// Fixed-strike minimization: constraint (trapezoid of e^g) = K.
OracleSolution solve_fixed(const ModelSpec& model, const MarketState& market, double strike,
                           const OracleOptions& options = {});

// Floating-strike minimization: constraint (trapezoid of e^g) = kappa e^{g(1)}.
OracleSolution solve_floating(const ModelSpec& model, const MarketState& market, double kappa,
                              const OracleOptions& options = {});

// Sup-norm residuals of the two Euler-Lagrange equations along a discrete
// path (finite-difference derivatives).
std::pair<double, double> el_residual(const DiscretePathPair& paths, double lagrange_lambda,
                                      const ModelSpec& model);

// Same residuals for the truncated series paths, with exact polynomial
// derivatives and lambda(x) from the series.
std::pair<double, double> el_residual_series(const PathSeries& series,
                                             const ExpansionInputs& inputs, double x,
                                             int n_nodes = 2001);

// Effective local volatility of the perfectly (anti)correlated reduction:
// sigma_hat(S) = eta(S) sqrt(Finv(S)) where Finv inverts the monotone map F.
class EffectiveLocalVol {
  public:
    EffectiveLocalVol(const ModelSpec& model, const MarketState& market, int sign);
    double value(double s) const;        // sigma_hat(S)
    double derivative(double s) const;   // d sigma_hat / dS
    double f_map(double v) const;        // F(v): variance level -> asset level
    double f_inverse(double s) const;    // Finv(S)
    double spot() const { return s0_; }

  private:
    double s0_ = 1.0, v0_ = 1.0;
    int sign_ = 1;
    std::function<double(double)> eta_, eta_prime_, sigma_;
    std::vector<double> y_;   // log(S/S0) grid
    std::vector<double> w_;   // Finv(S0 e^y)
    std::vector<double> psi_; // Psi_S(y), for the forward map
    double w_at(double y) const;
};

// One-dimensional local volatility solve: minimize (1/2) int (g'/w(e^g))^2
// with (trapezoid of e^g) = K, g(0) = log s0. Used for sigma == 0 models.
OracleSolution lv_rate(const ModelSpec& model, double s0, double strike,
                       const OracleOptions& options = {});

// rho = +-1 rate via the local-vol reduction with sigma_hat.
OracleSolution rho_pm_rate(const ModelSpec& model, const MarketState& market, double strike,
                           int sign, const OracleOptions& options = {});

// Path dump, columns t,g,h.
void write_solution_csv(std::ostream& os, const OracleSolution& solution);

}  // namespace asianlsv
