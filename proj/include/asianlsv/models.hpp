#pragma once

#include <functional>
#include <stdexcept>
#include <string>

namespace asianlsv {

// Model family: dS/S = (r-q) dt + eta(S) sqrt(V) dB,
//               dV/V = mu(V) dt + sigma(V) dZ,  corr(dB, dZ) = rho.
enum class ModelKind { generic, sabr, heston, tanh_lsv, local_vol };

std::string to_string(ModelKind kind);

struct ModelSpec {
    ModelKind kind = ModelKind::generic;
    std::function<double(double)> eta;          // local volatility multiplier, eta(S) > 0
    std::function<double(double)> sigma;        // volatility of volatility, sigma(V) >= 0
    std::function<double(double)> mu;           // variance drift per unit time
    std::function<double(double)> eta_prime;    // d eta / dS; exact for built-ins
    std::function<double(double)> sigma_prime;  // d sigma / dV
    double rho = 0.0;

    // Anchor levels the built-in closed-form expansions are written around.
    double anchor_s0 = 1.0;
    double anchor_v0 = 1.0;
    bool has_anchor = false;

    // Built-in parameters, kept for reporting.
    double p_sigma = 0.0;                       // sabr / tanh vol-of-vol
    double p_kappa = 0.0, p_theta = 0.0, p_xi = 0.0;  // heston
    double p_f0 = 0.0, p_f1 = 0.0, p_x0 = 0.0;  // tanh local vol
};

struct MarketState {
    double s0 = 1.0;  // spot asset price, > 0
    double v0 = 1.0;  // spot variance, > 0
    double r = 0.0;   // risk-free rate, per year
    double q = 0.0;   // dividend yield, per year

    void validate() const {
        if (!(s0 > 0.0)) throw std::invalid_argument("market: s0 must be positive");
        if (!(v0 > 0.0)) throw std::invalid_argument("market: v0 must be positive");
    }
};

// Coefficients of the log-expansions
//   eta(S)   = eta0 + eta1 log(S/S0) + eta2 log^2(S/S0) + ...
//   sigma(V) = sigma0 + sigma1 log(V/V0) + sigma2 log^2(V/V0) + ...
// together with the state they were taken at.
struct ExpansionInputs {
    double eta0 = 1.0, eta1 = 0.0, eta2 = 0.0;
    double sigma0 = 0.0, sigma1 = 0.0, sigma2 = 0.0;
    double rho = 0.0;
    double s0 = 1.0;
    double v0 = 1.0;

    void validate() const {
        if (!(eta0 > 0.0)) throw std::invalid_argument("expansion: eta0 must be positive");
        if (!(v0 > 0.0)) throw std::invalid_argument("expansion: v0 must be positive");
        if (!(s0 > 0.0)) throw std::invalid_argument("expansion: s0 must be positive");
        if (!(rho >= -1.0 && rho <= 1.0)) throw std::invalid_argument("expansion: |rho| must be <= 1");
    }
};

// Log-normal SABR: eta == 1, sigma == sigma_const, mu == 0.
ModelSpec make_sabr(double sigma_const, double rho = 0.0);

// Heston dV = kappa (theta - V) dt + xi sqrt(V) dZ, i.e.
// mu(v) = kappa (theta - v) / v and sigma(v) = xi v^{-1/2}.
ModelSpec make_heston(double kappa, double theta, double xi, double rho = 0.0);

// Bounded local volatility eta(S) = f0 + f1 tanh(log(S/s0) - x0) with
// log-normal variance (sigma const). Requires f0 - |f1| > 0.
ModelSpec make_tanh(double f0, double f1, double x0, double s0, double sigma_const,
                    double rho = 0.0);

// Frozen-variance model: same eta as make_tanh, sigma == 0, mu == 0.
ModelSpec make_local_vol(double f0, double f1, double x0, double s0);

// Generic model from user callables; derivatives fall back to central
// differences when not supplied.
ModelSpec make_generic(std::function<double(double)> eta, std::function<double(double)> sigma,
                       std::function<double(double)> mu, double rho);

// Series inputs at the market state. Built-in kinds anchored at the market
// state use closed forms; anything else is differenced numerically in the
// log variable.
ExpansionInputs expansion_inputs(const ModelSpec& model, const MarketState& market);

// The finite-difference path, exposed so the closed forms can be checked
// against it.
ExpansionInputs expansion_inputs_fd(const ModelSpec& model, const MarketState& market);

}  // namespace asianlsv
