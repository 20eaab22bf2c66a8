#pragma once

#include <optional>

#include "asianlsv/models.hpp"

namespace asianlsv {

struct SmileQuadratic;  // asymptotics.hpp

struct OptionQuote {
    double strike = 1.0;
    double maturity = 1.0;
    bool is_call = true;
    double price = 0.0;
    std::optional<double> implied_vol;
};

double norm_cdf(double z);

// Forward of the average, S0 (e^{(r-q)T} - 1) / ((r-q) T); the limit S0 is
// used when |r-q| T is below 1e-12.
double forward_price(const MarketState& market, double maturity);

double bs_call(double strike, double maturity, double vol, double forward, double r);
double bs_put(double strike, double maturity, double vol, double forward, double r);

// Inverse of the undiscounted-forward Black-Scholes formula. Bracketed on
// [1e-6, 5]; bisection then Newton polishing to 1e-10 absolute in price.
// Throws std::domain_error when the price is outside the arbitrage bounds.
double implied_vol(const OptionQuote& quote, double forward, double r);
std::optional<double> try_implied_vol(const OptionQuote& quote, double forward, double r);

// Price from the quadratic smile: Sigma(x) = atm + skew x + conv x^2 at
// x = log(K/S0), floored at 1e-6, fed through the Black-Scholes formula with
// the average forward.
OptionQuote asian_price(const SmileQuadratic& smile, const MarketState& market, double strike,
                        double maturity, bool is_call);

}  // namespace asianlsv
