#include "asianlsv/black_scholes.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "asianlsv/asymptotics.hpp"

namespace asianlsv {

double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double forward_price(const MarketState& market, double maturity) {
    market.validate();
    if (!(maturity > 0.0)) throw std::invalid_argument("forward_price: maturity must be positive");
    const double a = (market.r - market.q) * maturity;
    if (std::abs(a) < 1e-12) return market.s0;
    return market.s0 * std::expm1(a) / a;
}

namespace {

double bs_price(double strike, double maturity, double vol, double forward, double r,
                bool is_call) {
    if (!(strike > 0.0 && forward > 0.0 && maturity > 0.0))
        throw std::invalid_argument("bs: strike, forward, maturity must be positive");
    if (!(vol >= 0.0)) throw std::invalid_argument("bs: vol must be nonnegative");
    const double df = std::exp(-r * maturity);
    const double stdev = vol * std::sqrt(maturity);
    if (stdev <= 0.0) {
        const double intrinsic = is_call ? forward - strike : strike - forward;
        return df * std::max(intrinsic, 0.0);
    }
    const double d1 = std::log(forward / strike) / stdev + 0.5 * stdev;
    const double d2 = d1 - stdev;
    if (is_call) return df * (forward * norm_cdf(d1) - strike * norm_cdf(d2));
    return df * (strike * norm_cdf(-d2) - forward * norm_cdf(-d1));
}

double bs_vega(double strike, double maturity, double vol, double forward, double r) {
    const double df = std::exp(-r * maturity);
    const double stdev = vol * std::sqrt(maturity);
    if (stdev <= 0.0) return 0.0;
    const double d1 = std::log(forward / strike) / stdev + 0.5 * stdev;
    return df * forward * std::exp(-0.5 * d1 * d1) / std::sqrt(2.0 * std::numbers::pi) *
           std::sqrt(maturity);
}

}  // namespace

double bs_call(double strike, double maturity, double vol, double forward, double r) {
    return bs_price(strike, maturity, vol, forward, r, true);
}

double bs_put(double strike, double maturity, double vol, double forward, double r) {
    return bs_price(strike, maturity, vol, forward, r, false);
}

std::optional<double> try_implied_vol(const OptionQuote& quote, double forward, double r) {
    const double df = std::exp(-r * quote.maturity);
    const double intrinsic =
        df * std::max(quote.is_call ? forward - quote.strike : quote.strike - forward, 0.0);
    const double upper = df * (quote.is_call ? forward : quote.strike);
    if (!(quote.price > intrinsic) || !(quote.price < upper)) return std::nullopt;

    double lo = 1e-6, hi = 5.0;
    auto f = [&](double vol) {
        return bs_price(quote.strike, quote.maturity, vol, forward, r, quote.is_call) -
               quote.price;
    };
    if (f(lo) > 0.0 || f(hi) < 0.0) return std::nullopt;  // outside vol bracket

    // Bisection down to a coarse bracket, then Newton with vega.
    while (hi - lo > 1e-3) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) <= 0.0 ? lo : hi) = mid;
    }
    double vol = 0.5 * (lo + hi);
    for (int it = 0; it < 60; ++it) {
        const double diff = f(vol);
        if (std::abs(diff) <= 1e-10) break;
        const double vega = bs_vega(quote.strike, quote.maturity, vol, forward, r);
        double step = (vega > 1e-300) ? diff / vega : 0.0;
        double next = vol - step;
        if (!(next > lo && next < hi) || step == 0.0) next = 0.5 * (lo + hi);
        (f(next) <= 0.0 ? lo : hi) = next;
        vol = next;
    }
    return vol;
}

double implied_vol(const OptionQuote& quote, double forward, double r) {
    auto v = try_implied_vol(quote, forward, r);
    if (!v) throw std::domain_error("implied_vol: price outside arbitrage bounds");
    return *v;
}

OptionQuote asian_price(const SmileQuadratic& smile, const MarketState& market, double strike,
                        double maturity, bool is_call) {
    if (!(strike > 0.0)) throw std::invalid_argument("asian_price: strike must be positive");
    if (!(maturity > 0.0)) throw std::invalid_argument("asian_price: maturity must be positive");
    const double x = std::log(strike / market.s0);
    const double vol = std::max(smile_at(smile, x), 1e-6);
    const double fwd = forward_price(market, maturity);
    OptionQuote q;
    q.strike = strike;
    q.maturity = maturity;
    q.is_call = is_call;
    q.price = bs_price(strike, maturity, vol, fwd, market.r, is_call);
    q.implied_vol = vol;
    return q;
}

}  // namespace asianlsv
