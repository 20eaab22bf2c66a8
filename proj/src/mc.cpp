#include "asianlsv/mc.hpp"

#include <cmath>
#include <ostream>
#include <thread>

#include "asianlsv/philox.hpp"

namespace asianlsv {

double pairwise_sum(const std::vector<double>& v) {
    // Fixed-shape recursion: results are identical regardless of how the
    // vector was filled.
    struct Impl {
        static double run(const double* p, std::size_t n) {
            if (n <= 32) {
                double s = 0.0;
                for (std::size_t i = 0; i < n; ++i) s += p[i];
                return s;
            }
            const std::size_t half = n / 2;
            return run(p, half) + run(p + half, n - half);
        }
    };
    return Impl::run(v.data(), v.size());
}

double pairwise_mean(const std::vector<double>& v) {
    return v.empty() ? 0.0 : pairwise_sum(v) / double(v.size());
}

namespace {

VarianceScheme resolve_variance_scheme(const ModelSpec& model, const McConfig& config) {
    if (config.variance_scheme != VarianceScheme::auto_select) {
        if (config.variance_scheme == VarianceScheme::exact_gbm &&
            !(model.kind == ModelKind::sabr || model.kind == ModelKind::tanh_lsv ||
              model.kind == ModelKind::local_vol))
            throw std::invalid_argument(
                "mc: exact-gbm variance stepping needs zero drift and constant vol-of-vol");
        return config.variance_scheme;
    }
    switch (model.kind) {
        case ModelKind::sabr:
        case ModelKind::tanh_lsv:
        case ModelKind::local_vol: return VarianceScheme::exact_gbm;
        case ModelKind::heston: return VarianceScheme::full_truncation;
        case ModelKind::generic: return VarianceScheme::generic_euler;
    }
    return VarianceScheme::generic_euler;
}

struct PathResult {
    double average;
    double terminal;
};

PathResult simulate_one(const ModelSpec& model, const MarketState& market, double maturity,
                        const McConfig& config, VarianceScheme vscheme, std::uint64_t stream,
                        bool flip) {
    const std::size_t n = config.n_steps;
    const double dt = maturity / double(n);
    const double sqdt = std::sqrt(dt);
    const double drift = market.r - market.q;
    const double rho = model.rho;
    const double rho_c = std::sqrt(std::max(0.0, 1.0 - rho * rho));

    double s = market.s0;
    double v = market.v0;
    const bool trap = config.averaging == Averaging::trapezoid;
    // Quadrature weights over the n+1 grid values, normalized by T.
    double acc = (trap ? 0.5 : 1.0) * s;

    for (std::size_t i = 0; i < n; ++i) {
        auto z = normal_pair(config.seed, stream, std::uint32_t(i));
        if (flip) {
            z[0] = -z[0];
            z[1] = -z[1];
        }
        const double dz = sqdt * z[0];
        const double dw = sqdt * z[1];
        const double db = rho * dz + rho_c * dw;

        const double vplus = std::max(v, 0.0);
        // Asset step with the variance level at the start of the interval.
        if (s > 0.0) {
            const double et = model.eta(s);
            const double volterm = et * std::sqrt(vplus);
            if (config.asset_scheme == AssetScheme::euler) {
                s = s * (1.0 + drift * dt + volterm * db);
                if (s <= 0.0) s = 0.0;  // absorption
            } else {
                s = s * std::exp((drift - 0.5 * volterm * volterm) * dt + volterm * db);
            }
        }

        switch (vscheme) {
            case VarianceScheme::exact_gbm: {
                const double sg = model.sigma(v);
                v = v * std::exp(sg * dz - 0.5 * sg * sg * dt);
                break;
            }
            case VarianceScheme::full_truncation: {
                const double drift_v = vplus > 0.0 ? vplus * model.mu(vplus) : model.p_kappa * model.p_theta;
                const double diff_v = vplus > 0.0 ? vplus * model.sigma(vplus) : 0.0;
                v = v + drift_v * dt + diff_v * dz;
                break;
            }
            case VarianceScheme::generic_euler: {
                if (v > 0.0) v = v * (1.0 + model.mu(v) * dt + model.sigma(v) * dz);
                if (v < 0.0) v = 0.0;
                break;
            }
            case VarianceScheme::auto_select: break;  // resolved by caller
        }

        const double w = (trap && i + 1 == n) ? 0.5 : 1.0;
        acc += w * s;
    }
    // With n intervals of length dt the normalized quadrature is acc * dt / T
    // = acc / n for both rules (left rectangle drops the terminal value).
    double average = acc;
    if (!trap) average -= s;  // the loop added the terminal value with weight 1
    average /= double(n);
    return {average, s};
}

}  // namespace

PathBatch simulate_batch(const ModelSpec& model, const MarketState& market, double maturity,
                         const McConfig& config) {
    config.validate();
    market.validate();
    if (!(maturity > 0.0)) throw std::invalid_argument("mc: maturity must be positive");
    const VarianceScheme vscheme = resolve_variance_scheme(model, config);

    const std::size_t n_paths = config.n_paths;
    PathBatch batch;
    batch.average.resize(n_paths);
    batch.terminal.resize(n_paths);

    const std::size_t half = n_paths / 2;
    auto run_range = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p) {
            std::uint64_t stream = p;
            bool flip = false;
            if (config.antithetic) {
                stream = p < half ? p : p - half;
                flip = p >= half;
            }
            const PathResult r =
                simulate_one(model, market, maturity, config, vscheme, stream, flip);
            batch.average[p] = r.average;
            batch.terminal[p] = r.terminal;
        }
    };

    unsigned n_threads = config.n_threads ? config.n_threads : std::thread::hardware_concurrency();
    if (n_threads <= 1 || n_paths < 1024) {
        run_range(0, n_paths);
    } else {
        std::vector<std::thread> workers;
        const std::size_t chunk = (n_paths + n_threads - 1) / n_threads;
        for (unsigned t = 0; t < n_threads; ++t) {
            const std::size_t lo = std::min(n_paths, t * chunk);
            const std::size_t hi = std::min(n_paths, lo + chunk);
            if (lo < hi) workers.emplace_back(run_range, lo, hi);
        }
        for (auto& w : workers) w.join();
    }
    return batch;
}

namespace {

McEstimate estimate_from_payoffs(std::vector<double> payoff, const MarketState& market,
                                 double maturity, bool antithetic) {
    if (antithetic) {
        const std::size_t half = payoff.size() / 2;
        std::vector<double> paired(half);
        for (std::size_t j = 0; j < half; ++j)
            paired[j] = 0.5 * (payoff[j] + payoff[j + half]);
        payoff = std::move(paired);
    }
    const std::size_t n = payoff.size();
    const double mean = pairwise_mean(payoff);
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double d = payoff[i] - mean;
        sq[i] = d * d;
    }
    const double var = n > 1 ? pairwise_sum(sq) / double(n - 1) : 0.0;
    const double df = std::exp(-market.r * maturity);
    McEstimate est;
    est.price = df * mean;
    est.std_error = df * std::sqrt(var / double(n));
    est.n_effective = n;
    return est;
}

}  // namespace

McEstimate price_fixed(const ModelSpec& model, const MarketState& market, double strike,
                       double maturity, bool is_call, const McConfig& config) {
    if (!(strike > 0.0)) throw std::invalid_argument("mc: strike must be positive");
    const PathBatch batch = simulate_batch(model, market, maturity, config);
    std::vector<double> payoff(batch.average.size());
    for (std::size_t i = 0; i < payoff.size(); ++i) {
        const double gap = is_call ? batch.average[i] - strike : strike - batch.average[i];
        payoff[i] = gap > 0.0 ? gap : 0.0;
    }
    McEstimate est = estimate_from_payoffs(std::move(payoff), market, maturity, config.antithetic);
    OptionQuote q{strike, maturity, is_call, est.price, std::nullopt};
    est.implied_vol = try_implied_vol(q, forward_price(market, maturity), market.r);
    return est;
}

McEstimate price_floating(const ModelSpec& model, const MarketState& market, double kappa,
                          double maturity, bool is_call, const McConfig& config) {
    if (!(kappa > 0.0)) throw std::invalid_argument("mc: kappa must be positive");
    const PathBatch batch = simulate_batch(model, market, maturity, config);
    std::vector<double> payoff(batch.average.size());
    for (std::size_t i = 0; i < payoff.size(); ++i) {
        const double gap = kappa * batch.terminal[i] - batch.average[i];
        payoff[i] = (is_call ? gap : -gap) > 0.0 ? (is_call ? gap : -gap) : 0.0;
    }
    return estimate_from_payoffs(std::move(payoff), market, maturity, config.antithetic);
}

void write_path_csv(std::ostream& os, const PathBatch& batch) {
    os << "path_id,A,S_T\n";
    char buf[80];
    for (std::size_t i = 0; i < batch.average.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.12g,%.12g\n", i, batch.average[i],
                      batch.terminal[i]);
        os << buf;
    }
}

}  // namespace asianlsv
