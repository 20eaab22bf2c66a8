#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "asianlsv/black_scholes.hpp"
#include "asianlsv/models.hpp"

namespace asianlsv {

enum class AssetScheme { euler, log_euler };
enum class VarianceScheme { auto_select, exact_gbm, full_truncation, generic_euler };
enum class Averaging { left_rectangle, trapezoid };

struct McConfig {
    std::size_t n_paths = 100000;
    std::size_t n_steps = 200;
    std::uint64_t seed = 1;
    AssetScheme asset_scheme = AssetScheme::euler;
    VarianceScheme variance_scheme = VarianceScheme::auto_select;
    Averaging averaging = Averaging::trapezoid;
    bool antithetic = false;
    unsigned n_threads = 0;  // 0 -> hardware concurrency

    void validate() const {
        if (n_paths < 2) throw std::invalid_argument("mc: n_paths must be >= 2");
        if (n_steps < 1) throw std::invalid_argument("mc: n_steps must be >= 1");
        if (antithetic && n_paths % 2 != 0)
            throw std::invalid_argument("mc: antithetic pairing needs an even n_paths");
    }
};

struct McEstimate {
    double price = 0.0;
    double std_error = 0.0;
    std::optional<double> implied_vol;
    std::size_t n_effective = 0;
};

// Per-path running average of S over [0, T] and terminal S_T.
struct PathBatch {
    std::vector<double> average;
    std::vector<double> terminal;
};

PathBatch simulate_batch(const ModelSpec& model, const MarketState& market, double maturity,
                         const McConfig& config);

McEstimate price_fixed(const ModelSpec& model, const MarketState& market, double strike,
                       double maturity, bool is_call, const McConfig& config);

McEstimate price_floating(const ModelSpec& model, const MarketState& market, double kappa,
                          double maturity, bool is_call, const McConfig& config);

// Debug dump, columns path_id,A,S_T.
void write_path_csv(std::ostream& os, const PathBatch& batch);

// Order-independent mean/variance helpers (pairwise summation over a fixed
// index order, so results do not depend on the thread count).
double pairwise_sum(const std::vector<double>& v);
double pairwise_mean(const std::vector<double>& v);

}  // namespace asianlsv
