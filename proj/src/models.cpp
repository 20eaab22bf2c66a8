#include "asianlsv/models.hpp"

#include <cmath>
#include <utility>

namespace asianlsv {

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::generic: return "generic";
        case ModelKind::sabr: return "sabr";
        case ModelKind::heston: return "heston";
        case ModelKind::tanh_lsv: return "tanh";
        case ModelKind::local_vol: return "local-vol";
    }
    return "unknown";
}

namespace {

std::function<double(double)> numeric_derivative(std::function<double(double)> f) {
    return [f = std::move(f)](double x) {
        const double h = std::max(1e-6, 1e-6 * std::abs(x));
        return (f(x + h) - f(x - h)) / (2.0 * h);
    };
}

}  // namespace

ModelSpec make_sabr(double sigma_const, double rho) {
    if (!(sigma_const > 0.0)) throw std::invalid_argument("sabr: sigma must be positive");
    if (!(rho >= -1.0 && rho <= 1.0)) throw std::invalid_argument("sabr: |rho| must be <= 1");
    ModelSpec m;
    m.kind = ModelKind::sabr;
    m.eta = [](double) { return 1.0; };
    m.eta_prime = [](double) { return 0.0; };
    m.sigma = [sigma_const](double) { return sigma_const; };
    m.sigma_prime = [](double) { return 0.0; };
    m.mu = [](double) { return 0.0; };
    m.rho = rho;
    m.p_sigma = sigma_const;
    return m;
}

ModelSpec make_heston(double kappa, double theta, double xi, double rho) {
    if (!(kappa > 0.0 && theta > 0.0 && xi > 0.0))
        throw std::invalid_argument("heston: kappa, theta, xi must be positive");
    if (!(rho >= -1.0 && rho <= 1.0)) throw std::invalid_argument("heston: |rho| must be <= 1");
    ModelSpec m;
    m.kind = ModelKind::heston;
    m.eta = [](double) { return 1.0; };
    m.eta_prime = [](double) { return 0.0; };
    m.sigma = [xi](double v) { return xi / std::sqrt(v); };
    m.sigma_prime = [xi](double v) { return -0.5 * xi / (v * std::sqrt(v)); };
    m.mu = [kappa, theta](double v) { return kappa * (theta - v) / v; };
    m.rho = rho;
    m.p_kappa = kappa;
    m.p_theta = theta;
    m.p_xi = xi;
    return m;
}

namespace {

ModelSpec tanh_eta_model(double f0, double f1, double x0, double s0) {
    if (!(s0 > 0.0)) throw std::invalid_argument("tanh: s0 must be positive");
    if (!(f0 - std::abs(f1) > 0.0))
        throw std::invalid_argument("tanh: requires f0 - |f1| > 0 so eta stays positive");
    ModelSpec m;
    m.eta = [f0, f1, x0, s0](double s) { return f0 + f1 * std::tanh(std::log(s / s0) - x0); };
    m.eta_prime = [f1, x0, s0](double s) {
        const double c = std::cosh(std::log(s / s0) - x0);
        return f1 / (c * c) / s;
    };
    m.anchor_s0 = s0;
    m.has_anchor = true;
    m.p_f0 = f0;
    m.p_f1 = f1;
    m.p_x0 = x0;
    return m;
}

}  // namespace

ModelSpec make_tanh(double f0, double f1, double x0, double s0, double sigma_const, double rho) {
    if (!(sigma_const > 0.0)) throw std::invalid_argument("tanh: sigma must be positive");
    if (!(rho >= -1.0 && rho <= 1.0)) throw std::invalid_argument("tanh: |rho| must be <= 1");
    ModelSpec m = tanh_eta_model(f0, f1, x0, s0);
    m.kind = ModelKind::tanh_lsv;
    m.sigma = [sigma_const](double) { return sigma_const; };
    m.sigma_prime = [](double) { return 0.0; };
    m.mu = [](double) { return 0.0; };
    m.rho = rho;
    m.p_sigma = sigma_const;
    return m;
}

ModelSpec make_local_vol(double f0, double f1, double x0, double s0) {
    ModelSpec m = tanh_eta_model(f0, f1, x0, s0);
    m.kind = ModelKind::local_vol;
    m.sigma = [](double) { return 0.0; };
    m.sigma_prime = [](double) { return 0.0; };
    m.mu = [](double) { return 0.0; };
    m.rho = 0.0;
    return m;
}

ModelSpec make_generic(std::function<double(double)> eta, std::function<double(double)> sigma,
                       std::function<double(double)> mu, double rho) {
    if (!(rho >= -1.0 && rho <= 1.0)) throw std::invalid_argument("generic: |rho| must be <= 1");
    ModelSpec m;
    m.kind = ModelKind::generic;
    m.eta = std::move(eta);
    m.sigma = std::move(sigma);
    m.mu = std::move(mu);
    m.eta_prime = numeric_derivative(m.eta);
    m.sigma_prime = numeric_derivative(m.sigma);
    m.rho = rho;
    return m;
}

ExpansionInputs expansion_inputs_fd(const ModelSpec& model, const MarketState& market) {
    market.validate();
    ExpansionInputs out;
    out.rho = model.rho;
    out.s0 = market.s0;
    out.v0 = market.v0;

    // Central 3-point differences in the log variable; the quadratic Taylor
    // coefficient is half the second derivative.
    auto log_taylor = [](const std::function<double(double)>& f, double level, double& c0,
                         double& c1, double& c2) {
        const double h = std::max(1e-4, 1e-4 * std::abs(std::log(level)));
        const double fm = f(level * std::exp(-h));
        const double f0 = f(level);
        const double fp = f(level * std::exp(h));
        if (!std::isfinite(fm) || !std::isfinite(f0) || !std::isfinite(fp))
            throw std::runtime_error("expansion_inputs: model evaluation failed");
        c0 = f0;
        c1 = (fp - fm) / (2.0 * h);
        c2 = 0.5 * (fp - 2.0 * f0 + fm) / (h * h);
    };

    log_taylor(model.eta, market.s0, out.eta0, out.eta1, out.eta2);
    log_taylor(model.sigma, market.v0, out.sigma0, out.sigma1, out.sigma2);
    if (model.kind == ModelKind::local_vol) out.sigma0 = out.sigma1 = out.sigma2 = 0.0;
    out.validate();
    return out;
}

ExpansionInputs expansion_inputs(const ModelSpec& model, const MarketState& market) {
    market.validate();
    ExpansionInputs out;
    out.rho = model.rho;
    out.s0 = market.s0;
    out.v0 = market.v0;

    const bool anchored = !model.has_anchor || model.anchor_s0 == market.s0;

    switch (model.kind) {
        case ModelKind::sabr:
            out.eta0 = 1.0;
            out.eta1 = out.eta2 = 0.0;
            out.sigma0 = model.p_sigma;
            out.sigma1 = out.sigma2 = 0.0;
            break;
        case ModelKind::heston: {
            const double s = model.p_xi / std::sqrt(market.v0);
            out.eta0 = 1.0;
            out.eta1 = out.eta2 = 0.0;
            out.sigma0 = s;
            out.sigma1 = -0.5 * s;
            out.sigma2 = 0.125 * s;  // from sigma(v) = xi v^{-1/2} = sigma0 e^{-u/2}
            break;
        }
        case ModelKind::tanh_lsv:
        case ModelKind::local_vol: {
            if (!anchored) return expansion_inputs_fd(model, market);
            const double th = std::tanh(model.p_x0);
            const double ch = std::cosh(model.p_x0);
            out.eta0 = model.p_f0 - model.p_f1 * th;
            out.eta1 = model.p_f1 / (ch * ch);
            out.eta2 = out.eta1 * th;
            if (model.kind == ModelKind::tanh_lsv) {
                out.sigma0 = model.p_sigma;
                out.sigma1 = out.sigma2 = 0.0;
            } else {
                out.sigma0 = out.sigma1 = out.sigma2 = 0.0;
            }
            break;
        }
        case ModelKind::generic:
            return expansion_inputs_fd(model, market);
    }
    out.validate();
    return out;
}

}  // namespace asianlsv
