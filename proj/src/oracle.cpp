#include "asianlsv/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace asianlsv {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Second-order derivative estimates on a uniform grid: centered in the
// interior, one-sided 3-point at the endpoints.
void fd_derivatives(const std::vector<double>& f, double dt, std::vector<double>& d) {
    const std::size_t n = f.size() - 1;
    d.resize(n + 1);
    d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dt);
    for (std::size_t i = 1; i < n; ++i) d[i] = (f[i + 1] - f[i - 1]) / (2.0 * dt);
    d[n] = (3.0 * f[n] - 4.0 * f[n - 1] + f[n - 2]) / (2.0 * dt);
}

// Accumulate W_i * a_i against the transpose of the derivative stencil.
// add(j, v) receives node index j.
template <typename Add>
void fd_transpose(const std::vector<double>& wa, double dt, Add&& add) {
    const std::size_t n = wa.size() - 1;
    {
        const double c = wa[0] / (2.0 * dt);
        add(0, -3.0 * c);
        add(1, 4.0 * c);
        add(2, -c);
    }
    for (std::size_t i = 1; i < n; ++i) {
        const double c = wa[i] / (2.0 * dt);
        add(i + 1, c);
        add(i - 1, -c);
    }
    {
        const double c = wa[n] / (2.0 * dt);
        add(n, 3.0 * c);
        add(n - 1, -4.0 * c);
        add(n - 2, c);
    }
}

double trapezoid_weight(std::size_t i, std::size_t n) { return (i == 0 || i == n) ? 0.5 : 1.0; }

// ---------------------------------------------------------------------------
// L-BFGS with a strong-Wolfe line search.
// ---------------------------------------------------------------------------

using EvalFn = std::function<double(const std::vector<double>&, std::vector<double>&)>;
using PrecondFn = std::function<void(std::vector<double>&)>;

double inf_norm(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

// Inverse of the path Laplacian (Dirichlet at t=0, Neumann at t=1), applied
// blockwise to the unknown vector. Equalizes the O(n^2) spread of the
// difference operator's spectrum, which otherwise stalls L-BFGS.
struct LaplacianPrecond {
    int n = 0;        // unknowns per block
    int blocks = 1;

    void apply(std::vector<double>& v) const {
        // Solve T u = v with T = tridiag(-1, 2, -1), last row (-1, 1), via
        // the Thomas algorithm, for each block.
        for (int b = 0; b < blocks; ++b) {
            double* x = v.data() + std::size_t(b) * n;
            std::vector<double> cp(n);
            double beta = 2.0;
            cp[0] = -1.0 / beta;
            x[0] /= beta;
            for (int i = 1; i < n; ++i) {
                const double diag = (i == n - 1) ? 1.0 : 2.0;
                beta = diag + cp[i - 1];
                cp[i] = -1.0 / beta;
                x[i] = (x[i] + x[i - 1]) / beta;
            }
            for (int i = n - 2; i >= 0; --i) x[i] -= cp[i] * x[i + 1];
        }
    }
};

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

struct LbfgsResult {
    int iterations = 0;
    double grad_norm = kInf;
    double value = kInf;
};

LbfgsResult lbfgs_minimize(const EvalFn& fn, std::vector<double>& z, double gtol, int max_iter,
                           const PrecondFn& precond = nullptr) {
    const std::size_t n = z.size();
    const int m = 10;
    std::vector<std::vector<double>> s_hist, y_hist;
    std::vector<double> rho_hist;

    std::vector<double> grad(n), grad_new(n), d(n), z_new(n);
    double f = fn(z, grad);
    LbfgsResult res;

    for (int iter = 0; iter < max_iter; ++iter) {
        res.grad_norm = inf_norm(grad);
        res.value = f;
        res.iterations = iter;
        if (res.grad_norm <= gtol || !std::isfinite(f)) return res;

        // Two-loop recursion with H0 = gamma * P.
        d = grad;
        std::vector<double> alpha(s_hist.size());
        for (std::size_t k = s_hist.size(); k-- > 0;) {
            alpha[k] = rho_hist[k] * dot(s_hist[k], d);
            for (std::size_t i = 0; i < n; ++i) d[i] -= alpha[k] * y_hist[k][i];
        }
        if (precond) precond(d);
        if (!s_hist.empty()) {
            const auto& sb = s_hist.back();
            auto py = y_hist.back();
            if (precond) precond(py);
            const double gamma = dot(sb, y_hist.back()) / std::max(dot(y_hist.back(), py), 1e-300);
            for (auto& v : d) v *= gamma;
        }
        for (std::size_t k = 0; k < s_hist.size(); ++k) {
            const double beta = rho_hist[k] * dot(y_hist[k], d);
            for (std::size_t i = 0; i < n; ++i) d[i] += s_hist[k][i] * (alpha[k] - beta);
        }
        for (auto& v : d) v = -v;

        double dg = dot(grad, d);
        if (dg >= 0.0) {  // not a descent direction; restart from steepest descent
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            for (std::size_t i = 0; i < n; ++i) d[i] = -grad[i];
            dg = dot(grad, d);
            if (dg >= 0.0) return res;
        }

        // Strong Wolfe line search (bracket + bisection zoom).
        const double c1 = 1e-4, c2 = 0.9;
        double lo = 0.0, hi = kInf;
        double alpha_t = 1.0;
        double f_new = f;
        bool ok = false;
        for (int ls = 0; ls < 50; ++ls) {
            for (std::size_t i = 0; i < n; ++i) z_new[i] = z[i] + alpha_t * d[i];
            f_new = fn(z_new, grad_new);
            if (!std::isfinite(f_new) || f_new > f + c1 * alpha_t * dg) {
                hi = alpha_t;
            } else {
                const double dg_new = dot(grad_new, d);
                if (std::abs(dg_new) <= -c2 * dg) {
                    ok = true;
                    break;
                }
                if (dg_new >= 0.0) {
                    hi = alpha_t;
                } else {
                    lo = alpha_t;
                }
            }
            alpha_t = std::isfinite(hi) ? 0.5 * (lo + hi) : 2.0 * alpha_t;
            if (alpha_t < 1e-16) break;
        }
        if (!ok && (!std::isfinite(f_new) || f_new >= f)) {
            // No acceptable step; report current point.
            return res;
        }

        std::vector<double> s_vec(n), y_vec(n);
        for (std::size_t i = 0; i < n; ++i) {
            s_vec[i] = z_new[i] - z[i];
            y_vec[i] = grad_new[i] - grad[i];
        }
        const double sy = dot(s_vec, y_vec);
        if (sy > 1e-12 * std::sqrt(dot(s_vec, s_vec)) * std::sqrt(dot(y_vec, y_vec))) {
            s_hist.push_back(std::move(s_vec));
            y_hist.push_back(std::move(y_vec));
            rho_hist.push_back(1.0 / sy);
            if ((int)s_hist.size() > m) {
                s_hist.erase(s_hist.begin());
                y_hist.erase(y_hist.begin());
                rho_hist.erase(rho_hist.begin());
            }
        }
        z.swap(z_new);
        grad.swap(grad_new);
        f = f_new;
    }
    res.value = f;
    res.grad_norm = inf_norm(grad);
    res.iterations = max_iter;
    return res;
}

// ---------------------------------------------------------------------------
// Discretized functionals.
// ---------------------------------------------------------------------------

struct Functional2D {
    const ModelSpec* model;
    double log_s0, log_v0;
    int n;  // intervals
    double dt;

    // Unknowns: g_1..g_n, h_1..h_n.
    double eval(const std::vector<double>& z, std::vector<double>* grad_out) const {
        const double rho = model->rho;
        const double pref = 1.0 / (1.0 - rho * rho);
        std::vector<double> G(n + 1), H(n + 1);
        G[0] = log_s0;
        H[0] = log_v0;
        for (int i = 1; i <= n; ++i) {
            G[i] = z[i - 1];
            H[i] = z[n + i - 1];
        }
        std::vector<double> gd, hd;
        fd_derivatives(G, dt, gd);
        fd_derivatives(H, dt, hd);

        double value = 0.0;
        std::vector<double> wa_g(n + 1), wa_h(n + 1);
        if (grad_out) grad_out->assign(2 * n, 0.0);

        for (int i = 0; i <= n; ++i) {
            const double s = std::exp(G[i]);
            const double v = std::exp(H[i]);
            const double eta = model->eta(s);
            const double sig = model->sigma(v);
            if (!(eta > 0.0) || !(sig > 0.0)) return kInf;
            const double sq = std::sqrt(v);
            const double invE = 1.0 / (eta * sq);
            const double P = gd[i] * invE - rho * hd[i] / sig;
            const double Q = hd[i] / sig;
            const double w = trapezoid_weight(i, n) * dt;
            value += w * (0.5 * pref * P * P + 0.5 * Q * Q);
            if (!grad_out) continue;

            const double etap_s = model->eta_prime(s) * s;   // d eta / d log S
            const double sigp_v = model->sigma_prime(v) * v; // d sigma / d log V
            wa_g[i] = w * pref * P * invE;
            wa_h[i] = w * (-pref * rho * P / sig + Q / sig);
            // Direct state dependence.
            const double dP_dg = -gd[i] * etap_s * invE / eta;
            const double dP_dh = -0.5 * gd[i] * invE + rho * hd[i] * sigp_v / (sig * sig);
            const double dQ_dh = -hd[i] * sigp_v / (sig * sig);
            if (i >= 1) {
                (*grad_out)[i - 1] += w * pref * P * dP_dg;
                (*grad_out)[n + i - 1] += w * (pref * P * dP_dh + Q * dQ_dh);
            }
        }
        if (grad_out) {
            auto add_g = [&](std::size_t j, double v) {
                if (j >= 1) (*grad_out)[j - 1] += v;
            };
            auto add_h = [&](std::size_t j, double v) {
                if (j >= 1) (*grad_out)[n + j - 1] += v;
            };
            fd_transpose(wa_g, dt, add_g);
            fd_transpose(wa_h, dt, add_h);
        }
        return value;
    }

    // Fixed: (trapezoid of e^g) - K. Floating: (trapezoid of e^g) - kappa e^{g(1)}.
    double constraint(const std::vector<double>& z, std::vector<double>* grad_out, double strike,
                      double kappa) const {
        std::vector<double> G(n + 1);
        G[0] = log_s0;
        for (int i = 1; i <= n; ++i) G[i] = z[i - 1];
        if (grad_out) grad_out->assign(2 * n, 0.0);
        double c = 0.0;
        for (int i = 0; i <= n; ++i) {
            const double w = trapezoid_weight(i, n) * dt;
            const double e = std::exp(G[i]);
            c += w * e;
            if (grad_out && i >= 1) (*grad_out)[i - 1] = w * e;
        }
        if (kappa > 0.0) {
            const double e = std::exp(G[n]);
            c -= kappa * e;
            if (grad_out) (*grad_out)[n - 1] -= kappa * e;
        } else {
            c -= strike;
        }
        return c;
    }
};

struct Functional1D {
    std::function<double(double)> w_fn;   // local volatility w(S)
    std::function<double(double)> wp_fn;  // w'(S)
    double log_s0;
    int n;
    double dt;

    double eval(const std::vector<double>& z, std::vector<double>* grad_out) const {
        std::vector<double> G(n + 1);
        G[0] = log_s0;
        for (int i = 1; i <= n; ++i) G[i] = z[i - 1];
        std::vector<double> gd;
        fd_derivatives(G, dt, gd);
        double value = 0.0;
        std::vector<double> wa(n + 1);
        if (grad_out) grad_out->assign(n, 0.0);
        for (int i = 0; i <= n; ++i) {
            const double s = std::exp(G[i]);
            const double wv = w_fn(s);
            if (!(wv > 0.0)) return kInf;
            const double w = trapezoid_weight(i, n) * dt;
            const double r = gd[i] / wv;
            value += 0.5 * w * r * r;
            if (!grad_out) continue;
            wa[i] = w * r / wv;
            if (i >= 1) (*grad_out)[i - 1] += -w * r * r * wp_fn(s) * s / wv;
        }
        if (grad_out) {
            auto add = [&](std::size_t j, double v) {
                if (j >= 1) (*grad_out)[j - 1] += v;
            };
            fd_transpose(wa, dt, add);
        }
        return value;
    }

    double constraint(const std::vector<double>& z, std::vector<double>* grad_out,
                      double strike) const {
        std::vector<double> G(n + 1);
        G[0] = log_s0;
        for (int i = 1; i <= n; ++i) G[i] = z[i - 1];
        if (grad_out) grad_out->assign(n, 0.0);
        double c = -strike;
        for (int i = 0; i <= n; ++i) {
            const double w = trapezoid_weight(i, n) * dt;
            const double e = std::exp(G[i]);
            c += w * e;
            if (grad_out && i >= 1) (*grad_out)[i - 1] = w * e;
        }
        return c;
    }
};

// ---------------------------------------------------------------------------
// Augmented-Lagrangian driver (penalty doubling + multiplier updates).
// ---------------------------------------------------------------------------

struct ConstrainedFns {
    std::function<double(const std::vector<double>&, std::vector<double>*)> objective;
    std::function<double(const std::vector<double>&, std::vector<double>*)> constraint;
};

struct AlResult {
    std::vector<double> z;
    double lambda = 0.0;
    double constraint_value = 0.0;
    double objective_value = 0.0;
    bool converged = false;
    int iterations = 0;
};

AlResult augmented_lagrangian(const ConstrainedFns& fns, std::vector<double> z0, double lambda0,
                              double constraint_scale, const OracleOptions& opt,
                              const PrecondFn& precond = nullptr) {
    AlResult out;
    out.z = std::move(z0);
    out.lambda = lambda0;
    double mu = 10.0;
    double best_viol = kInf;

    std::vector<double> gc;
    int stalls = 0;
    for (int outer = 0; outer < opt.max_outer; ++outer) {
        const double inner_tol =
            std::max(opt.tol_gradient, 1e-3 * std::pow(0.25, outer));
        EvalFn merit = [&](const std::vector<double>& z, std::vector<double>& grad) {
            std::vector<double> gf;
            const double f = fns.objective(z, &gf);
            if (!std::isfinite(f)) {
                grad.assign(z.size(), 0.0);
                return f;
            }
            const double c = fns.constraint(z, &gc);
            const double mult = out.lambda + mu * c;
            grad.resize(z.size());
            for (std::size_t i = 0; i < z.size(); ++i) grad[i] = gf[i] + mult * gc[i];
            return f + out.lambda * c + 0.5 * mu * c * c;
        };
        const LbfgsResult lr = lbfgs_minimize(merit, out.z, inner_tol, opt.max_inner, precond);
        out.iterations += lr.iterations;

        out.constraint_value = fns.constraint(out.z, nullptr);
        const double viol = std::abs(out.constraint_value);
        if (viol <= opt.tol_constraint * constraint_scale && lr.grad_norm <= opt.tol_gradient) {
            out.lambda += mu * out.constraint_value;
            out.converged = true;
            break;
        }
        if (viol <= 0.25 * best_viol) {
            out.lambda += mu * out.constraint_value;
            best_viol = viol;
        } else {
            mu *= 2.0;
            if (mu > 1e14) break;
        }
        stalls = lr.iterations == 0 ? stalls + 1 : 0;
        if (stalls >= 3 || out.iterations > 60000) break;
    }
    out.objective_value = fns.objective(out.z, nullptr);
    return out;
}

// Two-stage Richardson extrapolation assuming leading errors h^2 then h^3
// for grids n, 2n, 4n.
double richardson(const std::vector<double>& rates) {
    if (rates.size() < 3) return rates.back();
    const double a = rates[rates.size() - 3];
    const double b = rates[rates.size() - 2];
    const double c = rates[rates.size() - 1];
    const double ab = (4.0 * b - a) / 3.0;
    const double bc = (4.0 * c - b) / 3.0;
    return (8.0 * bc - ab) / 7.0;
}

std::vector<double> refine_to_grid(const std::vector<double>& coarse, int n_coarse, int n_fine,
                                   double boundary) {
    // Nodal values g_1..g_n; linear interpolation in t.
    auto value_at = [&](double t) {
        const double pos = t * n_coarse;
        const int k = std::min(n_coarse - 1, std::max(0, int(pos)));
        const double frac = pos - k;
        const double vk = k == 0 ? boundary : coarse[k - 1];
        const double vk1 = coarse[k];
        return vk + frac * (vk1 - vk);
    };
    std::vector<double> fine(n_fine);
    for (int i = 1; i <= n_fine; ++i) fine[i - 1] = value_at(double(i) / n_fine);
    return fine;
}

}  // namespace

double lambda_functional(const DiscretePathPair& paths, const ModelSpec& model) {
    if (std::abs(model.rho) >= 1.0)
        throw std::invalid_argument("lambda_functional: requires |rho| < 1");
    const std::size_t n = paths.g.size() - 1;
    if (paths.g.size() < 3 || paths.h.size() != paths.g.size())
        throw std::invalid_argument("lambda_functional: needs >= 3 nodes and matching g, h");
    Functional2D f;
    f.model = &model;
    f.log_s0 = paths.g[0];
    f.log_v0 = paths.h[0];
    f.n = int(n);
    f.dt = 1.0 / double(n);
    std::vector<double> z(2 * n);
    for (std::size_t i = 1; i <= n; ++i) {
        z[i - 1] = paths.g[i];
        z[n + i - 1] = paths.h[i];
    }
    const double v = f.eval(z, nullptr);
    if (!std::isfinite(v))
        throw std::domain_error("lambda_functional: vanishing eta or sigma along the path");
    return v;
}

namespace {

DiscretePathPair make_paths(double log_s0, double log_v0, const std::vector<double>& z, int n) {
    DiscretePathPair p;
    p.t.resize(n + 1);
    p.g.resize(n + 1);
    p.h.resize(n + 1);
    p.g[0] = log_s0;
    p.h[0] = log_v0;
    const bool has_h = int(z.size()) == 2 * n;
    for (int i = 0; i <= n; ++i) p.t[i] = double(i) / n;
    for (int i = 1; i <= n; ++i) {
        p.g[i] = z[i - 1];
        p.h[i] = has_h ? z[n + i - 1] : log_v0;
    }
    return p;
}

OracleSolution solve_2d(const ModelSpec& model, const MarketState& market, double target,
                        double kappa, const OracleOptions& opt) {
    market.validate();
    const ExpansionInputs inputs = expansion_inputs(model, market);
    if (!(inputs.sigma0 > 0.0))
        throw std::invalid_argument("solve_fixed: sigma(V0) must be positive (use lv_rate)");
    if (std::abs(model.rho) >= 1.0)
        throw std::invalid_argument("solve_fixed: requires |rho| < 1 (use rho_pm_rate)");

    const bool floating = kappa > 0.0;
    const double x_total = floating ? std::log(kappa) : std::log(target / market.s0);
    if (std::abs(x_total) < 1e-12)
        throw std::invalid_argument("oracle: strictly OTM/ITM required (x != 0)");

    const PathSeries series = optimal_paths(inputs);

    // Homotopy ladder in x.
    std::vector<double> ladder{x_total};
    while (std::abs(ladder.back()) > opt.homotopy_threshold) ladder.push_back(ladder.back() / 2.0);
    std::reverse(ladder.begin(), ladder.end());

    OracleSolution sol;
    std::vector<double> rates;
    bool all_converged = true;
    std::vector<double> z_prev;
    int n_prev = 0;

    for (std::size_t gi = 0; gi < opt.grid_sizes.size(); ++gi) {
        const int n = opt.grid_sizes[gi] - 1;
        if (n < 2) throw std::invalid_argument("oracle: grids need at least 3 nodes");
        Functional2D f;
        f.model = &model;
        f.log_s0 = std::log(market.s0);
        f.log_v0 = std::log(market.v0);
        f.n = n;
        f.dt = 1.0 / n;

        AlResult al;
        for (std::size_t li = 0; li < ladder.size(); ++li) {
            const double x = ladder[li];
            std::vector<double> z0(2 * n);
            if (li == 0 && gi == 0) {
                for (int i = 1; i <= n; ++i) {
                    const PathPoint p = path_at(series, x, double(i) / n);
                    z0[i - 1] = p.g;
                    z0[n + i - 1] = p.h;
                }
            } else if (li == 0) {
                const int np = n_prev;
                std::vector<double> gpart(z_prev.begin(), z_prev.begin() + np);
                std::vector<double> hpart(z_prev.begin() + np, z_prev.end());
                auto gf = refine_to_grid(gpart, np, n, f.log_s0);
                auto hf = refine_to_grid(hpart, np, n, f.log_v0);
                std::copy(gf.begin(), gf.end(), z0.begin());
                std::copy(hf.begin(), hf.end(), z0.begin() + n);
            } else {
                const double scale = x / ladder[li - 1];
                for (int i = 0; i < n; ++i) {
                    z0[i] = f.log_s0 + scale * (al.z[i] - f.log_s0);
                    z0[n + i] = f.log_v0 + scale * (al.z[n + i] - f.log_v0);
                }
            }
            const double strike_x = floating ? 0.0 : market.s0 * std::exp(x);
            const double kappa_x = floating ? std::exp(x) : 0.0;
            ConstrainedFns fns;
            fns.objective = [&f](const std::vector<double>& z, std::vector<double>* g) {
                return f.eval(z, g);
            };
            fns.constraint = [&f, strike_x, kappa_x](const std::vector<double>& z,
                                                     std::vector<double>* g) {
                return f.constraint(z, g, strike_x, kappa_x);
            };
            LaplacianPrecond lp{n, 2};
            al = augmented_lagrangian(fns, std::move(z0), lambda_at(series, x),
                                      std::max(1.0, market.s0), opt,
                                      [lp](std::vector<double>& v) { lp.apply(v); });
            sol.n_iterations += al.iterations;
        }
        all_converged = all_converged && al.converged;
        rates.push_back(al.objective_value);
        if (gi + 1 == opt.grid_sizes.size()) {
            sol.paths = make_paths(f.log_s0, f.log_v0, al.z, n);
            sol.constraint_residual = al.constraint_value;
            sol.lagrange_lambda = al.lambda;
        }
        z_prev = al.z;
        n_prev = n;
    }
    sol.rate = std::max(0.0, richardson(rates));
    sol.converged = all_converged;
    return sol;
}

OracleSolution solve_1d(const std::function<double(double)>& w_fn,
                        const std::function<double(double)>& wp_fn, double s0, double strike,
                        const OracleOptions& opt) {
    if (!(s0 > 0.0) || !(strike > 0.0))
        throw std::invalid_argument("oracle: s0 and strike must be positive");
    const double x_total = std::log(strike / s0);
    if (std::abs(x_total) < 1e-12)
        throw std::invalid_argument("oracle: strictly OTM/ITM required (x != 0)");

    // Warm start from the frozen-variance series of the effective local vol.
    ModelSpec lv;
    lv.kind = ModelKind::generic;
    lv.eta = w_fn;
    lv.eta_prime = wp_fn;
    lv.sigma = [](double) { return 0.0; };
    lv.sigma_prime = [](double) { return 0.0; };
    lv.mu = [](double) { return 0.0; };
    MarketState mkt;
    mkt.s0 = s0;
    mkt.v0 = 1.0;
    const ExpansionInputs inputs = expansion_inputs_fd(lv, mkt);
    const PathSeries series = optimal_paths(inputs);

    std::vector<double> ladder{x_total};
    while (std::abs(ladder.back()) > opt.homotopy_threshold) ladder.push_back(ladder.back() / 2.0);
    std::reverse(ladder.begin(), ladder.end());

    OracleSolution sol;
    std::vector<double> rates;
    bool all_converged = true;
    std::vector<double> z_prev;
    int n_prev = 0;

    for (std::size_t gi = 0; gi < opt.grid_sizes.size(); ++gi) {
        const int n = opt.grid_sizes[gi] - 1;
        Functional1D f;
        f.w_fn = w_fn;
        f.wp_fn = wp_fn;
        f.log_s0 = std::log(s0);
        f.n = n;
        f.dt = 1.0 / n;

        AlResult al;
        for (std::size_t li = 0; li < ladder.size(); ++li) {
            const double x = ladder[li];
            std::vector<double> z0(n);
            if (li == 0 && gi == 0) {
                for (int i = 1; i <= n; ++i) z0[i - 1] = path_at(series, x, double(i) / n).g;
            } else if (li == 0) {
                z0 = refine_to_grid(z_prev, n_prev, n, f.log_s0);
            } else {
                const double scale = x / ladder[li - 1];
                for (int i = 0; i < n; ++i) z0[i] = f.log_s0 + scale * (al.z[i] - f.log_s0);
            }
            const double strike_x = s0 * std::exp(x);
            ConstrainedFns fns;
            fns.objective = [&f](const std::vector<double>& z, std::vector<double>* g) {
                return f.eval(z, g);
            };
            fns.constraint = [&f, strike_x](const std::vector<double>& z, std::vector<double>* g) {
                return f.constraint(z, g, strike_x);
            };
            LaplacianPrecond lp{n, 1};
            al = augmented_lagrangian(fns, std::move(z0), lambda_at(series, x), std::max(1.0, s0),
                                      opt, [lp](std::vector<double>& v) { lp.apply(v); });
            sol.n_iterations += al.iterations;
        }
        all_converged = all_converged && al.converged;
        rates.push_back(al.objective_value);
        if (gi + 1 == opt.grid_sizes.size()) {
            sol.paths = make_paths(f.log_s0, 0.0, al.z, n);
            sol.constraint_residual = al.constraint_value;
            sol.lagrange_lambda = al.lambda;
        }
        z_prev = al.z;
        n_prev = n;
    }
    sol.rate = std::max(0.0, richardson(rates));
    sol.converged = all_converged;
    return sol;
}

}  // namespace

OracleSolution solve_fixed(const ModelSpec& model, const MarketState& market, double strike,
                           const OracleOptions& options) {
    if (!(strike > 0.0)) throw std::invalid_argument("solve_fixed: strike must be positive");
    return solve_2d(model, market, strike, 0.0, options);
}

OracleSolution solve_floating(const ModelSpec& model, const MarketState& market, double kappa,
                              const OracleOptions& options) {
    if (!(kappa > 0.0)) throw std::invalid_argument("solve_floating: kappa must be positive");
    return solve_2d(model, market, 0.0, kappa, options);
}

std::pair<double, double> el_residual(const DiscretePathPair& paths, double lagrange_lambda,
                                      const ModelSpec& model) {
    if (std::abs(model.rho) >= 1.0) throw std::invalid_argument("el_residual: requires |rho| < 1");
    const std::size_t n = paths.g.size() - 1;
    if (paths.g.size() < 3) throw std::invalid_argument("el_residual: needs >= 3 nodes");
    const double dt = 1.0 / double(n);
    const double rho = model.rho;
    const double pref = 1.0 / (1.0 - rho * rho);

    std::vector<double> gd, hd;
    fd_derivatives(paths.g, dt, gd);
    fd_derivatives(paths.h, dt, hd);

    std::vector<double> pg(n + 1), ph(n + 1), rhs_g(n + 1), rhs_h(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
        const double s = std::exp(paths.g[i]);
        const double v = std::exp(paths.h[i]);
        const double eta = model.eta(s);
        const double sig = model.sigma(v);
        if (!(eta > 0.0) || !(sig > 0.0))
            throw std::domain_error("el_residual: vanishing eta or sigma along the path");
        const double sq = std::sqrt(v);
        const double etap_s = model.eta_prime(s) * s;
        const double sigp_v = model.sigma_prime(v) * v;

        pg[i] = pref * gd[i] / (eta * eta * v) - pref * rho * hd[i] / (eta * sq * sig);
        ph[i] = pref * hd[i] / (sig * sig) - pref * rho * gd[i] / (eta * sq * sig);
        rhs_g[i] = -pref * gd[i] * gd[i] * etap_s / (eta * eta * eta * v) +
                   pref * rho * gd[i] * hd[i] * etap_s / (eta * eta * sq * sig) +
                   lagrange_lambda * s;
        rhs_h[i] = -0.5 * pref * gd[i] * gd[i] / (eta * eta * v) -
                   pref * hd[i] * hd[i] * sigp_v / (sig * sig * sig) +
                   pref * rho * gd[i] * hd[i] * sigp_v / (eta * sq * sig * sig) +
                   0.5 * pref * rho * gd[i] * hd[i] / (eta * sq * sig);
    }
    std::vector<double> dpg, dph;
    fd_derivatives(pg, dt, dpg);
    fd_derivatives(ph, dt, dph);
    double rg = 0.0, rh = 0.0;
    for (std::size_t i = 1; i < n; ++i) {
        rg = std::max(rg, std::abs(dpg[i] - rhs_g[i]));
        rh = std::max(rh, std::abs(dph[i] - rhs_h[i]));
    }
    return {rg, rh};
}

std::pair<double, double> el_residual_series(const PathSeries& series,
                                             const ExpansionInputs& in, double x, int n_nodes) {
    const double rho = in.rho;
    if (std::abs(rho) >= 1.0) throw std::invalid_argument("el_residual_series: |rho| < 1");
    const double pref = 1.0 / (1.0 - rho * rho);
    const double lambda = lambda_at(series, x);
    double rg = 0.0, rh = 0.0;
    for (int i = 0; i < n_nodes; ++i) {
        const double t = double(i) / (n_nodes - 1);
        const PathPoint p = path_at(series, x, t);
        const PathPoint pd = path_deriv_at(series, x, t);
        const PathPoint pdd = path_deriv2_at(series, x, t);
        const double u = p.g - series.log_s0;  // log(S/S0)
        const double w = p.h - series.log_v0;  // log(V/V0)
        const double eta = in.eta0 + in.eta1 * u + in.eta2 * u * u;
        const double sig = in.sigma0 + in.sigma1 * w + in.sigma2 * w * w;
        const double etap_s = in.eta1 + 2.0 * in.eta2 * u;   // d eta / d log S
        const double sigp_v = in.sigma1 + 2.0 * in.sigma2 * w;
        const double v = std::exp(p.h);
        const double sq = std::sqrt(v);
        const double s = std::exp(p.g);
        const double gd = pd.g, hd = pd.h, gdd = pdd.g, hdd = pdd.h;

        const double chain_gh = etap_s * gd / eta + 0.5 * hd + sigp_v * hd / sig;
        const double dpg = pref / (eta * eta * v) * (gdd - gd * (2.0 * etap_s * gd / eta + hd)) -
                           pref * rho / (eta * sq * sig) * (hdd - hd * chain_gh);
        const double dph = pref / (sig * sig) * (hdd - 2.0 * hd * hd * sigp_v / sig) -
                           pref * rho / (eta * sq * sig) * (gdd - gd * chain_gh);
        const double rhsg = -pref * gd * gd * etap_s / (eta * eta * eta * v) +
                            pref * rho * gd * hd * etap_s / (eta * eta * sq * sig) + lambda * s;
        const double rhsh = -0.5 * pref * gd * gd / (eta * eta * v) -
                            pref * hd * hd * sigp_v / (sig * sig * sig) +
                            pref * rho * gd * hd * sigp_v / (eta * sq * sig * sig) +
                            0.5 * pref * rho * gd * hd / (eta * sq * sig);
        rg = std::max(rg, std::abs(dpg - rhsg));
        rh = std::max(rh, std::abs(dph - rhsh));
    }
    return {rg, rh};
}

// ---------------------------------------------------------------------------
// rho = +-1 reduction.
// ---------------------------------------------------------------------------

namespace {

// Adaptive Simpson on [a, b].
double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol) {
    struct Impl {
        const std::function<double(double)>& f;
        double recurse(double a, double fa, double b, double fb, double m, double fm, double whole,
                       double tol, int depth) const {
            const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
            const double flm = f(lm), frm = f(rm);
            const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if (depth > 40 || std::abs(left + right - whole) < 15.0 * tol)
                return left + right + (left + right - whole) / 15.0;
            return recurse(a, fa, m, fm, lm, flm, left, 0.5 * tol, depth + 1) +
                   recurse(m, fm, b, fb, rm, frm, right, 0.5 * tol, depth + 1);
        }
    };
    const double m = 0.5 * (a + b);
    const double fa = f(a), fb = f(b), fm = f(m);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return Impl{f}.recurse(a, fa, b, fb, m, fm, whole, tol, 0);
}

// Cumulative integral of f over a uniform grid, by per-interval adaptive
// Simpson, plus monotone inversion by bisection on the cubic Hermite
// interpolant (nodal derivatives are the integrand itself).
struct CumulativeTable {
    std::vector<double> x, val, deriv;

    void build(const std::function<double(double)>& f, double lo, double hi, int nodes,
               double tol) {
        x.resize(nodes);
        val.resize(nodes);
        deriv.resize(nodes);
        const double dx = (hi - lo) / (nodes - 1);
        // Locate the anchor 0 in the grid; integrate outward from lo.
        double acc = 0.0;
        for (int i = 0; i < nodes; ++i) {
            x[i] = lo + i * dx;
            deriv[i] = f(x[i]);
            if (i > 0) acc += adaptive_simpson(f, x[i - 1], x[i], tol);
            val[i] = acc;
        }
        // Shift so the value vanishes at the anchor point 0.
        const double at0 = value(0.0);
        for (auto& v : val) v -= at0;
    }

    double value(double xi) const {
        const double dx = x[1] - x[0];
        int k = int((xi - x.front()) / dx);
        k = std::max(0, std::min(int(x.size()) - 2, k));
        const double tt = (xi - x[k]) / dx;
        const double h00 = (1 + 2 * tt) * (1 - tt) * (1 - tt);
        const double h10 = tt * (1 - tt) * (1 - tt);
        const double h01 = tt * tt * (3 - 2 * tt);
        const double h11 = tt * tt * (tt - 1);
        return h00 * val[k] + h10 * dx * deriv[k] + h01 * val[k + 1] + h11 * dx * deriv[k + 1];
    }

    // Solve value(x) = target on a monotone table by bisection to 1e-12.
    double inverse(double target, bool increasing) const {
        double lo = x.front(), hi = x.back();
        const double vlo = increasing ? val.front() : val.back();
        const double vhi = increasing ? val.back() : val.front();
        if (target <= std::min(vlo, vhi)) return increasing ? lo : hi;
        if (target >= std::max(vlo, vhi)) return increasing ? hi : lo;
        for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
            const double mid = 0.5 * (lo + hi);
            const bool below = increasing ? value(mid) < target : value(mid) > target;
            (below ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    }
};

}  // namespace

EffectiveLocalVol::EffectiveLocalVol(const ModelSpec& model, const MarketState& market, int sign)
    : s0_(market.s0), v0_(market.v0), sign_(sign), eta_(model.eta), eta_prime_(model.eta_prime),
      sigma_(model.sigma) {
    market.validate();
    if (sign != 1 && sign != -1) throw std::invalid_argument("effective_local_vol: sign is +-1");
    if (!(model.sigma(market.v0) > 0.0))
        throw std::invalid_argument("effective_local_vol: sigma must be positive");

    // Psi_S(y) = int_0^y dy'/eta(S0 e^{y'}),  y = log(S/S0)
    // Psi_V(u) = sign * int_0^u sqrt(V0) e^{u'/2} / sigma(V0 e^{u'}) du'
    CumulativeTable psi_v;
    const double s0 = s0_, v0 = v0_;
    const auto& eta = eta_;
    const auto& sigma = sigma_;
    psi_v.build([&](double u) { return std::sqrt(v0) * std::exp(0.5 * u) / sigma(v0 * std::exp(u)); },
                -12.0, 12.0, 4801, 1e-12);

    CumulativeTable psi_s;
    psi_s.build([&](double y) { return 1.0 / eta(s0 * std::exp(y)); }, -1.6, 1.6, 1601, 1e-12);

    const int m = 1601;
    y_.resize(m);
    w_.resize(m);
    psi_.resize(m);
    for (int i = 0; i < m; ++i) {
        y_[i] = -1.6 + 3.2 * i / (m - 1);
        psi_[i] = psi_s.value(y_[i]);
        const double target = double(sign_) * psi_[i];
        const double u = psi_v.inverse(target, /*increasing=*/true);
        w_[i] = v0 * std::exp(u);
    }
}

double EffectiveLocalVol::w_at(double y) const {
    const double dx = y_[1] - y_[0];
    double yc = std::min(std::max(y, y_.front()), y_.back());
    int k = int((yc - y_.front()) / dx);
    k = std::max(0, std::min(int(y_.size()) - 2, k));
    const double tt = (yc - y_[k]) / dx;
    // Hermite with exact nodal derivatives dW/dy = sign sqrt(W) sigma(W) / eta(S).
    auto slope = [&](int j) {
        const double s = s0_ * std::exp(y_[j]);
        const double w = std::max(w_[j], 0.0);
        return double(sign_) * std::sqrt(w) * sigma_(std::max(w, 1e-300)) / eta_(s);
    };
    const double d0 = slope(k), d1 = slope(k + 1);
    const double h00 = (1 + 2 * tt) * (1 - tt) * (1 - tt);
    const double h10 = tt * (1 - tt) * (1 - tt);
    const double h01 = tt * tt * (3 - 2 * tt);
    const double h11 = tt * tt * (tt - 1);
    return h00 * w_[k] + h10 * dx * d0 + h01 * w_[k + 1] + h11 * dx * d1;
}

double EffectiveLocalVol::value(double s) const {
    const double w = w_at(std::log(s / s0_));
    return eta_(s) * std::sqrt(std::max(w, 1e-300));
}

double EffectiveLocalVol::derivative(double s) const {
    const double w = std::max(w_at(std::log(s / s0_)), 1e-300);
    return eta_prime_(s) * std::sqrt(w) + double(sign_) * sigma_(w) / (2.0 * s);
}

double EffectiveLocalVol::f_map(double v) const {
    // Locate y with Psi_S(y) = sign * Psi_V(log(v/V0)); both tables are in
    // psi_ (monotone increasing in y).
    const double u = std::log(v / v0_);
    const auto& sigma = sigma_;
    const double v0 = v0_;
    const double target =
        double(sign_) *
        adaptive_simpson(
            [&](double uu) { return std::sqrt(v0) * std::exp(0.5 * uu) / sigma(v0 * std::exp(uu)); },
            0.0, u, 1e-12);
    // bisection on psi_ table
    int lo = 0, hi = int(y_.size()) - 1;
    if (target <= psi_[lo]) return s0_ * std::exp(y_[lo]);
    if (target >= psi_[hi]) return s0_ * std::exp(y_[hi]);
    double ylo = y_[lo], yhi = y_[hi];
    auto psi_at = [&](double y) {
        const double dx = y_[1] - y_[0];
        int k = std::max(0, std::min(int(y_.size()) - 2, int((y - y_.front()) / dx)));
        const double tt = (y - y_[k]) / dx;
        const double d0 = 1.0 / eta_(s0_ * std::exp(y_[k]));
        const double d1 = 1.0 / eta_(s0_ * std::exp(y_[k + 1]));
        const double h00 = (1 + 2 * tt) * (1 - tt) * (1 - tt);
        const double h10 = tt * (1 - tt) * (1 - tt);
        const double h01 = tt * tt * (3 - 2 * tt);
        const double h11 = tt * tt * (tt - 1);
        return h00 * psi_[k] + h10 * dx * d0 + h01 * psi_[k + 1] + h11 * dx * d1;
    };
    for (int it = 0; it < 200 && yhi - ylo > 1e-12; ++it) {
        const double mid = 0.5 * (ylo + yhi);
        (psi_at(mid) < target ? ylo : yhi) = mid;
    }
    return s0_ * std::exp(0.5 * (ylo + yhi));
}

double EffectiveLocalVol::f_inverse(double s) const { return w_at(std::log(s / s0_)); }

OracleSolution lv_rate(const ModelSpec& model, double s0, double strike,
                       const OracleOptions& options) {
    if (model.sigma && model.sigma(1.0) != 0.0)
        throw std::invalid_argument("lv_rate: requires a sigma == 0 model");
    return solve_1d(model.eta, model.eta_prime, s0, strike, options);
}

OracleSolution rho_pm_rate(const ModelSpec& model, const MarketState& market, double strike,
                           int sign, const OracleOptions& options) {
    const EffectiveLocalVol elv(model, market, sign);
    auto w_fn = [elv](double s) { return elv.value(s); };
    auto wp_fn = [elv](double s) { return elv.derivative(s); };
    return solve_1d(w_fn, wp_fn, market.s0, strike, options);
}

void write_solution_csv(std::ostream& os, const OracleSolution& solution) {
    os << "t,g,h\n";
    char buf[96];
    for (std::size_t i = 0; i < solution.paths.t.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%.12g\n", solution.paths.t[i],
                      solution.paths.g[i], solution.paths.h[i]);
        os << buf;
    }
}

}  // namespace asianlsv
