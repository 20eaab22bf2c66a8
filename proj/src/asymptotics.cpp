#include "asianlsv/asymptotics.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace asianlsv {

double poly_eval(const std::vector<double>& coeffs, double t) {
    double acc = 0.0;
    for (std::size_t i = coeffs.size(); i-- > 0;) acc = acc * t + coeffs[i];
    return acc;
}

std::vector<double> poly_derivative(const std::vector<double>& coeffs) {
    if (coeffs.size() <= 1) return {0.0};
    std::vector<double> out(coeffs.size() - 1);
    for (std::size_t i = 1; i < coeffs.size(); ++i) out[i - 1] = double(i) * coeffs[i];
    return out;
}

double poly_integral01(const std::vector<double>& coeffs) {
    double acc = 0.0;
    for (std::size_t i = 0; i < coeffs.size(); ++i) acc += coeffs[i] / double(i + 1);
    return acc;
}

std::vector<double> poly_mul(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> out(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
    return out;
}

RateSeries rate_series(const ExpansionInputs& in) {
    in.validate();
    const double e0 = in.eta0, e1 = in.eta1, e2 = in.eta2;
    const double s0 = in.sigma0, s1 = in.sigma1;
    const double rho = in.rho, v0 = in.v0;
    const double sv = std::sqrt(v0);

    RateSeries out;
    out.i2 = 1.5 / (e0 * e0 * v0);
    out.i3 = -0.3 * (3.0 * rho * s0 + (e0 + 6.0 * e1) * sv) / (e0 * e0 * e0 * v0 * sv);
    const double b0 = 109.0 * e0 * e0 + 2664.0 * e1 * e1 + 36.0 * e0 * (13.0 * e1 - 60.0 * e2);
    const double b1 = 18.0 * rho * (-30.0 * rho * s1 + (13.0 * e0 + 118.0 * e1) * sv);
    const double b2 = 9.0 * (-25.0 + 99.0 * rho * rho);
    out.i4 = (b0 * v0 + b1 * s0 + b2 * s0 * s0) / (1400.0 * e0 * e0 * e0 * e0 * v0 * v0);
    return out;
}

double rate_at(const RateSeries& series, double x) {
    const double v = ((series.i4 * x + series.i3) * x + series.i2) * x * x;
    return v > 0.0 ? v : 0.0;
}

SmileQuadratic smile_quadratic(const ExpansionInputs& in) {
    const RateSeries rs = rate_series(in);
    if (!(rs.i2 > 0.0)) throw std::invalid_argument("smile_quadratic: i2 must be positive");
    // Series inversion of Sigma(x) = |x| / sqrt(2 I(x)).
    SmileQuadratic sm;
    sm.sigma_atm = 1.0 / std::sqrt(2.0 * rs.i2);
    const double r3 = rs.i3 / rs.i2;
    sm.skew = sm.sigma_atm * (-0.5 * r3);
    sm.convexity = sm.sigma_atm * (0.375 * r3 * r3 - 0.5 * rs.i4 / rs.i2);
    return sm;
}

double smile_at(const SmileQuadratic& smile, double x) {
    return smile.sigma_atm + smile.skew * x + smile.convexity * x * x;
}

double sigma_from_rate(double x, double i_value) {
    if (x == 0.0) throw std::invalid_argument("sigma_from_rate: x must be nonzero (use sigma_atm)");
    if (!(i_value > 0.0)) throw std::invalid_argument("sigma_from_rate: rate must be positive");
    return std::abs(x) / std::sqrt(2.0 * i_value);
}

double atm_price_slope(const MarketState& market, const ExpansionInputs& in) {
    market.validate();
    return market.s0 * in.eta0 * std::sqrt(in.v0 / (6.0 * std::numbers::pi));
}

// ---------------------------------------------------------------------------
// Optimal-path expansion.
//
// The paths are expanded order by order in x. At each order the
// Euler-Lagrange system reduces to linear equations for the polynomial
// coefficients of (g_k, h_k) and the multiplier lambda_k: the residual of
// the full system is formed with truncated power series in x whose
// coefficients are polynomials in t, the order-k slice is linear in the
// order-k unknowns, and the linear map is recovered by unit perturbations.
// Long-double internals keep the solve comfortably below the 1e-12
// tolerances of the structural identities.
// ---------------------------------------------------------------------------

namespace {

constexpr int kOrders = 5;  // x^0 .. x^4
using LPoly = std::vector<long double>;

struct XSeries {
    std::array<LPoly, kOrders> c;
};

LPoly padd(const LPoly& a, const LPoly& b) {
    LPoly out(std::max(a.size(), b.size()), 0.0L);
    for (std::size_t i = 0; i < a.size(); ++i) out[i] += a[i];
    for (std::size_t i = 0; i < b.size(); ++i) out[i] += b[i];
    return out;
}

LPoly pscale(const LPoly& a, long double c) {
    LPoly out(a);
    for (auto& v : out) v *= c;
    return out;
}

LPoly pmul(const LPoly& a, const LPoly& b) {
    if (a.empty() || b.empty()) return {};
    LPoly out(a.size() + b.size() - 1, 0.0L);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
    return out;
}

LPoly pdt(const LPoly& a) {
    if (a.size() <= 1) return {};
    LPoly out(a.size() - 1);
    for (std::size_t i = 1; i < a.size(); ++i) out[i - 1] = (long double)(i)*a[i];
    return out;
}

long double pint01(const LPoly& a) {
    long double acc = 0.0L;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] / (long double)(i + 1);
    return acc;
}

long double pcoeff(const LPoly& a, std::size_t i) { return i < a.size() ? a[i] : 0.0L; }

long double peval(const LPoly& a, long double t) {
    long double acc = 0.0L;
    for (std::size_t i = a.size(); i-- > 0;) acc = acc * t + a[i];
    return acc;
}

XSeries xs_const(long double v) {
    XSeries s;
    s.c[0] = {v};
    return s;
}

XSeries xs_add(const XSeries& a, const XSeries& b) {
    XSeries out;
    for (int k = 0; k < kOrders; ++k) out.c[k] = padd(a.c[k], b.c[k]);
    return out;
}

XSeries xs_scale(const XSeries& a, long double c) {
    XSeries out;
    for (int k = 0; k < kOrders; ++k) out.c[k] = pscale(a.c[k], c);
    return out;
}

XSeries xs_mul(const XSeries& a, const XSeries& b) {
    XSeries out;
    for (int k = 0; k < kOrders; ++k)
        for (int i = 0; i <= k; ++i) out.c[k] = padd(out.c[k], pmul(a.c[i], b.c[k - i]));
    return out;
}

// Reciprocal; requires a constant (t-independent) leading coefficient.
XSeries xs_inv(const XSeries& a) {
    XSeries out;
    const long double a0 = pcoeff(a.c[0], 0);
    out.c[0] = {1.0L / a0};
    for (int k = 1; k < kOrders; ++k) {
        LPoly acc;
        for (int i = 1; i <= k; ++i) acc = padd(acc, pmul(a.c[i], out.c[k - i]));
        out.c[k] = pscale(acc, -1.0L / a0);
    }
    return out;
}

// exp of a series with zero leading term.
XSeries xs_exp(const XSeries& a) {
    XSeries out;
    out.c[0] = {1.0L};
    for (int k = 1; k < kOrders; ++k) {
        LPoly acc;
        for (int i = 1; i <= k; ++i) acc = padd(acc, pscale(pmul(a.c[i], out.c[k - i]), i));
        out.c[k] = pscale(acc, 1.0L / k);
    }
    return out;
}

XSeries xs_dt(const XSeries& a) {
    XSeries out;
    for (int k = 0; k < kOrders; ++k) out.c[k] = pdt(a.c[k]);
    return out;
}

struct ExpansionState {
    std::array<LPoly, 3> g, h;           // solved path polynomials
    std::array<long double, 3> lambda{};  // solved multipliers
    bool local_vol = false;               // sigma0 == 0: variance frozen
};

struct Residuals {
    XSeries rg, rh;
    std::array<long double, kOrders> constraint{};  // int_0^1 e^G dt coefficients
    std::array<long double, kOrders> rate{};        // rate-functional coefficients
    std::array<long double, kOrders> gp1{}, hp1{};  // g'(1), h'(1) per order
};

Residuals build_residuals(const ExpansionInputs& in, const ExpansionState& st) {
    const long double e0 = in.eta0, e1 = in.eta1, e2 = in.eta2;
    const long double s1 = in.sigma1, s2 = in.sigma2;
    const long double s0 = st.local_vol ? 1.0L : (long double)in.sigma0;
    const long double rho = st.local_vol ? 0.0L : (long double)in.rho;
    const long double v0 = in.v0;
    const long double pref = 1.0L / (1.0L - rho * rho);

    XSeries G, H, lamS;
    for (int k = 1; k <= 3; ++k) {
        G.c[k] = st.g[k - 1];
        H.c[k] = st.h[k - 1];
        lamS.c[k] = {st.lambda[k - 1]};
    }

    const XSeries etaS = xs_add(xs_const(e0), xs_add(xs_scale(G, e1), xs_scale(xs_mul(G, G), e2)));
    const XSeries sigS =
        xs_add(xs_const(s0), xs_add(xs_scale(H, s1), xs_scale(xs_mul(H, H), s2)));
    const XSeries etapS = xs_add(xs_const(e1), xs_scale(G, 2.0L * e2));
    const XSeries sigpS = xs_add(xs_const(s1), xs_scale(H, 2.0L * s2));

    const XSeries invSqrtEH =
        xs_scale(xs_exp(xs_scale(H, -0.5L)), 1.0L / std::sqrt((long double)v0));
    const XSeries E = xs_mul(xs_inv(etaS), invSqrtEH);
    const XSeries SI = xs_inv(sigS);
    const XSeries Gt = xs_dt(G);
    const XSeries Ht = xs_dt(H);

    const XSeries P = xs_add(xs_mul(Gt, E), xs_scale(xs_mul(Ht, SI), -rho));
    const XSeries QQ = xs_mul(Ht, SI);
    const XSeries expG = xs_exp(G);

    const XSeries Fdu = xs_scale(xs_mul(P, E), pref);
    const XSeries Fdv = xs_add(xs_scale(xs_mul(P, SI), -rho * pref), xs_mul(Ht, xs_mul(SI, SI)));
    const XSeries dPdu = xs_scale(xs_mul(xs_mul(Gt, etapS), xs_mul(E, xs_inv(etaS))), -1.0L);
    const XSeries dPdv = xs_add(xs_scale(xs_mul(Gt, E), -0.5L),
                                xs_scale(xs_mul(Ht, xs_mul(sigpS, xs_mul(SI, SI))), rho));
    const XSeries Fu = xs_add(xs_scale(xs_mul(P, dPdu), pref), xs_mul(lamS, expG));
    const XSeries Fv =
        xs_add(xs_scale(xs_mul(P, dPdv), pref),
               xs_scale(xs_mul(xs_mul(Ht, Ht), xs_mul(sigpS, xs_mul(SI, xs_mul(SI, SI)))), -1.0L));

    Residuals out;
    out.rg = xs_add(xs_dt(Fdu), xs_scale(Fu, -1.0L));
    out.rh = xs_add(xs_dt(Fdv), xs_scale(Fv, -1.0L));
    const XSeries rateS =
        xs_add(xs_scale(xs_mul(P, P), 0.5L * pref), xs_scale(xs_mul(QQ, QQ), 0.5L));
    for (int k = 0; k < kOrders; ++k) {
        out.constraint[k] = pint01(expG.c[k]);
        out.rate[k] = pint01(rateS.c[k]);
        out.gp1[k] = peval(pdt(G.c[k]), 1.0L);
        out.hp1[k] = peval(pdt(H.c[k]), 1.0L);
    }
    return out;
}

// Equation vector for order m given candidate order-m unknowns already
// loaded into st: residual polynomial coefficients, transversality,
// constraint.
std::vector<long double> order_equations(const ExpansionInputs& in, const ExpansionState& st,
                                         int m) {
    static constexpr int kResidualDeg[4] = {0, 0, 2, 5};
    const Residuals res = build_residuals(in, st);
    std::vector<long double> eq;
    const int deg = kResidualDeg[m];
    for (int i = 0; i <= deg; ++i) eq.push_back(pcoeff(res.rg.c[m], i));
    if (!st.local_vol)
        for (int i = 0; i <= deg; ++i) eq.push_back(pcoeff(res.rh.c[m], i));
    eq.push_back(res.gp1[m]);
    if (!st.local_vol) eq.push_back(res.hp1[m]);
    long double target = 1.0L;
    for (int i = 2; i <= m; ++i) target /= i;  // 1/m!
    eq.push_back(res.constraint[m] - target);
    return eq;
}

void solve_linear(std::vector<std::vector<long double>>& a, std::vector<long double>& b) {
    const std::size_t n = b.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        std::swap(a[piv], a[col]);
        std::swap(b[piv], b[col]);
        if (a[col][col] == 0.0L) throw std::runtime_error("optimal_paths: singular order system");
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const long double f = a[r][col] / a[col][col];
            if (f == 0.0L) continue;
            for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    for (std::size_t i = 0; i < n; ++i) b[i] /= a[i][i];
}

void solve_order(const ExpansionInputs& in, ExpansionState& st, int m) {
    static constexpr int kDeg[4] = {0, 2, 4, 7};
    const int deg = kDeg[m];
    const int n_g = deg;                                // t^1 .. t^deg
    const int n_unknown = st.local_vol ? n_g + 1 : 2 * n_g + 1;

    auto load = [&](const std::vector<long double>& u) {
        LPoly g(deg + 1, 0.0L), h(deg + 1, 0.0L);
        for (int i = 0; i < n_g; ++i) g[i + 1] = u[i];
        if (!st.local_vol)
            for (int i = 0; i < n_g; ++i) h[i + 1] = u[n_g + i];
        st.g[m - 1] = g;
        st.h[m - 1] = st.local_vol ? LPoly{} : h;
        st.lambda[m - 1] = u[n_unknown - 1];
    };

    std::vector<long double> zero(n_unknown, 0.0L);
    load(zero);
    const std::vector<long double> base = order_equations(in, st, m);
    if ((int)base.size() != n_unknown)
        throw std::runtime_error("optimal_paths: order system is not square");

    std::vector<std::vector<long double>> mat(n_unknown, std::vector<long double>(n_unknown));
    for (int j = 0; j < n_unknown; ++j) {
        std::vector<long double> unit(n_unknown, 0.0L);
        unit[j] = 1.0L;
        load(unit);
        const std::vector<long double> col = order_equations(in, st, m);
        for (int i = 0; i < n_unknown; ++i) mat[i][j] = col[i] - base[i];
    }
    std::vector<long double> rhs(n_unknown);
    for (int i = 0; i < n_unknown; ++i) rhs[i] = -base[i];
    solve_linear(mat, rhs);
    load(rhs);
}

ExpansionState solve_expansion(const ExpansionInputs& in) {
    in.validate();
    if (!(std::abs(in.rho) < 1.0) && in.sigma0 > 0.0)
        throw std::invalid_argument("optimal_paths: requires |rho| < 1 (see the rho = +-1 solver)");
    ExpansionState st;
    st.local_vol = in.sigma0 == 0.0;
    for (int m = 1; m <= 3; ++m) solve_order(in, st, m);
    return st;
}

std::vector<double> narrow(const LPoly& p, std::size_t len) {
    std::vector<double> out(len, 0.0);
    for (std::size_t i = 0; i < p.size() && i < len; ++i) out[i] = double(p[i]);
    return out;
}

}  // namespace

PathSeries optimal_paths(const ExpansionInputs& in) {
    const ExpansionState st = solve_expansion(in);
    PathSeries out;
    static constexpr std::size_t kLen[3] = {3, 5, 8};
    for (int k = 0; k < 3; ++k) {
        out.g[k] = narrow(st.g[k], kLen[k]);
        out.h[k] = narrow(st.h[k], kLen[k]);
    }
    out.lambda1 = double(st.lambda[0]);
    out.lambda2 = double(st.lambda[1]);
    out.lambda3 = double(st.lambda[2]);
    out.log_s0 = std::log(in.s0);
    out.log_v0 = std::log(in.v0);
    return out;
}

RateSeries rate_series_variational(const ExpansionInputs& in) {
    const ExpansionState st = solve_expansion(in);
    const Residuals res = build_residuals(in, st);
    RateSeries out;
    out.i2 = double(res.rate[2]);
    out.i3 = double(res.rate[3]);
    out.i4 = double(res.rate[4]);
    return out;
}

namespace {

PathPoint eval_series(const PathSeries& s, double x, double t, int deriv) {
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("path_at: t must lie in [0, 1]");
    PathPoint p;
    p.g = deriv == 0 ? s.log_s0 : 0.0;
    p.h = deriv == 0 ? s.log_v0 : 0.0;
    double xk = 1.0;
    for (int k = 0; k < 3; ++k) {
        xk *= x;
        std::vector<double> gp = s.g[k], hp = s.h[k];
        for (int d = 0; d < deriv; ++d) {
            gp = poly_derivative(gp);
            hp = poly_derivative(hp);
        }
        p.g += xk * poly_eval(gp, t);
        p.h += xk * poly_eval(hp, t);
    }
    return p;
}

}  // namespace

PathPoint path_at(const PathSeries& series, double x, double t) {
    return eval_series(series, x, t, 0);
}

PathPoint path_deriv_at(const PathSeries& series, double x, double t) {
    return eval_series(series, x, t, 1);
}

PathPoint path_deriv2_at(const PathSeries& series, double x, double t) {
    return eval_series(series, x, t, 2);
}

double lambda_at(const PathSeries& series, double x) {
    return ((series.lambda3 * x + series.lambda2) * x + series.lambda1) * x;
}

}  // namespace asianlsv
