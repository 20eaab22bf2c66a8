#!/usr/bin/env python3
"""Independent symbolic derivation of the log-moneyness expansion used by the
asymptotics module.

Starting from the constrained variational problem

    minimize  (1/(2(1-rho^2))) * int_0^1 ( g'/(eta(e^g) sqrt(e^h)) - rho h'/sigma(e^h) )^2 dt
            + (1/2) * int_0^1 ( h'/sigma(e^h) )^2 dt
    subject to  g(0)=log S0,  h(0)=log V0,  int_0^1 e^{g(t)} dt = K = S0 e^x,

with eta and sigma given by quadratic log-expansions around the spot levels,
this script expands the optimal paths as

    g(t) = log S0 + x g1(t) + x^2 g2(t) + x^3 g3(t) + O(x^4)
    h(t) = log V0 + x h1(t) + x^2 h2(t) + x^3 h3(t) + O(x^4)

and the multiplier as lambda = l1 x + l2 x^2 + l3 x^3, solves the
Euler-Lagrange system order by order (exact rational arithmetic), and emits
the polynomial coefficients of g_k, h_k, the multipliers l_k, and the rate
coefficients (i2, i3, i4).

It is deliberately independent of the closed forms hard-coded in
src/asymptotics.cpp: the closed forms there are checked against this
derivation (see --check) and the frozen constants in test_asymptotics.cpp
were generated with --dump.
"""

import argparse
import sympy as sp
from sympy import Rational as Q


NX = 5  # truncation: coefficients of x^0 .. x^4


def derive(eta_par, sig_par, rho, V0, S0):
    """Solve the expansion for one (exact) parameter set.

    Works with truncated power series in x whose coefficients are polynomials
    in t. The Euler-Lagrange residuals are formed from formal partials of the
    integrand and required to vanish order by order.

    Returns a dict with polynomial coefficient lists (monomial basis, constant
    term first) for g1..g3, h1..h3, the multipliers l1..l3, and (i2, i3, i4).
    """
    t = sp.symbols("t")
    eta0, eta1, eta2 = map(sp.nsimplify, eta_par)
    sig0, sig1, sig2 = map(sp.nsimplify, sig_par)
    rho, V0, S0 = map(sp.nsimplify, (rho, V0, S0))

    ex = sp.expand

    def smul(A, B):
        return [ex(sum(A[i] * B[k - i] for i in range(k + 1))) for k in range(NX)]

    def sadd(*Ls):
        return [ex(sum(L[k] for L in Ls)) for k in range(NX)]

    def sscale(A, c):
        return [ex(c * a) for a in A]

    def sconst(c):
        return [sp.nsimplify(c)] + [sp.S.Zero] * (NX - 1)

    def sinv(A):
        B = [sp.S.Zero] * NX
        B[0] = 1 / A[0]
        for k in range(1, NX):
            B[k] = ex(-B[0] * sum(A[i] * B[k - i] for i in range(1, k + 1)))
        return B

    def sexp(A):
        assert A[0] == 0
        E = [sp.S.One] + [sp.S.Zero] * (NX - 1)
        for k in range(1, NX):
            E[k] = ex(sum(i * A[i] * E[k - i] for i in range(1, k + 1)) / k)
        return E

    def sdt(A):
        return [sp.diff(a, t) for a in A]

    def sint01(A):
        return [sp.integrate(a, (t, 0, 1)) for a in A]

    def ansatz(name, deg):
        cs = list(sp.symbols(f"{name}_1:{deg + 1}"))
        return sum(c * t**i for i, c in enumerate(cs, start=1)), cs

    # g_k(0) = h_k(0) = 0 is built into the ansatz (no constant term).
    g_polys = [ansatz("a", 2), ansatz("b", 4), ansatz("c", 7)]
    h_polys = [ansatz("p", 2), ansatz("q", 4), ansatz("r", 7)]
    lam_syms = list(sp.symbols("l1 l2 l3"))
    sol = {}

    def build(upto):
        """Series arrays with stages < upto substituted from sol, stage upto symbolic."""
        G = [sp.S.Zero] * NX
        H = [sp.S.Zero] * NX
        lamS = [sp.S.Zero] * NX
        for k in range(1, min(upto, 3) + 1):
            G[k] = ex(g_polys[k - 1][0].subs(sol))
            H[k] = ex(h_polys[k - 1][0].subs(sol))
            lamS[k] = lam_syms[k - 1].subs(sol)

        pref = 1 / (1 - rho**2)
        etaS = sadd(sconst(eta0), sscale(G, eta1), sscale(smul(G, G), eta2))
        sigS = sadd(sconst(sig0), sscale(H, sig1), sscale(smul(H, H), sig2))
        etapS = sadd(sconst(eta1), sscale(G, 2 * eta2))
        sigpS = sadd(sconst(sig1), sscale(H, 2 * sig2))
        # E = 1/(eta(e^g) sqrt(e^h)),  SI = 1/sigma(e^h)
        E = smul(sinv(etaS), sscale(sexp(sscale(H, -sp.Rational(1, 2))), 1 / sp.sqrt(V0)))
        SI = sinv(sigS)
        Gt, Ht = sdt(G), sdt(H)
        P = sadd(smul(Gt, E), sscale(smul(Ht, SI), -rho))
        QQ = smul(Ht, SI)
        expG = sexp(G)

        Fdu = sscale(smul(P, E), pref)
        Fdv = sadd(sscale(smul(P, SI), -rho * pref), smul(Ht, smul(SI, SI)))
        dPdu = sscale(smul(smul(Gt, etapS), smul(E, sinv(etaS))), -1)
        dPdv = sadd(sscale(smul(Gt, E), -sp.Rational(1, 2)), sscale(smul(Ht, smul(sigpS, smul(SI, SI))), rho))
        Fu = sadd(sscale(smul(P, dPdu), pref), sscale(smul(lamS, expG), S0))
        Fv = sadd(
            sscale(smul(P, dPdv), pref),
            sscale(smul(smul(Ht, Ht), smul(sigpS, smul(SI, smul(SI, SI)))), -1),
        )
        Rg = sadd(sdt(Fdu), sscale(Fu, -1))
        Rh = sadd(sdt(Fdv), sscale(Fv, -1))
        rate = sint01(sadd(sscale(smul(P, P), pref / 2), sscale(smul(QQ, QQ), sp.Rational(1, 2))))
        constr = sint01(expG)
        return Rg, Rh, rate, constr

    for m in (1, 2, 3):
        Rg, Rh, _, constr = build(m)
        gk, gcs = g_polys[m - 1]
        hk, hcs = h_polys[m - 1]
        eqs = []
        for resid in (Rg[m], Rh[m]):
            eqs.extend(sp.Poly(ex(resid), t).all_coeffs())
        eqs.append(sp.diff(gk, t).subs(t, 1).subs(sol))
        eqs.append(sp.diff(hk, t).subs(t, 1).subs(sol))
        eqs.append(constr[m] - sp.Rational(1, sp.factorial(m)))
        unknowns = gcs + hcs + [lam_syms[m - 1]]
        res = sp.solve(eqs, unknowns, dict=True)
        assert len(res) == 1, f"order {m}: expected a unique solution, got {len(res)}"
        sol.update(res[0])

    _, _, rate, _ = build(3)

    def poly_coeffs(expr, deg):
        e = ex(expr.subs(sol))
        return [e.coeff(t, i) for i in range(deg + 1)]

    return {
        "g1": poly_coeffs(g_polys[0][0], 2),
        "g2": poly_coeffs(g_polys[1][0], 4),
        "g3": poly_coeffs(g_polys[2][0], 7),
        "h1": poly_coeffs(h_polys[0][0], 2),
        "h2": poly_coeffs(h_polys[1][0], 4),
        "h3": poly_coeffs(h_polys[2][0], 7),
        "l1": sol[lam_syms[0]],
        "l2": sol[lam_syms[1]],
        "l3": sol[lam_syms[2]],
        "i2": ex(rate[2]),
        "i3": ex(rate[3]),
        "i4": ex(rate[4]),
    }


# ----------------------------------------------------------------------------
# Closed forms as implemented in src/asymptotics.cpp, for cross-checking.
# ----------------------------------------------------------------------------

def closed_forms(eta_par, sig_par, rho, V0, S0):
    eta0, eta1, eta2 = eta_par
    sig0, sig1, sig2 = sig_par
    sV = sp.sqrt(V0)

    i2 = Q(3, 2) / (eta0**2 * V0)
    i3 = -Q(3, 10) * (3 * rho * sig0 + (eta0 + 6 * eta1) * sV) / (eta0**3 * V0 * sV)
    b0 = 109 * eta0**2 + 2664 * eta1**2 + 36 * eta0 * (13 * eta1 - 60 * eta2)
    b1 = 18 * rho * (-30 * rho * sig1 + (13 * eta0 + 18 * eta1) * sV)
    b2 = 9 * (-25 + 99 * rho**2)
    i4 = (b0 * V0 + b1 * sig0 + b2 * sig0**2) / (1400 * eta0**4 * V0**2)

    l1 = -3 / (S0 * eta0**2 * V0)
    l2 = Q(3, 10) * (9 * rho * sig0 + (13 * eta0 + 18 * eta1) * sV) / (eta0**3 * S0 * V0 * sV)
    l3 = (
        -15750 * sig0**2
        + 15669 * rho**2 * sig0**2
        - 17370 * rho**2 * sig0 * sig1
        - 135198 * eta0 * rho * sig0 * sV
        - 17694 * eta1 * rho * sig0 * sV
        - 121472 * eta0**2 * V0
        - 270396 * eta0 * eta1 * V0
        - 47484 * eta1**2 * V0
        + 24840 * eta0 * eta2 * V0
    ) / (44800 * eta0**4 * S0 * V0**2)

    w = rho * sig0 / sV
    a = Q(39, 10) + Q(9, 10) * (16 * eta1 + 8 * w) / eta0
    b = -9 - 9 * (4 * eta1 + 2 * w) / eta0
    c = Q(9, 2) + (18 * eta1 + 9 * w) / eta0
    abar = (
        Q(3, 10)
        * sig0
        * (3 * (-5 + 8 * rho**2) * sig0 + rho * (30 * rho * sig1 + (13 * eta0 + 18 * eta1) * sV))
        / (eta0**2 * V0)
    )
    bbar = (
        -Q(9, 2)
        * sig0
        * ((-2 + 3 * rho**2) * sig0 + 2 * rho * (3 * rho * sig1 + (eta0 + eta1) * sV))
        / (eta0**2 * V0)
    )
    cbar = -bbar / 2

    c_list = [
        (
            9 * (-1750 + 30861 * rho**2) * sig0**2
            - 18 * rho * sig0 * (12165 * rho * sig1 + (791 * eta0 - 46057 * eta1) * sV)
            + 4 * (-30368 * eta0**2 - 7119 * eta0 * eta1 + 149409 * eta1**2 + 6210 * eta0 * eta2) * V0
        )
        / (44800 * eta0**2 * V0),
        (
            360 * sig0**2 - 2772 * rho**2 * sig0**2 + 1800 * rho**2 * sig0 * sig1
            - 648 * eta0 * rho * sig0 * sV - 7848 * eta1 * rho * sig0 * sV
            + 1152 * eta0**2 * V0 - 1296 * eta0 * eta1 * V0 - 3888 * eta1**2 * V0
            - 4320 * eta0 * eta2 * V0
        )
        / (80 * eta0**2 * V0),
        (
            -900 * sig0**2 + 5202 * rho**2 * sig0**2 - 2340 * rho**2 * sig0 * sig1
            + 2556 * eta0 * rho * sig0 * sV + 14868 * eta1 * rho * sig0 * sV
            - 2016 * eta0**2 * V0 + 5112 * eta0 * eta1 * V0 + 4968 * eta1**2 * V0
            + 15120 * eta0 * eta2 * V0
        )
        / (80 * eta0**2 * V0),
        (
            900 * sig0**2 - 4518 * rho**2 * sig0**2 + 900 * rho**2 * sig0 * sig1
            - 3096 * eta0 * rho * sig0 * sV - 13572 * eta1 * rho * sig0 * sV
            + 1440 * eta0**2 * V0 - 6192 * eta0 * eta1 * V0 - 4032 * eta1**2 * V0
            - 17280 * eta0 * eta2 * V0
        )
        / (80 * eta0**2 * V0),
        (
            -450 * sig0**2 + 1935 * rho**2 * sig0**2 + 90 * rho**2 * sig0 * sig1
            + 1530 * eta0 * rho * sig0 * sV + 6030 * eta1 * rho * sig0 * sV
            - 360 * eta0**2 * V0 + 3060 * eta0 * eta1 * V0 + 2340 * eta1**2 * V0
            + 7560 * eta0 * eta2 * V0
        )
        / (80 * eta0**2 * V0),
        (
            90 * sig0**2 - 315 * rho**2 * sig0**2 - 90 * rho**2 * sig0 * sig1
            - 270 * eta0 * rho * sig0 * sV - 990 * eta1 * rho * sig0 * sV
            - 540 * eta0 * eta1 * V0 - 540 * eta1**2 * V0 - 1080 * eta0 * eta2 * V0
        )
        / (80 * eta0**2 * V0),
    ]
    cbar_list = [
        sig0
        * (
            246330 * rho * sig0**2 + 9 * rho**3 * sig0 * (1741 * sig0 - 1930 * sig1)
            - 201600 * rho * sig0 * sig1 + 40320 * (3 * eta0 + 8 * eta1) * sig0 * sV
            - 18 * (7511 * eta0 - 28137 * eta1) * rho**2 * sig0 * sV
            + 4 * (-30368 * eta0**2 - 7119 * eta0 * eta1 + 149409 * eta1**2 + 6210 * eta0 * eta2) * rho * V0
        )
        / (44800 * eta0**3 * V0 * sV),
        sig0
        * (
            -1476 * rho * sig0**2 - 648 * rho**3 * sig0**2 + 2520 * rho * sig0 * sig1
            - 1296 * rho**3 * sig0 * sig1 - 1152 * eta0 * sig0 * sV - 1872 * eta1 * sig0 * sV
            + 720 * eta0 * rho**2 * sig0 * sV - 4824 * eta1 * rho**2 * sig0 * sV
            - 432 * eta0 * rho**2 * sig1 * sV - 1152 * eta1 * rho**2 * sig1 * sV
            + 1152 * eta0**2 * rho * V0 - 864 * eta0 * eta1 * rho * V0
            - 2736 * eta1**2 * rho * V0 - 4320 * eta0 * eta2 * rho * V0
        )
        / (80 * eta0**3 * V0 * sV),
        sig0
        * (
            1818 * rho * sig0**2 + 1512 * rho**3 * sig0**2 - 5580 * rho * sig0 * sig1
            + 4104 * rho**3 * sig0 * sig1 + 1080 * rho**3 * sig1**2 + 2160 * rho**3 * sig0 * sig2
            + 2016 * eta0 * sig0 * sV + 2376 * eta1 * sig0 * sV - 324 * eta0 * rho**2 * sig0 * sV
            + 8064 * eta1 * rho**2 * sig0 * sV + 1728 * eta0 * rho**2 * sig1 * sV
            + 2808 * eta1 * rho**2 * sig1 * sV - 2016 * eta0**2 * rho * V0
            + 3384 * eta0 * eta1 * rho * V0 + 1080 * eta1**2 * rho * V0
            + 12960 * eta0 * eta2 * rho * V0
        )
        / (80 * eta0**3 * V0 * sV),
        sig0
        * (
            -990 * rho * sig0**2 - 1404 * rho**3 * sig0**2 + 5580 * rho * sig0 * sig1
            - 4968 * rho**3 * sig0 * sig1 - 2160 * rho**3 * sig1**2 - 4320 * rho**3 * sig0 * sig2
            - 1440 * eta0 * sig0 * sV - 1440 * eta1 * sig0 * sV - 468 * eta0 * rho**2 * sig0 * sV
            - 6156 * eta1 * rho**2 * sig0 * sV - 2376 * eta0 * rho**2 * sig1 * sV
            - 2736 * eta1 * rho**2 * sig1 * sV + 1440 * eta0**2 * rho * V0
            - 3816 * eta0 * eta1 * rho * V0 + 864 * eta1**2 * rho * V0
            - 12960 * eta0 * eta2 * rho * V0
        )
        / (80 * eta0**3 * V0 * sV),
        sig0
        * (
            135 * rho * sig0**2 + 675 * rho**3 * sig0**2 - 2610 * rho * sig0 * sig1
            + 2700 * rho**3 * sig0 * sig1 + 1350 * rho**3 * sig1**2 + 2700 * rho**3 * sig0 * sig2
            + 360 * eta0 * sig0 * sV + 360 * eta1 * sig0 * sV + 495 * eta0 * rho**2 * sig0 * sV
            + 2295 * eta1 * rho**2 * sig0 * sV + 1350 * eta0 * rho**2 * sig1 * sV
            + 1350 * eta1 * rho**2 * sig1 * sV - 360 * eta0**2 * rho * V0
            + 1710 * eta0 * eta1 * rho * V0 - 360 * eta1**2 * rho * V0
            + 4860 * eta0 * eta2 * rho * V0
        )
        / (80 * eta0**3 * V0 * sV),
        sig0
        * (
            45 * rho * sig0**2 - 135 * rho**3 * sig0**2 + 450 * rho * sig0 * sig1
            - 540 * rho**3 * sig0 * sig1 - 270 * rho**3 * sig1**2 - 540 * rho**3 * sig0 * sig2
            - 135 * eta0 * rho**2 * sig0 * sV - 315 * eta1 * rho**2 * sig0 * sV
            - 270 * eta0 * rho**2 * sig1 * sV - 270 * eta1 * rho**2 * sig1 * sV
            - 270 * eta0 * eta1 * rho * V0 - 540 * eta0 * eta2 * rho * V0
        )
        / (80 * eta0**3 * V0 * sV),
    ]

    def integrate_twice(second_deriv_coeffs):
        # p''(t) = sum_k d_k t^k with p'(1) = 0, p(0) = 0 gives
        #   p(t) = sum_k d_k/((k+1)(k+2)) t^{k+2}  -  (sum_k d_k/(k+1)) t.
        deg = len(second_deriv_coeffs) - 1
        out = [Q(0)] * (deg + 3)
        for k, d in enumerate(second_deriv_coeffs):
            out[k + 2] = d / Q((k + 1) * (k + 2))
            out[1] -= d / Q(k + 1)
        return out

    return {
        "g1": [Q(0), Q(3), -Q(3, 2)],
        "h1": [Q(0), 3 * rho * sig0 / (eta0 * sV), -Q(3, 2) * rho * sig0 / (eta0 * sV)],
        "g2": integrate_twice([a, b, c]),
        "h2": integrate_twice([abar, bbar, cbar]),
        "g3": integrate_twice(c_list),
        "h3": integrate_twice(cbar_list),
        "l1": l1,
        "l2": l2,
        "l3": l3,
        "i2": i2,
        "i3": i3,
        "i4": i4,
    }


def compare(derived, closed, tag):
    bad = []
    for key in closed:
        d, c = derived[key], closed[key]
        if isinstance(c, list):
            n = max(len(c), len(d))
            d = d + [Q(0)] * (n - len(d))
            c = c + [Q(0)] * (n - len(c))
            for i, (dv, cv) in enumerate(zip(d, c)):
                if sp.simplify(dv - cv) != 0:
                    bad.append(f"{key}[{i}]: derived {dv} vs closed {cv}")
        else:
            if sp.simplify(d - c) != 0:
                bad.append(f"{key}: derived {d} vs closed {c}")
    status = "OK " if not bad else "FAIL"
    print(f"[{status}] {tag}")
    for line in bad:
        print("   ", line)
    return not bad


CASES = [
    ("sabr rho=0", (1, 0, 0), (2, 0, 0), Q(0), Q(1, 10), 1),
    ("sabr rho=-0.7", (1, 0, 0), (2, 0, 0), -Q(7, 10), Q(1, 10), 1),
    ("sabr rho=+0.7", (1, 0, 0), (2, 0, 0), Q(7, 10), Q(1, 10), 1),
    ("heston-like", (1, 0, 0), (1, -Q(1, 2), Q(1, 8)), Q(3, 10), Q(1, 25), 1),
    ("tanh", (1, -Q(1, 2), 0), (2, 0, 0), -Q(7, 10), Q(1, 10), 1),
    ("generic-1", (Q(7, 5), Q(2, 7), -Q(3, 11)), (Q(5, 4), Q(1, 3), Q(2, 5)), Q(2, 5), Q(3, 20), Q(6, 5)),
    ("generic-2", (Q(4, 5), -Q(1, 6), Q(1, 9)), (Q(1, 2), -Q(2, 7), -Q(1, 4)), -Q(5, 8), Q(9, 10), Q(3, 4)),
    ("local-vol", (Q(6, 5), Q(1, 4), -Q(1, 8)), (Q(1, 1000000), 0, 0), Q(0), 1, 1),
]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--dump", action="store_true", help="print frozen constants for test_asymptotics.cpp")
    args = ap.parse_args()

    ok = True
    for tag, eta_par, sig_par, rho, V0, S0 in CASES:
        derived = derive(eta_par, sig_par, rho, V0, S0)
        closed = closed_forms(eta_par, sig_par, rho, V0, S0)
        ok &= compare(derived, closed, tag)
        if args.dump:
            print(f"  --- {tag}: eta={eta_par} sig={sig_par} rho={rho} V0={V0} S0={S0}")
            for key in ("g1", "g2", "g3", "h1", "h2", "h3"):
                vals = ", ".join(f"{sp.Float(vv, 17)}" for vv in derived[key])
                print(f"  {key}: [{vals}]")
            for key in ("l1", "l2", "l3", "i2", "i3", "i4"):
                print(f"  {key}: {sp.Float(derived[key], 17)}")
    raise SystemExit(0 if ok else 1)


if __name__ == "__main__":
    main()
