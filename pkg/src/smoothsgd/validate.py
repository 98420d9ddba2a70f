"""Monte-Carlo and finite-difference validation suites.

Every closed-form identity in the package is checked here against an
independent route: direct sphere/Gaussian sampling for expectations,
central finite differences for derivatives, dense-tensor contraction for
the Hermite bridge.  Statistical checks pass when the two routes agree
within 4 standard errors of the Monte-Carlo estimate; deterministic
checks carry explicit tolerances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P

from .hermite import (
    he_eval,
    he_monomial_coeffs,
    hermite_expand,
    hermite_tensor_dense,
    normalized_hermite_link,
)
from .smoothing import (
    SmoothedModel,
    population_grad_coeff,
    s_k_value,
    smooth_alpha_power,
    smooth_alpha_power_dalpha,
    smooth_univariate,
    smoothed_sample_gradient,
    smoothed_sample_value,
)
from .sphere import nu_moment, retract, sample_perp, sample_sphere, stein_check

SUITES = ("hermite", "sphere", "smoothing")


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    detail: str


def _result(suite, name, passed, detail):
    return CheckResult(suite=suite, name=name, passed=bool(passed), detail=detail)


def _mc_close(est, se, target, factor=4.0):
    slack = factor * se
    return abs(est - target) <= slack, slack


def _perp_coords(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """n draws of z.u for z uniform on the sphere orthogonal to a random w
    and a fixed unit u orthogonal to w, sampled in full dimension."""
    w = sample_sphere(d, rng)
    u = sample_perp(w, rng)
    out = np.empty(n)
    done = 0
    chunk = max(1, (1 << 22) // d)
    while done < n:
        m = min(chunk, n - done)
        g = rng.standard_normal((m, d))
        g -= np.outer(g @ w, w)
        out[done : done + m] = (g @ u) / np.linalg.norm(g, axis=1)
        done += m
    return out


# ---------------------------------------------------------------- hermite


def validate_hermite(seed: int = 0, mc_samples: int = 10**6, grid: str = "coarse"):
    rng = np.random.default_rng(seed)
    checks = []

    # quadrature orthogonality: E[He_j He_k] = delta_jk k!
    nodes, wts = np.polynomial.hermite_e.hermegauss(48)
    wts = wts / wts.sum()
    worst = 0.0
    for j in range(11):
        hj = he_eval(j, nodes)
        for k in range(j, 11):
            est = float(wts @ (hj * he_eval(k, nodes)))
            target = math.factorial(k) if j == k else 0.0
            scale = math.factorial(k)
            worst = max(worst, abs(est - target) / scale)
    checks.append(
        _result(
            "hermite",
            "orthogonality j,k<=10 (quadrature)",
            worst <= 1e-8,
            f"max relative error {worst:.3e} (tol 1e-8)",
        )
    )

    monic_ok = all(he_monomial_coeffs(k)[-1] == 1.0 for k in range(13))
    checks.append(_result("hermite", "monic leading coefficient", monic_ok, "k<=12"))

    worst = 0.0
    for k in range(1, 13):
        derived = P.polyder(he_monomial_coeffs(k))
        target = k * he_monomial_coeffs(k - 1)
        worst = max(worst, float(np.max(np.abs(derived - target))))
    checks.append(
        _result(
            "hermite",
            "derivative He_k' = k He_{k-1}",
            worst == 0.0,
            f"max coefficient error {worst:.3e} (exact)",
        )
    )

    # correlated-Gaussian identity: E[He_j(w.x) He_k(w*.x)] = delta_jk k! alpha^k
    d, alpha = 6, 0.6
    n = int(mc_samples)
    ws = sample_sphere(d, rng)
    w = alpha * ws + math.sqrt(1 - alpha * alpha) * sample_perp(ws, rng)
    w /= np.linalg.norm(w)
    ok_all, details = True, []
    a = np.empty(n)
    astar = np.empty(n)
    done = 0
    while done < n:
        m = min((1 << 22) // d, n - done)
        xs = rng.standard_normal((m, d))
        a[done : done + m] = xs @ w
        astar[done : done + m] = xs @ ws
        done += m
    for j, k in ((2, 2), (3, 3), (4, 4), (2, 4), (1, 3)):
        vals = he_eval(j, a) * he_eval(k, astar)
        est = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(n))
        target = math.factorial(k) * alpha**k if j == k else 0.0
        ok, _ = _mc_close(est, se, target)
        ok_all &= ok
        details.append(f"({j},{k}): {est:+.4f} vs {target:+.4f} (4SE {4*se:.4f})")
    checks.append(
        _result("hermite", "correlation identity (MC)", ok_all, "; ".join(details))
    )

    x = rng.standard_normal(4)
    t3 = hermite_tensor_dense(x, 3)
    perm_err = float(
        max(
            np.max(np.abs(t3 - np.transpose(t3, p)))
            for p in ((0, 2, 1), (1, 0, 2), (2, 1, 0), (1, 2, 0), (2, 0, 1))
        )
    )
    checks.append(
        _result(
            "hermite",
            "dense tensor symmetric",
            perm_err <= 1e-10,
            f"max permutation gap {perm_err:.3e}",
        )
    )

    worst = 0.0
    for _ in range(20):
        u = sample_sphere(4, rng)
        x = rng.standard_normal(4)
        dense = hermite_tensor_dense(x, 3)
        lhs = float(np.einsum("ijk,i,j,k->", dense, u, u, u))
        worst = max(worst, abs(lhs - he_eval(3, float(u @ x))))
    checks.append(
        _result(
            "hermite",
            "tensor contraction equals He_k(u.x)",
            worst <= 1e-10,
            f"max |gap| {worst:.3e} (tol 1e-10)",
        )
    )

    link = hermite_expand(lambda t: he_eval(3, t) / math.sqrt(6.0), max_degree=8)
    c3 = link.coeffs[3]
    others = float(np.max(np.abs(np.delete(link.coeffs, 3))))
    ok = abs(c3 - math.sqrt(6.0)) <= 1e-9 and others <= 1e-9 and link.info_exponent == 3
    checks.append(
        _result(
            "hermite",
            "expansion of He_3/sqrt(6)",
            ok,
            f"c3 = {c3:.9f} (want {math.sqrt(6.0):.9f}), max other {others:.1e}, "
            f"k* = {link.info_exponent}",
        )
    )
    return checks


# ----------------------------------------------------------------- sphere


def validate_sphere(seed: int = 0, mc_samples: int = 10**6, grid: str = "coarse"):
    rng = np.random.default_rng(seed)
    checks = []

    ok_all, details = True, []
    for d in (4, 16, 64):
        t = _first_coords(d, int(mc_samples), rng)
        for k in (1, 2, 3, 4):
            vals = t ** (2 * k)
            est = float(vals.mean())
            se = float(vals.std(ddof=1) / math.sqrt(vals.size))
            target = nu_moment(k, d)
            ok, _ = _mc_close(est, se, target)
            ok_all &= ok
            if not ok or (d == 16 and k == 2):
                details.append(
                    f"d={d},k={k}: {est:.3e} vs {target:.3e} (4SE {4*se:.1e})"
                )
    checks.append(
        _result(
            "sphere",
            "nu_moment vs MC (k<=4, d in {4,16,64})",
            ok_all,
            "; ".join(details) or "all cells within 4SE",
        )
    )

    # random even polynomial: spherical expectation from nu vs direct MC
    coeffs = rng.standard_normal(5)  # even degrees 0,2,4,6,8
    d = 12
    t = _first_coords(d, int(mc_samples), rng)
    vals = sum(c * t ** (2 * i) for i, c in enumerate(coeffs))
    est = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(vals.size))
    target = sum(c * nu_moment(i, d) for i, c in enumerate(coeffs))
    ok, _ = _mc_close(est, se, target)
    checks.append(
        _result(
            "sphere",
            "even polynomial moment vs MC",
            ok,
            f"{est:.6f} vs {target:.6f} (4SE {4*se:.1e})",
        )
    )

    d = 16
    n = min(int(mc_samples), 10**5)
    w = sample_sphere(d, rng)
    u = sample_perp(w, rng)
    dots = np.array([sample_perp(w, rng) @ u for _ in range(n)])
    est2 = float((dots**2).mean())
    se2 = float((dots**2).std(ddof=1) / math.sqrt(n))
    est1 = float(dots.mean())
    se1 = float(dots.std(ddof=1) / math.sqrt(n))
    ok = _mc_close(est2, se2, 1.0 / (d - 1))[0] and _mc_close(est1, se1, 0.0)[0]
    checks.append(
        _result(
            "sphere",
            "perp sampler moments (d=16)",
            ok,
            f"E[(z.u)^2] = {est2:.5f} vs {1/(d-1):.5f} (4SE {4*se2:.1e}); "
            f"E[z.u] = {est1:+.5f} (4SE {4*se1:.1e})",
        )
    )

    worst = 0.0
    for _ in range(200_000):
        d = 8
        w = sample_sphere(d, rng)
        g = rng.standard_normal(d)
        v = g - (g @ w) * w
        r = retract(w, v, float(rng.standard_normal()))
        worst = max(worst, abs(float(np.linalg.norm(r)) - 1.0))
    checks.append(
        _result(
            "sphere",
            "retract unit norm (2e5 random triples)",
            worst <= 1e-12,
            f"max |norm-1| {worst:.3e}",
        )
    )

    ok_all, details = True, []
    cases = (
        ("g(t)=t, d=10", lambda t: t, 10),
        ("g(t)=t^3, d=12", lambda t: t**3, 12),
        ("g(t)=cos(t), d=8", np.cos, 8),
    )
    for label, g, d in cases:
        (lhs, lse), (rhs, rse) = stein_check(g, d, int(mc_samples), rng)
        gap = abs(lhs - rhs)
        slack = 4.0 * math.hypot(lse, rse)
        ok = gap <= slack
        ok_all &= ok
        details.append(f"{label}: lhs {lhs:+.5f} rhs {rhs:+.5f} (4SE {slack:.1e})")
    checks.append(
        _result("sphere", "Stein identity (3 test functions)", ok_all, "; ".join(details))
    )

    # g(t)=t^3 instance of the identity with the right side in closed form:
    # E[z1^4] on S^{d-1} equals (3/d) nu_1 taken on S^{d+1}
    (lhs, lse), _ = stein_check(lambda t: t**3, 12, int(mc_samples), rng)
    target = (3.0 / 12.0) * nu_moment(1, 14)
    ok, _ = _mc_close(lhs, lse, target)
    checks.append(
        _result(
            "sphere",
            "E[z1 * z1^3] = (3/d) nu_1(d+2) (d=12)",
            ok,
            f"{lhs:.6f} vs {target:.6f} (4SE {4*lse:.1e})",
        )
    )
    return checks


def _first_coords(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """First coordinates of n uniform points on S^{d-1}, sampled in full
    dimension (rotation-invariant, so coordinate 0 is representative)."""
    out = np.empty(n)
    done = 0
    chunk = max(1, (1 << 22) // d)
    while done < n:
        m = min(chunk, n - done)
        g = rng.standard_normal((m, d))
        out[done : done + m] = g[:, 0] / np.linalg.norm(g, axis=1)
        done += m
    return out


# -------------------------------------------------------------- smoothing


def _mc_grid(grid: str):
    if grid == "fine":
        return (1, 2, 3, 4, 5, 6), (0.0, 0.1, 0.3, 0.5, 0.7, 0.9)
    return (1, 2, 3, 4, 5, 6), (0.0, 0.1, 0.5, 0.9)


def validate_smoothing(seed: int = 0, mc_samples: int = 10**6, grid: str = "coarse"):
    rng = np.random.default_rng(seed)
    checks = []
    ks, alphas = _mc_grid(grid)

    # closed form vs direct sampling of the smoothing sphere; at lam=0 the
    # draws are all identical and the SE degenerates to rounding noise, so
    # the allowance has an absolute floor
    n = int(mc_samples)
    ok_all, details, worst = True, [], 0.0
    for d in (8, 64):
        s = _perp_coords(d, n, rng)  # z.u for z on the sphere orthogonal to w
        for lam in (0.0, 1.0, d**0.25):
            for k in ks:
                for alpha in alphas:
                    arg = (alpha + lam * math.sqrt(1 - alpha * alpha) * s) / math.sqrt(
                        1 + lam * lam
                    )
                    vals = arg**k
                    est = float(vals.mean())
                    se = float(vals.std(ddof=1) / math.sqrt(n))
                    target = smooth_alpha_power(k, alpha, lam, d)
                    gap = abs(est - target)
                    slack = max(4.0 * se, 1e-12 * max(1.0, abs(target)))
                    worst = max(worst, gap / slack)
                    if gap > slack:
                        ok_all = False
                        details.append(
                            f"d={d},lam={lam:.3g},k={k},a={alpha}: "
                            f"{est:.5f} vs {target:.5f} (gap {gap:.2e}, "
                            f"allowed {slack:.2e})"
                        )
    checks.append(
        _result(
            "smoothing",
            f"smooth_alpha_power vs MC ({len(ks)*len(alphas)*6} cells, n={n})",
            ok_all,
            "; ".join(details)
            or f"worst gap {worst:.2f} x allowance (4 SE, floor 1e-12 rel)",
        )
    )

    # per-sample smoothed value vs the same direct sampling
    ok_all, details, worst = True, [], 0.0
    for d in (8, 64):
        s = _perp_coords(d, n, rng)
        for lam in (0.0, 1.0, d**0.25):
            for k in ks:
                link = normalized_hermite_link(k)
                model = SmoothedModel(link=link, dim=d, lam=lam)
                for _ in range(2):
                    w = sample_sphere(d, rng)
                    x = rng.standard_normal(d)
                    a = float(w @ x)
                    b = float(np.linalg.norm(x - a * w))
                    vals = link((a + lam * b * s) / math.sqrt(1 + lam * lam))
                    est = float(vals.mean())
                    se = float(vals.std(ddof=1) / math.sqrt(n))
                    target = 1.0 - smoothed_sample_value(model, w, x, 1.0)
                    gap = abs(est - target)
                    slack = max(4.0 * se, 1e-12 * max(1.0, abs(target)))
                    worst = max(worst, gap / slack)
                    if gap > slack:
                        ok_all = False
                        details.append(
                            f"d={d},lam={lam:.3g},k={k}: {est:.5f} vs {target:.5f} "
                            f"(gap {gap:.2e}, allowed {slack:.2e})"
                        )
    checks.append(
        _result(
            "smoothing",
            "smoothed_sample_value vs MC",
            ok_all,
            "; ".join(details)
            or f"worst gap {worst:.2f} x allowance (4 SE, floor 1e-12 rel)",
        )
    )

    # lam=0 is the identity
    worst = 0.0
    for k in (1, 3, 5):
        link = normalized_hermite_link(k)
        model = SmoothedModel(link=link, dim=12, lam=0.0)
        for _ in range(20):
            w = sample_sphere(12, rng)
            x = rng.standard_normal(12)
            y = float(rng.standard_normal())
            got = smoothed_sample_value(model, w, x, y)
            want = 1.0 - y * float(link(float(w @ x)))
            worst = max(worst, abs(got - want))
    checks.append(
        _result(
            "smoothing",
            "lam=0 reduces to raw loss",
            worst <= 1e-10,
            f"max |gap| {worst:.3e}",
        )
    )

    ok, detail = _gradient_fd_check(rng)
    checks.append(_result("smoothing", "gradient vs tangent FD", ok, detail))

    worst = 0.0
    for k in (1, 2, 3, 5):
        for alpha in (0.2, 0.5, 0.8):
            for lam, d in ((0.0, 8), (1.0, 8), (2.0, 32)):
                worst = max(
                    worst,
                    abs(
                        smooth_alpha_power(k, -alpha, lam, d)
                        - (-1.0) ** k * smooth_alpha_power(k, alpha, lam, d)
                    ),
                )
    checks.append(
        _result("smoothing", "parity in alpha", worst <= 1e-12, f"max |gap| {worst:.1e}")
    )

    # smoothing trades peak signal for small-alpha signal: damped where the
    # iterate is already aligned, boosted near a random start
    ok = True
    for alpha in (0.6, 0.9):
        vals = [smooth_alpha_power(3, alpha, lam, 16) for lam in (0.0, 1.0, 2.0)]
        ok &= vals[0] > vals[1] > vals[2] > 0
    for alpha in (0.1, 0.3):
        vals = [smooth_alpha_power(3, alpha, lam, 16) for lam in (0.0, 1.0)]
        ok &= vals[1] > vals[0] > 0
    checks.append(
        _result(
            "smoothing",
            "lam damps large-alpha signal, boosts small-alpha",
            ok,
            "k=3, d=16: decreasing in lam at alpha>=0.6, lam=1 beats lam=0 at alpha<=0.3",
        )
    )

    # commute identity for g(t)=t^5 via finite differences in alpha
    d, lam, alpha = 20, 2.0, 0.3
    g = lambda t: t**5  # noqa: E731
    gp = lambda t: 5.0 * t**4  # noqa: E731
    gpp = lambda t: 20.0 * t**3  # noqa: E731
    h = 1e-6
    lhs = (
        smooth_univariate(g, alpha + h, lam, d) - smooth_univariate(g, alpha - h, lam, d)
    ) / (2 * h)
    rhs = smooth_univariate(gp, alpha, lam, d) / math.sqrt(1 + lam * lam) - (
        lam * lam * alpha / ((1 + lam * lam) * (d - 1))
    ) * smooth_univariate(gpp, alpha, lam, d, dim_shift=2)
    rel = abs(lhs - rhs) / max(abs(rhs), 1e-12)
    checks.append(
        _result(
            "smoothing",
            "derivative/smoothing commute identity",
            rel <= 1e-5,
            f"FD {lhs:.8f} vs closed {rhs:.8f} (rel {rel:.2e}, tol 1e-5)",
        )
    )

    # two independent evaluation routes for powers
    worst = 0.0
    for k in (1, 2, 4, 6):
        for alpha in (0.0, 0.3, 0.7):
            a = smooth_univariate(lambda t, k=k: t**k, alpha, 1.5, 24)
            b = smooth_alpha_power(k, alpha, 1.5, 24)
            worst = max(worst, abs(a - b))
    checks.append(
        _result(
            "smoothing",
            "quadrature route matches closed form",
            worst <= 1e-9,
            f"max |gap| {worst:.2e} (tol 1e-9)",
        )
    )

    # analytic alpha-derivative vs finite differences
    worst = 0.0
    for k in (1, 3, 5):
        for alpha in (0.1, 0.5, 0.8):
            fd = (
                smooth_alpha_power(k, alpha + 1e-6, 2.0, 24)
                - smooth_alpha_power(k, alpha - 1e-6, 2.0, 24)
            ) / 2e-6
            an = smooth_alpha_power_dalpha(k, alpha, 2.0, 24)
            worst = max(worst, abs(fd - an) / max(abs(an), 1e-12))
    checks.append(
        _result(
            "smoothing",
            "d/dalpha closed form vs FD",
            worst <= 1e-6,
            f"max rel {worst:.2e}",
        )
    )

    # population gradient coefficient vs per-sample MC average
    k, d, lam, alpha = 3, 16, 1.5, 0.4
    link = normalized_hermite_link(k)
    model = SmoothedModel(link=link, dim=d, lam=lam)
    ws = sample_sphere(d, rng)
    w = alpha * ws + math.sqrt(1 - alpha * alpha) * sample_perp(ws, rng)
    w /= np.linalg.norm(w)
    m = min(max(int(mc_samples) // 10, 10**4), 10**5)
    dots = np.empty(m)
    for i in range(m):
        x = rng.standard_normal(d)
        y = float(link(float(ws @ x)))
        dots[i] = -(smoothed_sample_gradient(model, w, x, y).direction @ ws)
    est = float(dots.mean())
    se = float(dots.std(ddof=1) / math.sqrt(m))
    target = (1 - alpha * alpha) * population_grad_coeff(model, alpha)
    ok, _ = _mc_close(est, se, target)
    checks.append(
        _result(
            "smoothing",
            "population gradient coefficient vs MC",
            ok,
            f"-E[grad.w*] = {est:.5f} vs {target:.5f} (4SE {4*se:.1e}, n={m})",
        )
    )

    # envelope bracket (constants unspecified; report the observed bracket)
    k, lam, d = 3, 2.0, 64
    model = SmoothedModel(link=normalized_hermite_link(k), dim=d, lam=lam)
    lo, hi = math.inf, 0.0
    for alpha in np.linspace(0.76 * d**-0.5, 0.95, 24):
        ratio = population_grad_coeff(model, float(alpha)) / (
            s_k_value(k - 1, float(alpha), lam, d) / math.sqrt(1 + lam * lam)
        )
        lo, hi = min(lo, ratio), max(hi, ratio)
    checks.append(
        _result(
            "smoothing",
            "gradient coeff vs s_{k-1} envelope",
            0.01 <= lo and hi <= 100.0 and lo > 0,
            f"ratio in [{lo:.3f}, {hi:.3f}] across alpha grid (sanity bracket)",
        )
    )
    return checks


def _gradient_fd_check(rng, configs_per_cell: int = 100):
    worst_rel, worst_tan = 0.0, 0.0
    d = 8
    for k in (1, 2, 3, 4, 5):
        link = normalized_hermite_link(k)
        for lam in (0.0, 1.0, 2.0):
            model = SmoothedModel(link=link, dim=d, lam=lam)
            for _ in range(configs_per_cell):
                w = sample_sphere(d, rng)
                x = rng.standard_normal(d)
                y = float(rng.standard_normal())
                g = smoothed_sample_gradient(model, w, x, y).direction
                gn = float(np.linalg.norm(g))
                worst_tan = max(worst_tan, abs(float(g @ w)) / max(gn, 1e-300))
                for _ in range(2):
                    v = sample_perp(w, rng)
                    h = 1e-5
                    fd = (
                        smoothed_sample_value(model, retract(w, v, h), x, y)
                        - smoothed_sample_value(model, retract(w, v, -h), x, y)
                    ) / (2 * h)
                    worst_rel = max(worst_rel, abs(fd - float(g @ v)) / max(gn, 1e-8))
    ok = worst_rel <= 1e-5 and worst_tan <= 1e-10
    return ok, (
        f"max rel error {worst_rel:.2e} (tol 1e-5) over 1500 configs, "
        f"max |g.w|/|g| {worst_tan:.1e} (tol 1e-10)"
    )


_SUITE_FUNCS = {
    "hermite": validate_hermite,
    "sphere": validate_sphere,
    "smoothing": validate_smoothing,
}


def run_suite(
    suite: str, seed: int = 0, mc_samples: int = 10**6, grid: str = "coarse"
) -> list[CheckResult]:
    if suite == "all":
        out = []
        for name in SUITES:
            out.extend(_SUITE_FUNCS[name](seed=seed, mc_samples=mc_samples, grid=grid))
        return out
    if suite not in _SUITE_FUNCS:
        raise ValueError(f"unknown suite {suite!r}; choose from {SUITES + ('all',)}")
    return _SUITE_FUNCS[suite](seed=seed, mc_samples=mc_samples, grid=grid)
