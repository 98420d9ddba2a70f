"""Sampling and geometry on unit spheres: moments, projections, retraction."""

import numpy as np

MAX_MOMENT = 32  # double-factorial cap in double precision


def sample_sphere(d: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform unit vector on S^{d-1} (normalized Gaussian)."""
    if d < 2:
        raise ValueError(f"need d >= 2, got {d}")
    w = rng.standard_normal(d)
    return w / np.linalg.norm(w)


def sample_perp(w: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """
    Uniform unit vector perpendicular to w.

    Draws a Gaussian, projects onto the orthogonal complement of w, and
    normalizes; exact, no rejection.
    """
    w = np.asarray(w, dtype=float)
    d = w.size
    if d < 3:
        raise ValueError(f"need d >= 3, got {d}")
    z = rng.standard_normal(d)
    z -= (z @ w) * w
    return z / np.linalg.norm(z)


def nu_moment(k: int, d: int) -> float:
    """
    Even sphere moment nu_k^{(d)} = E[z_1^{2k}] for z uniform on S^{d-1}.

    Equals (2k-1)!! * prod_{j=0}^{k-1} 1/(d+2j), computed as a stable
    product of ratios (2j+1)/(d+2j).
    """
    if k < 0 or d < 1:
        raise ValueError(f"need k >= 0 and d >= 1, got k={k}, d={d}")
    if k > MAX_MOMENT:
        raise ValueError(f"moment order capped at {MAX_MOMENT}, got {k}")
    out = 1.0
    for j in range(k):
        out *= (2 * j + 1) / (d + 2 * j)
    return out


def project_perp(w: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Project x onto the tangent space at w: x - (w.x) w."""
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    if w.shape != x.shape:
        raise ValueError(f"shape mismatch: {w.shape} vs {x.shape}")
    return x - (w @ x) * w


def retract(w: np.ndarray, v: np.ndarray, eta: float) -> np.ndarray:
    """Step w + eta*v renormalized back to the sphere."""
    u = np.asarray(w, dtype=float) + eta * np.asarray(v, dtype=float)
    n = np.linalg.norm(u)
    if n < 1e-14:
        raise ValueError("degenerate step: w + eta*v is numerically zero")
    return u / n


def _marginal_coord(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    # first coordinate of a uniform point on S^{d-1}: x/sqrt(x^2 + chi2_{d-1})
    x = rng.standard_normal(n)
    q = rng.chisquare(d - 1, n)
    return x / np.sqrt(x * x + q)


def stein_check(g, d: int, samples: int, rng: np.random.Generator):
    """
    Monte-Carlo check of the sphere integration-by-parts identity
    E_{z ~ S^{d-1}}[z_1 g(z_1)] = (1/d) E_{z ~ S^{d+1}}[g'(z_1)].

    g' is taken by central finite differences (h = 1e-5); this is a
    validation oracle, not a hot path. Returns ((lhs, lhs_se), (rhs, rhs_se)).
    """
    if d < 3:
        raise ValueError(f"need d >= 3, got {d}")
    h = 1e-5
    z = _marginal_coord(d, samples, rng)
    vals = z * np.asarray(g(z), dtype=float)
    lhs, lhs_se = vals.mean(), vals.std(ddof=1) / np.sqrt(samples)
    z2 = _marginal_coord(d + 2, samples, rng)
    dg = (np.asarray(g(z2 + h), dtype=float) - np.asarray(g(z2 - h), dtype=float)) / (2 * h)
    rhs_vals = dg / d
    rhs, rhs_se = rhs_vals.mean(), rhs_vals.std(ddof=1) / np.sqrt(samples)
    return (lhs, lhs_se), (rhs, rhs_se)
