"""
Sphere smoothing of the correlation loss.

The smoothing operator averages a function over perturbations (w + lambda z)
/ ||w + lambda z|| with z uniform on the unit sphere perpendicular to w.
For a single-index function g(w.u) this reduces to a one-dimensional average
over the first coordinate of a uniform point on S^{d-2}, which is what every
closed form here evaluates.
"""

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.polynomial import polyval2d
from scipy.special import roots_jacobi

from .hermite import LinkFunction
from .sphere import nu_moment, project_perp
from .tensors import SymmetricTensor, rank_one, symmetrize

LAMBDA_GUARD_SLACK = 1e-9


@dataclass
class SmoothedModel:
    """A link observed in dimension dim, smoothed at level lam (0 = none)."""

    link: LinkFunction
    dim: int
    lam: float
    noise_var: float = 0.0

    def __post_init__(self):
        if self.dim < 3:
            raise ValueError(f"need dim >= 3, got {self.dim}")
        if self.lam < 0:
            raise ValueError(f"need lam >= 0, got {self.lam}")
        if self.noise_var < 0:
            raise ValueError(f"need noise_var >= 0, got {self.noise_var}")
        if self.lam > self.dim**0.25 * (1 + LAMBDA_GUARD_SLACK):
            warnings.warn(
                f"lam={self.lam:g} exceeds d^(1/4)={self.dim**0.25:g}; "
                "outside the regime the guarantees cover",
                stacklevel=2,
            )


def smooth_alpha_power(k: int, alpha: float, lam: float, d: int) -> float:
    """
    Exact smoothed monomial: the smoothing average of (w.u)^k at alignment
    alpha, via the even-moment expansion

    (1+lam^2)^{-k/2} sum_j C(k,2j) alpha^{k-2j} lam^{2j} (1-alpha^2)^j nu_j^{(d-1)}.

    Odd powers of the perpendicular coordinate vanish by symmetry.
    """
    if d < 3:
        raise ValueError(f"need d >= 3, got {d}")
    if k < 0 or k > 64:
        raise ValueError(f"need 0 <= k <= 64, got {k}")
    one_m = 1.0 - alpha * alpha
    out = 0.0
    for j in range(k // 2 + 1):
        out += (
            math.comb(k, 2 * j)
            * alpha ** (k - 2 * j)
            * lam ** (2 * j)
            * one_m**j
            * nu_moment(j, d - 1)
        )
    return out * (1.0 + lam * lam) ** (-k / 2)


def smooth_alpha_power_dalpha(k: int, alpha: float, lam: float, d: int) -> float:
    """Analytic d/dalpha of smooth_alpha_power."""
    if d < 3:
        raise ValueError(f"need d >= 3, got {d}")
    one_m = 1.0 - alpha * alpha
    out = 0.0
    for j in range(k // 2 + 1):
        c = math.comb(k, 2 * j) * lam ** (2 * j) * nu_moment(j, d - 1)
        p = k - 2 * j
        if p > 0:
            out += c * p * alpha ** (p - 1) * one_m**j
        if j > 0:
            out -= c * 2 * j * alpha ** (p + 1) * one_m ** (j - 1)
    return out * (1.0 + lam * lam) ** (-k / 2)


def s_k_value(k: int, alpha: float, lam: float, d: int) -> float:
    """
    The piecewise envelope of the smoothed monomial: alpha^k above the
    crossover alpha^2 = lam^2/d, a lam-dominated floor below it (with an
    extra factor alpha when k is odd), all scaled by (1+lam^2)^{-k/2}.
    """
    if alpha < 0:
        raise ValueError(f"need alpha >= 0, got {alpha}")
    pref = (1.0 + lam * lam) ** (-k / 2)
    cross = lam * lam / d
    if alpha * alpha >= cross:
        return pref * alpha**k
    if k % 2 == 0:
        return pref * cross ** (k / 2)
    return pref * alpha * cross ** ((k - 1) / 2)


@lru_cache(maxsize=128)
def _ultraspherical_nodes(sphere_dim: int, n_nodes: int = 64):
    # first-coordinate density on S^{m-1} in R^m is prop. to (1-t^2)^{(m-3)/2}
    a = (sphere_dim - 3) / 2
    t, w = roots_jacobi(n_nodes, a, a)
    return t, w / w.sum()


def smooth_univariate(g, alpha: float, lam: float, d: int, dim_shift: int = 0) -> float:
    """
    Quadrature evaluation of the dimension-dependent univariate smoothing
    operator: E_t[g((alpha + lam t sqrt(1-alpha^2)) / sqrt(1+lam^2))] with t
    the first coordinate of a uniform point on the sphere S^{d+dim_shift-2}.
    """
    m = d + dim_shift
    if m < 3:
        raise ValueError(f"need d + dim_shift >= 3, got {m}")
    t, w = _ultraspherical_nodes(m - 1)
    arg = (alpha + lam * t * math.sqrt(max(1.0 - alpha * alpha, 0.0))) / math.sqrt(
        1.0 + lam * lam
    )
    vals = np.asarray(g(arg), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ArithmeticError("quadrature of g produced non-finite values")
    return float(w @ vals)


def _monomial_sample_tables(link: LinkFunction, d: int, lam: float):
    """
    Coefficient tables for the smoothed per-sample link value
    G(a, b^2) = sum_{p,q} C[p,q] a^p (b^2)^q, where a = w.x, b = ||x - a w||,
    built by expanding sigma's monomials and replacing even powers of the
    perpendicular coordinate with sphere moments.

    Returns (C, Ca, Ch): the value table, its a-derivative, and the table of
    H = (d G/d b)/b (polynomial in b^2, so the b -> 0 limit is exact).
    """
    g = link.monomial_coeffs()
    kmax = len(g) - 1
    C = np.zeros((kmax + 1, kmax // 2 + 1))
    s = 1.0 + lam * lam
    for m in range(kmax + 1):
        if g[m] == 0.0:
            continue
        pref = g[m] * s ** (-m / 2)
        for j in range(m // 2 + 1):
            C[m - 2 * j, j] += (
                pref * math.comb(m, 2 * j) * lam ** (2 * j) * nu_moment(j, d - 1)
            )
    Ca = np.zeros_like(C)
    if C.shape[0] > 1:
        Ca[:-1, :] = C[1:, :] * np.arange(1, C.shape[0])[:, None]
    Ch = np.zeros_like(C)
    if C.shape[1] > 1:
        Ch[:, :-1] = C[:, 1:] * 2 * np.arange(1, C.shape[1])[None, :]
    return C, Ca, Ch


@dataclass
class SampleGradient:
    """Spherical gradient of the per-sample smoothed loss, with its 1-D parts."""

    direction: np.ndarray
    a: float
    b: float


def _split_sample(model: SmoothedModel, w, x):
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.size != model.dim or w.size != model.dim:
        raise ValueError(
            f"dimension mismatch: model dim {model.dim}, w {w.size}, x {x.size}"
        )
    a = float(w @ x)
    b2 = max(float(x @ x) - a * a, 0.0)
    return w, x, a, math.sqrt(b2)


def _general_value(model: SmoothedModel, a: float, b: float) -> float:
    t, wq = _ultraspherical_nodes(model.dim - 1)
    arg = (a + model.lam * t * b) / math.sqrt(1.0 + model.lam**2)
    return float(wq @ np.asarray(model.link(arg), dtype=float))


def _general_grad_parts(model: SmoothedModel, a: float, b: float):
    # dG/da and H = (dG/db)/b by quadrature; sigma' by central differences
    t, wq = _ultraspherical_nodes(model.dim - 1)
    root = math.sqrt(1.0 + model.lam**2)
    arg = (a + model.lam * t * b) / root
    h = 1e-6
    dsig = (
        np.asarray(model.link(arg + h), dtype=float)
        - np.asarray(model.link(arg - h), dtype=float)
    ) / (2 * h)
    g_a = float(wq @ dsig) / root
    if b < 1e-12:
        return g_a, 0.0
    g_b = float(wq @ (dsig * t)) * model.lam / root
    return g_a, g_b / b


def smoothed_sample_value(model: SmoothedModel, w, x, y: float) -> float:
    """
    Per-sample smoothed correlation loss 1 - y * G(a, b), where G averages
    sigma over the smoothing sphere. Exact for polynomial links; fixed
    64-node quadrature otherwise.
    """
    _, _, a, b = _split_sample(model, w, x)
    if model.link.kind == "polynomial":
        C, _, _ = _tables_cached(model)
        g = float(polyval2d(a, b * b, C))
    else:
        g = _general_value(model, a, b)
    return 1.0 - y * g


def smoothed_sample_gradient(model: SmoothedModel, w, x, y: float) -> SampleGradient:
    """
    Spherical gradient of the per-sample smoothed loss at w:
    -y (dG/da - a H) (x - a w) with H = (dG/db)/b. When x is parallel to w
    the tangent direction vanishes and the gradient is zero.
    """
    w, x, a, b = _split_sample(model, w, x)
    if model.link.kind == "polynomial":
        _, Ca, Ch = _tables_cached(model)
        g_a = float(polyval2d(a, b * b, Ca))
        h = float(polyval2d(a, b * b, Ch))
    else:
        g_a, h = _general_grad_parts(model, a, b)
    direction = -y * (g_a - a * h) * project_perp(w, x)
    return SampleGradient(direction=direction, a=a, b=b)


_TABLE_CACHE: dict = {}


def _tables_cached(model: SmoothedModel):
    # key on the inputs the tables are built from; an identity-based key
    # goes stale when a collected link's address is reused
    key = (model.link.coeffs.tobytes(), model.dim, model.lam)
    tables = _TABLE_CACHE.get(key)
    if tables is None:
        tables = _monomial_sample_tables(model.link, model.dim, model.lam)
        if len(_TABLE_CACHE) > 256:
            _TABLE_CACHE.clear()
        _TABLE_CACHE[key] = tables
    return tables


def population_loss(link: LinkFunction, alpha: float) -> float:
    """Population correlation loss sum_k (c_k^2/k!)(1 - alpha^k)."""
    if not -1.0 <= alpha <= 1.0:
        raise ValueError(f"need alpha in [-1, 1], got {alpha}")
    out = 0.0
    fact = 1.0
    for k in range(1, link.max_degree + 1):
        fact *= k
        c = link.coeffs[k]
        if c != 0.0:
            out += c * c / fact * (1.0 - alpha**k)
    return out


def population_grad_coeff(model: SmoothedModel, alpha: float) -> float:
    """
    The scalar c(alpha) in the population gradient -(wstar - alpha w) c(alpha):
    sum over degrees of (c_k^2/k!) times the alpha-derivative of the smoothed
    monomial.
    """
    if not -1.0 < alpha < 1.0:
        raise ValueError(f"need alpha in (-1, 1), got {alpha}")
    out = 0.0
    fact = 1.0
    for k in range(1, model.link.max_degree + 1):
        fact *= k
        c = model.link.coeffs[k]
        if c != 0.0:
            out += c * c / fact * smooth_alpha_power_dalpha(k, alpha, model.lam, model.dim)
    return out


def smoothed_hermite_tensor(w: np.ndarray, k: int, lam: float) -> SymmetricTensor:
    """
    Dense tensor T_k(w) with <He_k(x), T_k(w)> equal to the smoothed He_k(w.x):
    (1+lam^2)^{-k/2} sum_j C(k,2j) lam^{2j} nu_j^{(d-1)}
                     sym(w^{(k-2j)} tensor P_w^{j}),
    where P_w projects onto the complement of w.
    """
    w = np.asarray(w, dtype=float)
    d = w.size
    if d**k > 10**7:
        raise ValueError(f"dense tensor of {d}^{k} entries exceeds size guard")
    P = np.eye(d) - np.outer(w, w)
    acc = np.zeros((d,) * k)
    for j in range(k // 2 + 1):
        coef = math.comb(k, 2 * j) * lam ** (2 * j) * nu_moment(j, d - 1)
        term = np.array(1.0)
        for _ in range(k - 2 * j):
            term = np.multiply.outer(term, w)
        for _ in range(j):
            term = np.multiply.outer(term, P)
        acc += coef * term.reshape((d,) * k)
    acc *= (1.0 + lam * lam) ** (-k / 2)
    return SymmetricTensor(order=k, dim=d, entries=symmetrize(acc))
