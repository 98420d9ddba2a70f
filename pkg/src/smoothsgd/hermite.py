"""Probabilist (monic) Hermite polynomials and Hermite expansions of link functions."""

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

MAX_DEGREE = 64  # monic coefficients overflow double precision past this


class DegenerateLinkError(ValueError):
    """The link function has no usable Hermite coefficient of degree >= 1."""


def _check_degree(k):
    if not 0 <= k <= MAX_DEGREE:
        raise ValueError(f"degree must be in [0, {MAX_DEGREE}], got {k}")


def he_eval(k: int, x):
    """
    Evaluate the monic Hermite polynomial He_k at x.

    Uses the three-term recurrence He_{k+1}(x) = x He_k(x) - k He_{k-1}(x)
    with He_0 = 1 and He_1 = x. Accepts scalars or arrays.
    """
    _check_degree(k)
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if k == 0:
        return prev if prev.ndim else float(prev)
    cur = x.copy()
    for j in range(1, k):
        prev, cur = cur, x * cur - j * prev
    return cur if cur.ndim else float(cur)


def he_monomial_coeffs(k: int) -> np.ndarray:
    """
    Monomial coefficients of He_k, lowest power first.

    Returns h with He_k(x) = sum_m h[m] x^m and h[k] = 1.
    """
    _check_degree(k)
    prev = np.array([1.0])
    if k == 0:
        return prev
    cur = np.array([0.0, 1.0])
    for j in range(1, k):
        nxt = np.zeros(j + 2)
        nxt[1:] = cur
        nxt[: j] -= j * prev
        prev, cur = cur, nxt
    return cur


def he_derivative_coeffs(k: int) -> np.ndarray:
    """Monomial coefficients of He_k' = k He_{k-1}."""
    _check_degree(k)
    if k == 0:
        return np.array([0.0])
    return k * he_monomial_coeffs(k - 1)


def information_exponent(coeffs, tol: float = 1e-8) -> int:
    """
    First index k >= 1 with |c_k| above tolerance.

    `tol` is relative to max |c_k|. Raises DegenerateLinkError when every
    coefficient of degree >= 1 is below tolerance.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    scale = np.max(np.abs(coeffs)) if coeffs.size else 0.0
    if scale > 0:
        for k in range(1, coeffs.size):
            if abs(coeffs[k]) > tol * scale:
                return k
    raise DegenerateLinkError("no Hermite coefficient of degree >= 1 above tolerance")


@dataclass
class LinkFunction:
    """
    A link held as Hermite coefficients c_0..c_K, normalized so sum c_k^2/k! = 1.

    kind is "polynomial" (exact finite coefficient list) or "general"
    (quadrature expansion of an arbitrary evaluator; the evaluator is kept,
    rescaled by the normalization).
    """

    coeffs: np.ndarray
    info_exponent: int
    max_degree: int
    kind: str = "polynomial"
    evaluator: Callable | None = field(default=None, repr=False)

    def monomial_coeffs(self) -> np.ndarray:
        """Monomial coefficients of sigma(x) = sum_k (c_k/k!) He_k(x), lowest first."""
        out = np.zeros(self.max_degree + 1)
        fact = 1.0
        for k in range(self.max_degree + 1):
            if k > 0:
                fact *= k
            if self.coeffs[k] != 0.0:
                h = he_monomial_coeffs(k)
                out[: k + 1] += (self.coeffs[k] / fact) * h
        return out

    def __call__(self, x):
        if self.kind == "polynomial":
            return np.polynomial.polynomial.polyval(x, self.monomial_coeffs())
        return self.evaluator(x)


def _normalize(coeffs: np.ndarray) -> tuple[np.ndarray, float]:
    fact = np.cumprod(np.concatenate(([1.0], np.arange(1.0, coeffs.size))))
    s2 = float(np.sum(coeffs**2 / fact))
    if s2 < 1e-24:
        raise DegenerateLinkError("link is numerically zero; cannot normalize")
    scale = np.sqrt(s2)
    return coeffs / scale, scale


def link_from_coeffs(coeffs, tol: float = 1e-8) -> LinkFunction:
    """Build a polynomial link from raw Hermite coefficients (normalized here)."""
    coeffs = np.asarray(coeffs, dtype=float).copy()
    _check_degree(coeffs.size - 1)
    coeffs, _ = _normalize(coeffs)
    return LinkFunction(
        coeffs=coeffs,
        info_exponent=information_exponent(coeffs, tol),
        max_degree=coeffs.size - 1,
        kind="polynomial",
    )


def normalized_hermite_link(k: int) -> LinkFunction:
    """The link He_k/sqrt(k!), the canonical degree-k link with exponent k."""
    if k < 1:
        raise ValueError(f"need k >= 1, got {k}")
    _check_degree(k)
    coeffs = np.zeros(k + 1)
    coeffs[k] = math.sqrt(math.factorial(k))
    return LinkFunction(coeffs=coeffs, info_exponent=k, max_degree=k, kind="polynomial")


def hermite_expand(
    evaluator: Callable, max_degree: int, nodes: int | None = None, tol: float = 1e-8
) -> LinkFunction:
    """
    Expand an evaluator in Hermite coefficients c_k = E[sigma(x) He_k(x)], x ~ N(0,1).

    Gauss-Hermite quadrature against the standard normal weight; exact (to
    rounding) for polynomial evaluators of degree <= max_degree when
    nodes >= max_degree + 1. The result is normalized so sum c_k^2/k! = 1.
    """
    _check_degree(max_degree)
    if nodes is None:
        nodes = 4 * (max_degree + 1)
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    w = w / w.sum()
    fx = np.asarray(evaluator(x), dtype=float)
    coeffs = np.array([np.sum(w * fx * he_eval(k, x)) for k in range(max_degree + 1)])
    coeffs, scale = _normalize(coeffs)
    return LinkFunction(
        coeffs=coeffs,
        info_exponent=information_exponent(coeffs, tol),
        max_degree=max_degree,
        kind="general",
        evaluator=lambda t, _f=evaluator, _s=scale: np.asarray(_f(t), dtype=float) / _s,
    )


SIZE_GUARD = 10**7  # max entries for dense Hermite tensors


def hermite_tensor_batch(X: np.ndarray, k: int) -> np.ndarray:
    """
    Dense Hermite tensors He_k(x) for a batch of vectors, shape (n, d, ..., d).

    Entry (i_1..i_k) is prod_j He_{m_j}(x_j) with m_j the multiplicity of
    coordinate j. Built by the tensor recurrence
    He_{k+1}(x)_{i0,i1..ik} = x_{i0} He_k(x)_{i1..ik}
                              - sum_l delta_{i0,i_l} He_{k-1}(x)_{..drop l..}.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    if n * d**k > 4 * SIZE_GUARD:
        raise ValueError(f"batch of {n} tensors of {d}^{k} entries too large; chunk it")
    if k == 0:
        return np.ones((n,))
    prev = np.ones((n,))
    cur = X.copy()
    eye = np.eye(d)
    for m in range(1, k):
        xterm = X.reshape(n, d, *([1] * m)) * cur.reshape(n, 1, *([d] * m))
        nxt = xterm
        for l in range(1, m + 1):
            term = eye.reshape(1, d, d, *([1] * (m - 1))) * prev.reshape(
                n, 1, 1, *([d] * (m - 1))
            )
            nxt = nxt - np.moveaxis(term, 2, 1 + l)
        prev, cur = cur, nxt
    return cur


def hermite_tensor_dense(x: np.ndarray, k: int) -> np.ndarray:
    """Dense Hermite tensor He_k(x) of one vector, shape (d,)*k."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("x must be a vector")
    if x.size**k > SIZE_GUARD:
        raise ValueError(f"dense tensor of {x.size}^{k} entries exceeds size guard")
    return hermite_tensor_batch(x[None], k)[0]
