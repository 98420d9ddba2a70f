"""Spiked tensors, the empirical Hermite tensor, partial trace, and spike recovery."""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .hermite import hermite_tensor_batch

SPIKED_SIZE_GUARD = 10**8


@dataclass
class SymmetricTensor:
    order: int
    dim: int
    entries: np.ndarray

    def frobenius_norm(self) -> float:
        return float(np.linalg.norm(self.entries.ravel()))


def symmetrize(entries: np.ndarray) -> np.ndarray:
    """Average over all index permutations."""
    k = entries.ndim
    out = np.zeros_like(entries)
    perms = list(itertools.permutations(range(k)))
    for p in perms:
        out += entries.transpose(p)
    return out / len(perms)


def rank_one(w: np.ndarray, k: int) -> np.ndarray:
    """Dense w^{tensor k}."""
    out = np.asarray(w, dtype=float)
    for _ in range(k - 1):
        out = np.multiply.outer(out, w)
    return out


def make_spiked_tensor(
    wstar: np.ndarray,
    n: float,
    k: int,
    rng: np.random.Generator,
    noise: str = "raw",
) -> SymmetricTensor:
    """
    Spiked tensor wstar^{tensor k} + Z/sqrt(n) with Z i.i.d. standard normal.

    noise="raw" keeps the i.i.d. entries (the standard model); "symmetrized"
    averages Z over index permutations, which changes the noise statistics.
    """
    wstar = np.asarray(wstar, dtype=float)
    d = wstar.size
    if d**k > SPIKED_SIZE_GUARD:
        raise ValueError(f"dense tensor of {d}^{k} entries exceeds size guard")
    if noise not in ("raw", "symmetrized"):
        raise ValueError(f"noise must be 'raw' or 'symmetrized', got {noise!r}")
    z = rng.standard_normal((d,) * k)
    if noise == "symmetrized":
        z = symmetrize(z)
    entries = rank_one(wstar, k) + z / np.sqrt(n)
    return SymmetricTensor(order=k, dim=d, entries=entries)


def empirical_hermite_tensor(X: np.ndarray, y: np.ndarray, k: int) -> SymmetricTensor:
    """
    (1/n) sum_i y_i He_k(x_i)/sqrt(k!), the moment tensor whose expectation
    is wstar^{tensor k} when y = He_k(wstar.x)/sqrt(k!).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    if n == 0:
        raise ValueError("empty sample set")
    if d**k > SPIKED_SIZE_GUARD:
        raise ValueError(f"dense tensor of {d}^{k} entries exceeds size guard")
    chunk = max(1, int(2e7) // d**k)
    acc = np.zeros((d,) * k)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        tensors = hermite_tensor_batch(X[lo:hi], k)
        acc += np.tensordot(y[lo:hi], tensors, axes=(0, 0))
    acc /= n * math.sqrt(math.factorial(k))
    return SymmetricTensor(order=k, dim=d, entries=acc)


def partial_trace(T: SymmetricTensor) -> np.ndarray:
    """
    Contract ceil((k-2)/2) index pairs with the identity: a d x d matrix for
    even order, a length-d vector for odd order.
    """
    if T.order < 3:
        raise ValueError(f"need order >= 3, got {T.order}")
    out = T.entries
    for _ in range(math.ceil((T.order - 2) / 2)):
        out = np.trace(out, axis1=out.ndim - 2, axis2=out.ndim - 1)
    return out


def tensor_apply(entries: np.ndarray, w: np.ndarray, times: int) -> np.ndarray:
    """Contract the last `times` modes with w."""
    out = entries
    for _ in range(times):
        out = np.tensordot(out, w, axes=([out.ndim - 1], [0]))
    return out


def _ascent_gradient(entries: np.ndarray, w: np.ndarray) -> np.ndarray:
    # gradient of <w^{tensor k}, T>: sum over modes of T contracted on the others
    k = entries.ndim
    grad = np.zeros_like(w)
    for mode in range(k):
        moved = np.moveaxis(entries, mode, 0)
        grad += tensor_apply(moved, w, k - 1)
    return grad


def power_iteration(
    M: np.ndarray, rng: np.random.Generator, tol: float = 1e-10, max_iter: int = 10**4
) -> np.ndarray:
    """Top eigenvector of a symmetric matrix, by magnitude."""
    v = rng.standard_normal(M.shape[0])
    v /= np.linalg.norm(v)
    for _ in range(max_iter):
        u = M @ v
        nu = np.linalg.norm(u)
        if nu < 1e-300:
            raise RuntimeError("power iteration collapsed to zero")
        u /= nu
        if abs(1.0 - abs(u @ v)) < tol:
            return u
        v = u
    raise RuntimeError(f"power iteration did not converge in {max_iter} iterations")


def recover_spike(
    T: SymmetricTensor,
    rng: np.random.Generator,
    warm_start_steps: int = 200,
    step_scale: float = 0.1,
) -> np.ndarray:
    """
    Estimate the spike direction: partial trace (odd order) or its top
    eigenvector (even order), then projected gradient ascent on
    <w^{tensor k}, T> with step step_scale/||T||_F.
    """
    M = partial_trace(T)
    if T.order % 2 == 1:
        w = M / np.linalg.norm(M)
    else:
        w = power_iteration((M + M.T) / 2, rng)
    if warm_start_steps == 0:
        return w
    step = step_scale / T.frobenius_norm()
    for _ in range(warm_start_steps):
        w = w + step * _ascent_gradient(T.entries, w)
        w /= np.linalg.norm(w)
    return w
