"""
Online SGD on the sphere for single-index models, with landscape smoothing.

Each step draws a fresh batch, takes a gradient step on the smoothed
per-sample loss, and retracts to the sphere. Covariate chunks are drawn as
float32 (the generator stream is sequential, so results do not depend on
chunk size); all arithmetic accumulates in float64.
"""

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit
from numpy.polynomial.polynomial import polyval2d

from .smoothing import SmoothedModel, _tables_cached
from .sphere import sample_perp, sample_sphere

DEFAULT_MAX_SAMPLES = 10**8
_CHUNK_ELEMS = 1 << 22  # one RNG chunk, in covariate scalars


@dataclass
class SgdSchedule:
    """Search-stage step size / smoothing / batch, plus the decay-stage constant."""

    stage1_eta: float
    stage1_lambda: float
    stage1_steps: int
    batch_size: int
    stage2_c: float = 8.0

    def __post_init__(self):
        if self.stage1_eta <= 0:
            raise ValueError("stage1_eta must be positive")
        if self.stage1_lambda < 0:
            raise ValueError("stage1_lambda must be nonnegative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.stage2_c <= 0:
            raise ValueError("stage2_c must be positive")


@dataclass
class TrialRecord:
    kstar: int
    d: int
    seed: int | None
    samples_used: int
    hit_threshold: bool
    final_alpha: float
    wall_time: float


@dataclass
class SnrProbe:
    alpha: float
    signal: float
    signal_se: float
    noise: float
    noise_se: float
    snr: float


def default_schedule(
    kstar: int,
    d: int,
    lambda_policy: str = "paper",
    max_samples: int = DEFAULT_MAX_SAMPLES,
) -> SgdSchedule:
    """
    The canonical batch schedule: lambda = d^(1/4) (or 0 for the unsmoothed
    baseline), B = min(0.1 d^(k/2) (1+lambda^2)^(-2k+4), 8192) floored and
    clamped to >= 1, eta = B d^(-k/2) (1+lambda^2)^(k-1) / (1000 k!).
    """
    if kstar < 1:
        raise ValueError(f"need kstar >= 1, got {kstar}")
    if d < 8:
        raise ValueError(f"need d >= 8, got {d}")
    if lambda_policy == "paper":
        lam = d**0.25
    elif lambda_policy == "none":
        lam = 0.0
    else:
        raise ValueError(f"lambda_policy must be 'paper' or 'none', got {lambda_policy!r}")
    s = 1.0 + lam * lam
    b_raw = 0.1 * d ** (kstar / 2) * s ** (-2 * kstar + 4)
    batch = max(1, int(min(b_raw, 8192.0)))
    eta = batch * d ** (-kstar / 2) * s ** (kstar - 1) / (1000.0 * math.factorial(kstar))
    steps = max(1, math.ceil(max_samples / batch))
    return SgdSchedule(
        stage1_eta=eta, stage1_lambda=lam, stage1_steps=steps, batch_size=batch
    )


@njit(cache=True, fastmath=True)
def _stage1_chunk(w, wstar, xs, ys, batch, eta, ca, ch, thr2, alphas, stride, step0):
    n, d = xs.shape
    nsteps = n // batch
    pmax, qmax = ca.shape
    scale = eta / batch
    acc = np.zeros(d)
    for t in range(nsteps):
        for i in range(d):
            acc[i] = 0.0
        s_dot_a = 0.0
        base = t * batch
        for j in range(batch):
            row = xs[base + j]
            a = 0.0
            n2 = 0.0
            for i in range(d):
                xi = np.float64(row[i])
                a += w[i] * xi
                n2 += xi * xi
            b2 = n2 - a * a
            if b2 < 0.0:
                b2 = 0.0
            ga = 0.0
            hh = 0.0
            for p in range(pmax - 1, -1, -1):
                inner_a = 0.0
                inner_h = 0.0
                for q in range(qmax - 1, -1, -1):
                    inner_a = inner_a * b2 + ca[p, q]
                    inner_h = inner_h * b2 + ch[p, q]
                ga = ga * a + inner_a
                hh = hh * a + inner_h
            s = ys[base + j] * (ga - a * hh)
            s_dot_a += s * a
            for i in range(d):
                acc[i] += s * np.float64(row[i])
        nw = 0.0
        for i in range(d):
            wi = w[i] + scale * (acc[i] - s_dot_a * w[i])
            w[i] = wi
            nw += wi * wi
        # plain range compare: fastmath folds isfinite()-style idioms, but a
        # comparison against finite bounds still fails for inf/nan iterates
        if not (1e-300 < nw < 1e300):
            return t + 1, 2
        inv = 1.0 / np.sqrt(nw)
        alpha = 0.0
        for i in range(d):
            w[i] *= inv
            alpha += w[i] * wstar[i]
        gstep = step0 + t + 1
        if gstep % stride == 0 and gstep // stride < alphas.size:
            alphas[gstep // stride] = alpha
        if alpha * alpha >= thr2:
            return t + 1, 1
    return nsteps, 0


@njit(cache=True, fastmath=True)
def _stage2_chunk(w, wstar, xs, ys, c, c4d, ca, ch, step0):
    n, d = xs.shape
    pmax, qmax = ca.shape
    for t in range(n):
        row = xs[t]
        a = 0.0
        n2 = 0.0
        for i in range(d):
            xi = np.float64(row[i])
            a += w[i] * xi
            n2 += xi * xi
        b2 = n2 - a * a
        if b2 < 0.0:
            b2 = 0.0
        ga = 0.0
        hh = 0.0
        for p in range(pmax - 1, -1, -1):
            inner_a = 0.0
            inner_h = 0.0
            for q in range(qmax - 1, -1, -1):
                inner_a = inner_a * b2 + ca[p, q]
                inner_h = inner_h * b2 + ch[p, q]
            ga = ga * a + inner_a
            hh = hh * a + inner_h
        s = ys[t] * (ga - a * hh)
        eta = c / (c4d + step0 + t + 1)
        nw = 0.0
        for i in range(d):
            wi = w[i] + eta * (s * np.float64(row[i]) - s * a * w[i])
            w[i] = wi
            nw += wi * wi
        if not (1e-300 < nw < 1e300):
            return t + 1, 2
        inv = 1.0 / np.sqrt(nw)
        alpha = 0.0
        for i in range(d):
            w[i] *= inv
            alpha += w[i] * wstar[i]
        if alpha < 0.2:
            return t + 1, 3
    return n, 0


def aligned_start(
    wstar: np.ndarray, alpha0: float, rng: np.random.Generator
) -> np.ndarray:
    """A unit vector at exact alignment alpha0 with wstar, random otherwise."""
    wstar = np.asarray(wstar, dtype=float)
    u = sample_perp(wstar, rng)
    w0 = alpha0 * wstar + math.sqrt(max(1.0 - alpha0 * alpha0, 0.0)) * u
    return w0 / np.linalg.norm(w0)


def _check_unit(name, v, d):
    v = np.asarray(v, dtype=float)
    if v.shape != (d,):
        raise ValueError(f"{name} must have shape ({d},), got {v.shape}")
    n = np.linalg.norm(v)
    if abs(n - 1.0) > 1e-9:
        raise ValueError(f"{name} must be a unit vector, got norm {n}")
    return v / n


def _row_dots(xs: np.ndarray, w: np.ndarray) -> np.ndarray:
    # fixed per-row reduction order, so values do not depend on the chunk
    # height (BLAS matvec blocking does, at the last ulp)
    return np.einsum("ij,j->i", xs, w)


def _labels(model: SmoothedModel, astar: np.ndarray, noise_rng) -> np.ndarray:
    y = np.asarray(model.link(astar), dtype=float)
    if model.noise_var > 0.0:
        y = y + math.sqrt(model.noise_var) * noise_rng.standard_normal(astar.size)
    return y


def _split_streams(rng: np.random.Generator):
    # separate covariate and label-noise streams keep trajectories
    # independent of the chunk layout
    x_rng, noise_rng = rng.spawn(2)
    return x_rng, noise_rng


def run_stage1(
    model: SmoothedModel,
    schedule: SgdSchedule,
    w0: np.ndarray,
    wstar: np.ndarray,
    rng: np.random.Generator,
    threshold: float = 0.5,
    max_steps: int | None = None,
    stride: int | None = None,
    samples: np.ndarray | None = None,
    seed: int | None = None,
):
    """
    Run the search stage until the squared alignment (w.wstar)^2 reaches
    `threshold` or `max_steps` batches are spent. Every sample is fresh and
    used once; samples_used = steps * batch size.

    A non-finite iterate aborts the trial: the record comes back with
    hit_threshold=False and final_alpha=nan.

    `samples` replays a fixed covariate array instead of drawing from rng
    (for reproducibility and equivariance checks).

    Returns (alpha trajectory at `stride` spacing, TrialRecord).
    """
    d = model.dim
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold is on alpha^2 and must be in (0,1), got {threshold}")
    w = _check_unit("w0", w0, d).copy()
    ws = _check_unit("wstar", wstar, d)
    if max_steps is None:
        max_steps = schedule.stage1_steps
    if stride is None:
        stride = max(1, max_steps // 1000)
    model = _at_lambda(model, schedule.stage1_lambda)
    _, ca, ch = _tables_cached(model)
    batch = schedule.batch_size
    alphas = np.full(max_steps // stride + 1, np.nan)
    alphas[0] = float(w @ ws)
    t0 = time.perf_counter()
    steps_done = 0
    status = 0
    x_rng, noise_rng = _split_streams(rng)
    if samples is not None:
        samples = np.ascontiguousarray(samples)
        usable = (min(samples.shape[0] // batch, max_steps)) * batch
        if usable == 0:
            raise ValueError("not enough replay samples for one batch")
        astar = _row_dots(samples[:usable], ws)
        ys = _labels(model, astar, noise_rng)
        steps_done, status = _stage1_chunk(
            w, ws, samples[:usable], ys, batch, schedule.stage1_eta, ca, ch,
            threshold, alphas, stride, 0,
        )
    else:
        chunk_steps = max(1, _CHUNK_ELEMS // (d * batch))
        while steps_done < max_steps and status == 0:
            m = min(chunk_steps, max_steps - steps_done) * batch
            xs = x_rng.standard_normal((m, d), dtype=np.float32)
            ys = _labels(model, _row_dots(xs, ws), noise_rng)
            done, status = _stage1_chunk(
                w, ws, xs, ys, batch, schedule.stage1_eta, ca, ch,
                threshold, alphas, stride, steps_done,
            )
            steps_done += done
    wall = time.perf_counter() - t0
    nrm2 = float(w @ w)
    if status != 2 and not 0.5 < nrm2 < 2.0:
        status = 2
    if status == 2:
        warnings.warn("trial aborted on non-finite iterate", stacklevel=2)
        final_alpha = float("nan")
    else:
        final_alpha = float(w @ ws)
    record = TrialRecord(
        kstar=model.link.info_exponent,
        d=d,
        seed=seed,
        samples_used=steps_done * batch,
        hit_threshold=status == 1,
        final_alpha=final_alpha,
        wall_time=wall,
    )
    return alphas[: steps_done // stride + 1], record


def _at_lambda(model: SmoothedModel, lam: float) -> SmoothedModel:
    if model.lam == lam:
        return model
    return SmoothedModel(
        link=model.link, dim=model.dim, lam=lam, noise_var=model.noise_var
    )


def run_stage2(
    model: SmoothedModel,
    w_start: np.ndarray,
    wstar: np.ndarray,
    t2: int,
    rng: np.random.Generator,
    decay_c: float = 8.0,
) -> np.ndarray:
    """
    Polish an aligned iterate with unsmoothed single-sample SGD under the
    decaying step size c/(c^4 d + t), t = 1..t2. Requires a lam=0 model and
    a warm start; aborts if the alignment collapses below 0.2.
    """
    if model.lam != 0.0:
        raise ValueError("the decay stage runs unsmoothed; pass a lam=0 model")
    d = model.dim
    w = _check_unit("w_start", w_start, d).copy()
    ws = _check_unit("wstar", wstar, d)
    if float(w @ ws) < 0.7:
        warnings.warn("decay stage started below alignment 0.7", stacklevel=2)
    _, ca, ch = _tables_cached(model)
    c = float(decay_c)
    c4d = c**4 * d
    steps_done = 0
    chunk_steps = max(1, _CHUNK_ELEMS // d)
    x_rng, noise_rng = _split_streams(rng)
    while steps_done < t2:
        m = min(chunk_steps, t2 - steps_done)
        xs = x_rng.standard_normal((m, d), dtype=np.float32)
        ys = _labels(model, _row_dots(xs, ws), noise_rng)
        done, status = _stage2_chunk(w, ws, xs, ys, c, c4d, ca, ch, steps_done)
        steps_done += done
        if status == 2:
            raise RuntimeError("decay stage hit a non-finite iterate")
        if status == 3:
            raise RuntimeError(f"alignment collapsed below 0.2 after {steps_done} steps")
    return w


def _scalar_coef(model: SmoothedModel, a: np.ndarray, b2: np.ndarray, y: np.ndarray):
    # s with -grad = s * (x - a w); vectorized over samples
    if model.link.kind == "polynomial":
        _, ca, ch = _tables_cached(model)
        return y * (polyval2d(a, b2, ca) - a * polyval2d(a, b2, ch))
    from .smoothing import _ultraspherical_nodes

    t, wq = _ultraspherical_nodes(model.dim - 1)
    root = math.sqrt(1.0 + model.lam**2)
    b = np.sqrt(b2)
    arg = (a[:, None] + model.lam * np.outer(b, t)) / root
    h = 1e-6
    dsig = (model.link(arg + h) - model.link(arg - h)) / (2 * h)
    g_a = dsig @ wq / root
    with np.errstate(invalid="ignore", divide="ignore"):
        hcoef = np.where(b > 1e-12, (dsig * t) @ wq * model.lam / root / np.where(b > 1e-12, b, 1.0), 0.0)
    return y * (g_a - a * hcoef)


def snr_probe(
    model: SmoothedModel, alpha_target: float, batch: int, rng: np.random.Generator
) -> SnrProbe:
    """
    Monte-Carlo estimate of the per-sample gradient signal E[v.wstar] and
    noise E[||v||^2] (v = minus the smoothed loss gradient) at a point with
    exact alignment alpha_target, from `batch` fresh samples.
    """
    if batch < 100:
        raise ValueError(f"need batch >= 100, got {batch}")
    if not 0.0 < alpha_target < 1.0:
        raise ValueError(f"need alpha_target in (0,1), got {alpha_target}")
    d = model.dim
    ws = sample_sphere(d, rng)
    u = sample_perp(ws, rng)
    w = alpha_target * ws + math.sqrt(1.0 - alpha_target**2) * u
    w /= np.linalg.norm(w)
    # project with the realized alignment (one ulp off after renormalizing);
    # the record reports the requested one
    alpha = float(w @ ws)
    sum_sig = sum_sig2 = sum_noise = sum_noise2 = 0.0
    chunk = max(1, _CHUNK_ELEMS // d)
    left = batch
    x_rng, noise_rng = _split_streams(rng)
    while left > 0:
        m = min(chunk, left)
        xs = x_rng.standard_normal((m, d))
        a = _row_dots(xs, w)
        astar = _row_dots(xs, ws)
        b2 = np.maximum(np.einsum("ij,ij->i", xs, xs) - a * a, 0.0)
        y = _labels(model, astar, noise_rng)
        s = _scalar_coef(model, a, b2, y)
        sig = s * (astar - a * alpha)
        nse = s * s * b2
        sum_sig += sig.sum()
        sum_sig2 += (sig * sig).sum()
        sum_noise += nse.sum()
        sum_noise2 += (nse * nse).sum()
        left -= m
    n = batch
    signal = float(sum_sig / n)
    noise = float(sum_noise / n)
    signal_se = math.sqrt(max(sum_sig2 / n - signal**2, 0.0) / n)
    noise_se = math.sqrt(max(sum_noise2 / n - noise**2, 0.0) / n)
    return SnrProbe(
        alpha=alpha_target,
        signal=signal,
        signal_se=signal_se,
        noise=noise,
        noise_se=noise_se,
        snr=signal * signal / noise,
    )
