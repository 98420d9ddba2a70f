"""Scikit-learn estimator wrapping the online single-index fit."""

from __future__ import annotations

import math
import warnings

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .hermite import LinkFunction, normalized_hermite_link
from .sgd import _stage1_chunk, default_schedule
from .smoothing import SmoothedModel, _tables_cached


class SingleIndexRegressor(RegressorMixin, BaseEstimator):
    """Online estimator of y = link(w . x) for gaussian x and unit w.

    The fit makes a single streaming pass over the rows of ``X`` in the
    given order, updating a direction estimate on the unit sphere with
    smoothed spherical gradient steps.  Rows are treated as fresh draws;
    shuffle beforehand if they are not.

    Parameters
    ----------
    link : int or LinkFunction, default=3
        The link whose correlation with the index is climbed.  An int k
        selects the degree-k normalized Hermite link, which has
        information exponent k.
    smoothing : 'auto', float or None, default='auto'
        Smoothing radius.  'auto' uses d**0.25 for the data dimension d;
        a float fixes the radius; None or 0 disables smoothing.
    learning_rate : float or None, default=None
        Step size; None derives it from (k, d) and the batch size.
    batch_size : int or None, default=None
        Samples averaged per step; None derives it from (k, d).
    noise_var : float, default=0.0
        Assumed label-noise variance (informational; the update does not
        depend on it).
    random_state : int or None, default=None
        Seed for the initial direction.

    Attributes
    ----------
    direction_ : ndarray of shape (n_features,)
        Unit-norm estimate of the index direction.  The sign of the
        direction is identifiable only when the link has an odd part.
    n_iter_ : int
        Number of gradient steps taken.
    """

    def __init__(
        self,
        link=3,
        smoothing="auto",
        learning_rate=None,
        batch_size=None,
        noise_var=0.0,
        random_state=None,
    ):
        self.link = link
        self.smoothing = smoothing
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.noise_var = noise_var
        self.random_state = random_state

    def _resolve_link(self) -> LinkFunction:
        if isinstance(self.link, LinkFunction):
            return self.link
        if isinstance(self.link, (int, np.integer)):
            return normalized_hermite_link(int(self.link))
        raise TypeError("link must be an int degree or a LinkFunction")

    def _resolve_lambda(self, d: int) -> float:
        if self.smoothing == "auto":
            return d**0.25
        if self.smoothing is None:
            return 0.0
        lam = float(self.smoothing)
        if lam < 0:
            raise ValueError("smoothing must be >= 0")
        return lam

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        n, d = X.shape
        if d < 3:
            raise ValueError(f"need at least 3 features, got {d}")
        link = self._resolve_link()
        lam = self._resolve_lambda(d)
        kstar = link.info_exponent

        if self.batch_size is not None or self.learning_rate is not None or d < 8:
            batch = int(self.batch_size or 1)
            eta = self.learning_rate
            if eta is None:
                eta = batch * d ** (-kstar / 2.0) * (1 + lam * lam) ** (
                    kstar - 1
                ) / (1000.0 * math.factorial(kstar))
        else:
            policy = "none" if lam == 0.0 else "paper"
            sched = default_schedule(kstar, d, lambda_policy=policy, max_samples=n)
            batch, eta = sched.batch_size, sched.stage1_eta
            if self.smoothing not in ("auto", None):
                scale = (1 + lam * lam) / (1 + sched.stage1_lambda**2)
                eta *= scale ** (kstar - 1)
        if batch < 1:
            raise ValueError("batch_size must be >= 1")
        if n < batch:
            raise ValueError(f"need at least batch_size={batch} samples, got {n}")

        model = SmoothedModel(link=link, dim=d, lam=lam, noise_var=self.noise_var)
        _, ca, ch = _tables_cached(model)

        rng = np.random.default_rng(self.random_state)
        w = rng.standard_normal(d)
        w /= np.linalg.norm(w)

        steps = n // batch
        used = steps * batch
        xs = np.ascontiguousarray(X[:used], dtype=np.float32)
        ys = np.ascontiguousarray(y[:used], dtype=np.float64)
        alphas = np.zeros(1)
        # thr2=2 is unreachable for alpha**2 <= 1, so the pass never stops
        # early; wstar is only read for threshold checks and is a dummy.
        steps_done, status = _stage1_chunk(
            w, w.copy(), xs, ys, batch, eta, ca, ch, 2.0, alphas, used + 1, 0
        )
        nrm2 = float(w @ w)
        if status == 2 or not 0.5 < nrm2 < 2.0:
            raise FloatingPointError(
                "update diverged; lower learning_rate or raise batch_size"
            )
        if used < n:
            warnings.warn(
                f"dropped {n - used} trailing sample(s) not filling a batch",
                stacklevel=2,
            )

        self.link_ = link
        self.lambda_ = lam
        self.direction_ = w
        self.n_iter_ = int(steps_done)
        self.n_features_in_ = d
        return self

    def decision_function(self, X):
        check_is_fitted(self, "direction_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features; fit saw {self.n_features_in_}"
            )
        return X @ self.direction_

    def predict(self, X):
        z = self.decision_function(X)
        return self.link_(z)

    def alignment(self, direction) -> float:
        """Inner product of the fitted direction with a reference unit vector."""
        if not hasattr(self, "direction_"):
            raise NotFittedError("call fit first")
        direction = np.asarray(direction, dtype=float)
        return float(self.direction_ @ direction / np.linalg.norm(direction))
