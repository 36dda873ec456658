"""Kernel regression primitives and additive backfitting.

Kernels are Gaussian throughout: ``K`` on the intervention coordinate and a
product of per-coordinate Gaussians ``L`` on the adjustment coordinates.
Normalising constants cancel in every weighted mean, so they are omitted.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataError, SingularSystemError, ZeroWeightError

BANDWIDTH_FACTOR = 0.5


@dataclass(frozen=True)
class KernelSpec:
    """Bandwidth ``h1`` for the intervention coordinate, ``h2`` per adjustment coordinate."""

    h1: float
    h2: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "h1", float(self.h1))
        object.__setattr__(self, "h2", tuple(float(h) for h in np.atleast_1d(self.h2)))
        if not self.h1 > 0 or any(not h > 0 for h in self.h2):
            raise ValueError("bandwidths must be positive")

    @classmethod
    def from_data(cls, X, XS=None, factor: float = BANDWIDTH_FACTOR) -> "KernelSpec":
        """``factor`` times the empirical standard deviation of each coordinate."""
        h1 = factor * _sd(X)
        XS = _as_matrix(XS, len(X))
        return cls(h1, tuple(factor * _sd(XS[:, c]) for c in range(XS.shape[1])))


def _sd(v) -> float:
    v = np.asarray(v, dtype=float)
    sd = float(np.std(v, ddof=1)) if len(v) > 1 else 0.0
    if not sd > 0:
        raise DataError("cannot derive a bandwidth from a constant column")
    return sd


def _as_matrix(XS, n) -> np.ndarray:
    if XS is None:
        return np.empty((n, 0))
    XS = np.asarray(XS, dtype=float)
    return XS.reshape(n, -1) if XS.ndim != 2 else XS


def kernel_weights(X, XS, query, ks: KernelSpec) -> np.ndarray:
    """Product-kernel weights of every training point at ``query = (x, x_S)``."""
    X = np.asarray(X, dtype=float)
    XS = _as_matrix(XS, len(X))
    x, xs = query
    xs = np.atleast_1d(np.asarray(xs, dtype=float)) if XS.shape[1] else np.empty(0)
    if len(ks.h2) != XS.shape[1] or len(xs) != XS.shape[1]:
        raise ValueError("adjustment dimension does not match the bandwidths")
    u = ((X - x) / ks.h1) ** 2
    if XS.shape[1]:
        u = u + (((XS - xs) / np.asarray(ks.h2)) ** 2).sum(axis=1)
    return np.exp(-0.5 * u)


def local_constant_fit(X, XS, R, query, ks: KernelSpec) -> float:
    """Kernel-weighted mean of ``R`` at ``query``."""
    w = kernel_weights(X, XS, query, ks)
    total = w.sum()
    if not total > 0:
        raise ZeroWeightError(f"all kernel weights vanish at query {query}", query)
    return float(w @ np.asarray(R, dtype=float) / total)


def partial_local_linear_fit(X, XS, Y, query, ks: KernelSpec) -> float:
    """Intercept of the kernel-weighted fit that is linear in x and constant in x_S."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    w = kernel_weights(X, XS, query, ks)
    if not w.sum() > 0:
        raise ZeroWeightError(f"all kernel weights vanish at query {query}", query)
    d = X - query[0]
    s0, s1, s2 = w.sum(), w @ d, w @ (d * d)
    t0, t1 = w @ Y, w @ (d * Y)
    det = s0 * s2 - s1 * s1
    if not det > 1e-12 * s0 * s2:
        raise SingularSystemError(f"singular local design at query {query}", query)
    return float((s2 * t0 - s1 * t1) / det)


def local_linear_weights(x, h: float, points) -> np.ndarray:
    """Matrix ``H`` with ``H @ y`` the Gaussian local-linear fit of ``y`` on ``x`` at ``points``."""
    x = np.asarray(x, dtype=float)
    points = np.asarray(points, dtype=float)
    d = x[None, :] - points[:, None]
    w = np.exp(-0.5 * (d / h) ** 2)
    s0 = w.sum(axis=1)
    s1 = (w * d).sum(axis=1)
    s2 = (w * d * d).sum(axis=1)
    det = s0 * s2 - s1 * s1
    bad = ~(det > 1e-12 * s0 * s2)
    if np.any(bad):
        q = float(points[np.argmax(bad)])
        raise SingularSystemError(f"singular local design at x={q}", q)
    return w * (s2[:, None] - s1[:, None] * d) / det[:, None]


def local_linear_smooth(x, y, h: float, points) -> np.ndarray:
    """Univariate Gaussian local-linear fit of ``y`` on ``x``, evaluated at ``points``."""
    return local_linear_weights(x, h, points) @ np.asarray(y, dtype=float)


@dataclass(frozen=True)
class SmoothComponent:
    """A fitted univariate function stored on a grid; linear interpolation between knots.

    ``offset`` is subtracted so the component averages to zero over the
    training sample. Outside the knot range the end values are held.
    """

    knots: np.ndarray
    values: np.ndarray
    offset: float = 0.0

    def __call__(self, x) -> np.ndarray:
        return np.interp(np.asarray(x, dtype=float), self.knots, self.values) - self.offset


@dataclass(frozen=True)
class SmootherConfig:
    """Backfitting settings.

    ``bandwidths`` overrides the ``bandwidth_factor * sd`` rule per predictor.
    """

    bandwidth_factor: float = BANDWIDTH_FACTOR
    bandwidths: tuple[float, ...] | None = None
    n_knots: int = 200
    tol: float = 1e-6
    max_sweeps: int = 50


@dataclass(frozen=True)
class AdditiveModel:
    intercept: float
    components: tuple[SmoothComponent, ...]
    predictors: tuple[int, ...] = ()
    bandwidths: tuple[float, ...] = ()
    sweeps: int = 0
    rss_history: tuple[float, ...] = field(default=(), repr=False)

    def predict(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        if Z.shape[1] != len(self.components):
            raise ValueError(f"expected {len(self.components)} predictor columns, got {Z.shape[1]}")
        out = np.full(Z.shape[0], self.intercept)
        for c, comp in enumerate(self.components):
            out = out + comp(Z[:, c])
        return out

    def component(self, c: int, x) -> np.ndarray:
        return self.components[c](x)


@dataclass(frozen=True)
class AdditiveDesign:
    """Response-independent parts of a backfit: bandwidths, knots and smoother matrices.

    Build once with ``additive_design`` and pass to ``fit_additive_arrays``
    to fit several responses on the same predictors.
    """

    Z: np.ndarray
    bandwidths: tuple[float, ...]
    knots: tuple[np.ndarray, ...]
    hat: tuple[np.ndarray | None, ...]


def additive_design(Z, config: SmootherConfig | None = None, cache: dict | None = None) -> AdditiveDesign:
    """Smoother matrices for every column of ``Z``.

    ``cache`` (any dict) lets repeated calls reuse the matrix of a column
    already seen with the same bandwidth and knots.
    """
    config = config or SmootherConfig()
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    n, d = Z.shape
    if d == 0:
        raise DataError("additive fit needs at least one predictor")
    if not np.all(np.isfinite(Z)):
        raise DataError("non-finite values in additive fit input")
    if n < 10 * d:
        warnings.warn(f"additive fit with {d} predictors on only {n} rows", stacklevel=3)
    if config.bandwidths is not None:
        hs = tuple(float(h) for h in config.bandwidths)
        if len(hs) != d:
            raise ValueError("need one bandwidth per predictor")
    else:
        hs = tuple(config.bandwidth_factor * float(np.std(Z[:, c], ddof=1)) if n > 1 else 0.0
                   for c in range(d))
    knots = tuple(np.linspace(Z[:, c].min(), Z[:, c].max(), config.n_knots) for c in range(d))
    hat = []
    for c in range(d):
        if not hs[c] > 0:
            hat.append(None)
            continue
        key = (Z[:, c].tobytes(), hs[c], config.n_knots)
        if cache is None or key not in cache:
            H = local_linear_weights(Z[:, c], hs[c], knots[c])
            if cache is None:
                hat.append(H)
                continue
            cache[key] = H
        hat.append(cache[key])
    return AdditiveDesign(Z, hs, knots, tuple(hat))


def fit_additive_arrays(Z, y, config: SmootherConfig | None = None,
                        design: AdditiveDesign | None = None) -> AdditiveModel:
    """Backfit ``y ~ mu + sum_c m_c(Z[:, c])`` with local-linear component smoothers.

    Sweeps stop once the largest change in any component (at the training
    points) falls below ``tol * sd(y)`` or after ``max_sweeps`` sweeps.
    A ``design`` built from the same ``Z`` skips the smoother setup.
    """
    config = config or SmootherConfig()
    y = np.asarray(y, dtype=float)
    if design is None:
        design = additive_design(Z, config)
    Z, hs, knots, hat = design.Z, design.bandwidths, design.knots, design.hat
    n, d = Z.shape
    if len(y) != n:
        raise DataError("response and predictors differ in length")
    if not np.all(np.isfinite(y)):
        raise DataError("non-finite values in additive fit input")

    mu = float(y.mean())
    scale = float(np.std(y)) or 1.0
    fitted = np.zeros((d, n))
    comps: list[SmoothComponent] = []
    for c in range(d):
        lo, hi = Z[:, c].min(), Z[:, c].max()
        comps.append(SmoothComponent(np.array([lo, hi]) if hi > lo else np.array([lo, lo + 1.0]),
                                     np.zeros(2)))

    rss = [float(((y - mu) ** 2).sum())]
    sweeps = 0
    for sweeps in range(1, config.max_sweeps + 1):
        biggest = 0.0
        for c in range(d):
            if not hs[c] > 0:
                # constant predictor carries no signal
                continue
            partial = y - mu - fitted.sum(axis=0) + fitted[c]
            vals = hat[c] @ partial
            raw = np.interp(Z[:, c], knots[c], vals)
            offset = float(raw.mean())
            new = raw - offset
            biggest = max(biggest, float(np.max(np.abs(new - fitted[c]))))
            fitted[c] = new
            comps[c] = SmoothComponent(knots[c], vals, offset)
        rss.append(float(((y - mu - fitted.sum(axis=0)) ** 2).sum()))
        if biggest < config.tol * scale:
            break
    return AdditiveModel(mu, tuple(comps), tuple(range(d)), hs, sweeps, tuple(rss))


def fit_additive(data, response, predictors: Sequence, config: SmootherConfig | None = None) -> AdditiveModel:
    """Additive regression of one dataset column on others (names or indices)."""
    r = data.index(response)
    cols = [data.index(c) for c in predictors]
    if not cols:
        raise DataError("additive fit needs at least one predictor")
    if r in cols:
        raise DataError("response cannot also be a predictor")
    if len(set(cols)) != len(cols):
        raise DataError("repeated predictor")
    model = fit_additive_arrays(data.values[:, cols], data.values[:, r], config)
    return AdditiveModel(model.intercept, model.components, tuple(cols), model.bandwidths,
                         model.sweeps, model.rss_history)
