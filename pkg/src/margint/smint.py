"""S-mint: marginal integration over a backdoor adjustment set.

The regression surface ``m(x, x_S)`` starts as an additive fit and is
refined by L2-boosting with locally constant product-kernel steps. The
effect curve is the empirical mean of the surface over the observed
adjustment vectors, ``n^-1 sum_k m(v, X_S[k])``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .curve import EffectCurve, deciles
from .errors import InvalidAdjustmentSetError, ZeroWeightError
from .graph import AdjustmentSet, order_superset
from .smoothers import (
    BANDWIDTH_FACTOR,
    KernelSpec,
    SmootherConfig,
    additive_design,
    fit_additive_arrays,
)

# full kernel matrices are cached when n <= this; otherwise recomputed per step
CACHE_ROWS = 4000
# per-column n x n kernel factors may be shared between interventions up to this n
SHARED_KERNEL_ROWS = 1500


@dataclass(frozen=True)
class Transform:
    """Response transformation: ``identity``, ``square`` or ``indicator`` (``y <= c``)."""

    kind: str = "identity"
    c: float | None = None

    def __post_init__(self):
        if self.kind not in ("identity", "square", "indicator"):
            raise ValueError(f"unknown transform {self.kind!r}")
        if self.kind == "indicator" and self.c is None:
            raise ValueError("indicator transform needs a threshold c")

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "square":
            return y * y
        if self.kind == "indicator":
            return (y <= self.c).astype(float)
        return y

    @classmethod
    def parse(cls, text: str) -> "Transform":
        """``identity``, ``square`` or ``indicator:<c>``."""
        if text.startswith("indicator"):
            _, _, c = text.partition(":")
            return cls("indicator", float(c))
        return cls(text)

    def __str__(self):
        return f"indicator:{self.c}" if self.kind == "indicator" else self.kind


@dataclass(frozen=True)
class SmintConfig:
    """Settings for the boosted marginal-integration estimator.

    ``kernel=None`` uses ``bandwidth_factor`` times the empirical standard
    deviation of each coordinate. Boosting stops at the first iteration
    whose integrated difference falls below ``stop_abs * sd(t(Y))`` (rule 1)
    or below ``stop_rel`` times the first iteration's difference (rule 2),
    and after ``b_max`` iterations at the latest.
    """

    kernel: KernelSpec | None = None
    bandwidth_factor: float = BANDWIDTH_FACTOR
    b_max: int = 20
    stop_abs: float = 0.01
    stop_rel: float = 0.05
    transform: Transform = field(default_factory=Transform)
    smoother: SmootherConfig = field(default_factory=SmootherConfig)
    chunk_size: int = 500

    def __post_init__(self):
        if self.b_max < 1:
            raise ValueError("b_max must be at least 1")
        if not (self.stop_abs > 0 and self.stop_rel > 0):
            raise ValueError("stopping thresholds must be positive")


def boost_diff(increments) -> float:
    """Integrated difference of one boosting step.

    ``increments[v, k]`` is the step's fit at grid value ``v`` and the
    ``k``-th observed adjustment vector; the result is
    ``sum_v |mean_k increments[v, k]|``.
    """
    inc = np.asarray(increments, dtype=float)
    if inc.ndim == 1:
        return float(np.abs(inc).sum())
    return float(np.abs(inc.mean(axis=1)).sum())


class _KernelBooster:
    """Locally constant product-kernel fits of residuals, evaluated where boosting needs them.

    Each step returns the fit at the training points (to update residuals)
    and its marginal integral at every grid value. The kernel weights do
    not change between steps, so the integral collapses to one weight per
    (training point, grid value) pair, computed once up front.
    """

    def __init__(self, X, XS, grid, ks: KernelSpec, chunk_size=500, shared: dict | None = None):
        self.X = X
        self.XS = XS
        self.grid = grid
        self.h2 = np.asarray(ks.h2)
        self.h1 = ks.h1
        self.n = len(X)
        self.chunk = max(1, int(chunk_size))
        # K(X_i - v), n x G
        A = np.exp(-0.5 * ((X[:, None] - grid[None, :]) / ks.h1) ** 2)
        self._cache = {} if self.n <= CACHE_ROWS else None
        if shared is not None and self.n <= SHARED_KERNEL_ROWS:
            L = self._column_kernel(shared, XS[:, 0], self.h2[0])
            for c in range(1, XS.shape[1]):
                L = L * self._column_kernel(shared, XS[:, c], self.h2[c])
            self._cache = {0: (L, L * self._column_kernel(shared, X, self.h1))}
            self.chunk = self.n
        self._den_train = {}
        # integral[v] = sum_i A[i, v] R[i] sum_k L[k, i] / den[k, v]
        C = np.zeros_like(A)
        for start, rows, L, W in self._blocks():
            den_t = W.sum(axis=1)
            den_g = L @ A
            self._check(den_t, den_g, rows)
            self._den_train[start] = den_t
            C += L.T @ (1.0 / den_g)
        self.integrator = A * C / self.n

    @staticmethod
    def _column_kernel(shared, v, h):
        key = ("kernel", v.tobytes(), float(h))
        if key not in shared:
            shared[key] = np.exp(-0.5 * ((v[:, None] - v[None, :]) / h) ** 2)
        return shared[key]

    def _blocks(self):
        for start in range(0, self.n, self.chunk):
            rows = slice(start, min(start + self.chunk, self.n))
            if self._cache is not None and start in self._cache:
                yield start, rows, *self._cache[start]
                continue
            acc = np.zeros((rows.stop - rows.start, self.n))
            for c in range(self.XS.shape[1]):
                acc += ((self.XS[rows, c, None] - self.XS[None, :, c]) / self.h2[c]) ** 2
            L = np.exp(-0.5 * acc)
            W = L * np.exp(-0.5 * ((self.X[rows, None] - self.X[None, :]) / self.h1) ** 2)
            if self._cache is not None:
                self._cache[start] = (L, W)
            yield start, rows, L, W

    def step(self, R):
        g_train = np.empty(self.n)
        for start, rows, _, W in self._blocks():
            g_train[rows] = (W @ R) / self._den_train[start]
        return g_train, R @ self.integrator

    def _check(self, den_t, den_g, rows):
        if not np.all(den_t > 0):
            k = rows.start + int(np.argmin(den_t > 0))
            raise ZeroWeightError(f"zero kernel weight at training point {k}", (self.X[k], self.XS[k]))
        if not np.all(den_g > 0):
            k, v = np.unravel_index(np.argmin(den_g > 0), den_g.shape)
            k = rows.start + int(k)
            raise ZeroWeightError(
                f"zero kernel weight at grid value {self.grid[v]} and sample point {k}",
                (self.grid[v], self.XS[k]),
            )


def _resolve(data, x, y, s):
    xi, yi = data.index(x), data.index(y)
    if xi == yi:
        raise InvalidAdjustmentSetError("x and y must differ")
    members = sorted(s.members) if isinstance(s, AdjustmentSet) else sorted({data.index(c) for c in s})
    if xi in members or yi in members:
        raise InvalidAdjustmentSetError("adjustment set must exclude x and y")
    return xi, yi, members


def _grid(X, grid):
    if grid is None:
        return deciles(X)
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    if grid.min() < X.min() or grid.max() > X.max():
        warnings.warn("grid extends beyond the observed range of the intervention variable", stacklevel=4)
    return grid


class _Shared:
    """Everything about one (x, S, grid) that does not depend on the response."""

    def __init__(self, data, xi, members, grid, config: SmintConfig, boost: bool, cache=None):
        self.config = config
        self.boost = boost
        self.X = data.values[:, xi]
        self.grid = _grid(self.X, grid)
        self.members = members
        self.XS = data.values[:, members] if members else None
        self.Z = self.X[:, None] if not members else np.column_stack([self.X, self.XS])
        self.smoother = _smoother(config, self.X, self.XS)
        self.design = additive_design(self.Z, self.smoother, cache)
        self._booster = None
        self._cache = cache
        self.ks = None
        if members and boost:
            self.ks = config.kernel or KernelSpec.from_data(self.X, self.XS, config.bandwidth_factor)
            if len(self.ks.h2) != len(members):
                raise ValueError("kernel spec has the wrong number of adjustment bandwidths")

    @property
    def booster(self):
        if self._booster is None:
            self._booster = _KernelBooster(self.X, self.XS, self.grid, self.ks, self.config.chunk_size,
                                           self._cache)
        return self._booster


def _fit_one(shared: _Shared, xi, yi, y_values) -> EffectCurve:
    config, grid, members = shared.config, shared.grid, shared.members
    tY = config.transform(y_values)
    meta = {"transform": str(config.transform)}
    model = fit_additive_arrays(shared.Z, tY, shared.smoother, shared.design)

    if not members:
        est = model.predict(grid[:, None])
        meta.update(iterations=0, stop_rule="empty-adjustment", boost_diffs=[])
        return EffectCurve(grid, est, xi, yi, "smint" if shared.boost else "additive", (), metadata=meta)

    XS = shared.XS
    m_train = model.predict(shared.Z)
    # integrate the additive surface over the observed X_S
    s_part = sum(model.components[c + 1](XS[:, c]) for c in range(XS.shape[1]))
    curve = model.intercept + model.components[0](grid) + float(np.mean(s_part))
    meta["additive_start"] = curve.tolist()

    if not shared.boost:
        meta.update(iterations=0, stop_rule="no-boosting", boost_diffs=[])
        return EffectCurve(grid, curve, xi, yi, "additive", tuple(members), metadata=meta)

    booster = shared.booster
    scale = float(np.std(tY)) or 1.0
    diffs: list[float] = []
    rule = "b_max"
    for b in range(1, config.b_max + 1):
        g_train, integral = booster.step(tY - m_train)
        m_train = m_train + g_train
        curve = curve + integral
        diffs.append(boost_diff(integral))
        if diffs[-1] < config.stop_abs * scale:
            rule = "absolute"
            break
        if b > 1 and diffs[-1] < config.stop_rel * diffs[0]:
            rule = "relative"
            break
    meta.update(iterations=len(diffs), stop_rule=rule, boost_diffs=diffs,
                h1=shared.ks.h1, h2=list(shared.ks.h2))
    return EffectCurve(grid, curve, xi, yi, "smint", tuple(members), metadata=meta)


def smint_estimate(data, x, y, s=(), grid=None, config: SmintConfig | None = None,
                   boost: bool = True) -> EffectCurve:
    """Estimate ``E[t(Y) | do(X = v)]`` for each ``v`` in ``grid`` by S-mint.

    Parameters
    ----------
    data : Dataset
    x, y : column name or index
    s : adjustment set (``AdjustmentSet`` or iterable of columns)
        Must satisfy the backdoor criterion relative to (x, y); this is the
        caller's responsibility.
    grid : intervention values, default the nine deciles of X
    config : SmintConfig
    boost : bool
        ``False`` returns the integrated additive start (no kernel steps).

    With an empty adjustment set the result is the univariate additive fit
    of ``t(Y)`` on ``X`` evaluated at the grid.
    """
    return smint_curves(data, x, [y], s, grid, config, boost)[0]


def smint_curves(data, x, ys: Sequence, s=(), grid=None, config: SmintConfig | None = None,
                 boost: bool = True, cache: dict | None = None) -> list[EffectCurve]:
    """``smint_estimate`` for several responses of the same intervention.

    Smoother matrices and kernel weights depend only on X, X_S and the
    grid, so they are built once and reused for every response. Passing
    the same ``cache`` dict to calls on one dataset also shares the
    per-column smoother matrices between interventions.
    """
    config = config or SmintConfig()
    resolved = [_resolve(data, x, y, s) for y in ys]
    if not resolved:
        return []
    xi, _, members = resolved[0]
    shared = _Shared(data, xi, members, grid, config, boost, cache)
    return [_fit_one(shared, xi, yi, data.values[:, yi]) for _, yi, _ in resolved]


def _smoother(config: SmintConfig, X, XS) -> SmootherConfig:
    sm = config.smoother
    if config.kernel is not None:
        hs = (config.kernel.h1,) + (tuple(config.kernel.h2) if XS is not None else ())
        return replace(sm, bandwidths=hs)
    if sm.bandwidths is None and sm.bandwidth_factor != config.bandwidth_factor:
        return replace(sm, bandwidth_factor=config.bandwidth_factor)
    return sm


def additive_estimate(data, x, y, s=(), grid=None, config: SmintConfig | None = None) -> EffectCurve:
    """The integrated additive start of S-mint, without boosting."""
    return smint_estimate(data, x, y, s, grid, config, boost=False)


def smint_with_order(data, x, y, order: Sequence, p_max: int, grid=None,
                     config: SmintConfig | None = None) -> EffectCurve:
    """S-mint adjusting for the ``p_max`` variables preceding ``x`` in a causal order."""
    order_idx = [data.index(c) for c in order]
    if sorted(order_idx) != list(range(data.p)):
        raise ValueError("order must list every column exactly once")
    s = order_superset(order_idx, data.index(x), p_max)
    yi = data.index(y)
    if yi in s:
        raise InvalidAdjustmentSetError("y precedes x within p_max positions of the order")
    curve = smint_estimate(data, x, y, s, grid, config)
    curve.metadata["p_max"] = p_max
    return curve


def transformed_target(data, x, y, s=(), grid=None, config: SmintConfig | None = None,
                       transform: Transform | str = "identity") -> EffectCurve:
    """S-mint applied to ``t(Y)``; ``indicator:c`` estimates ``P[Y <= c | do(X = v)]``."""
    if isinstance(transform, str):
        transform = Transform.parse(transform)
    config = replace(config or SmintConfig(), transform=transform)
    return smint_estimate(data, x, y, s, grid, config)


def interventional_variance(data, x, y, s=(), grid=None, config: SmintConfig | None = None) -> EffectCurve:
    """``Var(Y | do(X = v))`` as the second-moment curve minus the squared mean curve."""
    config = config or SmintConfig()
    first = transformed_target(data, x, y, s, grid, config, Transform())
    second = transformed_target(data, x, y, s, first.grid, config, Transform("square"))
    var = second.estimates - first.estimates ** 2
    meta = {"mean": first.estimates.tolist(), "second_moment": second.estimates.tolist()}
    return EffectCurve(first.grid, var, first.x, first.y, "smint-variance", first.adjustment, metadata=meta)
