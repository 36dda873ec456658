"""Path-based simulation of intervention distributions.

Two simulators share one engine:

* ``entire_path_effect`` cuts the edges into X, then propagates draws
  along every directed path from a root of the cut graph to Y.
* ``partial_path_effect`` propagates only along directed paths from X to
  Y. A parent of an on-path node that is not itself on such a path is
  replaced by a resampled observed value.

A node gets exactly one value per replication, however many paths share it.
Mechanisms come from a ``FittedSem`` (additive fits per node) or, for
population-level checks, from ``TrueSource`` wrapping a known ``Sem``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .curve import EffectCurve
from .errors import DataError
from .graph import MAX_PATHS, Dag, descendants, directed_paths, root_paths
from .sem import Dataset, Sem, node_key, stream
from .smoothers import AdditiveModel, SmootherConfig, fit_additive_arrays

NOISE_MODES = ("gaussian", "bootstrap")
OFFPATH_MODES = ("independent", "row")


@dataclass(frozen=True)
class PathSimConfig:
    """Monte-Carlo settings for the path simulators.

    ``offpath="independent"`` resamples each off-path parent on its own;
    ``"row"`` takes all off-path values of a replication from one observed row.
    """

    B: int = 1000
    noise: str = "gaussian"
    offpath: str = "independent"
    seed: int | None = 0
    path_cap: int = MAX_PATHS

    def __post_init__(self):
        if self.B < 1:
            raise ValueError("B must be at least 1")
        if self.noise not in NOISE_MODES:
            raise ValueError(f"noise must be one of {NOISE_MODES}")
        if self.offpath not in OFFPATH_MODES:
            raise ValueError(f"offpath must be one of {OFFPATH_MODES}")


@dataclass(frozen=True)
class FittedSem:
    """Per-node additive fits on a given DAG, with residuals kept for resampling.

    Root nodes have no model and are drawn from their observed column.
    """

    dag: Dag
    data: np.ndarray
    models: dict[int, AdditiveModel]
    residuals: dict[int, np.ndarray]
    sigma: tuple[float, ...]
    names: tuple[str, ...] = ()
    noise: str = "gaussian"
    offpath: str = "independent"

    def with_modes(self, noise=None, offpath=None) -> "FittedSem":
        return FittedSem(self.dag, self.data, self.models, self.residuals, self.sigma, self.names,
                         noise or self.noise, offpath or self.offpath)

    def draw(self, j, parent_values, rng) -> np.ndarray:
        B = parent_values.shape[0]
        if j not in self.models:
            # roots are resampled from their observed marginal
            return rng.choice(self.data[:, j], size=B)
        if self.noise == "gaussian":
            eps = self.sigma[j] * rng.standard_normal(B)
        else:
            eps = rng.choice(self.residuals[j], size=B)
        return self.models[j].predict(parent_values) + eps

    def draw_offpath(self, nodes, B, rng) -> dict[int, np.ndarray]:
        if self.offpath == "row":
            rows = rng.integers(0, self.data.shape[0], size=B)
            return {k: self.data[rows, k] for k in nodes}
        return {k: rng.choice(self.data[:, k], size=B) for k in nodes}

    def observational_mean(self, j, B, rng):
        col = self.data[:, j]
        return float(col.mean()), float(col.std(ddof=1) / np.sqrt(len(col))) if len(col) > 1 else 0.0


def fit_sem(data: Dataset, dag: Dag, noise: str = "gaussian", offpath: str = "independent",
            config: SmootherConfig | None = None) -> FittedSem:
    """Fit every non-root node additively on its parents in ``dag``."""
    if dag.p != data.p:
        raise DataError(f"graph has {dag.p} nodes but data has {data.p} columns")
    V = data.values
    models, residuals, sigma = {}, {}, []
    for j in range(dag.p):
        pa = list(dag.parents(j))
        if pa:
            m = fit_additive_arrays(V[:, pa], V[:, j], config)
            r = V[:, j] - m.predict(V[:, pa])
            models[j] = m
        else:
            r = V[:, j] - V[:, j].mean()
        r = r - r.mean()
        residuals[j] = r
        sd = float(np.std(r, ddof=1)) if len(r) > 1 else 0.0
        sigma.append(sd if sd > 0 else np.finfo(float).tiny)
    return FittedSem(dag, V, models, residuals, tuple(sigma), data.columns, noise, offpath)


@dataclass(frozen=True)
class TrueSource:
    """The known mechanisms of a ``Sem``; off-path values are fresh observational draws."""

    sem: Sem
    names: tuple[str, ...] = field(default=(), init=False)

    def __post_init__(self):
        object.__setattr__(self, "names", self.sem.names)

    @property
    def dag(self):
        return self.sem.dag

    def draw(self, j, parent_values, rng):
        m = self.sem.mechanisms[j]
        return m(parent_values, m.sigma * rng.standard_normal(parent_values.shape[0]))

    def _observational(self, B, rng):
        X = np.empty((B, self.sem.p))
        for j in self.sem.dag.topological_order:
            m = self.sem.mechanisms[j]
            X[:, j] = self.draw(j, X[:, list(m.parents)], rng)
        return X

    def draw_offpath(self, nodes, B, rng):
        X = self._observational(B, rng)
        return {k: X[:, k] for k in nodes}

    def observational_mean(self, j, B, rng):
        ys = self._observational(B, rng)[:, j]
        return float(ys.mean()), float(ys.std(ddof=1) / np.sqrt(B)) if B > 1 else 0.0


def _run(source, x, y, values, config: PathSimConfig, partial: bool) -> EffectCurve:
    dag = source.dag
    method = "path-partial" if partial else "path-full"
    values = np.atleast_1d(np.asarray(values, dtype=float))
    if x == y:
        raise ValueError("x and y must differ")
    meta = {"B": config.B, "seed": config.seed, "noise": getattr(source, "noise", "true"),
            "offpath": getattr(source, "offpath", "true")}

    if y not in descendants(dag, x):
        rng = stream(config.seed, node_key("observational"))
        mean, se = source.observational_mean(y, config.B, rng)
        meta.update(observational=True, nodes_simulated=0, offpath_nodes=0, n_paths=0)
        return EffectCurve(values, np.full(len(values), mean), x, y, method,
                           stderr=np.full(len(values), se), metadata=meta)

    paths = (directed_paths if partial else root_paths)(dag, x, y, config.path_cap)
    on_path = set().union(*map(set, paths))
    order = [j for j in dag.without_incoming(x).topological_order if j in on_path and j != x]
    offpath = sorted({k for j in order for k in dag.parents(j)} - on_path) if partial else []

    est = np.empty(len(values))
    stderr = np.empty(len(values))
    for i, v in enumerate(values):
        rng = stream(config.seed, i)
        vals = source.draw_offpath(offpath, config.B, rng) if offpath else {}
        vals[x] = np.full(config.B, v)
        for j in order:
            pa = dag.parents(j)
            pv = np.column_stack([vals[k] for k in pa]) if pa else np.empty((config.B, 0))
            vals[j] = source.draw(j, pv, rng)
        ys = vals[y]
        est[i] = ys.mean()
        stderr[i] = ys.std(ddof=1) / np.sqrt(config.B) if config.B > 1 else 0.0
    meta.update(observational=False, nodes_simulated=len(order), offpath_nodes=len(offpath),
                n_paths=len(paths))
    return EffectCurve(values, est, x, y, method, stderr=stderr, metadata=meta)


def entire_path_effect(fitted, x: int, y: int, values, config: PathSimConfig | None = None) -> EffectCurve:
    """Simulate ``E[Y | do(X = v)]`` along all root-to-Y paths of the graph with X's in-edges cut."""
    return _run(fitted, x, y, values, config or PathSimConfig(), partial=False)


def partial_path_effect(fitted, x: int, y: int, values, config: PathSimConfig | None = None) -> EffectCurve:
    """Simulate ``E[Y | do(X = v)]`` along X-to-Y paths only, resampling off-path parents."""
    return _run(fitted, x, y, values, config or PathSimConfig(), partial=True)
