"""Structural equation models: simulation, random mechanisms, presets, oracle effects.

Randomness is derived per node from a master seed with
``numpy.random.SeedSequence(master, spawn_key=(node_key, *extra))`` where
``node_key`` is the CRC-32 of the node's name. Streams therefore follow
node names, not positions, and relabelling the nodes of a model leaves
the simulated columns unchanged.
"""

from __future__ import annotations

import csv
import warnings
import zlib
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .curve import EffectCurve
from .errors import DataError
from .graph import Dag, descendants

PRESETS = ("nonadd", "interaction", "nonadd-noise", "bandwidth")


def node_key(name: str) -> int:
    return zlib.crc32(str(name).encode("utf-8"))


def stream(seed, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, *key)``; ``seed`` may itself be a ``SeedSequence``."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key + tuple(key)))
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


@dataclass(frozen=True)
class SigmoidEdge:
    a: float
    b: float
    c: float

    def __call__(self, x):
        u = self.b * (np.asarray(x, dtype=float) + self.c)
        return self.a * u / (1.0 + np.abs(u))


@dataclass(frozen=True)
class FourierEdge:
    """One realised sample path of a zero-mean, unit-variance squared-exponential GP."""

    frequencies: np.ndarray
    phases: np.ndarray
    weights: np.ndarray

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        scale = np.sqrt(2.0 / len(self.weights))
        return scale * (np.cos(np.multiply.outer(x, self.frequencies) + self.phases) @ self.weights)

    @classmethod
    def draw(cls, rng: np.random.Generator, n_features: int = 64, length_scale: float = 1.0):
        return cls(
            rng.normal(0.0, 1.0 / length_scale, n_features),
            rng.uniform(0.0, 2.0 * np.pi, n_features),
            rng.standard_normal(n_features),
        )


@dataclass(frozen=True)
class Mechanism:
    """Structural assignment of one node.

    ``root``: the node is its noise (plus ``loc``). ``additive``: sum of one
    edge function per parent plus noise. ``preset``: ``function(parents,
    noise)`` with parent columns in ascending node order.
    """

    kind: str
    parents: tuple[int, ...]
    sigma: float
    edge_functions: tuple[Callable, ...] = ()
    function: Callable | None = None
    loc: float = 0.0

    def __post_init__(self):
        if self.kind not in ("root", "additive", "preset"):
            raise ValueError(f"unknown mechanism kind {self.kind!r}")
        if not self.sigma > 0:
            raise ValueError("noise standard deviation must be positive")
        if self.kind == "root" and self.parents:
            raise ValueError("root mechanism cannot have parents")
        if self.kind == "additive" and len(self.edge_functions) != len(self.parents):
            raise ValueError("additive mechanism needs one edge function per parent")
        if self.kind == "preset" and self.function is None:
            raise ValueError("preset mechanism needs a function")

    def __call__(self, parent_values: np.ndarray, noise: np.ndarray) -> np.ndarray:
        if self.kind == "root":
            return self.loc + noise
        if self.kind == "additive":
            out = self.loc + noise
            for c, f in enumerate(self.edge_functions):
                out = out + f(parent_values[:, c])
            return out
        return self.function(parent_values, noise)


@dataclass(frozen=True)
class Sem:
    dag: Dag
    mechanisms: tuple[Mechanism, ...]
    names: tuple[str, ...] = ()

    def __post_init__(self):
        names = tuple(self.names) or tuple(f"X{j + 1}" for j in range(self.dag.p))
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "mechanisms", tuple(self.mechanisms))
        if len(self.mechanisms) != self.dag.p or len(names) != self.dag.p:
            raise ValueError("need one mechanism and one name per node")
        if len(set(names)) != len(names):
            raise ValueError("node names must be unique")
        for j, m in enumerate(self.mechanisms):
            if tuple(m.parents) != self.dag.parents(j):
                raise ValueError(f"mechanism parents of node {j} do not match the graph")

    @property
    def p(self):
        return self.dag.p

    @property
    def sigmas(self) -> tuple[float, ...]:
        return tuple(m.sigma for m in self.mechanisms)

    def relabel(self, perm: Sequence[int]) -> "Sem":
        """Same model with node ``j`` moved to position ``perm[j]``."""
        perm = list(perm)
        inv = np.argsort(perm)
        dag = Dag(self.p, frozenset((perm[k], perm[j]) for k, j in self.dag.edges))
        mechs = []
        for new in range(self.p):
            m = self.mechanisms[inv[new]]
            pairs = sorted((perm[k], c) for c, k in enumerate(m.parents))
            order = [c for _, c in pairs]
            new_parents = tuple(k for k, _ in pairs)
            if m.kind == "additive":
                fns = tuple(m.edge_functions[c] for c in order)
                mechs.append(Mechanism("additive", new_parents, m.sigma, fns, loc=m.loc))
            elif m.kind == "preset":
                fn = m.function
                back = np.argsort(order)
                wrapped = lambda pv, e, fn=fn, back=back: fn(pv[:, back], e)
                mechs.append(Mechanism("preset", new_parents, m.sigma, function=wrapped))
            else:
                mechs.append(m)
        names = tuple(self.names[inv[new]] for new in range(self.p))
        return Sem(dag, tuple(mechs), names)


@dataclass
class Dataset:
    """Rows are i.i.d. samples; columns are named variables."""

    columns: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        self.columns = tuple(str(c) for c in self.columns)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.columns):
            raise DataError("values must be an n x p matrix matching the column names")
        if self.values.shape[0] < 1:
            raise DataError("dataset has no rows")
        if not np.all(np.isfinite(self.values)):
            raise DataError("dataset contains non-finite values")
        if len(set(self.columns)) != len(self.columns):
            raise DataError("duplicate column names")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def index(self, col) -> int:
        """Column position from a name or a zero-based index (names win)."""
        if isinstance(col, (int, np.integer)):
            if 0 <= col < self.p:
                return int(col)
            raise DataError(f"column index {col} out of range")
        col = str(col)
        if col in self.columns:
            i = self.columns.index(col)
            if col.lstrip("-").isdigit() and int(col) != i and 0 <= int(col) < self.p:
                warnings.warn(f"{col!r} is both a column name and an index; using the name", stacklevel=2)
            return i
        try:
            i = int(col)
        except ValueError:
            raise DataError(f"no column named {col!r}") from None
        if 0 <= i < self.p:
            return i
        raise DataError(f"column index {i} out of range")

    def column(self, col) -> np.ndarray:
        return self.values[:, self.index(col)]

    def subset_rows(self, rows) -> "Dataset":
        return Dataset(self.columns, self.values[rows])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for row in self.values:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def read_csv(cls, path) -> "Dataset":
        try:
            with open(path, newline="") as fh:
                rows = list(csv.reader(fh))
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc}") from None
        if len(rows) < 2:
            raise DataError(f"{path}: need a header and at least one data row")
        header = rows[0]
        try:
            values = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
        except ValueError as exc:
            raise DataError(f"{path}: {exc}") from None
        if values.ndim != 2 or values.shape[1] != len(header):
            raise DataError(f"{path}: ragged rows")
        return cls(tuple(header), values)


def simulate(sem: Sem, n: int, seed=None) -> Dataset:
    """Draw ``n`` i.i.d. rows, evaluating nodes in topological order."""
    if n < 1:
        raise ValueError("n must be at least 1")
    X = np.empty((n, sem.p))
    for j in sem.dag.topological_order:
        m = sem.mechanisms[j]
        noise = m.sigma * stream(seed, node_key(sem.names[j])).standard_normal(n)
        X[:, j] = m(X[:, list(m.parents)], noise)
    return Dataset(sem.names, X)


def _draw_b(rng):
    return rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 2.0)


def _noise_sds(dag: Dag, rng) -> list[float]:
    return [
        rng.uniform(1.0, np.sqrt(2.0)) if not dag.parents(j) else rng.uniform(0.2, np.sqrt(2.0) / 5)
        for j in range(dag.p)
    ]


def _additive_sem(dag: Dag, draw_edge, rng, names=()) -> Sem:
    sds = _noise_sds(dag, rng)
    mechs = []
    for j in range(dag.p):
        pa = dag.parents(j)
        if not pa:
            mechs.append(Mechanism("root", (), sds[j]))
        else:
            mechs.append(Mechanism("additive", pa, sds[j], tuple(draw_edge(rng) for _ in pa)))
    return Sem(dag, tuple(mechs), tuple(names))


def make_sigmoid_sem(dag: Dag, seed=None, names=()) -> Sem:
    """Additive SEM with edge functions ``a*b(x+c)/(1+|b(x+c)|)``.

    ``a ~ 1 + Exp(rate 4)``, ``b ~ Unif([-2,-0.5] u [0.5,2])``,
    ``c ~ Unif([-2,2])``; root sds ~ Unif[1, sqrt 2], other noise sds ~
    Unif[1/5, sqrt(2)/5].
    """
    rng = np.random.default_rng(seed)

    def edge(r):
        return SigmoidEdge(1.0 + r.exponential(1.0 / 4.0), _draw_b(r), r.uniform(-2.0, 2.0))

    return _additive_sem(dag, edge, rng, names)


def make_gp_sem(dag: Dag, seed=None, names=(), n_features: int = 64) -> Sem:
    """Additive SEM whose edge functions are squared-exponential GP draws (length-scale 1)."""
    rng = np.random.default_rng(seed)
    return _additive_sem(dag, lambda r: FourierEdge.draw(r, n_features), rng, names)


def _nonadd_x3(pv, e):
    x1, x2 = pv[:, 0], pv[:, 1]
    return np.cos(4.0 * (x1 + x2)) * np.exp(x1 / 2.0 + x2 / 4.0) + e


def _nonadd_y(pv, e):
    x3 = pv[:, 0]
    return np.cos(x3) * np.exp(x3 / 4.0) + e


def _sum_x3(pv, e):
    return pv[:, 0] + pv[:, 1] + e


def _interaction_y(pv, e):
    return pv[:, 0] * pv[:, 1] * pv[:, 2] + e


def _nonadd_noise_y(pv, e):
    return np.exp(pv[:, 0]) * np.cos(pv[:, 1] * pv[:, 2] + e)


def _bandwidth_y(pv, e):
    return pv[:, 0] + np.sin(pv[:, 1] * pv[:, 2]) + e


def preset_sem(name: str) -> Sem:
    """The four-node example models X1, X2 -> X3 -> Y (plus X1, X2 -> Y except ``nonadd``).

    Noise sds are 0.7, 0.7, 0.2, 0.2.
    """
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    names = ("X1", "X2", "X3", "Y")
    if name == "nonadd":
        dag = Dag(4, frozenset({(0, 2), (1, 2), (2, 3)}))
        x3, y = _nonadd_x3, _nonadd_y
    else:
        dag = Dag(4, frozenset({(0, 2), (1, 2), (0, 3), (1, 3), (2, 3)}))
        x3 = _sum_x3
        y = {"interaction": _interaction_y, "nonadd-noise": _nonadd_noise_y, "bandwidth": _bandwidth_y}[name]
    mechs = (
        Mechanism("root", (), 0.7),
        Mechanism("root", (), 0.7),
        Mechanism("preset", (0, 1), 0.2, function=x3),
        Mechanism("preset", dag.parents(3), 0.2, function=y),
    )
    return Sem(dag, mechs, names)


def preset_target(name: str) -> tuple[int, int]:
    """The (intervention, response) pair studied for each preset."""
    return (0, 3) if name == "nonadd" else (2, 3)


def intervened_sample(sem: Sem, x: int, value: float, B: int, seed=None, rep: int = 0) -> np.ndarray:
    """``B`` draws of all variables with ``x`` held at ``value`` (full forward simulation)."""
    X = np.empty((B, sem.p))
    for j in sem.dag.topological_order:
        if j == x:
            X[:, j] = value
            continue
        m = sem.mechanisms[j]
        noise = m.sigma * stream(seed, node_key(sem.names[j]), rep).standard_normal(B)
        X[:, j] = m(X[:, list(m.parents)], noise)
    return X


def oracle_effect(sem: Sem, x: int, y: int, values, B: int, seed=None) -> EffectCurve:
    """Monte-Carlo ground truth ``E[Y | do(X = v)]`` using the true mechanisms.

    Uses a separate noise stream per grid value. When ``y`` is not a
    descendant of ``x`` the curve is constant at the Monte-Carlo mean of Y.
    """
    if B < 1:
        raise ValueError("B must be at least 1")
    if x == y:
        raise ValueError("x and y must differ")
    values = np.asarray(values, dtype=float)
    if y not in descendants(sem.dag, x):
        ys = simulate(sem, B, seed).values[:, y]
        mean, se = ys.mean(), ys.std(ddof=1) / np.sqrt(B) if B > 1 else 0.0
        est = np.full(len(values), mean)
        stderr = np.full(len(values), se)
        return EffectCurve(values, est, x, y, "oracle", stderr=stderr,
                           metadata={"B": B, "seed": seed, "observational": True})
    est = np.empty(len(values))
    stderr = np.empty(len(values))
    for i, v in enumerate(values):
        ys = intervened_sample(sem, x, v, B, seed, rep=i + 1)[:, y]
        est[i] = ys.mean()
        stderr[i] = ys.std(ddof=1) / np.sqrt(B) if B > 1 else 0.0
    return EffectCurve(values, est, x, y, "oracle", stderr=stderr,
                       metadata={"B": B, "seed": seed, "observational": False})
