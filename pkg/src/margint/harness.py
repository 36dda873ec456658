"""Simulation studies, error metrics, causal-strength ranking and stability selection."""

from __future__ import annotations

import csv
import json
import logging
import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .curve import EffectCurve, deciles
from .errors import MargintError
from .graph import (
    AdjustmentSet,
    Dag,
    descendants,
    order_superset,
    parent_set,
    perturb_dag,
    random_dag,
)
from .pathsim import PathSimConfig, entire_path_effect, fit_sem, partial_path_effect
from .sem import Dataset, make_gp_sem, make_sigmoid_sem, oracle_effect, preset_sem, preset_target, simulate
from .smint import SmintConfig, additive_estimate, smint_curves, smint_estimate

log = logging.getLogger(__name__)

METHODS = ("smint", "additive", "path-full", "path-partial")

__all__ = [
    "deciles",
    "relative_squared_error",
    "causal_strength",
    "stability_select",
    "ExperimentSpec",
    "known_dag_study",
    "perturbed_dag_study",
    "supplied_dag_study",
    "misspecification_study",
    "interaction_study",
    "summarize",
]


def relative_squared_error(estimates, references) -> float:
    """``sum (est - ref)^2 / sum ref^2`` pooled over all pairs and grid points."""
    est = [np.asarray(getattr(e, "estimates", e), dtype=float) for e in _listify(estimates)]
    ref = [np.asarray(getattr(r, "estimates", r), dtype=float) for r in _listify(references)]
    if len(est) != len(ref) or any(a.shape != b.shape for a, b in zip(est, ref)):
        raise ValueError("estimates and references must match pair by pair")
    num = sum(float(((a - b) ** 2).sum()) for a, b in zip(est, ref))
    den = sum(float((b ** 2).sum()) for b in ref)
    if den == 0:
        raise ZeroDivisionError("all reference values are zero")
    return num / den


def _listify(x):
    if isinstance(x, EffectCurve) or (isinstance(x, np.ndarray) and x.ndim == 1):
        return [x]
    return list(x)


def causal_strength(observational_mean: float, curve, value_range: float | None = None,
                    scale: float = 1.0) -> float:
    """Range-normalised sum of relative deviations of the curve from the observational mean.

    ``value_range`` defaults to the span of the curve's grid (d9 - d1 for a
    decile grid). Means with ``|mean| < 1e-8 * scale`` are rejected.
    """
    est = np.asarray(getattr(curve, "estimates", curve), dtype=float)
    if value_range is None:
        grid = np.asarray(curve.grid)
        value_range = float(grid[-1] - grid[0])
    if not value_range > 0:
        raise ValueError("intervention range must be positive")
    if not abs(observational_mean) > 1e-8 * scale:
        raise ZeroDivisionError("observational mean is too close to zero")
    return float(np.abs(observational_mean - est).sum() / abs(observational_mean) / value_range)


@dataclass(frozen=True)
class RankedEffect:
    source: int
    target: int
    strength: float
    frequency: float

    def __post_init__(self):
        if not 0.0 <= self.frequency <= 1.0:
            raise ValueError("frequency must lie in [0, 1]")
        if self.strength < 0:
            raise ValueError("strength must be nonnegative")


def _adjustment_for(structure, k: int, p_max: int | None) -> AdjustmentSet:
    if isinstance(structure, Dag):
        return parent_set(structure, k)
    return order_superset(structure, k, p_max if p_max is not None else len(structure))


def eligible_pairs(structure, p: int, p_max: int | None = None) -> list[tuple[int, int]]:
    """Ordered pairs (k, j) whose target is not in k's adjustment set."""
    pairs = []
    for k in range(p):
        s = _adjustment_for(structure, k, p_max)
        pairs.extend((k, j) for j in range(p) if j != k and j not in s)
    return pairs


def strengths(data: Dataset, structure, pairs, config: SmintConfig | None = None,
              p_max: int | None = None) -> np.ndarray:
    """Relative causal strength of every pair, from S-mint curves on the decile grid."""
    out = np.empty(len(pairs))
    V = data.values
    grids = {}
    for i, (k, j) in enumerate(pairs):
        if k not in grids:
            grids[k] = deciles(V[:, k])
        grid = grids[k]
        s = _adjustment_for(structure, k, p_max)
        curve = smint_estimate(data, k, j, s, grid, config)
        mean = float(V[:, j].mean())
        scale = float(V[:, j].std()) or 1.0
        try:
            out[i] = causal_strength(mean, curve, float(grid[-1] - grid[0]), scale)
        except ZeroDivisionError:
            # flagged: near-zero observational mean, never ranked
            out[i] = np.nan
    return out


def stability_select(data: Dataset, structure, runs: int = 100, keep_top: int = 30,
                     threshold: float = 0.66, seed=None, p_max: int | None = None,
                     config: SmintConfig | None = None) -> list[RankedEffect]:
    """Pairs ranked in the top ``keep_top`` in at least a ``threshold`` fraction of half-subsamples.

    ``structure`` is a ``Dag`` (adjust for parents) or a causal order of
    column indices (adjust for the ``p_max`` preceding variables).
    Strengths reported are averages over the runs.
    """
    if runs < 1 or keep_top < 1:
        raise ValueError("runs and keep_top must be positive")
    if not 0 < threshold:
        raise ValueError("threshold must be positive")
    pairs = eligible_pairs(structure, data.p, p_max)
    if keep_top > len(pairs):
        raise ValueError(f"keep_top={keep_top} exceeds the {len(pairs)} eligible pairs")
    if threshold > 1:
        warnings.warn("threshold above 1 can never be reached; nothing will be selected", stacklevel=2)
    rng = np.random.default_rng(seed)
    half = data.n // 2
    counts = np.zeros(len(pairs))
    totals = np.zeros(len(pairs))
    for _ in range(runs):
        rows = np.sort(rng.choice(data.n, size=half, replace=False))
        cs = strengths(data.subset_rows(rows), structure, pairs, config, p_max)
        # stable sort: ties keep pair order
        top = np.argsort(np.where(np.isnan(cs), np.inf, -cs), kind="stable")[:keep_top]
        top = top[~np.isnan(cs[top])]
        counts[top] += 1
        totals += np.nan_to_num(cs)
    freq = counts / runs
    keep = [i for i in range(len(pairs)) if freq[i] >= threshold]
    keep.sort(key=lambda i: (-freq[i], -totals[i]))
    return [RankedEffect(pairs[i][0], pairs[i][1], float(totals[i] / runs), float(freq[i])) for i in keep]


@dataclass(frozen=True)
class ExperimentSpec:
    """Settings for a simulation study.

    ``n_pairs=None`` uses every pair joined by a directed path in the true
    DAG; otherwise that many such pairs are drawn per replication.
    ``oracle_factor`` sets the reference Monte-Carlo size to ``factor * n``.
    ``h_relative`` gives perturbation distances as multiples of the true
    DAG's edge count; ``1.0`` leaves half of the edges correct.
    """

    p: int = 10
    n: int = 500
    pc: float | None = None
    mechanism: str = "sigmoid"
    replications: int = 10
    methods: tuple[str, ...] = METHODS
    h_list: tuple[int, ...] = ()
    h_relative: tuple[float, ...] = ()
    n_pairs: int | None = None
    seed: int = 0
    oracle_factor: int = 5
    path_B: int = 1000
    smint: SmintConfig = field(default_factory=SmintConfig)

    def __post_init__(self):
        if self.p < 2 or self.n < 10 or self.replications < 1:
            raise ValueError("p >= 2, n >= 10 and replications >= 1 are required")
        if self.mechanism not in ("sigmoid", "gp"):
            raise ValueError("mechanism must be 'sigmoid' or 'gp'")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}")
        if any(h < 0 or h % 2 for h in self.h_list):
            raise ValueError("perturbation distances must be even and nonnegative")
        if any(f < 0 for f in self.h_relative):
            raise ValueError("relative perturbation distances must be nonnegative")

    def distances(self, n_edges: int) -> list[tuple[int, float | None]]:
        """Absolute distances, then ``f * |E|`` rounded down to an even number for each relative one."""
        out: list[tuple[int, float | None]] = [(h, None) for h in self.h_list]
        out.extend((2 * int(f * n_edges // 2), f) for f in self.h_relative)
        return out

    @property
    def edge_probability(self) -> float:
        return self.pc if self.pc is not None else min(1.0, 2.0 / (self.p - 1))


def _seed(spec_seed, *key):
    return np.random.SeedSequence(spec_seed, spawn_key=tuple(key))


def _replicate(spec: ExperimentSpec, r: int):
    """True DAG, SEM and data of replication ``r`` (independent of ``n`` for paired designs)."""
    dag = random_dag(spec.p, spec.edge_probability, _seed(spec.seed, r, 0))
    make = make_sigmoid_sem if spec.mechanism == "sigmoid" else make_gp_sem
    sem = make(dag, _seed(spec.seed, r, 1))
    data = simulate(sem, spec.n, _seed(spec.seed, r, 2).generate_state(1)[0])
    return dag, sem, data


def path_pairs(dag: Dag) -> list[tuple[int, int]]:
    return [(k, j) for k in range(dag.p) for j in sorted(descendants(dag, k))]


def _estimate(method: str, data: Dataset, dag: Dag, k: int, j: int, grid, spec: ExperimentSpec,
              fitted=None, seed=0) -> EffectCurve:
    if method in ("smint", "additive"):
        if j in dag.parents(k):
            # the graph claims j causes k, so do(k) leaves j at its observational law
            col = data.values[:, j]
            return EffectCurve(grid, np.full(len(grid), col.mean()), k, j, method,
                               metadata={"observational": True})
        fn = smint_estimate if method == "smint" else additive_estimate
        return fn(data, k, j, parent_set(dag, k), grid, spec.smint)
    cfg = PathSimConfig(B=spec.path_B, seed=seed)
    fn = entire_path_effect if method == "path-full" else partial_path_effect
    return fn(fitted, k, j, grid, cfg)


def _score(method, data, dag, pairs, grids, refs, spec, rep_seed):
    t0 = time.perf_counter()
    if method in ("smint", "additive"):
        ests = _smint_batch(method, data, dag, pairs, grids, spec)
    else:
        fitted = fit_sem(data, dag)
        ests = [_estimate(method, data, dag, k, j, grids[i], spec, fitted,
                          int(rep_seed.generate_state(1)[0]) + i)
                for i, (k, j) in enumerate(pairs)]
    seconds = time.perf_counter() - t0
    return relative_squared_error(ests, refs), seconds


def _smint_batch(method, data, dag, pairs, grids, spec):
    """S-mint curves for all pairs, sharing the per-intervention setup across responses."""
    ests: list[EffectCurve | None] = [None] * len(pairs)
    by_source: dict[int, list[int]] = {}
    for i, (k, j) in enumerate(pairs):
        if j in dag.parents(k):
            ests[i] = _estimate(method, data, dag, k, j, grids[i], spec)
        else:
            by_source.setdefault(k, []).append(i)
    cache: dict = {}
    for k, idx in by_source.items():
        curves = smint_curves(data, k, [pairs[i][1] for i in idx], parent_set(dag, k), grids[idx[0]],
                              spec.smint, boost=method == "smint", cache=cache)
        for i, c in zip(idx, curves):
            ests[i] = c
    return ests


def _references(sem, data, pairs, spec, rep_seed):
    grids, refs = [], []
    B = spec.oracle_factor * spec.n
    for i, (k, j) in enumerate(pairs):
        grid = deciles(data.values[:, k])
        grids.append(grid)
        refs.append(oracle_effect(sem, k, j, grid, B, _seed(rep_seed.entropy, *rep_seed.spawn_key, i)))
    return grids, refs


def _run_methods(rows, base, data, dag, pairs, grids, refs, spec, rep_seed):
    for method in spec.methods:
        row = dict(base, method=method)
        try:
            err, sec = _score(method, data, dag, pairs, grids, refs, spec, rep_seed)
            row.update(error=err, seconds=sec, status="ok")
        except (MargintError, ZeroDivisionError, ValueError) as exc:
            log.warning("replication %s method %s failed: %s", base.get("replication"), method, exc)
            row.update(error=float("nan"), seconds=float("nan"), status=f"error: {exc}")
        rows.append(row)


def _map(fn, items, jobs: int = 1):
    """Apply ``fn`` to every item, in worker processes when ``jobs > 1``; results keep item order."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


def _pick(pairs, k, seed):
    if k is None or len(pairs) <= k:
        return pairs
    pick = np.random.default_rng(seed).choice(len(pairs), k, replace=False)
    return [pairs[i] for i in sorted(pick)]


def _failed(base, methods, status):
    return [dict(base, method=m, error=float("nan"), seconds=float("nan"), status=status) for m in methods]


class _KnownRep:
    def __init__(self, spec):
        self.spec = spec

    def __call__(self, r):
        spec = self.spec
        dag, sem, data = _replicate(spec, r)
        pairs = _pick(path_pairs(dag), spec.n_pairs, _seed(spec.seed, r, 3))
        base = {"replication": r, "n": spec.n, "p": spec.p, "edges": dag.n_edges, "pairs": len(pairs)}
        if not pairs:
            return _failed(base, spec.methods, "no directed paths")
        rows: list[dict] = []
        grids, refs = _references(sem, data, pairs, spec, _seed(spec.seed, r, 4))
        _run_methods(rows, base, data, dag, pairs, grids, refs, spec, _seed(spec.seed, r, 5))
        return rows


class _PerturbedRep:
    def __init__(self, spec, n_pairs):
        self.spec = spec
        self.n_pairs = n_pairs

    def __call__(self, r):
        spec = self.spec
        dag, sem, data = _replicate(spec, r)
        pairs = _pick(path_pairs(dag), self.n_pairs, _seed(spec.seed, r, 3))
        rows: list[dict] = []
        if not pairs:
            for h, f in spec.distances(dag.n_edges):
                rows.extend(_failed({"replication": r, "h": h, "h_relative": f}, spec.methods,
                                    "no directed paths"))
            return rows
        grids, refs = _references(sem, data, pairs, spec, _seed(spec.seed, r, 4))
        for hi, (h, f) in enumerate(spec.distances(dag.n_edges)):
            base = {"replication": r, "h": h, "h_relative": f, "n": spec.n, "p": spec.p, "edges": dag.n_edges,
                    "pairs": len(pairs)}
            try:
                used = perturb_dag(dag, h, _seed(spec.seed, r, 6, hi))
            except MargintError as exc:
                rows.extend(_failed(base, spec.methods, f"error: {exc}"))
                continue
            _run_methods(rows, base, data, used, pairs, grids, refs, spec, _seed(spec.seed, r, 5))
        return rows


def known_dag_study(spec: ExperimentSpec, jobs: int = 1) -> list[dict]:
    """Every method on the true DAG; one row per replication and method."""
    return [row for rows in _map(_KnownRep(spec), range(spec.replications), jobs) for row in rows]


def perturbed_dag_study(spec: ExperimentSpec, n_pairs: int = 20, jobs: int = 1) -> list[dict]:
    """Methods run on perturbed DAGs at each distance in ``spec.h_list``, scored on true effects.

    Pairs are drawn among those joined by a directed path in the true DAG.
    """
    if not (spec.h_list or spec.h_relative):
        raise ValueError("perturbed study needs at least one distance h")
    return [row for rows in _map(_PerturbedRep(spec, n_pairs), range(spec.replications), jobs) for row in rows]


def supplied_dag_study(spec: ExperimentSpec, dag_for: Callable[[int, Dataset], Dag],
                       n_pairs: int = 10) -> list[dict]:
    """Like the perturbed study, but the DAG used for estimation comes from ``dag_for(r, data)``.

    This is the hook for structure-learning output produced elsewhere.
    """
    rows: list[dict] = []
    for r in range(spec.replications):
        dag, sem, data = _replicate(spec, r)
        pairs = _pick(path_pairs(dag), n_pairs, _seed(spec.seed, r, 3))
        base = {"replication": r, "n": spec.n, "p": spec.p, "edges": dag.n_edges, "pairs": len(pairs)}
        if not pairs:
            rows.extend(_failed(base, spec.methods, "no directed paths"))
            continue
        grids, refs = _references(sem, data, pairs, spec, _seed(spec.seed, r, 4))
        _run_methods(rows, base, data, dag_for(r, data), pairs, grids, refs, spec, _seed(spec.seed, r, 5))
    return rows


def central_grid(x, points: int = 51, tail: float = 0.05) -> np.ndarray:
    """``points`` equally spaced values between the ``tail`` and ``1 - tail`` sample quantiles."""
    lo, hi = np.quantile(np.asarray(x, dtype=float), [tail, 1 - tail])
    return np.linspace(lo, hi, points)


def misspecification_study(n: int = 10_000, replications: int = 1, seed: int = 0, points: int = 51,
                           methods: Sequence[str] = ("smint", "path-full"), oracle_factor: int = 5,
                           path_B: int = 1000) -> list[dict]:
    """Preset ``nonadd``: effect of X1 on Y, where an additive SEM for X3 is wrong.

    S-mint adjusts for the empty set (X1 has no parents); the path methods
    use additive fits on the true DAG.
    """
    sem = preset_sem("nonadd")
    x, y = preset_target("nonadd")
    rows = []
    for r in range(replications):
        data = simulate(sem, n, _seed(seed, r, 2).generate_state(1)[0])
        grid = central_grid(data.values[:, x], points)
        ref = oracle_effect(sem, x, y, grid, oracle_factor * n, _seed(seed, r, 4).generate_state(1)[0])
        fitted = None
        for method in methods:
            t0 = time.perf_counter()
            if method in ("smint", "additive"):
                est = (smint_estimate if method == "smint" else additive_estimate)(data, x, y, (), grid)
            else:
                fitted = fitted or fit_sem(data, sem.dag)
                fn = entire_path_effect if method == "path-full" else partial_path_effect
                est = fn(fitted, x, y, grid, PathSimConfig(B=path_B, seed=int(_seed(seed, r, 5).generate_state(1)[0])))
            sec = time.perf_counter() - t0
            rows.append({"replication": r, "n": n, "method": method,
                         "error": relative_squared_error(est, ref), "seconds": sec, "status": "ok"})
    return rows


def integrated_squared_error(estimate, reference) -> float:
    """Mean squared difference over the grid."""
    a = np.asarray(getattr(estimate, "estimates", estimate), dtype=float)
    b = np.asarray(getattr(reference, "estimates", reference), dtype=float)
    return float(np.mean((a - b) ** 2))


def interaction_study(n: int = 10_000, seeds: Sequence[int] = range(5), points: int = 51,
                      oracle_factor: int = 5) -> list[dict]:
    """Preset ``interaction``: effect of X3 on Y adjusting for {X1, X2}.

    Reports the integrated squared error of the additive start and of the
    boosted S-mint curve at stopping.
    """
    sem = preset_sem("interaction")
    x, y = preset_target("interaction")
    rows = []
    for s in seeds:
        data = simulate(sem, n, _seed(s, 0, 2).generate_state(1)[0])
        grid = central_grid(data.values[:, x], points)
        ref = oracle_effect(sem, x, y, grid, oracle_factor * n, _seed(s, 0, 4).generate_state(1)[0])
        t0 = time.perf_counter()
        curve = smint_estimate(data, x, y, (0, 1), grid)
        sec = time.perf_counter() - t0
        start = np.asarray(curve.metadata["additive_start"])
        rows.append({"seed": s, "n": n, "ise_additive": integrated_squared_error(start, ref),
                     "ise_smint": integrated_squared_error(curve, ref),
                     "iterations": curve.metadata["iterations"], "stop_rule": curve.metadata["stop_rule"],
                     "seconds": sec})
    return rows


def summarize(rows: Sequence[dict], by: Sequence[str] = ("method",)) -> dict:
    """Median and quartiles of error and time per group."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault(tuple(row.get(b) for b in by), []).append(row)
    out = {}
    for key, members in sorted(groups.items(), key=lambda kv: tuple(str(k) for k in kv[0])):
        err = np.array([m["error"] for m in members], dtype=float)
        sec = np.array([m["seconds"] for m in members], dtype=float)
        ok = np.isfinite(err)
        entry = {"count": len(members), "failed": int((~ok).sum())}
        if ok.any():
            q = np.quantile(err[ok], [0.25, 0.5, 0.75])
            entry.update(error_q1=float(q[0]), error_median=float(q[1]), error_q3=float(q[2]),
                         seconds_median=float(np.median(sec[ok])))
        out["/".join(str(k) for k in key)] = entry
    return out


def write_table(rows: Sequence[dict], path) -> None:
    if not rows:
        open(path, "w").close()
        return
    fields = list(dict.fromkeys(k for row in rows for k in row))
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def write_summary(summary: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
