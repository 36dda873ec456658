"""End-to-end acceptance checks; each prints a PASS/FAIL line and the measured numbers."""

import itertools
import time

import numpy as np
import pytest

from conftest import all_subsets, brute_backdoor
from margint.curve import deciles
from margint.graph import Dag, is_valid_backdoor_set, random_dag
from margint.harness import (
    ExperimentSpec,
    interaction_study,
    known_dag_study,
    misspecification_study,
    perturbed_dag_study,
    stability_select,
)
from margint.pathsim import PathSimConfig, TrueSource, entire_path_effect, partial_path_effect
from margint.sem import Dataset, make_sigmoid_sem, preset_sem, preset_target, simulate
from margint.smint import smint_estimate
from margint.smoothers import KernelSpec, fit_additive_arrays, partial_local_linear_fit

pytestmark = pytest.mark.slow


def _median(rows, method, key="error"):
    return float(np.median([r[key] for r in rows if r["method"] == method and r["status"] == "ok"]))


def test_criterion_01_misspecification(verdict):
    t0 = time.perf_counter()
    rows = misspecification_study(n=10_000, replications=1, seed=0, points=51)
    minutes = (time.perf_counter() - t0) / 60
    err = {r["method"]: r["error"] for r in rows}
    ok = err["smint"] < 0.05 and err["path-full"] > 1.0 and minutes < 5
    verdict("criterion 1", ok,
            f"S-mint e={err['smint']:.4g} (<0.05), entire-path e={err['path-full']:.4g} (>1.0), "
            f"{minutes:.2f} min (<5)")


def test_criterion_02_interaction(verdict):
    big = interaction_study(n=10_000, seeds=range(5))
    small = interaction_study(n=500, seeds=range(5))

    def ratio(rows):
        return np.mean([r["ise_smint"] for r in rows]) / np.mean([r["ise_additive"] for r in rows])

    r_big, r_small = ratio(big), ratio(small)
    verdict("criterion 2", r_big < 0.5 and r_small < 0.8,
            f"ISE boosted/additive n=10000: {r_big:.3f} (<0.5), n=500: {r_small:.3f} (<0.8)")


def test_criterion_03_empty_set_reduction(verdict):
    checked = mismatched = 0
    for seed in range(40):
        dag = random_dag(6, 0.4, seed)
        data = simulate(make_sigmoid_sem(dag, seed), 150, seed)
        for x, y in itertools.permutations(range(6), 2):
            if not is_valid_backdoor_set(dag, x, y, set()):
                continue
            grid = deciles(data.values[:, x])
            est = smint_estimate(data, x, y, (), grid).estimates
            ref = fit_additive_arrays(data.values[:, [x]], data.values[:, y]).predict(grid[:, None])
            checked += 1
            mismatched += est.tobytes() != ref.tobytes()
    verdict("criterion 3", checked > 0 and mismatched == 0,
            f"{checked} (DAG, x, y) cases with valid empty set, {mismatched} not byte-identical")


def test_criterion_04_backdoor_oracle(verdict):
    t0 = time.perf_counter()
    total = agree = 0
    for seed in range(200):
        dag = random_dag(5, 0.5, seed)
        for x, y in itertools.permutations(range(5), 2):
            rest = [k for k in range(5) if k not in (x, y)]
            for s in all_subsets(rest, 2):
                total += 1
                agree += is_valid_backdoor_set(dag, x, y, s) == brute_backdoor(5, dag.edges, x, y, s)
    sec = time.perf_counter() - t0
    verdict("criterion 4", agree == total and sec < 60, f"{agree}/{total} agree in {sec:.1f} s (<60)")


def test_criterion_05_local_linear_exactness(verdict):
    rng = np.random.default_rng(0)
    X = np.repeat(np.linspace(0, 2, 201), 2)
    XS = np.column_stack([np.tile([-0.5, 0.5], 201), rng.normal(size=402)])
    worst = 0.0
    for _ in range(300):
        a, b = rng.uniform(-5, 5, 2)
        h1, h2 = np.exp(rng.uniform(np.log(0.02), np.log(10), 2))
        xq = rng.uniform(0.3, 1.7)
        sq = rng.uniform(-0.5, 0.5, 2)
        fit = partial_local_linear_fit(X, XS, a + b * X, (xq, sq), KernelSpec(h1, (h2, h2)))
        expect = a + b * xq
        worst = max(worst, abs(fit - expect) / max(1.0, abs(expect)))
    verdict("criterion 5", worst < 1e-10, f"max relative error {worst:.2e} over 300 draws (<1e-10)")


@pytest.mark.parametrize("name", ["nonadd", "interaction", "nonadd-noise", "bandwidth"])
def test_criterion_06_path_equivalence(verdict, name):
    sem = preset_sem(name)
    x, y = preset_target(name)
    grid = deciles(simulate(sem, 2000, 0).values[:, x])
    cfg_a, cfg_b = PathSimConfig(B=100_000, seed=1), PathSimConfig(B=100_000, seed=2)
    a = entire_path_effect(TrueSource(sem), x, y, grid, cfg_a)
    b = partial_path_effect(TrueSource(sem), x, y, grid, cfg_b)
    z = np.abs(a.estimates - b.estimates) / np.hypot(a.stderr, b.stderr)
    verdict(f"criterion 6 [{name}]", bool(np.all(z < 3)), f"max |diff|/combined se = {z.max():.2f} (<3)")


def test_criterion_07_perturbed_ordering(verdict):
    spec = ExperimentSpec(p=50, n=500, replications=20, h_relative=(1.0,), methods=("smint", "path-full"),
                          seed=0)
    rows = perturbed_dag_study(spec, n_pairs=20)
    s, pf = _median(rows, "smint"), _median(rows, "path-full")
    verdict("criterion 7", s < pf, f"median e(D) S-mint {s:.4g} vs entire-path {pf:.4g} at 50% correct edges")


def test_criterion_08_rate(verdict):
    med = {}
    for n in (200, 2000):
        spec = ExperimentSpec(p=10, n=n, replications=20, methods=("smint",), seed=0)
        med[n] = _median(known_dag_study(spec), "smint")
    verdict("criterion 8", med[2000] < med[200],
            f"median e(D) n=200: {med[200]:.4g}, n=2000: {med[2000]:.4g} (paired seeds)")


def test_criterion_09_null_selection(verdict):
    counts = []
    empty = Dag(10, frozenset())
    for seed in range(10):
        rng = np.random.default_rng(seed)
        data = Dataset(tuple(f"V{i}" for i in range(10)), rng.standard_normal((118, 10)))
        counts.append(len(stability_select(data, empty, runs=100, keep_top=30, threshold=0.66, seed=seed)))
    mean = float(np.mean(counts))
    verdict("criterion 9", mean <= 2, f"mean selected pairs {mean:.2f} (<=2); per dataset {counts}")


def test_criterion_10_confounder(verdict):
    smint_slopes, naive_slopes = [], []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        z = rng.standard_normal(2000)
        x = z + rng.standard_normal(2000)
        y = x + z + rng.standard_normal(2000)
        d = Dataset(("Z", "X", "Y"), np.column_stack([z, x, y]))
        smint_slopes.append(smint_estimate(d, "X", "Y", ["Z"]).slope())
        naive_slopes.append(np.polyfit(x, y, 1)[0])
    s, nv = float(np.mean(smint_slopes)), float(np.mean(naive_slopes))
    verdict("criterion 10", abs(s - 1) <= 0.1 and nv > 1.3,
            f"mean S-mint slope {s:.3f} (1 +/- 0.1), mean naive slope {nv:.3f} (>1.3)")


def test_timing_ordering(verdict):
    spec = ExperimentSpec(p=10, n=500, replications=10, seed=0)
    rows = known_dag_study(spec)
    t = {m: _median(rows, m, "seconds") for m in ("smint", "path-full", "path-partial")}
    ok = t["smint"] < t["path-full"] and t["smint"] < t["path-partial"]
    verdict("timing order", ok,
            "median seconds per replication " + ", ".join(f"{m} {v:.3f}" for m, v in t.items()))
