import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from margint.errors import DataError
from margint.graph import Dag, is_valid_backdoor_set, random_dag
from margint.sem import (
    Dataset,
    FourierEdge,
    Mechanism,
    Sem,
    SigmoidEdge,
    make_gp_sem,
    make_sigmoid_sem,
    oracle_effect,
    preset_sem,
    simulate,
)


def linear(coefs):
    def f(pv, e):
        return pv @ np.asarray(coefs, dtype=float) + e
    return f


def linear_sem(edges, coefs, sigmas, p):
    """Linear-Gaussian SEM: coefs[j] lists weights of node j's parents in ascending order."""
    dag = Dag.from_edges(p, edges)
    mechs = []
    for j in range(p):
        pa = dag.parents(j)
        if pa:
            mechs.append(Mechanism("preset", pa, sigmas[j], function=linear(coefs[j])))
        else:
            mechs.append(Mechanism("root", (), sigmas[j]))
    return Sem(dag, tuple(mechs))


class TestSimulate:
    def test_root_mean(self):
        sem = Sem(Dag(1, frozenset()), (Mechanism("root", (), 1.0),))
        n = 100_000
        x = simulate(sem, n, 3).values[:, 0]
        assert abs(x.mean()) < 3 / np.sqrt(n)

    def test_chain_slope(self):
        sem = linear_sem([(0, 1)], {1: [2.0]}, [1.0, 0.5], 2)
        d = simulate(sem, 20_000, 1).values
        slope = np.polyfit(d[:, 0], d[:, 1], 1)[0]
        # OLS slope se ~ 0.5/sqrt(n)
        assert abs(slope - 2.0) < 5 * 0.5 / np.sqrt(20_000)

    def test_nonadd_marginal_sd(self):
        d = simulate(preset_sem("nonadd"), 50_000, 0).values
        assert abs(d[:, 0].std(ddof=1) - 0.7) < 0.01

    def test_deterministic(self):
        sem = make_sigmoid_sem(random_dag(6, 0.4, 1), 2)
        a = simulate(sem, 50, 9).values
        b = simulate(sem, 50, 9).values
        assert np.array_equal(a, b)
        assert not np.array_equal(a, simulate(sem, 50, 10).values)

    def test_relabel_invariance(self):
        sem = make_sigmoid_sem(random_dag(6, 0.5, 4), 5)
        perm = [3, 0, 5, 1, 4, 2]
        a = simulate(sem, 100, 7)
        b = simulate(sem.relabel(perm), 100, 7)
        for j in range(6):
            assert np.array_equal(a.values[:, j], b.values[:, perm[j]])
            assert a.columns[j] == b.columns[perm[j]]

    def test_rejects_bad_n(self):
        with pytest.raises(ValueError):
            simulate(preset_sem("nonadd"), 0)


class TestSigmoid:
    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_parameter_ranges(self, seed):
        sem = make_sigmoid_sem(random_dag(8, 0.5, seed), seed)
        for j, m in enumerate(sem.mechanisms):
            if m.kind == "root":
                assert 1.0 <= m.sigma <= np.sqrt(2)
                continue
            assert 0.2 <= m.sigma <= np.sqrt(2) / 5
            for f in m.edge_functions:
                assert f.a >= 1.0
                assert 0.5 <= abs(f.b) <= 2.0
                assert -2.0 <= f.c <= 2.0

    @given(st.floats(-1e6, 1e6), st.floats(1, 3), st.floats(0.5, 2), st.floats(-2, 2))
    def test_bounded(self, x, a, b, c):
        assert abs(SigmoidEdge(a, b, c)(x)) < a

    def test_amplitude_mean(self):
        rng = np.random.default_rng(0)
        sem = make_sigmoid_sem(random_dag(40, 0.5, 0), rng)
        a = np.array([f.a for m in sem.mechanisms for f in m.edge_functions])
        # a - 1 is exponential with mean 1/4
        assert abs((a - 1).mean() - 0.25) < 4 * 0.25 / np.sqrt(len(a))


class TestGp:
    def test_reevaluation_exact(self):
        f = FourierEdge.draw(np.random.default_rng(0))
        xs = np.linspace(-3, 3, 7)
        assert np.array_equal(f(xs), f(xs))

    def test_covariance_across_draws(self):
        vals = np.array([[f(0.0), f(1.0)] for f in
                         (FourierEdge.draw(np.random.default_rng(s)) for s in range(2000))])
        assert abs(vals[:, 0].var() - 1.0) < 0.1
        corr = np.corrcoef(vals.T)[0, 1]
        assert abs(corr - np.exp(-0.5)) < 0.06

    def test_gp_sem_builds(self):
        sem = make_gp_sem(random_dag(5, 0.6, 1), 2)
        d = simulate(sem, 200, 0)
        assert d.values.shape == (200, 5)


class TestPresets:
    def test_interaction_edges(self):
        sem = preset_sem("interaction")
        assert sem.dag.edges == frozenset({(0, 2), (1, 2), (0, 3), (1, 3), (2, 3)})

    def test_nonadd_no_backdoor(self):
        assert is_valid_backdoor_set(preset_sem("nonadd").dag, 0, 3, set())

    @pytest.mark.parametrize("name", ["nonadd", "interaction", "nonadd-noise", "bandwidth"])
    def test_sigmas(self, name):
        assert preset_sem(name).sigmas == (0.7, 0.7, 0.2, 0.2)

    def test_unknown(self):
        with pytest.raises(ValueError):
            preset_sem("nope")

    def test_equations(self):
        sem = preset_sem("nonadd-noise")
        pv = np.array([[0.3, -0.4, 1.1]])
        assert sem.mechanisms[3](pv, np.array([0.05]))[0] == pytest.approx(np.exp(0.3) * np.cos(-0.44 + 0.05))
        sem = preset_sem("nonadd")
        pv = np.array([[0.2, 0.1]])
        expect = np.cos(4 * 0.3) * np.exp(0.1 + 0.025) + 0.01
        assert sem.mechanisms[2](pv, np.array([0.01]))[0] == pytest.approx(expect)


class TestOracle:
    def test_no_path_constant(self):
        sem = linear_sem([(0, 1)], {1: [1.0]}, [1.0, 1.0], 2)
        c = oracle_effect(sem, 1, 0, [-1.0, 0.0, 1.0], 5000, 0)
        assert np.ptp(c.estimates) == 0
        assert c.metadata["observational"]

    def test_confounded_linear(self):
        # Z -> X, Z -> Y, X -> Y: X = Z + e, Y = X + Z + e
        sem = linear_sem([(0, 1), (0, 2), (1, 2)], {1: [1.0], 2: [1.0, 1.0]}, [1.0, 1.0, 1.0], 3)
        grid = np.linspace(-2, 2, 9)
        c = oracle_effect(sem, 1, 2, grid, 20_000, 1)
        assert np.all(np.abs(c.estimates - grid) < 3 * c.stderr + 1e-12)

    def test_root_intervention(self):
        sem = linear_sem([(0, 1)], {1: [2.0]}, [1.0, 1.0], 2)
        grid = np.array([-1.0, 0.5, 2.0])
        c = oracle_effect(sem, 0, 1, grid, 10_000, 2)
        assert np.all(np.abs(c.estimates - 2 * grid) < 3 * c.stderr)

    def test_root_matches_conditional_mean(self):
        # no confounding: interventional mean equals the regression function
        sem = preset_sem("nonadd")
        d = simulate(sem, 200_000, 5).values
        v = 0.3
        near = np.abs(d[:, 0] - v) < 0.01
        cond = d[near, 3].mean()
        se_cond = d[near, 3].std(ddof=1) / np.sqrt(near.sum())
        c = oracle_effect(sem, 0, 3, [v], 50_000, 6)
        assert abs(c.estimates[0] - cond) < 3 * np.hypot(se_cond, c.stderr[0]) + 0.01


class TestDataset:
    def test_csv_round_trip(self, tmp_path):
        d = simulate(preset_sem("bandwidth"), 30, 1)
        d.to_csv(tmp_path / "d.csv")
        back = Dataset.read_csv(tmp_path / "d.csv")
        assert back.columns == d.columns
        assert np.array_equal(back.values, d.values)

    def test_validation(self):
        with pytest.raises(DataError):
            Dataset(("a",), np.array([[np.nan]]))
        with pytest.raises(DataError):
            Dataset(("a", "a"), np.zeros((2, 2)))
        with pytest.raises(DataError):
            Dataset(("a",), np.zeros((0, 1)))

    def test_index_names_and_positions(self):
        d = Dataset(("a", "b", "c"), np.zeros((2, 3)))
        assert d.index("b") == 1 and d.index(2) == 2 and d.index("2") == 2
        with pytest.raises(DataError):
            d.index("z")
        with pytest.raises(DataError):
            d.index(5)

    def test_ambiguous_name_warns(self):
        d = Dataset(("1", "0"), np.zeros((2, 2)))
        with pytest.warns(UserWarning):
            assert d.index("1") == 0

    def test_bad_csv(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,x\n")
        with pytest.raises(DataError):
            Dataset.read_csv(path)
        with pytest.raises(DataError):
            Dataset.read_csv(tmp_path / "missing.csv")
