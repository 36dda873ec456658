import itertools

import numpy as np
import pytest

from margint.graph import Dag


def brute_descendants(p, edges, j):
    """Reachability by repeated boolean squaring of the adjacency relation."""
    A = np.zeros((p, p), dtype=bool)
    for k, l in edges:
        A[k, l] = True
    R = A.copy()
    for _ in range(p):
        R = R | ((R.astype(int) @ R.astype(int)) > 0)
    return {l for l in range(p) if R[j, l]}


def _undirected_paths(p, edges, x, y):
    nbrs = {i: set() for i in range(p)}
    for k, l in edges:
        nbrs[k].add(l)
        nbrs[l].add(k)

    def walk(path):
        last = path[-1]
        if last == y:
            yield list(path)
            return
        for nb in sorted(nbrs[last]):
            if nb not in path:
                yield from walk(path + [nb])

    yield from walk([x])


def brute_backdoor(p, edges, x, y, s):
    """Backdoor criterion by enumerating every undirected x-y path and testing blocking node by node."""
    edges = set(edges)
    s = set(s)
    if s & brute_descendants(p, edges, x):
        return False
    for path in _undirected_paths(p, edges, x, y):
        if (path[1], path[0]) not in edges:
            continue  # first edge must point into x
        blocked = False
        for i in range(1, len(path) - 1):
            a, m, b = path[i - 1], path[i], path[i + 1]
            collider = (a, m) in edges and (b, m) in edges
            if collider:
                if m not in s and not (brute_descendants(p, edges, m) & s):
                    blocked = True
            elif m in s:
                blocked = True
            if blocked:
                break
        if not blocked:
            return False
    return True


@pytest.fixture
def diamond():
    return Dag.from_edges(4, [(0, 1), (0, 2), (1, 3), (2, 3)])


@pytest.fixture
def chain():
    return Dag.from_edges(3, [(0, 1), (1, 2)])


def fig4_dag():
    """Pa1, Pa2 -> X; R2 -> Xl -> N; X -> N -> Y; R1 -> Xk -> Y."""
    names = ["Pa1", "Pa2", "R2", "R1", "X", "Xl", "Xk", "N", "Y"]
    i = {n: k for k, n in enumerate(names)}
    edges = [("Pa1", "X"), ("Pa2", "X"), ("R2", "Xl"), ("Xl", "N"), ("X", "N"), ("N", "Y"),
             ("R1", "Xk"), ("Xk", "Y")]
    return Dag.from_edges(len(names), [(i[a], i[b]) for a, b in edges]), i


def all_subsets(items, max_size):
    for r in range(max_size + 1):
        yield from itertools.combinations(items, r)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line, then assert the outcome."""
    def record(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
