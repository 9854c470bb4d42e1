"""Acceptance gate: one test per criterion, each reporting a pass/fail line.

Run alone with ``pytest tests/test_acceptance.py -s`` or ``pytest -m acceptance``.
"""

import json
import shutil
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, CONFIGS
from oracles import (CONC_AT_ORIGIN, CONV_AT_ORIGIN, TRITANGENT_POINTS, TRITANGENT_WEIGHTS, concurrence_squared,
                     random_pure_state, random_rank_k_density, random_unitary)
from roofbench import quantum as qm
from roofbench.cli import grid_targets, main
from roofbench.errors import NoSolutionError
from roofbench.poly import Polynomial
from roofbench.roof import Decomposition, RoofProblem, check_affine_on_polytope, roof_eval_oracle
from roofbench.tangency import (assemble_system, build_r_matrix, graph_variety, lift, solve_certificate,
                                solve_system, tangency_residual, verify_certificate)

pytestmark = pytest.mark.acceptance


class Criterion:
    """Collects named checks and reports a single pass/fail line."""

    def __init__(self, number, title):
        self.number, self.title = number, title
        self.failures = []
        self.start = time.perf_counter()

    def check(self, ok, what):
        if not ok:
            self.failures.append(what)
        return ok

    def finish(self, budget=None):
        elapsed = time.perf_counter() - self.start
        if budget is not None:
            self.check(elapsed < budget, f"runtime {elapsed:.1f}s exceeds {budget}s")
        status = "PASS" if not self.failures else "FAIL"
        detail = "" if not self.failures else " -- " + "; ".join(self.failures[:5])
        line = f"[{status}] criterion {self.number}: {self.title} ({elapsed:.1f}s){detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert not self.failures, line


@pytest.fixture
def problem():
    from roofbench.variety import Variety
    V = Variety.from_strings(["x1^2 + x2^2 - 1"], 2, 1)
    return RoofProblem(V, Polynomial.parse("x1^3", 2), "convex")


def _sorted(points):
    points = np.asarray(points)
    return points[np.lexsort(np.round(points, 9).T[::-1])]


def test_criterion_1_tritangent_value(problem):
    c = Criterion(1, "circle tritangent value by oracle and certificate")
    want = _sorted(TRITANGENT_POINTS)
    oracle = roof_eval_oracle(problem, [0.0, 0.0], restarts=64, seed=0)
    c.check(abs(oracle.value - CONV_AT_ORIGIN) <= 1e-6, f"oracle value {oracle.value!r}")
    c.check(oracle.m == 3 and np.max(np.abs(oracle.decomposition.points - want)) <= 1e-5, "oracle points")
    c.check(oracle.m == 3 and np.max(np.abs(oracle.decomposition.weights - TRITANGENT_WEIGHTS)) <= 1e-5,
            "oracle weights")
    cert = solve_certificate(problem, [0.0, 0.0], 3, seed=0)
    c.check(abs(cert.value - CONV_AT_ORIGIN) <= 1e-6, f"certificate value {cert.value!r}")
    c.check(np.max(np.abs(cert.decomposition.points - want)) <= 1e-5, "certificate points")
    c.check(np.max(np.abs(cert.decomposition.weights - TRITANGENT_WEIGHTS)) <= 1e-5, "certificate weights")
    c.check(verify_certificate(problem, [0.0, 0.0], cert).passed, "certificate verification")
    c.finish(budget=10)


def _det3(M):
    return (M[0][0] * (M[1][1] * M[2][2] - M[1][2] * M[2][1])
            - M[0][1] * (M[1][0] * M[2][2] - M[1][2] * M[2][0])
            + M[0][2] * (M[1][0] * M[2][1] - M[1][1] * M[2][0]))


def test_criterion_2_bitangent_system(problem):
    c = Criterion(2, "bitangent system written out and solved")
    x, y = Polynomial.variable(0, 2), Polynomial.variable(1, 2)
    rows = [[y, -x, x ** 2 * y]]  # graph entry is a third of the exact lift 3x^2 y
    x1, y1, x2, y2, p = (Polynomial.variable(i, 5) for i in range(5))
    rng = np.random.default_rng(2)
    for r in [(0.0, 0.0), (0.3, -0.2), (-0.5, 0.4)]:
        rx, ry = r
        expected = [
            x1 ** 2 + y1 ** 2 - 1,
            x2 ** 2 + y2 ** 2 - 1,
            _det3([[y1, -x1, x1 ** 2 * y1], [y2, -x2, x2 ** 2 * y2], [x1 - x2, y1 - y2, x1 ** 3 - x2 ** 3]]),
            p * x1 + (1 - p) * x2 - rx,
            p * y1 + (1 - p) * y2 - ry,
        ]
        system = assemble_system(problem, list(r), 2, tangent_rows=rows).fold_weights()
        got = system.equations
        c.check(len(got) == 5, f"{len(got)} equations at {r}")
        c.check(all(g == e or g == -e for g, e in zip(got, expected)), f"equations differ at {r}")
        best = np.inf
        for _ in range(10):
            t = rng.uniform(0, 2 * np.pi, 2)
            u0 = [np.cos(t[0]), np.sin(t[0]), np.cos(t[1]), np.sin(t[1]), rng.uniform(0.2, 0.8)]
            u, res = solve_system(system, u0)
            best = min(best, res)
            if res < 1e-8:
                vals = np.array([e.eval(u) for e in expected])
                c.check(np.max(np.abs(vals)) < 1e-8, f"independent residual {np.max(np.abs(vals)):.2e}")
                break
        c.check(best < 1e-8, f"best residual {best:.2e} at {r}")
    c.finish()


def test_criterion_3_oracle_certificate_agreement(problem):
    c = Criterion(3, "oracle and certificate agree on the 9x9 open disk")
    grid = grid_targets({"bounds": [[-1, 1], [-1, 1]], "resolution": 9, "region": {"radius": 1, "open": True}}, 2)
    gr = graph_variety(problem)
    worst_gap, worst_sv, certified = 0.0, 0.0, 0
    for r in grid:
        oracle = roof_eval_oracle(problem, r, restarts=16, seed=0)
        dec = oracle.decomposition
        if dec.m >= 2:
            _, sv = tangency_residual(build_r_matrix(gr, lift(problem, dec.points)))
            worst_sv = max(worst_sv, sv)
            c.check(sv <= 1e-6, f"oracle decomposition at {r.tolist()} has sigma_N {sv:.2e}")
        try:
            cert = solve_certificate(problem, r, dec.m, seed=1, restarts=32)
        except NoSolutionError:
            # agreement is only required where both routes succeed
            continue
        certified += 1
        gap = abs(cert.value - oracle.value)
        worst_gap = max(worst_gap, gap)
        c.check(gap <= 1e-5, f"values differ by {gap:.2e} at {r.tolist()}")
    c.check(certified >= len(grid) // 2, f"only {certified} of {len(grid)} points certified")
    print(f"criterion 3: {certified}/{len(grid)} certified, max gap {worst_gap:.2e}, max sigma_N {worst_sv:.2e}")
    c.finish(budget=300)


def test_criterion_4_roof_properties(problem):
    c = Criterion(4, "roof property suite")
    rng = np.random.default_rng(4)
    concave = problem.with_function(-problem.f)
    cache = {}

    def conv(r):
        key = tuple(np.round(r, 15))
        if key not in cache:
            cache[key] = roof_eval_oracle(problem, r, restarts=8, seed=0).value
        return cache[key]

    worst = 0.0
    for _ in range(200):
        a, b = (np.sqrt(rng.uniform()) * np.array([np.cos(t), np.sin(t)]) for t in rng.uniform(0, 2 * np.pi, 2))
        excess = conv((a + b) / 2) - (conv(a) + conv(b)) / 2
        worst = max(worst, excess)
    c.check(worst <= 1e-6, f"midpoint convexity violated by {worst:.2e}")

    worst = 0.0
    for _ in range(20):
        r = np.sqrt(rng.uniform()) * 0.95 * np.array([1.0, 0.0]) @ _rot(rng.uniform(0, 2 * np.pi))
        lhs = roof_eval_oracle(problem.with_function(problem.f, "concave"), r, restarts=8, seed=0).value
        rhs = -roof_eval_oracle(concave, r, restarts=8, seed=0).value
        worst = max(worst, abs(lhs - rhs))
    c.check(worst <= 1e-8, f"conc f and -conv(-f) differ by {worst:.2e}")
    conc0 = roof_eval_oracle(problem.with_function(problem.f, "concave"), [0.0, 0.0], restarts=16).value
    c.check(abs(conc0 - CONC_AT_ORIGIN) <= 1e-6, f"conc f(0) = {conc0!r}")

    worst = 0.0
    for t in rng.uniform(0, 2 * np.pi, 50):
        x = np.array([np.cos(t), np.sin(t)])
        worst = max(worst, abs(roof_eval_oracle(problem, x, restarts=4, seed=0).value - x[0] ** 3))
    c.check(worst <= 1e-6, f"roof differs from f on V by {worst:.2e}")

    dec = Decomposition(TRITANGENT_WEIGHTS, TRITANGENT_POINTS)
    c.check(check_affine_on_polytope(problem, dec, samples=20, restarts=8), "roof not affine on tritangent triangle")
    c.finish()


def _rot(t):
    return np.array([[np.cos(t), np.sin(t)], [-np.sin(t), np.cos(t)]])


def test_criterion_5_poincare_suite():
    c = Criterion(5, "Gell-Mann bases, purity and equivariance for D = 2..5")
    rng = np.random.default_rng(5)
    for D in (2, 3, 4, 5):
        B, t = qm.gellmann_basis(D)
        gram_err = np.max(np.abs(B.gram() - np.eye(D * D)))
        c.check(gram_err <= 1e-12, f"D={D} Gram error {gram_err:.1e}")
        if D <= 4:
            L = B.elements[1:]
            prod = np.einsum("jab,kbc->jkac", L, L)
            recon = (np.eye(D * D - 1)[:, :, None, None] * np.eye(D) / D
                     + np.einsum("jkl,lab->jkab", t.d + 1j * t.f, L))
            err = np.max(np.abs(prod - recon))
            c.check(err <= 1e-12, f"D={D} algebra reconstruction error {err:.1e}")
        theta = qm.max_angle(D)
        for _ in range(100):
            v = random_pure_state(rng, D)
            cv = qm.embed(np.outer(v, v.conj()), B)
            n_err = abs(cv.c @ cv.c - D * (D - 1))
            s_err = np.max(np.abs(qm.star(cv, cv).c - (D - 2) * cv.c))
            c.check(n_err <= 1e-9 and s_err <= 1e-9, f"D={D} pure state residuals {n_err:.1e}, {s_err:.1e}")
            w = random_pure_state(rng, D)
            c.check(qm.angle(np.outer(v, v.conj()), np.outer(w, w.conj())) <= theta + 1e-12, f"D={D} angle bound")
            mixed = random_rank_k_density(rng, D, int(rng.integers(2, D + 1)))
            c.check(not qm.purity_conditions(qm.embed(mixed, B), 1e-9).is_pure, f"D={D} mixed state passed purity")
        for _ in range(10):
            U = random_unitary(rng, D)
            O = qm.adjoint_rep(U, B)
            c.check(np.max(np.abs(O @ O.T - np.eye(D * D))) <= 1e-10, f"D={D} adjoint rep not orthogonal")
            a = qm.embed(random_rank_k_density(rng, D, D), B)
            b = qm.embed(random_rank_k_density(rng, D, D), B)
            Oa, Ob = qm.apply_adjoint(O, a), qm.apply_adjoint(O, b)
            e1 = np.max(np.abs(qm.star(Oa, Ob).c - qm.apply_adjoint(O, qm.star(a, b)).c))
            e2 = np.max(np.abs(qm.wedge(Oa, Ob).c - qm.apply_adjoint(O, qm.wedge(a, b)).c))
            c.check(max(e1, e2) <= 1e-10, f"D={D} equivariance error {max(e1, e2):.1e}")
    c.finish(budget=60)


def test_criterion_6_entanglement_measures():
    c = Criterion(6, "F_2 examples, concavity and unitary invariance of f_a")
    s = 1 / np.sqrt(2)
    bell = np.array([s, 0, 0, s])
    c.check(abs(qm.measure_f_a(bell, 2, (2, 2)) - 1.0) <= 1e-12, "F_2(Bell)")
    for p in np.linspace(0, 1, 21):
        v = np.array([np.sqrt(p), 0, 0, np.sqrt(1 - p)])
        c.check(abs(qm.measure_f_a(v, 2, (2, 2)) - 4 * p * (1 - p)) <= 1e-12, f"F_2 at p={p:.2f}")
    rng = np.random.default_rng(6)
    for D in (2, 3, 4):
        for a in (2, 3):
            for _ in range(100):
                k = int(rng.integers(2, 5))
                q = rng.dirichlet(np.ones(k))
                states = [random_rank_k_density(rng, D, int(rng.integers(1, D + 1))) for _ in range(k)]
                mix = sum(w * r for w, r in zip(q, states))
                gap = qm.f_a(mix, a) - sum(w * qm.f_a(r, a) for w, r in zip(q, states))
                c.check(gap >= -1e-12, f"D={D} a={a} concavity gap {gap:.1e}")
                U = random_unitary(rng, D)
                diff = abs(qm.f_a(U @ states[0] @ U.conj().T, a) - qm.f_a(states[0], a))
                c.check(diff <= 1e-12, f"D={D} a={a} unitary invariance {diff:.1e}")
                # local unitaries on a pure bipartite state leave F_a unchanged
                v = random_pure_state(rng, D * D)
                UV = np.kron(random_unitary(rng, D), random_unitary(rng, D))
                diff = abs(qm.measure_f_a(UV @ v, a, (D, D)) - qm.measure_f_a(v, a, (D, D)))
                c.check(diff <= 1e-12, f"D={D} a={a} local invariance {diff:.1e}")
    c.finish()


def test_criterion_7_eof_desk_scale():
    c = Criterion(7, "EoF of 20 rank-2 two-qubit states against concurrence squared")
    rng = np.random.default_rng(7)
    worst = 0.0
    for i in range(20):
        rho = random_rank_k_density(rng, 4, 2)
        res = qm.entanglement_of_formation(rho, (2, 2), 2, restarts=256, seed=i)
        want = concurrence_squared(rho)
        worst = max(worst, abs(res.value - want))
        c.check(abs(res.value - want) <= 1e-3, f"state {i}: {res.value:.6f} vs {want:.6f}")
        witnessed = res.ensemble.average(2, (2, 2))
        c.check(np.max(np.abs(res.ensemble.density() - rho)) <= 1e-10, f"state {i}: ensemble does not average to rho")
        c.check(res.value <= witnessed + 1e-8, f"state {i}: value exceeds its witnessed ensemble")
        # any other valid ensemble bounds the roof from above
        for _ in range(5):
            U = random_unitary(rng, 4)[:, :2]
            other = qm.hjw_ensemble(rho, U).average(2, (2, 2))
            c.check(res.value <= other + 1e-8, f"state {i}: value exceeds a random ensemble")
    print(f"criterion 7: max deviation from concurrence squared {worst:.2e}")
    c.finish(budget=600)


BUNDLED = sorted(p.name for p in CONFIGS.glob("*.cfg"))


def _run_config(name, out):
    cfg = CONFIGS / name
    raw = json.loads(cfg.read_text())
    code = main(["run", str(cfg), "--out", str(out)])
    if raw.get("kind", "roof") == "roof" and "graph" in raw:
        main(["graph", str(cfg), "--out", str(out)])
    return code


def test_criterion_8_determinism(tmp_path):
    c = Criterion(8, "bundled configs give byte-identical outputs on repeated runs")
    for name in BUNDLED:
        a, b = tmp_path / "a" / name, tmp_path / "b" / name
        ca, cb = _run_config(name, a), _run_config(name, b)
        c.check(ca == cb, f"{name}: exit codes {ca} and {cb}")
        files = sorted(p.name for p in a.iterdir())
        c.check(files == sorted(p.name for p in b.iterdir()), f"{name}: different output files")
        c.check(any(f.endswith(".json") for f in files), f"{name}: no JSON output")
        for f in files:
            c.check((a / f).read_bytes() == (b / f).read_bytes(), f"{name}: {f} differs")
    shutil.rmtree(tmp_path / "a", ignore_errors=True)
    shutil.rmtree(tmp_path / "b", ignore_errors=True)
    c.finish()
