"""Convex and concave roofs evaluated by direct multi-start minimization.

This is the brute-force route: for each decomposition size ``m`` the
weighted value ``sum p_j f(x_j)`` is minimized over points on the variety
and probability weights with barycenter ``r``.  Nothing here certifies
global optimality; see :mod:`roofbench.tangency` for that.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import cmp_to_key, partial

import numpy as np
from scipy.optimize import minimize, nnls

from .errors import DimensionError, InfeasibleError
from .poly import PolyBatch, Polynomial
from .variety import Variety, membership, project_many

log = logging.getLogger(__name__)

SENSES = ("convex", "concave")
WEIGHT_SUM_TOL = 1e-10
MEMBERSHIP_TOL = 1e-8
BARYCENTER_TOL = 1e-8
VALUE_TIE_TOL = 1e-9
ORDER_TOL = 1e-6


@dataclass(frozen=True)
class RoofProblem:
    variety: Variety
    f: Polynomial
    sense: str = "convex"

    def __post_init__(self):
        if self.f.nvars != self.variety.ambient_dim:
            raise DimensionError(
                f"f has {self.f.nvars} variables but the variety lives in R^{self.variety.ambient_dim}"
            )
        if self.sense not in SENSES:
            raise ValueError(f"sense must be one of {SENSES}, got {self.sense!r}")

    @property
    def n(self) -> int:
        return self.variety.ambient_dim

    @property
    def default_m_max(self) -> int:
        # Caratheodory bound with conv V taken full-dimensional
        return self.n + 1

    def with_function(self, f: Polynomial, sense: str | None = None) -> RoofProblem:
        return RoofProblem(self.variety, f, self.sense if sense is None else sense)


@dataclass(frozen=True)
class Decomposition:
    weights: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if w.ndim != 1 or pts.shape[0] != w.shape[0]:
            raise DimensionError(f"{w.shape[0]} weights for {pts.shape[0]} points")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "points", pts)

    @property
    def m(self) -> int:
        return len(self.weights)

    def barycenter(self) -> np.ndarray:
        return self.weights @ self.points

    def canonical(self) -> Decomposition:
        """Points sorted lexicographically; coordinates within ``ORDER_TOL`` count as ties."""
        order = sorted(range(self.m), key=cmp_to_key(lambda i, j: _lex_compare(self.points[i], self.points[j])))
        return Decomposition(self.weights[order], self.points[order])

    def violations(self, variety: Variety, tol: float = MEMBERSHIP_TOL) -> list[str]:
        out = []
        if self.points.shape[1] != variety.ambient_dim:
            return [f"points live in R^{self.points.shape[1]}, variety in R^{variety.ambient_dim}"]
        if np.any(self.weights < 0):
            out.append(f"negative weight {self.weights.min():.3g}")
        if abs(self.weights.sum() - 1.0) > WEIGHT_SUM_TOL:
            out.append(f"weights sum to {self.weights.sum():.12g}")
        for j, x in enumerate(self.points):
            if not membership(variety, x, tol):
                out.append(f"point {j} is off the variety")
        if self.m > variety.ambient_dim + 1:
            out.append(f"{self.m} points exceed the Caratheodory bound {variety.ambient_dim + 1}")
        return out

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "points": self.points.tolist()}

    @classmethod
    def from_dict(cls, d) -> Decomposition:
        return cls(np.array(d["weights"], dtype=float), np.array(d["points"], dtype=float))


@dataclass(frozen=True)
class RoofValue:
    value: float
    decomposition: Decomposition | None
    target: np.ndarray
    status: str  # "oracle", "certified" or "infeasible"

    @property
    def m(self) -> int:
        return 0 if self.decomposition is None else self.decomposition.m

    @property
    def feasible(self) -> bool:
        return self.status != "infeasible"

    def to_dict(self) -> dict:
        return {
            "target": np.asarray(self.target).tolist(),
            "value": None if not self.feasible else self.value,
            "m": self.m,
            "status": self.status,
            "decomposition": None if self.decomposition is None else self.decomposition.to_dict(),
        }


def _lex_compare(a, b) -> int:
    for u, v in zip(a, b):
        if abs(u - v) > ORDER_TOL:
            return -1 if u < v else 1
    return 0


def decomposition_value(problem: RoofProblem, dec: Decomposition) -> float:
    bad = dec.violations(problem.variety)
    if bad:
        raise ValueError("invalid decomposition: " + "; ".join(bad))
    return float(dec.weights @ problem.f.eval_many(dec.points))


# -- oracle internals --------------------------------------------------------


class _Objective:
    """Value, constraints and derivatives for a fixed decomposition size."""

    def __init__(self, variety: Variety, f: Polynomial, r: np.ndarray, m: int):
        self.r = r
        self.m = m
        self.n = n = variety.ambient_dim
        self.k = k = len(variety.generators)
        polys = [f, *f.grad(), *variety.generators]
        for g in variety.generators:
            polys.extend(g.grad())
        self.batch = PolyBatch(polys)
        self._z = None
        self._vals = None

    def split(self, z):
        X = z[: self.m * self.n].reshape(self.m, self.n)
        return X, z[self.m * self.n:]

    def _eval(self, z):
        if self._z is None or not np.array_equal(z, self._z):
            X, _ = self.split(z)
            self._vals = self.batch(X)
            self._z = np.array(z, copy=True)
        v = self._vals
        n, k = self.n, self.k
        fx = v[:, 0]
        fgrad = v[:, 1:1 + n]
        gens = v[:, 1 + n:1 + n + k]
        ggrad = v[:, 1 + n + k:].reshape(self.m, k, n)
        return fx, fgrad, gens, ggrad

    def value(self, z):
        fx, *_ = self._eval(z)
        return float(self.split(z)[1] @ fx)

    def value_grad(self, z):
        fx, fgrad, _, _ = self._eval(z)
        p = self.split(z)[1]
        return np.concatenate([(fgrad * p[:, None]).ravel(), fx])

    def constraints(self, z):
        X, p = self.split(z)
        _, _, gens, _ = self._eval(z)
        return np.concatenate([gens.ravel(), p @ X - self.r, [p.sum() - 1.0]])

    def constraints_jac(self, z):
        X, p = self.split(z)
        _, _, _, ggrad = self._eval(z)
        m, n, k = self.m, self.n, self.k
        J = np.zeros((m * k + n + 1, m * n + m))
        for j in range(m):
            J[j * k:(j + 1) * k, j * n:(j + 1) * n] = ggrad[j]
        row = m * k
        eye = np.eye(n)
        for j in range(m):
            J[row:row + n, j * n:(j + 1) * n] = p[j] * eye
            J[row:row + n, m * n + j] = X[j]
        J[row + n, m * n:] = 1.0
        return J


def spread_points(variety: Variety, r: np.ndarray, m: int, rng: np.random.Generator,
                  pool_factor: int = 6) -> np.ndarray:
    """m points of V picked farthest-first from a pool of projected Gaussian samples."""
    n = variety.ambient_dim
    spread = max(1.0, float(np.linalg.norm(r)))
    pool = project_many(variety, r + spread * rng.standard_normal((pool_factor * m, n)))
    pool = pool[np.all(np.isfinite(pool), axis=1)]
    if len(pool) < m:
        return r + spread * rng.standard_normal((m, n))
    idx = [int(rng.integers(len(pool)))]
    while len(idx) < m:
        dist = np.min(np.linalg.norm(pool[:, None, :] - pool[idx][None, :, :], axis=2), axis=1)
        idx.append(int(np.argmax(dist)))
    return pool[idx]


def start_weights(X: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Nonnegative weights roughly reproducing ``r``, blended with uniform so none vanish."""
    m = len(X)
    A = np.vstack([X.T, 10.0 * np.ones(m)])
    p, _ = nnls(A, np.concatenate([r, [10.0]]))
    p = p / p.sum() if p.sum() > 0 else np.full(m, 1.0 / m)
    return 0.5 * p + 0.5 / m


def _initial_guess(variety: Variety, r: np.ndarray, m: int, rng: np.random.Generator):
    X = spread_points(variety, r, m, rng)
    return np.concatenate([X.ravel(), start_weights(X, r)])


def _tidy(variety: Variety, X: np.ndarray, p: np.ndarray, r: np.ndarray,
          weight_floor: float = 1e-9, merge_dist: float = 1e-6) -> Decomposition | None:
    """Prune tiny weights, merge coincident points, re-project and re-solve weights."""
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(p))):
        return None
    p = np.clip(p, 0.0, None)
    keep = p > weight_floor
    if not np.any(keep):
        return None
    X, p = X[keep], p[keep]
    pts: list[np.ndarray] = []
    wts: list[float] = []
    for x, w in zip(X, p):
        for i, y in enumerate(pts):
            if np.linalg.norm(x - y) < merge_dist:
                pts[i] = (wts[i] * y + w * x) / (wts[i] + w)
                wts[i] += w
                break
        else:
            pts.append(x.copy())
            wts.append(float(w))
    X = np.array([variety.project(x) for x in pts])
    p = np.array(wts)
    p = p / p.sum()
    A = np.vstack([X.T, np.ones(len(p))])
    b = np.concatenate([r, [1.0]])
    q, *_ = np.linalg.lstsq(A, b, rcond=None)
    if np.all(q >= -1e-12) and np.linalg.norm(A @ q - b) <= np.linalg.norm(A @ p - b):
        p = np.clip(q, 0.0, None)
        p = p / p.sum()
    return Decomposition(p, X)


def _better(a: tuple[float, Decomposition], b: tuple[float, Decomposition] | None) -> bool:
    """Ordering used to pick among candidates: value, then size, then points."""
    if b is None:
        return True
    va, da = a
    vb, db = b
    if va < vb - VALUE_TIE_TOL:
        return True
    if va > vb + VALUE_TIE_TOL:
        return False
    if da.m != db.m:
        return da.m < db.m
    pa, pb = da.canonical().points.ravel(), db.canonical().points.ravel()
    for u, v in zip(pa, pb):
        if u != v:
            return u < v
    return False


def _minimize_convex(variety: Variety, f: Polynomial, r: np.ndarray, m_max: int, restarts: int,
                     seed: int, tol: float, hints=()) -> tuple[float, Decomposition] | None:
    reduced = variety.reduced()
    hint_points = [np.asarray(h.points, dtype=float) for h in hints if 2 <= h.m <= m_max]
    best = None
    if membership(variety, r, MEMBERSHIP_TOL):
        best = (f.eval(r), Decomposition(np.ones(1), r[None, :]))
    for m in range(2, m_max + 1):
        obj = _Objective(reduced, f, r, m)
        bounds = [(None, None)] * (m * variety.ambient_dim) + [(0.0, 1.0)] * m
        cons = {"type": "eq", "fun": obj.constraints, "jac": obj.constraints_jac}
        starts = [np.concatenate([X.ravel(), start_weights(X, r)]) for X in hint_points if len(X) == m]
        for k in range(restarts + len(starts)):
            if k < len(starts):
                z0 = starts[k]
            else:
                rng = np.random.default_rng([seed, m, k - len(starts)])
                z0 = _initial_guess(reduced, r, m, rng)
            res = minimize(obj.value, z0, jac=obj.value_grad, method="SLSQP", bounds=bounds,
                           constraints=[cons], options={"maxiter": 500, "ftol": 1e-15})
            X, p = obj.split(res.x)
            dec = _tidy(reduced, X, p, r)
            if dec is None:
                continue
            if np.max(np.abs(dec.barycenter() - r)) > tol:
                continue
            if any(not membership(variety, x, MEMBERSHIP_TOL) for x in dec.points):
                continue
            cand = (float(dec.weights @ f.eval_many(dec.points)), dec)
            if _better(cand, best):
                best = cand
    return best


def roof_eval_oracle(problem: RoofProblem, r, m_max: int | None = None, restarts: int = 64,
                     seed: int = 0, tol: float = 1e-6, hints=()) -> RoofValue:
    """Best decomposition value over m = 1..m_max (min for convex, max for concave).

    ``hints`` are decompositions (typically of nearby targets) whose points
    are used as extra starts, in addition to the seeded random ones.
    """
    r = np.asarray(r, dtype=float)
    if r.shape != (problem.n,):
        raise DimensionError(f"target has shape {r.shape}, expected ({problem.n},)")
    m_max = problem.default_m_max if m_max is None else int(m_max)
    if m_max < 1:
        raise ValueError("m_max must be at least 1")
    sign = 1.0 if problem.sense == "convex" else -1.0
    # conc f = -conv(-f)
    f = problem.f if sign > 0 else -problem.f
    best = _minimize_convex(problem.variety, f, r, m_max, restarts, seed, tol, hints)
    if best is None:
        raise InfeasibleError(f"no decomposition reaches {r.tolist()}; is it inside conv V?")
    value, dec = best
    dec = dec.canonical()
    return RoofValue(sign * value, dec, r, "oracle")


def _grid_chunk(problem, params, chain, targets):
    out = []
    recent: list[Decomposition] = []
    for r in targets:
        try:
            rv = roof_eval_oracle(problem, r, hints=tuple(recent), **params)
        except InfeasibleError:
            rv = RoofValue(float("nan"), None, r, "infeasible")
        out.append(rv)
        if chain and rv.decomposition is not None and rv.m >= 2:
            recent = [rv.decomposition] + [d for d in recent if d.m != rv.m or
                                           not np.allclose(d.points, rv.decomposition.points, atol=1e-6)]
            recent = recent[:chain]
    if chain:
        out = _polish(problem, params, chain, out)
    return out


def _polish(problem, params, k, values):
    """Retry each point from the decompositions of its ``2k`` nearest neighbours."""
    if len(values) < 2:
        return values
    sign = 1.0 if problem.sense == "convex" else -1.0
    targets = np.array([rv.target for rv in values])
    dist = np.linalg.norm(targets[:, None, :] - targets[None, :, :], axis=-1)
    quiet = dict(params, restarts=0)
    out = list(values)
    for i, rv in enumerate(values):
        if rv.decomposition is None:
            continue
        near = np.argsort(dist[i], kind="stable")[1:2 * k + 1]
        hints = []
        for j in near:
            d = values[j].decomposition
            if d is None or d.m < 2:
                continue
            if any(h.m == d.m and np.allclose(h.points, d.points, atol=1e-6) for h in [rv.decomposition, *hints]):
                continue
            hints.append(d)
        if not hints:
            continue
        try:
            cand = roof_eval_oracle(problem, rv.target, hints=tuple(hints), **quiet)
        except InfeasibleError:
            continue
        if sign * cand.value < sign * rv.value - 1e-12:
            out[i] = cand
    return out


def roof_grid(problem: RoofProblem, grid, m_max=None, restarts: int = 64, seed: int = 0,
              tol: float = 1e-6, workers: int = 1, chain: int = 4) -> list[RoofValue]:
    """Oracle values on each grid point; infeasible points are flagged, not raised.

    Every point uses the same seeded random starts.  With ``chain > 0`` the
    optimal decompositions of the last ``chain`` solved points also seed the
    next point (continuation along the grid), and a second pass retries every
    point from its neighbours' decompositions.  Results therefore depend on
    grid order and on ``workers``, which splits the grid into contiguous
    blocks.  Output order always follows the grid.
    """
    params = dict(m_max=m_max, restarts=restarts, seed=seed, tol=tol)
    grid = [np.asarray(g, dtype=float) for g in grid]
    if workers > 1 and len(grid) > 1:
        blocks = [list(b) for b in np.array_split(np.arange(len(grid)), workers) if len(b)]
        task = partial(_grid_chunk, problem, params, chain)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(task, [[grid[i] for i in b] for b in blocks]))
        return [rv for part in parts for rv in part]
    return _grid_chunk(problem, params, chain, grid)


def check_affine_on_polytope(problem: RoofProblem, dec: Decomposition, samples: int = 20,
                             tol: float = 1e-6, seed: int = 0, restarts: int = 16) -> bool:
    """Is the roof affine on the polytope spanned by ``dec``'s lifted points?"""
    if dec.m == 1:
        return True
    rng = np.random.default_rng(seed)
    fx = problem.f.eval_many(dec.points)
    for _ in range(samples):
        q = rng.dirichlet(np.ones(dec.m))
        target = q @ dec.points
        roof = roof_eval_oracle(problem, target, restarts=restarts, seed=seed)
        if abs(roof.value - q @ fx) > tol:
            log.info("roof %.12g differs from affine value %.12g at %s", roof.value, q @ fx, target)
            return False
    return True
