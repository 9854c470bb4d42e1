"""Multi-tangent hyperplanes as optimality certificates for roof decompositions.

An optimal m-decomposition of ``r`` lifts to m points on the graph variety
``gr f`` that share a supporting hyperplane.  That hyperplane must contain
every tangent space of ``gr f`` at the contacts and every chord between
them, so the matrix ``R`` stacking those vectors has rank at most ``N - 1``
(``N = n + 1``).  The condition is necessary, not sufficient: a solution of
the system may be a spurious tangent plane, which is why certificates are
always compared against the oracle in :mod:`roofbench.roof`.

Numerically the rank condition is carried by the N-th singular value of
``R``.  Explicit N x N minors are available for small problems and for
writing the system out symbolically.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.optimize import least_squares

from .errors import DegenerateInputError, DimensionError, NoSolutionError
from .poly import PolyBatch, Polynomial, determinant
from .roof import Decomposition, RoofProblem, _better, spread_points, start_weights
from .variety import DEFAULT_RANK_TOL, Variety, membership, tangent_frame

log = logging.getLogger(__name__)

MAX_MINORS = 5000
MAX_SYMBOLIC_N = 4
CONVERGED_TOL = 1e-9
DISTINCT_TOL = 1e-8
COLLAPSE_DIST = 1e-6


@dataclass(frozen=True)
class Hyperplane:
    """``{X : normal . X = offset}`` with a unit normal."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        w = np.asarray(self.normal, dtype=float)
        nrm = np.linalg.norm(w)
        if nrm == 0:
            raise ValueError("hyperplane normal must be nonzero")
        object.__setattr__(self, "normal", w / nrm)
        object.__setattr__(self, "offset", float(self.offset) / nrm)

    def canonical(self) -> Hyperplane:
        """Orient so the last normal component is non-positive (ties: first nonzero entry positive)."""
        w, c = self.normal, self.offset
        last = w[-1]
        if last > 0 or (last == 0 and w[np.flatnonzero(w)[0]] < 0):
            w, c = -w, -c
        return Hyperplane(w, c)

    def distance(self, points) -> np.ndarray:
        return np.atleast_2d(points) @ self.normal - self.offset

    def to_dict(self):
        return {"normal": self.normal.tolist(), "offset": self.offset}


@dataclass(frozen=True)
class RMatrix:
    rows: np.ndarray
    labels: tuple

    @property
    def shape(self):
        return self.rows.shape


@dataclass(frozen=True)
class TangencyResidual:
    minor_residual: float | None
    sv_residual: float

    def __iter__(self):
        return iter((self.minor_residual, self.sv_residual))


# -- graph and R matrix -----------------------------------------------------


def graph_variety(problem: RoofProblem) -> Variety:
    """``gr f`` in R^{n+1}: the generators of V plus ``z - f(x)``."""
    n = problem.n
    gens = [g.extend(n + 1) for g in problem.variety.generators]
    z = Polynomial.variable(n, n + 1)
    gens.append(z - problem.f.extend(n + 1))
    return Variety(n + 1, tuple(gens), problem.variety.expected_dim)


def lift(problem: RoofProblem, points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return np.column_stack([pts, problem.f.eval_many(pts)])


def _difference_pairs(m: int):
    if m < 2:
        return []
    if m == 2:
        # the cycle 1->2->1 repeats the same chord with opposite sign
        return [(0, 1)]
    return [(j, (j + 1) % m) for j in range(m)]


def _check_distinct(contacts: np.ndarray):
    for i, j in itertools.combinations(range(len(contacts)), 2):
        if np.linalg.norm(contacts[i] - contacts[j]) <= DISTINCT_TOL:
            raise DegenerateInputError(f"contacts {i} and {j} coincide")


def build_r_matrix(gr: Variety, contacts, tol: float = 1e-8, rank_tol: float = DEFAULT_RANK_TOL) -> RMatrix:
    contacts = np.atleast_2d(np.asarray(contacts, dtype=float))
    if contacts.shape[1] != gr.ambient_dim:
        raise DimensionError(f"contacts live in R^{contacts.shape[1]}, graph in R^{gr.ambient_dim}")
    _check_distinct(contacts)
    rows, labels = [], []
    for j, c in enumerate(contacts):
        frame = tangent_frame(gr, c, tol=tol, rank_tol=rank_tol)
        for i, v in enumerate(frame.basis):
            rows.append(v)
            labels.append(("tangent", j, i))
    for j, k in _difference_pairs(len(contacts)):
        rows.append(contacts[j] - contacts[k])
        labels.append(("difference", j))
    R = np.array(rows) if rows else np.zeros((0, gr.ambient_dim))
    return RMatrix(R, tuple(labels))


def tangency_residual(R: RMatrix | np.ndarray, max_minors: int = MAX_MINORS) -> TangencyResidual:
    """Largest |N x N minor| (None when too many to enumerate) and the N-th singular value."""
    A = R.rows if isinstance(R, RMatrix) else np.asarray(R, dtype=float)
    k, N = A.shape
    if k < N:
        return TangencyResidual(0.0, 0.0)
    s = np.linalg.svd(A, compute_uv=False)
    sv = float(s[N - 1])
    minor = None
    if comb(k, N) <= max_minors:
        minor = max(abs(float(np.linalg.det(A[list(idx)]))) for idx in itertools.combinations(range(k), N))
    return TangencyResidual(minor, sv)


def minor_tolerance(R: RMatrix | np.ndarray, sv_tol: float) -> float:
    """Minor threshold paired with ``sv_residual <= sv_tol``.

    Any N x N submatrix has singular values bounded by those of R, so
    ``|minor| <= sigma_1 ... sigma_{N-1} * sigma_N``.
    """
    A = R.rows if isinstance(R, RMatrix) else np.asarray(R, dtype=float)
    N = A.shape[1]
    s = np.linalg.svd(A, compute_uv=False)
    return float(sv_tol * np.prod(s[: N - 1]))


# -- polynomial system -------------------------------------------------------


def polynomial_tangent_rows(variety: Variety) -> list[list[Polynomial]] | None:
    """Tangent vectors of V with polynomial entries, or None when not derivable.

    For a complete intersection with k generators in R^n, every (k+1)-subset
    S of coordinates gives the generalized cross product of the Jacobian
    columns in S; these span the null space wherever the Jacobian has rank k.
    """
    n = variety.ambient_dim
    k = len(variety.generators)
    if variety.expected_dim is None or n - variety.expected_dim != k or k >= n:
        return None
    J = [list(g.grad()) for g in variety.generators]
    rows = []
    for S in itertools.combinations(range(n), k + 1):
        row = [Polynomial.zero(n)] * n
        for pos, i in enumerate(S):
            cols = [c for c in S if c != i]
            d = determinant([[J[a][c] for c in cols] for a in range(k)])
            row[i] = d if pos % 2 == 0 else -d
        if any(not p.is_zero() for p in row):
            rows.append(row)
    return rows


@dataclass(frozen=True)
class OptimalitySystem:
    """Polynomial equations for an m-decomposition, grouped as written.

    Unknowns are ``x_1..x_m`` in R^n followed by ``p_1..p_m``; the graph
    coordinate of each contact is eliminated by substituting ``z = f(x)``.
    After :meth:`fold_weights` the last weight is replaced by
    ``1 - sum(others)`` and the normalization group disappears.
    """

    groups: dict
    nvars: int
    m: int
    n: int
    numeric_minors: bool
    folded: bool = False
    variable_names: tuple = field(default=())

    @property
    def equations(self) -> list[Polynomial]:
        return [p for name in ("membership", "minors", "barycenter", "normalization") for p in self.groups[name]]

    def counts(self) -> dict:
        return {name: len(eqs) for name, eqs in self.groups.items()}

    def unknowns(self, points, weights) -> np.ndarray:
        pts = np.asarray(points, dtype=float).ravel()
        w = np.asarray(weights, dtype=float)
        return np.concatenate([pts, w[:-1] if self.folded else w])

    def residuals(self, u) -> dict:
        u = np.asarray(u, dtype=float)
        return {name: np.array([p.eval(u) for p in eqs]) for name, eqs in self.groups.items()}

    def fold_weights(self) -> OptimalitySystem:
        if self.folded:
            return self
        nv = self.nvars - 1
        subs = [Polynomial.variable(i, nv) for i in range(nv)]
        last = Polynomial.constant(1.0, nv)
        for i in range(self.m * self.n, nv):
            last = last - Polynomial.variable(i, nv)
        subs.append(last)
        groups = {name: [p.compose(subs) for p in eqs] for name, eqs in self.groups.items()}
        groups["normalization"] = []
        return OptimalitySystem(groups, nv, self.m, self.n, self.numeric_minors, True, self.variable_names[:-1])


def assemble_system(problem: RoofProblem, r, m: int, tangent_rows=None) -> OptimalitySystem:
    """Write out the membership, minor, barycenter and normalization equations.

    ``tangent_rows`` are tangent vectors with polynomial entries, either of
    V (length n, lifted here through the gradient of f) or already of the
    graph (length n+1).  Without them, rows are derived for complete
    intersections; otherwise the minors group is left empty and
    ``numeric_minors`` is set.
    """
    r = np.asarray(r, dtype=float)
    n = problem.n
    N = n + 1
    if r.shape != (n,):
        raise DimensionError(f"target has shape {r.shape}, expected ({n},)")
    if not 1 <= m <= problem.default_m_max:
        raise ValueError(f"m must lie in [1, {problem.default_m_max}]")
    nv = m * n + m

    def at(poly: Polynomial, j: int) -> Polynomial:
        return poly.rename([j * n + i for i in range(n)], nv)

    membership_eqs = [at(g, j) for j in range(m) for g in problem.variety.generators]

    rows = tangent_rows if tangent_rows is not None else polynomial_tangent_rows(problem.variety)
    minors: list[Polynomial] = []
    numeric = rows is None
    if rows is not None:
        fgrad = problem.f.grad()
        graph_rows = []
        for row in rows:
            row = list(row)
            if len(row) == n:
                row = row + [sum((a * b for a, b in zip(fgrad, row)), Polynomial.zero(n))]
            elif len(row) != N:
                raise DimensionError(f"tangent rows must have {n} or {N} entries")
            graph_rows.append(row)
        R = [[at(e, j) for e in row] for j in range(m) for row in graph_rows]
        lifted = [[Polynomial.variable(j * n + i, nv) for i in range(n)] + [at(problem.f, j)] for j in range(m)]
        for j, k in _difference_pairs(m):
            R.append([a - b for a, b in zip(lifted[j], lifted[k])])
        if len(R) >= N and comb(len(R), N) <= MAX_MINORS and N <= MAX_SYMBOLIC_N:
            for idx in itertools.combinations(range(len(R)), N):
                d = determinant([R[i] for i in idx])
                if not d.is_zero():
                    minors.append(d)
        elif len(R) >= N:
            numeric = True

    bary = []
    for i in range(n):
        eq = Polynomial.constant(-r[i], nv)
        for j in range(m):
            eq = eq + Polynomial.variable(m * n + j, nv) * Polynomial.variable(j * n + i, nv)
        bary.append(eq)
    norm = Polynomial.constant(-1.0, nv)
    for j in range(m):
        norm = norm + Polynomial.variable(m * n + j, nv)

    names = tuple(f"x{j + 1}_{i + 1}" for j in range(m) for i in range(n)) + tuple(f"p{j + 1}" for j in range(m))
    groups = {"membership": membership_eqs, "minors": minors, "barycenter": bary, "normalization": [norm]}
    return OptimalitySystem(groups, nv, m, n, numeric, False, names)


def solve_system(system: OptimalitySystem, u0, tol: float = 1e-12, max_nfev: int = 2000):
    """Damped Gauss-Newton on a polynomial system from ``u0``; returns (u, max residual)."""
    eqs = system.equations
    values = PolyBatch(eqs)
    grads = PolyBatch([g for p in eqs for g in p.grad()])
    k, nv = len(eqs), system.nvars

    def fun(u):
        return values(u[None, :])[0]

    def jac(u):
        return grads(u[None, :])[0].reshape(k, nv)

    method = "lm" if k >= nv else "trf"
    res = least_squares(fun, np.asarray(u0, dtype=float), jac=jac, method=method,
                        xtol=tol, ftol=tol, gtol=tol, max_nfev=max_nfev)
    return res.x, float(np.max(np.abs(fun(res.x))))


# -- certificates ------------------------------------------------------------


@dataclass(frozen=True)
class TangencyCertificate:
    decomposition: Decomposition
    hyperplane: Hyperplane
    residuals: dict
    minor_residual: float | None
    sv_residual: float
    value: float
    target: np.ndarray
    sense: str = "convex"
    solver: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.decomposition.m

    def to_dict(self) -> dict:
        return {
            "status": "certificate",
            "sense": self.sense,
            "target": np.asarray(self.target).tolist(),
            "value": self.value,
            "m": self.m,
            "decomposition": self.decomposition.to_dict(),
            "hyperplane": self.hyperplane.to_dict(),
            "residuals": dict(sorted(self.residuals.items())),
            "minor_residual": self.minor_residual,
            "sv_residual": self.sv_residual,
            "solver": dict(sorted(self.solver.items())),
        }

    @classmethod
    def from_dict(cls, d) -> TangencyCertificate:
        h = d["hyperplane"]
        return cls(
            decomposition=Decomposition.from_dict(d["decomposition"]),
            hyperplane=Hyperplane(np.array(h["normal"], dtype=float), h["offset"]),
            residuals=dict(d.get("residuals", {})),
            minor_residual=d.get("minor_residual"),
            sv_residual=float(d.get("sv_residual", float("nan"))),
            value=float(d["value"]),
            target=np.array(d["target"], dtype=float),
            sense=d.get("sense", "convex"),
            solver=dict(d.get("solver", {})),
        )


@dataclass(frozen=True)
class GroupCheck:
    residual: float
    tol: float
    passed: bool
    note: str = ""


@dataclass(frozen=True)
class CertificateReport:
    groups: dict
    value: float
    minor_residual: float | None
    sv_residual: float

    @property
    def passed(self) -> bool:
        return all(g.passed for g in self.groups.values())

    def failures(self) -> list[str]:
        return [name for name, g in self.groups.items() if not g.passed]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "value": self.value,
            "minor_residual": self.minor_residual,
            "sv_residual": self.sv_residual,
            "groups": {k: {"residual": g.residual, "tol": g.tol, "passed": g.passed, "note": g.note}
                       for k, g in sorted(self.groups.items())},
        }


def _hyperplane_through(R: np.ndarray, lifted: np.ndarray) -> Hyperplane:
    """Normal spanning the (near) null space of R, preferring a non-vertical plane."""
    N = lifted.shape[1]
    if R.shape[0] >= N:
        w = np.linalg.svd(R)[2][N - 1]
    else:
        _, s, vh = np.linalg.svd(R) if R.size else (None, np.zeros(0), np.eye(N))
        rank = int(np.sum(s > 1e-10 * (s[0] if s.size else 1.0)))
        null = vh[rank:]
        ez = np.zeros(N)
        ez[-1] = -1.0
        w = null.T @ (null @ ez)
        if np.linalg.norm(w) < 1e-12:
            w = null[0]
    w = w / np.linalg.norm(w)
    return Hyperplane(w, float(np.mean(lifted @ w))).canonical()


def _frame_projectors(gr: Variety, lifted: np.ndarray, rank_tol=DEFAULT_RANK_TOL):
    out = []
    for c in lifted:
        J = gr.jacobian_at(c)
        _, s, vh = np.linalg.svd(J)
        rank = int(np.sum(s > rank_tol * s[0])) if s.size and s[0] > 0 else 0
        Q = vh[:rank]
        out.append(np.eye(gr.ambient_dim) - Q.T @ Q)
    return out


def verify_certificate(problem: RoofProblem, r, cert: TangencyCertificate, tol: float = 1e-8) -> CertificateReport:
    """Recompute every residual group from scratch (fresh frames, fresh minors)."""
    r = np.asarray(r, dtype=float)
    dec = cert.decomposition
    X, p = dec.points, dec.weights
    groups = {}
    if X.shape[1] != problem.n:
        raise DimensionError("certificate points do not match the problem dimension")

    memb = float(np.max(np.abs(problem.variety.residuals_many(X))))
    groups["membership"] = GroupCheck(memb, tol, memb <= tol)
    wviol = float(max(0.0, -p.min(), p.max() - 1.0))
    groups["weights"] = GroupCheck(wviol, tol, wviol <= tol)
    nres = float(abs(p.sum() - 1.0))
    groups["normalization"] = GroupCheck(nres, tol, nres <= tol)
    bres = float(np.max(np.abs(p @ X - r)))
    groups["barycenter"] = GroupCheck(bres, tol, bres <= tol)

    gr = graph_variety(problem)
    lifted = lift(problem, X)
    minor, sv = None, float("nan")
    try:
        R = build_r_matrix(gr, lifted, tol=max(tol, 10 * memb))
        minor, sv = tangency_residual(R)
        groups["tangency"] = GroupCheck(sv, tol, sv <= tol)
        if minor is not None:
            mtol = max(minor_tolerance(R, tol), tol ** 2)
            groups["minors"] = GroupCheck(minor, mtol, minor <= mtol)
    except (DegenerateInputError, ValueError) as exc:
        groups["tangency"] = GroupCheck(float("inf"), tol, False, str(exc))

    h = cert.hyperplane
    contact = float(np.max(np.abs(h.distance(lifted))))
    groups["contact"] = GroupCheck(contact, tol, contact <= tol)
    try:
        projs = _frame_projectors(gr, lifted)
        tang = float(max(np.linalg.norm(P @ h.normal) for P in projs))
    except np.linalg.LinAlgError as exc:
        tang = float("inf")
    groups["hyperplane_tangency"] = GroupCheck(tang, tol, tang <= tol)

    value = float(p @ problem.f.eval_many(X))
    vres = abs(value - cert.value)
    groups["value"] = GroupCheck(vres, tol, vres <= tol)
    return CertificateReport(groups, value, minor, sv)


class _TangencySystem:
    """Residual and exact Jacobian for (contacts, weights, normal, multipliers).

    Tangency of the hyperplane with normal ``w = (w_x, w_z)`` at contact
    ``x_j`` is imposed as ``w_x + w_z grad f(x_j) = sum_i lam_ji grad l_i(x_j)``,
    i.e. ``w`` lies in the row space of the graph Jacobian.  This is the
    same zero set as the rank condition on R but polynomial in the unknowns.
    Weights are carried as ``p_j = s_j^2`` so the iteration cannot wander
    into signed combinations of nearly coincident contacts.
    """

    def __init__(self, problem: RoofProblem, r: np.ndarray, m: int):
        self.problem = problem
        self.V = problem.variety.reduced()
        self.gr = graph_variety(RoofProblem(self.V, problem.f, problem.sense))
        self.r = r
        self.m = m
        self.n = n = problem.n
        self.N = n + 1
        self.k = k = len(self.V.generators)
        self.pairs = _difference_pairs(m)
        f = problem.f
        polys = [f, *f.grad(), *[h for g in f.grad() for h in g.grad()]]
        for g in self.V.generators:
            polys.append(g)
            polys.extend(g.grad())
            polys.extend(h for d in g.grad() for h in d.grad())
        self.batch = PolyBatch(polys)
        self.size = m * n + m + self.N + m * k

    def split(self, u):
        m, n, k = self.m, self.n, self.k
        X = u[: m * n].reshape(m, n)
        p = u[m * n: m * n + m] ** 2
        w = u[m * n + m: m * n + m + self.N]
        lam = u[m * n + m + self.N:].reshape(m, k)
        return X, p, w, lam

    def pack(self, X, p, w, lam):
        return np.concatenate([np.ravel(X), np.sqrt(np.clip(p, 0.0, None)), w, np.ravel(lam)])

    def _values(self, X):
        v = self.batch(X)
        m, n, k = self.m, self.n, self.k
        fx = v[:, 0]
        df = v[:, 1:1 + n]
        Hf = v[:, 1 + n:1 + n + n * n].reshape(m, n, n)
        rest = v[:, 1 + n + n * n:].reshape(m, k, 1 + n + n * n)
        g = rest[:, :, 0]
        dg = rest[:, :, 1:1 + n]
        Hg = rest[:, :, 1 + n:].reshape(m, k, n, n)
        return fx, df, Hf, g, dg, Hg

    def initial_multipliers(self, X, w):
        _, df, _, _, dg, _ = self._values(X)
        lam = np.zeros((self.m, self.k))
        for j in range(self.m):
            rhs = w[:-1] + w[-1] * df[j]
            lam[j] = np.linalg.lstsq(dg[j].T, rhs, rcond=None)[0]
        return lam

    def __call__(self, u):
        X, p, w, lam = self.split(u)
        fx, df, _, g, dg, _ = self._values(X)
        lifted = np.column_stack([X, fx])
        tang = w[:-1][None, :] + w[-1] * df - np.einsum("jk,jki->ji", lam, dg)
        diffs = np.array([(lifted[a] - lifted[b]) @ w for a, b in self.pairs])
        return np.concatenate([g.ravel(), tang.ravel(), diffs, p @ X - self.r, [p.sum() - 1.0, w @ w - 1.0]])

    def jacobian(self, u):
        X, p, w, lam = self.split(u)
        fx, df, Hf, g, dg, Hg = self._values(X)
        sq = u[self.m * self.n: self.m * self.n + self.m]
        m, n, k, N = self.m, self.n, self.k, self.N
        cx = 0
        cp = m * n
        cw = cp + m
        cl = cw + N
        rows = m * k + m * n + len(self.pairs) + n + 2
        J = np.zeros((rows, self.size))
        row = 0
        for j in range(m):
            J[row:row + k, cx + j * n:cx + (j + 1) * n] = dg[j]
            row += k
        for j in range(m):
            block = slice(row, row + n)
            J[block, cx + j * n:cx + (j + 1) * n] = w[-1] * Hf[j] - np.einsum("k,kab->ab", lam[j], Hg[j])
            J[block, cw:cw + n] = np.eye(n)
            J[block, cw + n] = df[j]
            J[block, cl + j * k:cl + (j + 1) * k] = -dg[j].T
            row += n
        slope = w[:-1][None, :] + w[-1] * df
        for a, b in self.pairs:
            J[row, cx + a * n:cx + (a + 1) * n] += slope[a]
            J[row, cx + b * n:cx + (b + 1) * n] -= slope[b]
            J[row, cw:cw + n] = X[a] - X[b]
            J[row, cw + n] = fx[a] - fx[b]
            row += 1
        for j in range(m):
            J[row:row + n, cx + j * n:cx + (j + 1) * n] = p[j] * np.eye(n)
            J[row:row + n, cp + j] = 2 * sq[j] * X[j]
        row += n
        J[row, cp:cp + m] = 2 * sq
        J[row + 1, cw:cw + N] = 2 * w
        return J


def _initial_normal(gr: Variety, lifted: np.ndarray) -> np.ndarray:
    rows = []
    for c in lifted:
        J = gr.jacobian_at(c)
        _, s, vh = np.linalg.svd(J)
        rank = int(np.sum(s > DEFAULT_RANK_TOL * s[0])) if s.size and s[0] > 0 else 0
        rows.extend(vh[rank:])
    for j, k in _difference_pairs(len(lifted)):
        rows.append(lifted[j] - lifted[k])
    return _hyperplane_through(np.array(rows) if rows else np.zeros((0, gr.ambient_dim)), lifted).normal


def _collapse(X: np.ndarray, p: np.ndarray):
    pts, wts = [], []
    for x, w in zip(X, p):
        for i, y in enumerate(pts):
            if np.linalg.norm(x - y) < COLLAPSE_DIST:
                tot = wts[i] + w
                pts[i] = (wts[i] * y + w * x) / tot if tot > 0 else y
                wts[i] = tot
                break
        else:
            pts.append(x.copy())
            wts.append(float(w))
    return np.array(pts), np.array(wts)


def _make_certificate(problem: RoofProblem, r, X, p, meta, tol) -> TangencyCertificate | None:
    gr = graph_variety(problem)
    lifted = lift(problem, X)
    try:
        R = build_r_matrix(gr, lifted, tol=max(tol, 1e-8))
    except (DegenerateInputError, ValueError):
        return None
    minor, sv = tangency_residual(R)
    h = _hyperplane_through(R.rows, lifted)
    dec = Decomposition(p, X)
    value = float(p @ problem.f.eval_many(X))
    memb = float(np.max(np.abs(problem.variety.residuals_many(X))))
    residuals = {
        "membership": memb,
        "minors": sv,
        "barycenter": float(np.max(np.abs(p @ X - r))),
        "normalization": float(abs(p.sum() - 1.0)),
    }
    return TangencyCertificate(dec, h, residuals, minor, sv, value, np.asarray(r, dtype=float), problem.sense, meta)


def solve_certificate(problem: RoofProblem, r, m: int, seed: int = 0, restarts: int = 32,
                      tol: float = 1e-8, initial: Decomposition | None = None) -> TangencyCertificate:
    """Solve the tangency system for an m-decomposition of ``r`` and certify the best solution.

    ``initial`` (typically the oracle's decomposition) is tried first; the
    remaining starts are seeded random points projected onto V.  Raises
    :class:`NoSolutionError` when nothing converges with weights in [0, 1].
    """
    r = np.asarray(r, dtype=float)
    n = problem.n
    if r.shape != (n,):
        raise DimensionError(f"target has shape {r.shape}, expected ({n},)")
    if not 1 <= m <= problem.default_m_max:
        raise ValueError(f"m must lie in [1, {problem.default_m_max}]")

    if m == 1:
        if not membership(problem.variety, r, tol):
            raise NoSolutionError("a one-point decomposition needs the target on the variety")
        meta = {"seed": seed, "restarts": 0, "iterations": 0, "m": 1}
        cert = _make_certificate(problem, r, r[None, :], np.ones(1), meta, tol)
        if cert is None or not verify_certificate(problem, r, cert, tol).passed:
            raise NoSolutionError("single-point certificate failed verification")
        return cert

    system = _TangencySystem(problem, r, m)
    sign = 1.0 if problem.sense == "convex" else -1.0
    best = None
    best_cert = None
    starts = []
    if initial is not None and initial.m == m:
        starts.append((initial.points, initial.weights))
    for k in range(restarts):
        rng = np.random.default_rng([seed, m, k])
        X = spread_points(system.V, r, m, rng)
        starts.append((X, start_weights(X, r)))

    for attempt, (X0, p0) in enumerate(starts):
        X0 = np.asarray(X0, dtype=float)
        if not np.all(np.isfinite(X0)):
            continue
        try:
            w0 = _initial_normal(system.gr, lift(problem, X0))
        except np.linalg.LinAlgError:
            continue
        p0 = np.asarray(p0, dtype=float)
        u0 = system.pack(X0, p0, w0, system.initial_multipliers(X0, w0))
        try:
            sol = least_squares(system, u0, jac=system.jacobian, method="lm", xtol=1e-15, ftol=1e-15,
                                gtol=1e-15, max_nfev=100 * len(u0))
        except (np.linalg.LinAlgError, ValueError):
            continue
        res = np.max(np.abs(sol.fun))
        if not np.isfinite(res) or res > CONVERGED_TOL:
            continue
        X, p, _, _ = system.split(sol.x)
        if np.any(p < -tol) or np.any(p > 1 + tol):
            continue
        p = np.clip(p, 0.0, 1.0)
        X, p = _collapse(X, p)
        p = p / p.sum()
        meta = {"seed": seed, "restarts": restarts, "iterations": int(sol.nfev), "start": attempt, "m": m}
        cert = _make_certificate(problem, r, X, p, meta, tol)
        if cert is None:
            continue
        report = verify_certificate(problem, r, cert, tol)
        if not report.passed:
            log.debug("start %d converged but failed %s", attempt, report.failures())
            continue
        cand = (sign * cert.value, cert.decomposition)
        if _better(cand, best):
            best, best_cert = cand, cert
    if best_cert is None:
        raise NoSolutionError(f"no admissible {m}-point tangency solution for target {r.tolist()}")
    dec = best_cert.decomposition.canonical()
    return TangencyCertificate(dec, best_cert.hyperplane, best_cert.residuals, best_cert.minor_residual,
                               best_cert.sv_residual, best_cert.value, best_cert.target, best_cert.sense,
                               best_cert.solver)
