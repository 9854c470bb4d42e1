"""Affine varieties Z(l_0, ..., l_a): membership, Jacobians and tangent frames.

Compactness of the variety is assumed by everything downstream but is never
checked here; it is the caller's obligation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from collections.abc import Sequence

import numpy as np

from .errors import DimensionError, PreconditionError, SingularityError
from .poly import PolyBatch, Polynomial

DEFAULT_RANK_TOL = 1e-8


@dataclass(frozen=True)
class TangentFrame:
    base_point: np.ndarray
    basis: np.ndarray  # (t, n), orthonormal rows

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def projector(self) -> np.ndarray:
        return self.basis.T @ self.basis


@dataclass(frozen=True)
class Variety:
    ambient_dim: int
    generators: tuple[Polynomial, ...]
    expected_dim: int | None = None
    _grads: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        gens = tuple(self.generators)
        if not gens:
            raise ValueError("a variety needs at least one generator")
        for g in gens:
            if g.nvars != self.ambient_dim:
                raise DimensionError(
                    f"generator has {g.nvars} variables, ambient dimension is {self.ambient_dim}"
                )
        if self.expected_dim is not None and not 0 <= self.expected_dim <= self.ambient_dim:
            raise ValueError("expected_dim must lie in [0, ambient_dim]")
        object.__setattr__(self, "generators", gens)
        object.__setattr__(self, "_grads", tuple(g.grad() for g in gens))

    @classmethod
    def from_strings(cls, texts: Sequence[str], ambient_dim: int, expected_dim=None) -> Variety:
        return cls(ambient_dim, tuple(Polynomial.parse(t, ambient_dim) for t in texts), expected_dim)

    def _check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.ambient_dim,):
            raise DimensionError(f"point has shape {x.shape}, ambient dimension is {self.ambient_dim}")
        return x

    def residuals(self, x) -> np.ndarray:
        x = self._check_point(x)
        return np.array([g.eval(x) for g in self.generators])

    def residuals_many(self, points) -> np.ndarray:
        """``(k, a+1)`` generator values at each row of ``points``."""
        return np.stack([g.eval_many(points) for g in self.generators], axis=1)

    def jacobian_at(self, x) -> np.ndarray:
        x = self._check_point(x)
        return np.array([[d.eval(x) for d in grads] for grads in self._grads])

    def reduced(self, tol: float = 1e-12) -> Variety:
        """Drop generators that are linear combinations of the others (as polynomials).

        Same zero set, fewer and better-conditioned equations.  Each kept
        generator is rescaled to unit coefficient norm.
        """
        keys = sorted({k for g in self.generators for k in g.terms})
        index = {k: i for i, k in enumerate(keys)}
        C = np.zeros((len(self.generators), len(keys)))
        for r, g in enumerate(self.generators):
            for k, c in g.terms.items():
                C[r, index[k]] = c
        if not np.any(C):
            return self
        _, s, vh = np.linalg.svd(C, full_matrices=False)
        rank = int(np.sum(s > tol * s[0]))
        gens = []
        for row in vh[:rank]:
            # canonical sign: first significant coefficient positive
            lead = row[np.argmax(np.abs(row) > 1e-9 * np.abs(row).max())]
            row = row if lead > 0 else -row
            terms = {keys[i]: c for i, c in enumerate(row) if abs(c) > 1e-15}
            gens.append(Polynomial(self.ambient_dim, terms))
        return Variety(self.ambient_dim, tuple(gens), self.expected_dim)

    def project(self, x, tol: float = 1e-13, max_iter: int = 100) -> np.ndarray:
        """Newton-project ``x`` onto the variety with minimum-norm steps.

        Returns the last iterate; callers check membership themselves.
        """
        x = self._check_point(x).copy()
        for _ in range(max_iter):
            res = self.residuals(x)
            if np.max(np.abs(res)) <= tol:
                break
            J = self.jacobian_at(x)
            step = np.linalg.lstsq(J, res, rcond=1e-10)[0]
            x = x - step
            if not np.all(np.isfinite(x)):
                break
        return x


def project_many(V: Variety, points, tol: float = 1e-13, max_iter: int = 100) -> np.ndarray:
    """Row-wise :meth:`Variety.project`, with all rows iterated together."""
    X = np.array(points, dtype=float, ndmin=2)
    if X.shape[1] != V.ambient_dim:
        raise DimensionError(f"points live in R^{X.shape[1]}, ambient dimension is {V.ambient_dim}")
    k = len(V.generators)
    batch = _projection_batch(V)
    active = np.ones(len(X), dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        vals = batch(X[idx])
        res = vals[:, :k]
        J = vals[:, k:].reshape(len(idx), k, V.ambient_dim)
        done = np.max(np.abs(res), axis=1) <= tol
        active[idx[done]] = False
        go = ~done
        if not go.any():
            break
        idx, res, J = idx[go], res[go], J[go]
        # minimum-norm Newton step through the pseudo-inverse of each Jacobian
        step = np.einsum("bij,bj->bi", np.linalg.pinv(J, rcond=1e-10), res)
        X[idx] -= step
        bad = ~np.all(np.isfinite(X[idx]), axis=1)
        active[idx[bad]] = False
    return X


def _projection_batch(V: Variety):
    cached = V.__dict__.get("_proj_batch")
    if cached is None:
        cached = PolyBatch(list(V.generators) + [d for g in V._grads for d in g])
        object.__setattr__(V, "_proj_batch", cached)
    return cached


def membership(V: Variety, x, tol: float = 1e-10) -> bool:
    if tol <= 0:
        raise ValueError("tol must be positive")
    return bool(np.max(np.abs(V.residuals(x))) <= tol)


def jacobian_at(V: Variety, x) -> np.ndarray:
    return V.jacobian_at(x)


def _null_space(J: np.ndarray, rank_tol: float):
    n = J.shape[1]
    _, s, vh = np.linalg.svd(J, full_matrices=True)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > rank_tol * smax)) if smax > 0 else 0
    return vh[rank:n], rank


def tangent_frame(V: Variety, x, tol: float = 1e-8, rank_tol: float = DEFAULT_RANK_TOL) -> TangentFrame:
    """Orthonormal basis of the Zariski tangent space (Jacobian null space) at ``x``."""
    x = V._check_point(x)
    if not membership(V, x, tol):
        raise PreconditionError(f"point is not on the variety (max residual {np.max(np.abs(V.residuals(x))):.3g})")
    basis, rank = _null_space(V.jacobian_at(x), rank_tol)
    if V.expected_dim is not None and V.ambient_dim - rank != V.expected_dim:
        raise SingularityError(
            f"tangent dimension {V.ambient_dim - rank} at {x} differs from expected {V.expected_dim}"
        )
    return TangentFrame(base_point=x.copy(), basis=basis)


def dimension_estimate(V: Variety, sample_points, tol: float = 1e-8, rank_tol: float = DEFAULT_RANK_TOL) -> int:
    dims = set()
    for x in sample_points:
        if not membership(V, x, tol):
            raise PreconditionError(f"sample {np.asarray(x)} is not on the variety")
        _, rank = _null_space(V.jacobian_at(x), rank_tol)
        dims.add(V.ambient_dim - rank)
    if not dims:
        raise ValueError("need at least one sample point")
    if len(dims) > 1:
        raise SingularityError(f"tangent dimension varies across samples: {sorted(dims)}")
    return dims.pop()


def sample_points(V: Variety, count: int, rng: np.random.Generator, center=None, radius: float = 1.0,
                  tol: float = 1e-10, max_tries: int = 20) -> np.ndarray:
    """Random members of ``V`` obtained by projecting Gaussian points onto it."""
    center = np.zeros(V.ambient_dim) if center is None else np.asarray(center, dtype=float)
    out = []
    tries = 0
    while len(out) < count:
        tries += 1
        if tries > max_tries * count:
            raise RuntimeError("could not sample points on the variety")
        x = V.project(center + radius * rng.standard_normal(V.ambient_dim))
        if np.all(np.isfinite(x)) and membership(V, x, tol):
            out.append(x)
    return np.array(out)
