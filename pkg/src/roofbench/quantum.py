"""Generalized Gell-Mann bases, coefficient-space geometry of density operators
and entanglement of formation as a roof problem.

Two coordinate conventions are supported and tagged explicitly:

``scaled``
    ``rho = (I + c_j lambda^j) / D`` over the D^2 - 1 traceless generators,
    ``c_j = D tr(rho lambda^j)``.  Pure states satisfy ``|c|^2 = D(D-1)`` and
    ``c * c = (D-2) c`` (star product).
``plain``
    ``rho = c_alpha mu^alpha`` over an arbitrary orthonormal hermitian basis,
    ``c_alpha = tr(rho mu^alpha)``.  Pure states satisfy ``c . tau = 1``,
    ``c . c = 1`` and ``c_alpha c_beta chi^{alpha beta gamma} = c_gamma``.

All bases are orthonormal under the Hilbert-Schmidt inner product.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConventionError, DimensionError, PreconditionError, UnsupportedScaleError
from .poly import Polynomial
from .roof import RoofProblem, roof_eval_oracle
from .variety import Variety

log = logging.getLogger(__name__)

CONVENTIONS = ("scaled", "plain")
RANK_CUTOFF = 1e-12
UNITARY_TOL = 1e-10
PURE_TOL = 1e-8
DEFAULT_CAP = 4


# -- bases and structure tensors ----------------------------------------------


@dataclass(frozen=True, eq=False)
class OperatorBasis:
    """D^2 hermitian D x D matrices, orthonormal under tr(A B)."""

    dim: int
    elements: np.ndarray  # (D^2, D, D) complex
    convention: str = "scaled"

    def __post_init__(self):
        E = np.asarray(self.elements, dtype=complex)
        D = self.dim
        if E.shape != (D * D, D, D):
            raise DimensionError(f"expected {D * D} matrices of size {D}x{D}, got {E.shape}")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"convention must be one of {CONVENTIONS}")
        object.__setattr__(self, "elements", E)

    def __len__(self):
        return self.dim * self.dim

    def gram(self) -> np.ndarray:
        return np.einsum("aij,bji->ab", self.elements, self.elements).real

    def is_orthonormal(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.gram() - np.eye(len(self)))) <= tol)

    def same_as(self, other: OperatorBasis) -> bool:
        return self is other or (
            self.dim == other.dim
            and self.convention == other.convention
            and np.allclose(self.elements, other.elements, atol=1e-14, rtol=0)
        )

    @cached_property
    def tensors(self) -> StructureTensors:
        return structure_tensors(self)


@dataclass(frozen=True, eq=False)
class StructureTensors:
    """Trace invariants of a basis.

    ``d`` and ``f`` cover the generator indices 1..D^2-1,
    ``chi[a, b, c] = tr(mu^a mu^b mu^c)`` and ``tau[a] = tr(mu^a)`` cover all indices.
    """

    d: np.ndarray
    f: np.ndarray
    chi: np.ndarray
    tau: np.ndarray

    def D(self, l: int) -> np.ndarray:
        """Slice ``[D^l]_{jk} = d^{jk}_l`` for generator position ``l`` (0-based among generators)."""
        return self.d[:, :, l]

    @property
    def D_slices(self) -> np.ndarray:
        return np.moveaxis(self.d, 2, 0)

    def e(self, l: int) -> np.ndarray:
        out = np.zeros(self.d.shape[0])
        out[l] = 1.0
        return out


def structure_tensors(basis: OperatorBasis) -> StructureTensors:
    E = basis.elements
    chi = np.einsum("aij,bjk,cki->abc", E, E, E)
    tau = np.einsum("aii->a", E).real
    gen = chi[1:, 1:, 1:]
    # d = (1/2) tr({l_j, l_k} l_l), f = -(i/2) tr([l_j, l_k] l_l)
    d = 0.5 * (gen + gen.transpose(1, 0, 2)).real
    f = (-0.5j * (gen - gen.transpose(1, 0, 2))).real
    return StructureTensors(d=d, f=f, chi=chi, tau=tau)


def _unit(D, a, b):
    E = np.zeros((D, D), dtype=complex)
    E[a, b] = 1.0
    return E


def gellmann_basis(D: int) -> tuple[OperatorBasis, StructureTensors]:
    """Identity over sqrt(D), then symmetric, antisymmetric and diagonal generators.

    Order: ``I/sqrt(D)``; ``(E_ab + E_ba)/sqrt(2)`` for a < b lexicographic;
    ``-i(E_ab - E_ba)/sqrt(2)`` likewise; diagonal ``Gamma_a`` for a = 2..D with
    ``Gamma_a = (sum_{k<a} E_kk - (a-1) E_aa) / sqrt(a(a-1))`` (1-based a).
    For D = 2 this is ``(I, sigma_x, sigma_y, sigma_z) / sqrt(2)``.
    """
    if int(D) != D or D < 2:
        raise ValueError(f"basis dimension must be an integer >= 2, got {D}")
    D = int(D)
    mats = [np.eye(D, dtype=complex) / np.sqrt(D)]
    pairs = list(itertools.combinations(range(D), 2))
    for a, b in pairs:
        mats.append((_unit(D, a, b) + _unit(D, b, a)) / np.sqrt(2))
    for a, b in pairs:
        mats.append(-1j * (_unit(D, a, b) - _unit(D, b, a)) / np.sqrt(2))
    for a in range(2, D + 1):
        diag = np.zeros(D)
        diag[: a - 1] = 1.0
        diag[a - 1] = -(a - 1)
        mats.append(np.diag(diag).astype(complex) / np.sqrt(a * (a - 1)))
    basis = OperatorBasis(D, np.array(mats), "scaled")
    return basis, basis.tensors


def tensor_basis(A: OperatorBasis, B: OperatorBasis) -> OperatorBasis:
    """``lambda^a (x) lambda^b`` with ``a`` major; index 0 is ``I/sqrt(MN)``."""
    if A.convention != "scaled" or B.convention != "scaled":
        raise ConventionError("tensor bases are built from scaled (identity-first) bases")
    E = np.einsum("aij,bkl->abikjl", A.elements, B.elements)
    M, N = A.dim, B.dim
    return OperatorBasis(M * N, E.reshape(M * M * N * N, M * N, M * N), "scaled")


# -- coefficient vectors ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CoefficientVector:
    c: np.ndarray
    basis: OperatorBasis

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        expected = len(self.basis) - 1 if self.convention == "scaled" else len(self.basis)
        if c.shape != (expected,):
            raise DimensionError(f"{self.convention} coefficients need length {expected}, got {c.shape}")
        object.__setattr__(self, "c", c)

    @property
    def convention(self) -> str:
        return self.basis.convention

    def __array__(self, dtype=None, copy=None):
        return self.c if dtype is None else self.c.astype(dtype)


def _compatible(a: CoefficientVector, b: CoefficientVector):
    if a.convention != b.convention:
        raise ConventionError(f"cannot combine {a.convention} and {b.convention} coefficients")
    if not a.basis.same_as(b.basis):
        raise ConventionError("coefficient vectors refer to different bases")


def inner(a: CoefficientVector, b: CoefficientVector) -> float:
    _compatible(a, b)
    return float(a.c @ b.c)


def _generator_tensors(a: CoefficientVector):
    if a.convention != "scaled":
        raise ConventionError("wedge and star products are defined on scaled coefficients")
    return a.basis.tensors


def wedge(a: CoefficientVector, b: CoefficientVector) -> CoefficientVector:
    """``(a ^ b)_l = a_j b_k f^{jk}_l``."""
    _compatible(a, b)
    t = _generator_tensors(a)
    return CoefficientVector(np.einsum("j,k,jkl->l", a.c, b.c, t.f), a.basis)


def star(a: CoefficientVector, b: CoefficientVector) -> CoefficientVector:
    """``(a * b)_l = a_j b_k d^{jk}_l``."""
    _compatible(a, b)
    t = _generator_tensors(a)
    return CoefficientVector(np.einsum("j,k,jkl->l", a.c, b.c, t.d), a.basis)


def check_density(rho, tol: float = 1e-12, eig_tol: float = 1e-10) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionError(f"density matrix must be square, got shape {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise PreconditionError("density matrix is not hermitian")
    if abs(np.trace(rho) - 1) > tol:
        raise PreconditionError(f"density matrix has trace {np.trace(rho).real:.3g}")
    if np.linalg.eigvalsh(rho).min() < -eig_tol:
        raise PreconditionError("density matrix has a negative eigenvalue")
    return rho


def embed(rho, basis: OperatorBasis) -> CoefficientVector:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (basis.dim, basis.dim):
        raise DimensionError(f"matrix of shape {rho.shape} does not match basis dimension {basis.dim}")
    c = np.einsum("aij,ji->a", basis.elements, rho).real
    if basis.convention == "scaled":
        return CoefficientVector(basis.dim * c[1:], basis)
    return CoefficientVector(c, basis)


def unembed(c: CoefficientVector) -> np.ndarray:
    E = c.basis.elements
    if c.convention == "scaled":
        D = c.basis.dim
        rho = (np.eye(D) + np.einsum("a,aij->ij", c.c, E[1:])) / D
    else:
        rho = np.einsum("a,aij->ij", c.c, E)
    return 0.5 * (rho + rho.conj().T)


# -- pure states -----------------------------------------------------------------


@dataclass(frozen=True)
class PurityResult:
    is_pure: bool
    residuals: tuple[float, float]


def purity_residuals(c: CoefficientVector) -> tuple[float, float]:
    D = c.basis.dim
    x = c.c
    t = c.basis.tensors
    if c.convention == "scaled":
        l0 = x @ x - D * (D - 1)
        ll = np.einsum("j,k,jkl->l", x, x, t.d) - (D - 2) * x
        return float(abs(l0)), float(np.max(np.abs(ll))) if ll.size else 0.0
    quad = np.einsum("a,b,abc->c", x, x, t.chi).real - x
    norm = max(abs(x @ t.tau - 1.0), abs(x @ x - 1.0))
    return float(norm), float(np.max(np.abs(quad)))


def purity_conditions(c: CoefficientVector, tol: float = 1e-9) -> PurityResult:
    """Pure iff the norm condition and every star-product condition hold to ``tol``."""
    res = purity_residuals(c)
    return PurityResult(bool(max(res) <= tol), res)


def pure_state_generators(basis: OperatorBasis) -> list[Polynomial]:
    """Quadrics cutting out pure states in the coordinates of ``basis``."""
    t = basis.tensors
    D = basis.dim
    if basis.convention == "scaled":
        n = D * D - 1
        norm = {}
        for j in range(n):
            e = [0] * n
            e[j] = 2
            norm[tuple(e)] = 1.0
        norm[(0,) * n] = -float(D * (D - 1))
        gens = [Polynomial(n, norm)]
        for l in range(n):
            gens.append(_quadratic(t.d[:, :, l], -(D - 2) * np.eye(n)[l], 0.0))
        return gens
    n = D * D
    chi = t.chi.real
    gens = [Polynomial.linear(t.tau, -1.0), _quadratic(np.eye(n), np.zeros(n), -1.0)]
    for g in range(n):
        gens.append(_quadratic(0.5 * (chi[:, :, g] + chi[:, :, g].T), -np.eye(n)[g], 0.0))
    return gens


def _quadratic(Q: np.ndarray, b: np.ndarray, c0: float) -> Polynomial:
    """``x^T Q x + b . x + c0`` for symmetric ``Q``."""
    n = len(b)
    terms = {}
    for i in range(n):
        for j in range(i, n):
            v = Q[i, j] if i == j else Q[i, j] + Q[j, i]
            if v != 0:
                e = [0] * n
                e[i] += 1
                e[j] += 1
                terms[tuple(e)] = terms.get(tuple(e), 0.0) + float(v)
        if b[i] != 0:
            e = [0] * n
            e[i] = 1
            terms[tuple(e)] = float(b[i])
    if c0:
        terms[(0,) * n] = float(c0)
    return Polynomial(n, terms)


def pure_state_variety(basis: OperatorBasis) -> Variety:
    n = len(basis) - 1 if basis.convention == "scaled" else len(basis)
    D = basis.dim
    return Variety(n, tuple(pure_state_generators(basis)), 2 * (D - 1))


def _check_pure(rho, tol):
    rho = check_density(rho, tol=1e-10)
    purity = np.trace(rho @ rho).real
    if abs(purity - 1.0) > tol:
        raise PreconditionError(f"state is not pure (tr rho^2 = {purity:.12g})")
    return rho


def angle(rho, sigma, tol: float = PURE_TOL) -> float:
    """Angle between the coefficient vectors of two pure states."""
    rho = _check_pure(rho, tol)
    sigma = _check_pure(sigma, tol)
    if rho.shape != sigma.shape:
        raise DimensionError("states have different dimensions")
    D = rho.shape[0]
    cos = (D * np.trace(rho @ sigma).real - 1.0) / (D - 1)
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))


def max_angle(D: int) -> float:
    return float(np.arccos(1.0 / (1.0 - D)))


# -- unitary action --------------------------------------------------------------


def _check_unitary(U, tol=UNITARY_TOL):
    U = np.asarray(U, dtype=complex)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise DimensionError("unitary must be square")
    if np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0]))) > tol:
        raise PreconditionError("matrix is not unitary")
    return U


def adjoint_rep(U, basis: OperatorBasis) -> np.ndarray:
    """``O[a, b] = tr(lambda^a U lambda^b U^dagger)``, real orthogonal D^2 x D^2."""
    U = _check_unitary(U)
    if U.shape[0] != basis.dim:
        raise DimensionError("unitary and basis dimensions differ")
    E = basis.elements
    conj = U[None] @ E @ U.conj().T[None]
    return np.einsum("aij,bji->ab", E, conj).real


def apply_adjoint(O: np.ndarray, c: CoefficientVector) -> CoefficientVector:
    """Transform coefficients by an adjoint matrix; the identity block is skipped for scaled vectors."""
    O = np.asarray(O, dtype=float)
    if O.shape != (len(c.basis), len(c.basis)):
        raise DimensionError("adjoint matrix does not match the basis")
    if c.convention == "scaled":
        return CoefficientVector(O[1:, 1:] @ c.c, c.basis)
    return CoefficientVector(O @ c.c, c.basis)


def rotate_basis(basis: OperatorBasis, O) -> tuple[OperatorBasis, StructureTensors]:
    """``mu^a = O[a, b] lambda^b`` in the plain convention, with recomputed tensors."""
    O = np.asarray(O, dtype=float)
    n = len(basis)
    if O.shape != (n, n):
        raise DimensionError(f"rotation must be {n}x{n}")
    if np.max(np.abs(O @ O.T - np.eye(n))) > UNITARY_TOL:
        raise PreconditionError("rotation matrix is not orthogonal")
    mu = np.einsum("ab,bij->aij", O, basis.elements)
    rotated = OperatorBasis(basis.dim, mu, "plain")
    return rotated, rotated.tensors


# -- bipartite systems -------------------------------------------------------------


def _dims(dims, total):
    M, N = (int(d) for d in dims)
    if M < 1 or N < 1 or M * N != total:
        raise DimensionError(f"dimensions {M}x{N} do not factor a space of dimension {total}")
    return M, N


def partial_trace(rho, dims, subsystem: str = "B") -> np.ndarray:
    """Trace out ``subsystem`` ('A' or 'B') of an operator on C^M (x) C^N."""
    rho = np.asarray(rho, dtype=complex)
    M, N = _dims(dims, rho.shape[0])
    T = rho.reshape(M, N, M, N)
    if subsystem == "B":
        return np.einsum("ijkj->ik", T)
    if subsystem == "A":
        return np.einsum("ijil->jl", T)
    raise ValueError("subsystem must be 'A' or 'B'")


def reduced_coefficients(rho, dims, basis_A: OperatorBasis | None = None,
                         basis_B: OperatorBasis | None = None) -> CoefficientVector:
    """Plain coefficients of ``tr_B rho`` from the tensor-basis coefficients of ``rho``.

    With ``C[a, b] = tr(rho lambda^a (x) lambda^b)`` one has
    ``tr_B rho = sqrt(N) C[a, 0] lambda^a`` because ``tr(lambda^0) = sqrt(N)``.
    """
    rho = np.asarray(rho, dtype=complex)
    M, N = _dims(dims, rho.shape[0])
    A = basis_A or gellmann_basis(M)[0]
    B = basis_B or gellmann_basis(N)[0]
    T = tensor_basis(A, B)
    C = np.einsum("aij,ji->a", T.elements, rho).real.reshape(M * M, N * N)
    plain = OperatorBasis(M, A.elements, "plain")
    return CoefficientVector(np.sqrt(N) * C[:, 0], plain)


def f_a(rho, a: int) -> float:
    """``2 (1 - tr(rho^a))`` from the spectrum of a density matrix."""
    if int(a) != a or a < 2:
        raise ValueError(f"measure order a must be an integer >= 2, got {a}")
    ev = np.clip(np.linalg.eigvalsh(np.asarray(rho, dtype=complex)), 0.0, None)
    return float(2.0 * (1.0 - np.sum(ev ** int(a))))


def measure_f_a(state, a: int, dims=None) -> float:
    """F_a of a normalized pure bipartite vector (needs ``dims``) or f_a of a reduced density matrix."""
    if int(a) != a or a < 2:
        raise ValueError(f"measure order a must be an integer >= 2, got {a}")
    x = np.asarray(state, dtype=complex)
    if x.ndim == 1:
        if dims is None:
            raise ValueError("dims are required for a state vector")
        M, N = _dims(dims, x.size)
        if abs(np.linalg.norm(x) - 1.0) > 1e-10:
            raise PreconditionError("state vector is not normalized")
        # singular values squared of the amplitude matrix = spectrum of tr_B
        s = np.linalg.svd(x.reshape(M, N), compute_uv=False)
        return float(2.0 * (1.0 - np.sum(s ** (2 * int(a)))))
    return f_a(x, a)


# -- ensembles ------------------------------------------------------------------


@dataclass(frozen=True)
class Ensemble:
    weights: np.ndarray
    states: np.ndarray  # (s, dim) unit vectors

    def density(self) -> np.ndarray:
        return np.einsum("j,ji,jk->ik", self.weights, self.states, self.states.conj())

    def average(self, a: int, dims) -> float:
        return float(sum(q * measure_f_a(v, a, dims) for q, v in zip(self.weights, self.states)))

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "states": [[[z.real, z.imag] for z in v] for v in self.states],
        }


def _eigen_range(rho, cutoff=RANK_CUTOFF):
    ev, vecs = np.linalg.eigh(rho)
    keep = ev > cutoff
    # descending weights, fixed order for reproducibility
    order = np.argsort(-ev[keep], kind="stable")
    return ev[keep][order], vecs[:, keep][:, order]


def hjw_ensemble(rho, U, cutoff: float = RANK_CUTOFF) -> Ensemble:
    """Ensemble ``v_j = sum_k conj(U[j, k]) sqrt(p_k) u_k`` for a right-unitary ``U`` (s x r).

    States that come out with zero weight are dropped.
    """
    rho = check_density(rho, tol=1e-10)
    p, u = _eigen_range(rho, cutoff)
    U = np.atleast_2d(np.asarray(U, dtype=complex))
    r = len(p)
    if U.shape[1] != r or U.shape[0] < r:
        raise DimensionError(f"need an s x {r} matrix with s >= {r}, got {U.shape}")
    if np.max(np.abs(U.conj().T @ U - np.eye(r))) > UNITARY_TOL:
        raise PreconditionError("mixing matrix is not right-unitary")
    vbar = U.conj() @ (np.sqrt(p)[:, None] * u.T)
    q = np.sum(np.abs(vbar) ** 2, axis=1)
    keep = q > cutoff
    return Ensemble(q[keep] / q[keep].sum(), vbar[keep] / np.sqrt(q[keep])[:, None])


# -- entanglement of formation ---------------------------------------------------------


@dataclass(frozen=True)
class EoFResult:
    value: float
    ensemble: Ensemble
    strategy: str
    size: int  # number of ensemble members searched over (s)


def _batched_cost(W, Ubar, M, N, a):
    """Ensemble cost and its Euclidean gradient for a batch of mixing matrices.

    ``W`` is (B, s, r); member ``j`` is ``A_j = sum_k W[j, k] Ubar_k`` reshaped to
    (M, N), so ``q_j = |A_j|^2`` and its reduced state is ``A_j A_j^dagger / q_j``.
    """
    A = np.einsum("bjk,kmn->bjmn", W, Ubar)
    S = A @ A.conj().swapaxes(-1, -2)
    q = np.einsum("bjmm->bj", S).real
    qs = np.maximum(q, 1e-30)
    Sp = np.linalg.matrix_power(S, a - 1)
    tra = np.einsum("bjmn,bjnm->bj", Sp, S).real
    cost = np.sum(2.0 * (q - tra / qs ** (a - 1)), axis=1)
    eye = np.eye(M)
    G = 2.0 * (eye - a * Sp / qs[..., None, None] ** (a - 1)
               + ((a - 1) * tra / qs ** a)[..., None, None] * eye)
    gA = 2.0 * G @ A
    gW = np.einsum("bjmn,kmn->bjk", gA, Ubar.conj())
    return cost, gW


def _retract(W):
    Q, R = np.linalg.qr(W)
    ph = np.diagonal(R, axis1=-2, axis2=-1)
    mag = np.abs(ph)
    ph = np.divide(ph, mag, out=np.ones_like(ph), where=mag > 0)
    return Q * ph[..., None, :]


def _riemannian_grad(W, g):
    WhG = W.conj().swapaxes(-1, -2) @ g
    return g - W @ (0.5 * (WhG + WhG.conj().swapaxes(-1, -2)))


def _stiefel_descent(Ubar, M, N, a, s, starts, iters=500, gtol=1e-10, ftol=1e-14, patience=5):
    """Gradient descent on the complex Stiefel manifold, all starts in lockstep.

    Trial steps come from the Barzilai-Borwein ratio of successive iterates
    and gradients, then are halved until the Armijo condition holds.  Stops
    once the best cost in the batch has improved by at most ``ftol`` for
    ``patience`` consecutive sweeps.
    """
    W = starts
    cost, g = _batched_cost(W, Ubar, M, N, a)
    xi = _riemannian_grad(W, g)
    step = np.full(len(W), 0.5)
    stall = 0
    for _ in range(iters):
        gn = np.sum(np.abs(xi) ** 2, axis=(1, 2))
        if np.all(gn < gtol ** 2):
            break
        active = gn >= gtol ** 2
        newW = W.copy()
        newcost = cost.copy()
        t = step.copy()
        for _ in range(40):
            trial = _retract(W - t[:, None, None] * xi)
            c_trial, _ = _batched_cost(trial, Ubar, M, N, a)
            ok = active & (c_trial <= cost - 1e-4 * t * gn)
            newW[ok] = trial[ok]
            newcost[ok] = c_trial[ok]
            active &= ~ok
            if not active.any():
                break
            t = np.where(active, 0.5 * t, t)
        gain = cost.min() - newcost.min()
        newg = _batched_cost(newW, Ubar, M, N, a)[1]
        newxi = _riemannian_grad(newW, newg)
        dW = newW - W
        dg = newxi - xi
        num = np.sum(np.abs(dW) ** 2, axis=(1, 2))
        den = np.abs(np.sum((dW.conj() * dg).real, axis=(1, 2)))
        step = np.where(den > 1e-300, num / np.maximum(den, 1e-300), 2 * t)
        step = np.clip(step, 1e-8, 1e4)
        W, cost, xi = newW, newcost, newxi
        stall = stall + 1 if gain <= ftol else 0
        if stall >= patience:
            break
    return W, cost


def _random_isometries(rng, count, s, r):
    Z = rng.standard_normal((count, s, r)) + 1j * rng.standard_normal((count, s, r))
    return _retract(Z)


def _check_cap(M, N, cap):
    if M * N > cap:
        raise UnsupportedScaleError(f"{M}x{N} exceeds the exhaustive-search cap of total dimension {cap}")


def _eof_unitary_search(rho, M, N, a, seed, restarts, s_max):
    p, u = _eigen_range(rho)
    r = len(p)
    Ubar = (np.sqrt(p)[:, None] * u.T).reshape(r, M, N)
    s_max = r + 2 if s_max is None else int(s_max)
    if s_max < r:
        raise ValueError(f"s_max must be at least the rank {r}")
    best = None
    for s in range(r, s_max + 1):
        rng = np.random.default_rng([seed, s])
        starts = _random_isometries(rng, restarts, s, r)
        # the eigen-ensemble (identity mixing) is always among the starts
        starts[0] = np.eye(s, r)
        W, cost = _stiefel_descent(Ubar, M, N, a, s, starts)
        i = int(np.argmin(cost))
        if best is None or cost[i] < best[0] - 1e-12:
            best = (float(cost[i]), W[i], s)
    _, W, s = best
    # members are sum_k W[j, k] Ubar_k, i.e. U = conj(W) in the HJW form
    ens = hjw_ensemble(rho, W.conj())
    return EoFResult(ens.average(a, (M, N)), ens, "unitary_search", s)


def range_slice(rho, basis: OperatorBasis | None = None):
    """Affine map ``c = c0 + B y`` from the pure-state coordinates of range(rho) into ``basis``.

    Operators ``Q Y Q^dagger`` with ``Q`` an orthonormal frame of the range and
    ``Y = (I + y . nu) / r`` cover every state supported on the range; ``Y`` is
    pure exactly when ``QYQ^dagger`` is.  Returns ``(c0, B, Q, small_basis, y_rho)``.
    """
    rho = np.asarray(rho, dtype=complex)
    D = rho.shape[0]
    basis = basis or gellmann_basis(D)[0]
    p, Q = _eigen_range(rho)
    r = len(p)
    small = gellmann_basis(r)[0] if r >= 2 else None
    E = basis.elements[1:]
    c0 = (D / r) * np.einsum("aij,ji->a", E, Q @ Q.conj().T).real
    if small is None:
        return c0, np.zeros((len(c0), 0)), Q, None, np.zeros(0)
    cols = [(D / r) * np.einsum("aij,ji->a", E, Q @ nu @ Q.conj().T).real for nu in small.elements[1:]]
    y = embed(np.diag(p).astype(complex), small).c
    return c0, np.array(cols).T, Q, small, y


def _reduced_state_polynomials(Q, small: OperatorBasis, M, N):
    """Matrices ``A_0 + sum_i y_i A_i`` equal to ``tr_B(Q Y Q^dagger)``."""
    r = small.dim
    mats = [np.eye(r, dtype=complex) / r] + [nu / r for nu in small.elements[1:]]
    return [partial_trace(Q @ X @ Q.conj().T, (M, N)) for X in mats]


def _trace_power_polynomial(mats, a: int) -> Polynomial:
    """``tr((A_0 + sum y_i A_i)^a)`` as a real polynomial in ``y``."""
    k = len(mats) - 1
    terms = {}
    for idx in itertools.product(range(k + 1), repeat=a):
        prod = mats[idx[0]]
        for i in idx[1:]:
            prod = prod @ mats[i]
        val = np.trace(prod)
        e = [0] * k
        for i in idx:
            if i:
                e[i - 1] += 1
        key = tuple(e)
        terms[key] = terms.get(key, 0.0) + val
    return Polynomial(k, {key: float(v.real) for key, v in terms.items() if abs(v) > 1e-15})


def poincare_problem(rho, dims, a: int):
    """Roof problem whose convex roof at ``y_rho`` is the entanglement of formation of ``rho``.

    Pure-state quadrics of the tensor-product basis are restricted to the
    affine slice spanned by range(rho); the measure is the polynomial
    ``2 (1 - tr(tr_B(.)^a))`` on that slice.
    """
    rho = check_density(rho, tol=1e-10)
    M, N = _dims(dims, rho.shape[0])
    basis = tensor_basis(gellmann_basis(M)[0], gellmann_basis(N)[0])
    c0, Bmat, Q, small, y = range_slice(rho, basis)
    if small is None:
        raise ValueError("pure states have no slice to search")
    gens = [g.compose_affine(Bmat, c0) for g in pure_state_generators(basis)]
    V = Variety(Bmat.shape[1], tuple(gens), 2 * (small.dim - 1)).reduced()
    mats = _reduced_state_polynomials(Q, small, M, N)
    f = 2.0 - 2.0 * _trace_power_polynomial(mats, int(a))
    return RoofProblem(V, f, "convex"), y, Q, small


def _eof_poincare(rho, M, N, a, seed, restarts):
    problem, y, Q, small = poincare_problem(rho, (M, N), a)
    res = roof_eval_oracle(problem, y, restarts=restarts, seed=seed)
    states, weights = [], []
    for p, pt in zip(res.decomposition.weights, res.decomposition.points):
        Y = unembed(CoefficientVector(pt, small))
        ev, vec = np.linalg.eigh(Y)
        v = Q @ vec[:, -1]
        states.append(v / np.linalg.norm(v))
        weights.append(p)
    w = np.array(weights)
    ens = Ensemble(w / w.sum(), np.array(states))
    return EoFResult(float(res.value), ens, "poincare_roof", len(w))


def entanglement_of_formation(rho, dims, a: int = 2, strategy: str = "unitary_search", seed: int = 0,
                              restarts: int = 64, s_max: int | None = None,
                              cap: int = DEFAULT_CAP) -> EoFResult:
    """Convex roof of F_a at ``rho`` with a witnessing ensemble.

    ``unitary_search`` optimizes HJW mixing matrices of every size
    ``s = r .. s_max`` (default ``r + 2``); ``poincare_roof`` hands the
    pure-state variety restricted to range(rho) to the roof oracle.
    """
    if int(a) != a or a < 2:
        raise ValueError(f"measure order a must be an integer >= 2, got {a}")
    a = int(a)
    rho = check_density(rho, tol=1e-10)
    M, N = _dims(dims, rho.shape[0])
    _check_cap(M, N, cap)
    p, u = _eigen_range(rho)
    if len(p) == 1:
        ens = Ensemble(np.ones(1), u.T.copy())
        return EoFResult(measure_f_a(u[:, 0], a, (M, N)), ens, strategy, 1)
    if strategy == "unitary_search":
        return _eof_unitary_search(rho, M, N, a, seed, restarts, s_max)
    if strategy == "poincare_roof":
        return _eof_poincare(rho, M, N, a, seed, restarts)
    raise ValueError(f"unknown strategy {strategy!r}")
