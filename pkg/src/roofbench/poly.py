"""Sparse multivariate polynomials with real coefficients.

A polynomial is stored as a map from exponent tuples to float coefficients.
Instances are immutable; every arithmetic operation returns a new object in
canonical form (no zero coefficients, one entry per exponent vector).

Text syntax (used by config files)::

    1*x1^2 + 1*x2^2 - 1
    -0.5*x1^3*x2^1 + 2*x3^2

Variables are ``x1 .. xn``.  The parser also accepts a bare ``x1`` (implicit
exponent 1) and a term without a coefficient.
"""

from __future__ import annotations

import math
import re
from collections.abc import Iterable, Mapping, Sequence
from numbers import Real

import numpy as np

from .errors import DimensionError, PolynomialParseError

__all__ = ["Polynomial", "evaluate", "grad", "add", "mul", "scale", "parse", "determinant"]


class Polynomial:
    """Immutable sparse polynomial in ``nvars`` real variables."""

    __slots__ = ("_nvars", "_terms", "_exps", "_coefs", "_grad", "_hash")

    def __init__(self, nvars: int, terms: Mapping[Sequence[int], float] | None = None):
        if int(nvars) != nvars or nvars < 1:
            raise DimensionError(f"nvars must be a positive integer, got {nvars!r}")
        nvars = int(nvars)
        canon: dict[tuple[int, ...], float] = {}
        for exps, coef in (terms or {}).items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != nvars:
                raise DimensionError(f"exponent vector {exps} has length {len(exps)}, expected {nvars}")
            if any(e < 0 for e in exps):
                raise ValueError(f"negative exponent in {exps}")
            coef = float(coef)
            if not math.isfinite(coef):
                raise ValueError(f"non-finite coefficient {coef} for {exps}")
            canon[exps] = canon.get(exps, 0.0) + coef
        # exact-zero pruning only; tolerance-based pruning is the caller's business
        self._terms = {k: canon[k] for k in sorted(canon) if canon[k] != 0.0}
        self._nvars = nvars
        if self._terms:
            self._exps = np.array(list(self._terms), dtype=np.int64)
            self._coefs = np.array(list(self._terms.values()), dtype=float)
        else:
            self._exps = np.zeros((0, nvars), dtype=np.int64)
            self._coefs = np.zeros(0)
        self._grad = None
        self._hash = None

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, nvars: int) -> Polynomial:
        return cls(nvars)

    @classmethod
    def constant(cls, value: float, nvars: int) -> Polynomial:
        return cls(nvars, {(0,) * nvars: value})

    @classmethod
    def variable(cls, index: int, nvars: int) -> Polynomial:
        """The coordinate function ``x_{index}`` (0-based index)."""
        if not 0 <= index < nvars:
            raise DimensionError(f"variable index {index} out of range for {nvars} variables")
        exps = [0] * nvars
        exps[index] = 1
        return cls(nvars, {tuple(exps): 1.0})

    @classmethod
    def linear(cls, coefficients: Sequence[float], constant: float = 0.0) -> Polynomial:
        n = len(coefficients)
        terms = {(0,) * n: constant}
        for i, a in enumerate(coefficients):
            exps = [0] * n
            exps[i] = 1
            terms[tuple(exps)] = a
        return cls(n, terms)

    @classmethod
    def parse(cls, text: str, nvars: int) -> Polynomial:
        return parse(text, nvars)

    # -- basic properties --------------------------------------------------

    @property
    def nvars(self) -> int:
        return self._nvars

    @property
    def terms(self) -> dict[tuple[int, ...], float]:
        return dict(self._terms)

    @property
    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        if not self._terms:
            return -1
        return int(self._exps.sum(axis=1).max())

    def degree_in(self, i: int) -> int:
        if not self._terms:
            return -1
        return int(self._exps[:, i].max())

    def is_zero(self) -> bool:
        return not self._terms

    def __len__(self):
        return len(self._terms)

    def __eq__(self, other):
        if isinstance(other, Real):
            other = Polynomial.constant(float(other), self._nvars)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self._nvars == other._nvars and self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self._nvars, tuple(self._terms.items())))
        return self._hash

    def __repr__(self):
        return f"Polynomial({self._nvars}, {self.to_string()!r})"

    def __str__(self):
        return self.to_string()

    # -- evaluation --------------------------------------------------------

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self._nvars,):
            raise DimensionError(f"point has shape {x.shape}, polynomial has {self._nvars} variables")
        if not self._terms:
            return 0.0
        return float(np.prod(x ** self._exps, axis=1) @ self._coefs)

    def eval_many(self, points) -> np.ndarray:
        """Evaluate at each row of a ``(k, nvars)`` array."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self._nvars:
            raise DimensionError(f"points have shape {pts.shape}, expected (k, {self._nvars})")
        if not self._terms:
            return np.zeros(len(pts))
        return np.prod(pts[:, None, :] ** self._exps[None, :, :], axis=2) @ self._coefs

    # -- calculus ----------------------------------------------------------

    def diff(self, i: int) -> Polynomial:
        if not 0 <= i < self._nvars:
            raise DimensionError(f"variable index {i} out of range")
        out = {}
        for exps, c in self._terms.items():
            e = exps[i]
            if e:
                new = list(exps)
                new[i] = e - 1
                out[tuple(new)] = c * e
        return Polynomial(self._nvars, out)

    def grad(self) -> tuple[Polynomial, ...]:
        if self._grad is None:
            self._grad = tuple(self.diff(i) for i in range(self._nvars))
        return self._grad

    def grad_at(self, x) -> np.ndarray:
        return np.array([g.eval(x) for g in self.grad()])

    # -- arithmetic --------------------------------------------------------

    def _coerce(self, other) -> Polynomial:
        if isinstance(other, Polynomial):
            if other._nvars != self._nvars:
                raise DimensionError(f"variable counts differ: {self._nvars} vs {other._nvars}")
            return other
        if isinstance(other, Real):
            return Polynomial.constant(float(other), self._nvars)
        raise TypeError(f"cannot combine Polynomial with {type(other).__name__}")

    def __add__(self, other):
        try:
            other = self._coerce(other)
        except TypeError:
            return NotImplemented
        terms = dict(self._terms)
        for k, c in other._terms.items():
            terms[k] = terms.get(k, 0.0) + c
        return Polynomial(self._nvars, terms)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self._nvars, {k: -c for k, c in self._terms.items()})

    def __sub__(self, other):
        try:
            other = self._coerce(other)
        except TypeError:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Real):
            return self.scale(float(other))
        try:
            other = self._coerce(other)
        except TypeError:
            return NotImplemented
        out: dict[tuple[int, ...], float] = {}
        for ka, ca in self._terms.items():
            for kb, cb in other._terms.items():
                k = tuple(a + b for a, b in zip(ka, kb))
                out[k] = out.get(k, 0.0) + ca * cb
        return Polynomial(self._nvars, out)

    __rmul__ = __mul__

    def __truediv__(self, s):
        if not isinstance(s, Real):
            return NotImplemented
        return self.scale(1.0 / float(s))

    def __pow__(self, k: int):
        if int(k) != k or k < 0:
            raise ValueError("only non-negative integer powers are supported")
        result = Polynomial.constant(1.0, self._nvars)
        base = self
        k = int(k)
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def scale(self, s: float) -> Polynomial:
        return Polynomial(self._nvars, {k: c * s for k, c in self._terms.items()})

    # -- change of variables -----------------------------------------------

    def extend(self, nvars: int) -> Polynomial:
        """Same polynomial viewed in ``nvars >= self.nvars`` variables (new ones appended)."""
        if nvars < self._nvars:
            raise DimensionError("cannot shrink the variable set with extend()")
        pad = (0,) * (nvars - self._nvars)
        return Polynomial(nvars, {k + pad: c for k, c in self._terms.items()})

    def rename(self, index_map: Sequence[int], nvars: int) -> Polynomial:
        """Move variable ``i`` to position ``index_map[i]`` in a ring of ``nvars`` variables."""
        if len(index_map) != self._nvars:
            raise DimensionError("index_map must have one entry per variable")
        out = {}
        for k, c in self._terms.items():
            new = [0] * nvars
            for i, e in enumerate(k):
                new[index_map[i]] += e
            out[tuple(new)] = c
        return Polynomial(nvars, out)

    def compose(self, substitutions: Sequence[Polynomial]) -> Polynomial:
        """Substitute ``x_i -> substitutions[i]``; all substitutions share one variable ring."""
        if len(substitutions) != self._nvars:
            raise DimensionError(f"need {self._nvars} substitutions, got {len(substitutions)}")
        target = substitutions[0].nvars
        if any(q.nvars != target for q in substitutions):
            raise DimensionError("substitutions must share a variable count")
        powers: list[list[Polynomial]] = [[Polynomial.constant(1.0, target)] for _ in substitutions]
        result = Polynomial.zero(target)
        for k, c in self._terms.items():
            term = Polynomial.constant(c, target)
            for i, e in enumerate(k):
                if e == 0:
                    continue
                cache = powers[i]
                while len(cache) <= e:
                    cache.append(cache[-1] * substitutions[i])
                term = term * cache[e]
            result = result + term
        return result

    def compose_affine(self, matrix, offset) -> Polynomial:
        """``p(A y + b)`` as a polynomial in ``y``; ``A`` is ``(nvars, k)``."""
        A = np.asarray(matrix, dtype=float)
        b = np.asarray(offset, dtype=float)
        if A.ndim != 2 or A.shape[0] != self._nvars or b.shape != (self._nvars,):
            raise DimensionError("affine map shape does not match the polynomial")
        subs = [Polynomial.linear(A[i], b[i]) for i in range(self._nvars)]
        return self.compose(subs)

    # -- text --------------------------------------------------------------

    def to_string(self) -> str:
        if not self._terms:
            return "0"
        order = sorted(self._terms, key=lambda k: (-sum(k), tuple(-e for e in k)))
        parts = []
        for i, k in enumerate(order):
            c = self._terms[k]
            sign = "-" if c < 0 else "+"
            factors = [repr(abs(c))]
            factors += [f"x{j + 1}^{e}" for j, e in enumerate(k) if e]
            body = "*".join(factors)
            if i == 0:
                parts.append(body if sign == "+" else "-" + body)
            else:
                parts.append(f"{sign} {body}")
        return " ".join(parts)


class PolyBatch:
    """Evaluate many polynomials in the same variables through one monomial table."""

    def __init__(self, polys: Sequence[Polynomial]):
        polys = list(polys)
        if not polys:
            raise ValueError("PolyBatch needs at least one polynomial")
        self.nvars = polys[0].nvars
        if any(p.nvars != self.nvars for p in polys):
            raise DimensionError("all polynomials in a batch must share nvars")
        keys = sorted({k for p in polys for k in p._terms})
        if not keys:
            keys = [(0,) * self.nvars]
        index = {k: i for i, k in enumerate(keys)}
        self._exps = np.array(keys, dtype=np.int64)
        self._coefs = np.zeros((len(polys), len(keys)))
        for r, p in enumerate(polys):
            for k, c in p._terms.items():
                self._coefs[r, index[k]] = c
        self.size = len(polys)

    def __call__(self, points) -> np.ndarray:
        """``(k, size)`` array of values at the rows of ``points``."""
        pts = np.asarray(points, dtype=float)
        mono = np.prod(pts[:, None, :] ** self._exps[None, :, :], axis=2)
        return mono @ self._coefs.T


# -- functional aliases ----------------------------------------------------


def evaluate(p: Polynomial, x) -> float:
    return p.eval(x)


def grad(p: Polynomial) -> tuple[Polynomial, ...]:
    return p.grad()


def add(p: Polynomial, q: Polynomial) -> Polynomial:
    return p + q


def mul(p: Polynomial, q: Polynomial) -> Polynomial:
    return p * q


def scale(p: Polynomial, s: float) -> Polynomial:
    return p.scale(s)


def determinant(rows: Sequence[Sequence[Polynomial]]) -> Polynomial:
    """Determinant of a small square matrix of polynomials by cofactor expansion."""
    n = len(rows)
    if n == 0 or any(len(r) != n for r in rows):
        raise DimensionError("determinant needs a non-empty square matrix")
    if n == 1:
        return rows[0][0]
    nv = rows[0][0].nvars
    total = Polynomial.zero(nv)
    for j in range(n):
        if rows[0][j].is_zero():
            continue
        minor = [r[:j] + r[j + 1:] for r in rows[1:]]
        cof = rows[0][j] * determinant([list(m) for m in minor])
        total = total + cof if j % 2 == 0 else total - cof
    return total


# -- parser ----------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<var>x\d+)|(?P<op>[-+*^]))"
)


def _tokenize(text: str):
    pos = 0
    tokens = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            bad = re.match(r"\S+?(?=[\s*^+-]|$)", text[start:])
            raise PolynomialParseError(text, bad.group(0) if bad else text[start:start + 1], start)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    return tokens


def parse(text: str, nvars: int) -> Polynomial:
    """Parse the config-file polynomial syntax into a :class:`Polynomial`."""
    tokens = _tokenize(text)
    if not tokens:
        raise PolynomialParseError(text, "", 0)
    i = 0
    terms: dict[tuple[int, ...], float] = {}

    def expect_factor(i):
        if i >= len(tokens):
            raise PolynomialParseError(text, "<end>", len(text))
        kind, val, at = tokens[i]
        if kind == "num":
            return ("num", float(val)), i + 1
        if kind == "var":
            idx = int(val[1:])
            if not 1 <= idx <= nvars:
                raise PolynomialParseError(text, val, at)
            e = 1
            if i + 1 < len(tokens) and tokens[i + 1][1] == "^":
                if i + 2 >= len(tokens) or tokens[i + 2][0] != "num" or not tokens[i + 2][1].isdigit():
                    tok = tokens[i + 2] if i + 2 < len(tokens) else ("", "<end>", len(text))
                    raise PolynomialParseError(text, tok[1], tok[2])
                e = int(tokens[i + 2][1])
                return ("var", idx - 1, e), i + 3
            return ("var", idx - 1, e), i + 1
        raise PolynomialParseError(text, val, at)

    first = True
    while i < len(tokens):
        sign = 1.0
        kind, val, at = tokens[i]
        if kind == "op" and val in "+-":
            sign = -1.0 if val == "-" else 1.0
            i += 1
        elif not first:
            raise PolynomialParseError(text, val, at)
        first = False
        coef = sign
        exps = [0] * nvars
        factor, i = expect_factor(i)
        while True:
            if factor[0] == "num":
                coef *= factor[1]
            else:
                exps[factor[1]] += factor[2]
            if i < len(tokens) and tokens[i][1] == "*":
                factor, i = expect_factor(i + 1)
                continue
            break
        if i < len(tokens) and tokens[i][1] not in "+-":
            raise PolynomialParseError(text, tokens[i][1], tokens[i][2])
        key = tuple(exps)
        terms[key] = terms.get(key, 0.0) + coef
    return Polynomial(nvars, terms)
