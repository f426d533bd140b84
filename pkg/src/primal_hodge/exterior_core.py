"""Polynomial differential forms on n-simplices.

A k-form is stored as a map from k-indices (strictly increasing tuples of
1-based coordinate labels) to polynomials.  Polynomials are dense maps from
exponent tuples to floats.  Everything here is exact up to floating point
rounding: integration over a simplex uses the closed-form barycentric
monomial formula, so no quadrature error enters.

Sign conventions
----------------
``hodge_star(f dx^a) = sign(a, b) f dx^b`` where ``b`` is the complement of
``a`` and ``sign(a, b)`` is the sign of the permutation ``(a, b)`` of
``(1, ..., n)``.  ``codifferential`` is ``(-1)**(k*n) * star d star``; with
the star above this makes it ``+div`` on 1-forms in the plane.  The L2
adjoint of ``d`` is available separately as ``adjoint_codifferential``; the
two differ by ``(-1)**(n+1)`` and coincide in odd dimension.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Mapping

import numpy as np

KIndex = tuple[int, ...]
Exponent = tuple[int, ...]

PRUNE_TOL = 1e-14


class DomainError(ValueError):
    """Raised for arguments outside an operation's mathematical domain."""


# ---------------------------------------------------------------------------
# k-indices
# ---------------------------------------------------------------------------

def enumerate_k_indices(k: int, n: int) -> list[KIndex]:
    """All k-indices of ``{1..n}`` in lexicographic order."""
    if n < 0 or k < 0 or k > n:
        raise DomainError(f"no {k}-indices in dimension {n}")
    return list(itertools.combinations(range(1, n + 1), k))


def permutation_sign(seq: Iterable[int]) -> int:
    seq = list(seq)
    inversions = sum(1 for i in range(len(seq)) for j in range(i + 1, len(seq)) if seq[i] > seq[j])
    return -1 if inversions % 2 else 1


def complement(alpha: KIndex, n: int) -> tuple[KIndex, int]:
    """Complementary index and the sign of the permutation ``(alpha, beta)``."""
    beta = tuple(i for i in range(1, n + 1) if i not in alpha)
    return beta, permutation_sign(alpha + beta)


# ---------------------------------------------------------------------------
# Polynomials
# ---------------------------------------------------------------------------

class Poly:
    """Multivariate polynomial in ``n`` variables with float coefficients."""

    __slots__ = ("n", "terms")

    def __init__(self, n: int, terms: Mapping[Exponent, float] | None = None):
        self.n = n
        clean: dict[Exponent, float] = {}
        for exp, c in (terms or {}).items():
            if len(exp) != n:
                raise ValueError(f"exponent {exp} has wrong length for n={n}")
            c = float(c)
            if abs(c) > PRUNE_TOL:
                clean[tuple(exp)] = clean.get(tuple(exp), 0.0) + c
        self.terms = {e: c for e, c in clean.items() if abs(c) > PRUNE_TOL}

    @classmethod
    def constant(cls, n: int, value: float = 1.0) -> "Poly":
        return cls(n, {(0,) * n: value})

    @classmethod
    def coordinate(cls, n: int, j: int, shift: float = 0.0) -> "Poly":
        """``x^j - shift`` with ``j`` 1-based."""
        exp = [0] * n
        exp[j - 1] = 1
        return cls(n, {tuple(exp): 1.0, (0,) * n: -shift})

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def is_zero(self, tol: float = 0.0) -> bool:
        return all(abs(c) <= tol for c in self.terms.values())

    def __add__(self, other: "Poly") -> "Poly":
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0.0) + c
        return Poly(self.n, out)

    def __neg__(self) -> "Poly":
        return Poly(self.n, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other: "Poly") -> "Poly":
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, Poly):
            out: dict[Exponent, float] = {}
            for e1, c1 in self.terms.items():
                for e2, c2 in other.terms.items():
                    e = tuple(a + b for a, b in zip(e1, e2))
                    out[e] = out.get(e, 0.0) + c1 * c2
            return Poly(self.n, out)
        return Poly(self.n, {e: c * other for e, c in self.terms.items()})

    __rmul__ = __mul__

    def deriv(self, j: int) -> "Poly":
        """Partial derivative in the 1-based coordinate ``j``."""
        out = {}
        for e, c in self.terms.items():
            p = e[j - 1]
            if p:
                e2 = list(e)
                e2[j - 1] -= 1
                out[tuple(e2)] = c * p
        return Poly(self.n, out)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        val = np.zeros(x.shape[:-1])
        for e, c in self.terms.items():
            val = val + c * np.prod(x ** np.array(e), axis=-1)
        return val

    def max_abs_coef(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def __repr__(self) -> str:
        if not self.terms:
            return "0"
        return " + ".join(f"{c:g}*x^{e}" for e, c in sorted(self.terms.items()))


# ---------------------------------------------------------------------------
# Forms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PolyForm:
    """A differential k-form on R^n with polynomial coefficients.

    Missing keys in ``components`` are zero components.
    """

    k: int
    n: int
    components: Mapping[KIndex, Poly] = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.k <= self.n and self.components:
            raise DomainError(f"form degree {self.k} outside 0..{self.n}")
        clean = {}
        for alpha, p in self.components.items():
            alpha = tuple(alpha)
            if len(alpha) != self.k or list(alpha) != sorted(set(alpha)):
                raise ValueError(f"invalid {self.k}-index {alpha}")
            if not p.is_zero():
                clean[alpha] = p
        object.__setattr__(self, "components", clean)

    @classmethod
    def zero(cls, k: int, n: int) -> "PolyForm":
        return cls(k, n, {})

    @classmethod
    def basis(cls, alpha: KIndex, n: int, coef: Poly | float = 1.0) -> "PolyForm":
        """``coef * dx^alpha``."""
        if not isinstance(coef, Poly):
            coef = Poly.constant(n, coef)
        return cls(len(alpha), n, {tuple(alpha): coef})

    def component(self, alpha: KIndex) -> Poly:
        return self.components.get(tuple(alpha), Poly(self.n))

    def _check(self, other: "PolyForm"):
        if (self.k, self.n) != (other.k, other.n):
            raise DomainError(f"degree mismatch: ({self.k},{self.n}) vs ({other.k},{other.n})")

    def __add__(self, other: "PolyForm") -> "PolyForm":
        self._check(other)
        out = dict(self.components)
        for a, p in other.components.items():
            out[a] = out[a] + p if a in out else p
        return PolyForm(self.k, self.n, out)

    def __neg__(self) -> "PolyForm":
        return PolyForm(self.k, self.n, {a: -p for a, p in self.components.items()})

    def __sub__(self, other: "PolyForm") -> "PolyForm":
        return self + (-other)

    def __mul__(self, s) -> "PolyForm":
        """Multiply by a scalar or by a polynomial 0-form coefficient."""
        return PolyForm(self.k, self.n, {a: p * s for a, p in self.components.items()})

    __rmul__ = __mul__

    def is_zero(self, tol: float = 0.0) -> bool:
        return all(p.is_zero(tol) for p in self.components.values())

    def max_abs_coef(self) -> float:
        return max((p.max_abs_coef() for p in self.components.values()), default=0.0)

    def close_to(self, other: "PolyForm", rtol: float = 1e-12) -> bool:
        """Coefficientwise comparison relative to the larger coefficient."""
        diff = self - other
        scale = max(self.max_abs_coef(), other.max_abs_coef(), 1.0)
        return diff.max_abs_coef() <= rtol * scale

    def as_vector(self, indices: list[KIndex] | None = None) -> list[Poly]:
        indices = indices or enumerate_k_indices(self.k, self.n)
        return [self.component(a) for a in indices]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Evaluate components (in k-index order) at points ``x[..., n]``."""
        return np.stack([p(x) for p in self.as_vector()], axis=-1)


def form_from_vector(k: int, n: int, comps: Iterable[Poly]) -> PolyForm:
    return PolyForm(k, n, dict(zip(enumerate_k_indices(k, n), comps)))


def ext_deriv(omega: PolyForm) -> PolyForm:
    """Exterior derivative.  For ``k == n`` the result is the zero (n+1)-form."""
    k, n = omega.k, omega.n
    if k >= n:
        return PolyForm.zero(k + 1, n)
    out: dict[KIndex, Poly] = {}
    for alpha, f in omega.components.items():
        for i in range(1, n + 1):
            if i in alpha:
                continue
            df = f.deriv(i)
            if df.is_zero():
                continue
            pos = sum(1 for a in alpha if a < i)
            new = tuple(sorted(alpha + (i,)))
            term = df * (-1 if pos % 2 else 1)
            out[new] = out[new] + term if new in out else term
    return PolyForm(k + 1, n, out)


def hodge_star(omega: PolyForm) -> PolyForm:
    n = omega.n
    out = {}
    for alpha, f in omega.components.items():
        beta, sign = complement(alpha, n)
        out[beta] = f * sign
    return PolyForm(n - omega.k, n, out)


def codifferential(omega: PolyForm) -> PolyForm:
    """``(-1)**(k n) * star d star``.  Zero (-1)-form for ``k == 0``."""
    k, n = omega.k, omega.n
    if k == 0:
        return PolyForm.zero(-1, n)
    return hodge_star(ext_deriv(hodge_star(omega))) * (-1) ** (k * n)


def adjoint_codifferential(omega: PolyForm) -> PolyForm:
    """Formal L2 adjoint of ``d``: ``<d a, b> = <a, adjoint_codifferential(b)>``
    for compactly supported forms.  Equals ``-div`` on planar 1-forms."""
    return codifferential(omega) * (-1) ** (omega.n + 1)


# ---------------------------------------------------------------------------
# Simplices and integration
# ---------------------------------------------------------------------------

class Simplex:
    """An n-simplex given by its ``n+1`` vertices in R^n."""

    def __init__(self, vertices):
        v = np.array(vertices, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1] + 1:
            raise ValueError("need n+1 vertices in R^n")
        self.vertices = v
        self.n = v.shape[1]
        self.jacobian = (v[1:] - v[0]).T
        self.signed_volume = float(np.linalg.det(self.jacobian)) / math.factorial(self.n)
        scale = max(self.diameter, 1e-300) ** self.n
        if abs(self.signed_volume) <= 1e-14 * scale:
            raise DomainError("degenerate simplex")

    @property
    def volume(self) -> float:
        return abs(self.signed_volume)

    @cached_property
    def diameter(self) -> float:
        v = self.vertices
        return max(float(np.linalg.norm(a - b)) for a, b in itertools.combinations(v, 2))

    def barycentric_gradients(self) -> np.ndarray:
        """Rows are grad(lambda_i), i = 0..n."""
        ginv = np.linalg.inv(self.jacobian)
        return np.vstack([-ginv.sum(axis=0), ginv])

    def barycentric(self, i: int) -> Poly:
        """Barycentric coordinate of vertex ``i`` as a polynomial in x."""
        g = self.barycentric_gradients()[i]
        const = (1.0 if i == 0 else 0.0) - float(g @ self.vertices[0])
        terms = {(0,) * self.n: const}
        for j in range(self.n):
            e = [0] * self.n
            e[j] = 1
            terms[tuple(e)] = g[j]
        return Poly(self.n, terms)

    def scaled(self, factor: float, center=None) -> "Simplex":
        c = self.vertices.mean(axis=0) if center is None else np.asarray(center, float)
        return Simplex(c + factor * (self.vertices - c))

    def mapped(self, matrix, shift) -> "Simplex":
        return Simplex(self.vertices @ np.asarray(matrix, float).T + np.asarray(shift, float))


def _bary_monomial_integral(a: tuple[int, ...], volume: float, n: int) -> float:
    num = math.factorial(n) * math.prod(math.factorial(ai) for ai in a)
    return volume * num / math.factorial(sum(a) + n)


def simplex_integrate(p: Poly, T: Simplex) -> float:
    """Exact integral of a polynomial over a simplex.

    Each monomial in x is rewritten in barycentric coordinates through
    ``x = sum_i lambda_i v_i`` and integrated with
    ``|T| n! prod(a_i!) / (|a| + n)!``.
    """
    n = T.n
    if p.n != n:
        raise DomainError("polynomial and simplex dimensions differ")
    v = T.vertices
    # lam_polys[j]: x^j as a map from barycentric exponent to coefficient
    lam_polys = []
    for j in range(n):
        lam_polys.append({tuple(1 if r == i else 0 for r in range(n + 1)): v[i, j] for i in range(n + 1)})

    def mul(a, b):
        out = {}
        for e1, c1 in a.items():
            for e2, c2 in b.items():
                e = tuple(x + y for x, y in zip(e1, e2))
                out[e] = out.get(e, 0.0) + c1 * c2
        return out

    cache: dict[tuple[int, int], dict] = {}

    def power(j, m):
        if (j, m) not in cache:
            cache[(j, m)] = {(0,) * (n + 1): 1.0} if m == 0 else mul(power(j, m - 1), lam_polys[j])
        return cache[(j, m)]

    total = 0.0
    for exp, c in p.terms.items():
        bary = {(0,) * (n + 1): 1.0}
        for j, m in enumerate(exp):
            if m:
                bary = mul(bary, power(j, m))
        total += c * sum(cb * _bary_monomial_integral(e, T.volume, n) for e, cb in bary.items())
    return total


def l2_inner(a: PolyForm, b: PolyForm, T: Simplex) -> float:
    """Sum over k-indices of the integrals of componentwise products."""
    if (a.k, a.n) != (b.k, b.n):
        raise DomainError("L2 pairing of forms with different degree")
    return sum(simplex_integrate(p * b.component(alpha), T) for alpha, p in a.components.items())


@dataclass(frozen=True)
class CenteredFrame:
    """Centered coordinates ``x~^j = x^j - c_j`` on a simplex, together with
    the quadratic constants ``c^(j)`` making ``(x~^j)^2 - c^(j)`` mean-free."""

    simplex: Simplex
    centers: tuple[float, ...]
    quad_constants: tuple[float, ...]

    @classmethod
    def of(cls, T: Simplex) -> "CenteredFrame":
        n = T.n
        centers = tuple(float(c) for c in T.vertices.mean(axis=0))
        quads = []
        for j in range(1, n + 1):
            xt = Poly.coordinate(n, j, centers[j - 1])
            quads.append(simplex_integrate(xt * xt, T) / T.volume)
        return cls(T, centers, tuple(quads))

    @property
    def n(self) -> int:
        return self.simplex.n

    def coord(self, j: int) -> Poly:
        """``x~^j`` (1-based)."""
        return Poly.coordinate(self.n, j, self.centers[j - 1])

    def centered_square(self, j: int) -> Poly:
        """``(x~^j)^2 - c^(j)``."""
        xt = self.coord(j)
        return xt * xt - Poly.constant(self.n, self.quad_constants[j - 1])


def koszul(omega: PolyForm, frame: CenteredFrame | None = None) -> PolyForm:
    """Koszul contraction with the position vector (or the centered position
    when a frame is given).  Zero for 0-forms."""
    k, n = omega.k, omega.n
    if k == 0:
        return PolyForm.zero(-1, n)
    coord: Callable[[int], Poly] = frame.coord if frame is not None else (lambda j: Poly.coordinate(n, j))
    out: dict[KIndex, Poly] = {}
    for alpha, f in omega.components.items():
        for j, aj in enumerate(alpha):
            rest = alpha[:j] + alpha[j + 1:]
            term = f * coord(aj) * (-1 if j % 2 else 1)
            out[rest] = out[rest] + term if rest in out else term
    return PolyForm(k - 1, n, out)


def random_polyform(k: int, n: int, degree: int, rng: np.random.Generator) -> PolyForm:
    """Form with random coefficients on every monomial of total degree <= degree."""
    exps = [e for e in itertools.product(range(degree + 1), repeat=n) if sum(e) <= degree]
    comps = {}
    for alpha in enumerate_k_indices(k, n):
        comps[alpha] = Poly(n, {e: rng.uniform(-1, 1) for e in exps})
    return PolyForm(k, n, comps)
