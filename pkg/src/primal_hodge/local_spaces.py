"""Per-simplex shape spaces, their pairings and small local solves.

All pairings use the L2 adjoint of ``d`` (``adjoint_codifferential``), so
that ``duality_pairing`` is a pure boundary term for smooth forms and
vanishes for forms with zero trace data.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .exterior_core import (
    CenteredFrame,
    DomainError,
    KIndex,
    Poly,
    PolyForm,
    Simplex,
    adjoint_codifferential,
    complement,
    enumerate_k_indices,
    ext_deriv,
    hodge_star,
    koszul,
    l2_inner,
)

SELECTORS = ("m", "m+δ", "m+d", "h2δ", "h2d", "whitney⁻", "whitney*⁻", "δ×d")
_ASCII_SELECTORS = {
    "m+delta": "m+δ",
    "h2delta": "h2δ",
    "whitney-": "whitney⁻",
    "whitney*-": "whitney*⁻",
    "delta x d": "δ×d",
    "deltaxd": "δ×d",
}

CORRECTION_TOL = 1e-10


class InconsistentConstraints(RuntimeError):
    """A local over-determined system whose redundant rows do not agree."""


@dataclass(frozen=True)
class LocalBasis:
    simplex: Simplex
    k: int
    forms: tuple[PolyForm, ...]
    labels: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.forms)

    def gram(self) -> np.ndarray:
        return gram_matrix(self.forms, self.simplex)


@dataclass(frozen=True)
class TestPairBasis:
    simplex: Simplex
    k: int
    pairs: tuple[tuple[PolyForm, PolyForm], ...]

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class PairingMatrix:
    matrix: np.ndarray
    rows: LocalBasis
    cols: TestPairBasis


def gram_matrix(forms: Sequence[PolyForm], T: Simplex) -> np.ndarray:
    m = len(forms)
    G = np.empty((m, m))
    for i in range(m):
        for j in range(i, m):
            G[i, j] = G[j, i] = l2_inner(forms[i], forms[j], T)
    return G


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def bubble_delta(T: Simplex, alpha: KIndex, frame: CenteredFrame | None = None) -> PolyForm:
    """Sum over ``alpha_j`` of the mean-free squares, times ``dx^alpha``."""
    frame = frame or CenteredFrame.of(T)
    coef = Poly(T.n)
    for j in alpha:
        coef = coef + frame.centered_square(j)
    return PolyForm.basis(alpha, T.n, coef)


def bubble_d(T: Simplex, alpha: KIndex, frame: CenteredFrame | None = None) -> PolyForm:
    """Same as ``bubble_delta`` but summing over the complementary indices."""
    frame = frame or CenteredFrame.of(T)
    beta, _ = complement(alpha, T.n)
    coef = Poly(T.n)
    for j in beta:
        coef = coef + frame.centered_square(j)
    return PolyForm.basis(alpha, T.n, coef)


def _constants(k: int, n: int) -> list[PolyForm]:
    return [PolyForm.basis(a, n) for a in enumerate_k_indices(k, n)]


def _koszul_family(k: int, frame: CenteredFrame) -> list[PolyForm]:
    """``kappa_T(P0 Lambda^{k+1})``."""
    n = frame.n
    if k + 1 > n:
        return []
    return [koszul(PolyForm.basis(a, n), frame) for a in enumerate_k_indices(k + 1, n)]


def _star_koszul_family(k: int, frame: CenteredFrame) -> list[PolyForm]:
    """``star kappa_T star(P0 Lambda^{k-1})``."""
    n = frame.n
    if k - 1 < 0:
        return []
    return [hodge_star(koszul(hodge_star(PolyForm.basis(a, n)), frame)) for a in enumerate_k_indices(k - 1, n)]


def _independent(forms, labels, T: Simplex, tol: float = 1e-10):
    """Greedy removal of numerically dependent generators (Gram pivoting)."""
    kept_f, kept_l = [], []
    for f, lab in zip(forms, labels):
        trial = kept_f + [f]
        G = gram_matrix(trial, T)
        w = np.linalg.eigvalsh(G)
        if w[0] > tol * max(w[-1], 1e-300):
            kept_f, kept_l = trial, kept_l + [lab]
    return tuple(kept_f), tuple(kept_l)


def build_local_space(T: Simplex, k: int, which: str) -> LocalBasis | TestPairBasis:
    """Ordered spanning basis of a local shape space.

    Ordering: constants, Koszul generators, star-Koszul-star generators,
    then bubbles, each group in k-index order.
    """
    which = _ASCII_SELECTORS.get(which, which)
    if which not in SELECTORS:
        raise DomainError(f"unknown local space {which!r}")
    n = T.n
    frame = CenteredFrame.of(T)
    if which in ("m", "m+δ", "m+d", "h2δ", "h2d"):
        if not 1 <= k <= n - 1:
            raise DomainError(f"k={k} outside 1..{n - 1}")
    elif which == "δ×d":
        if not 1 <= k <= n - 1:
            raise DomainError(f"k={k} outside 1..{n - 1}")
    elif not 0 <= k <= n:
        raise DomainError(f"k={k} outside 0..{n}")

    if which == "δ×d":
        etas = build_local_space(T, k + 1, "whitney*⁻").forms
        taus = build_local_space(T, k - 1, "whitney⁻").forms
        pairs = [(e, PolyForm.zero(k - 1, n)) for e in etas] + [(PolyForm.zero(k + 1, n), t) for t in taus]
        return TestPairBasis(T, k, tuple(pairs))

    forms: list[PolyForm] = []
    labels: list[str] = []

    def add(group, label):
        forms.extend(group)
        labels.extend([label] * len(group))

    idx = enumerate_k_indices(k, n)
    if which in ("m", "m+δ", "m+d", "whitney⁻", "whitney*⁻"):
        add(_constants(k, n), "constant")
    if which in ("m", "m+δ", "m+d", "whitney⁻"):
        add(_koszul_family(k, frame), "koszul")
    if which in ("m", "m+δ", "m+d", "whitney*⁻"):
        add(_star_koszul_family(k, frame), "star-koszul")
    if which in ("m+δ", "h2δ"):
        add([bubble_delta(T, a, frame) for a in idx], "bubble-δ")
    if which in ("m+d", "h2d"):
        add([bubble_d(T, a, frame) for a in idx], "bubble-d")
    f, lab = _independent(forms, labels, T)
    return LocalBasis(T, k, f, lab)


# ---------------------------------------------------------------------------
# pairings
# ---------------------------------------------------------------------------

def rot_side_pairing(mu: PolyForm, eta: PolyForm, T: Simplex) -> float:
    """``<d mu, eta> - <mu, d* eta>``: the boundary term of Green's formula."""
    return l2_inner(ext_deriv(mu), eta, T) - l2_inner(mu, adjoint_codifferential(eta), T)


def div_side_pairing(mu: PolyForm, tau: PolyForm, T: Simplex) -> float:
    """``<mu, d tau> - <d* mu, tau>``.  In the plane with k=1 this is
    ``(mu, grad tau) + (div mu, tau)``, the normal flux of mu weighted by tau."""
    return l2_inner(mu, ext_deriv(tau), T) - l2_inner(adjoint_codifferential(mu), tau, T)


def duality_pairing(mu: PolyForm, pair: tuple[PolyForm, PolyForm], T: Simplex) -> float:
    """``<d mu, eta> + <d* mu, tau> - <mu, d* eta + d tau>``."""
    eta, tau = pair
    if eta.k != mu.k + 1 or tau.k != mu.k - 1 or eta.n != mu.n or tau.n != mu.n:
        raise DomainError("pairing degrees must be (k, k+1, k-1)")
    return rot_side_pairing(mu, eta, T) - div_side_pairing(mu, tau, T)


def unisolvence_matrix(T: Simplex, k: int) -> PairingMatrix:
    rows = build_local_space(T, k, "m+δ")
    cols = build_local_space(T, k, "δ×d")
    mat = np.array([[duality_pairing(mu, pr, T) for pr in cols.pairs] for mu in rows.forms])
    return PairingMatrix(mat, rows, cols)


def normalized_determinant(T: Simplex, k: int) -> float:
    """``|det|`` of the pairing matrix after scaling rows and columns to unit
    Euclidean norm, so the value is comparable across simplex sizes."""
    P = unisolvence_matrix(T, k).matrix
    P = P / np.linalg.norm(P, axis=1, keepdims=True)
    P = P / np.linalg.norm(P, axis=0, keepdims=True)
    return abs(float(np.linalg.det(P)))


# ---------------------------------------------------------------------------
# local solves
# ---------------------------------------------------------------------------

def _consistent_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Least-squares solve that insists the redundant rows are satisfied."""
    x, *_ = np.linalg.lstsq(A, b, rcond=None)
    scale = max(np.linalg.norm(A, 2) * np.linalg.norm(x), np.linalg.norm(b), 1e-300)
    if np.linalg.norm(A @ x - b) > CORRECTION_TOL * scale:
        raise InconsistentConstraints(f"residual {np.linalg.norm(A @ x - b):.3e} vs scale {scale:.3e}")
    return x


def divside_correction(mu: PolyForm, T: Simplex) -> PolyForm:
    """Bubble correction making ``mu + correction`` flux-free against all of
    ``P1^- Lambda^{k-1}(T)``.

    ``mu`` should lie in ``P0 Lambda^k + kappa_T(P0 Lambda^{k+1})``.
    """
    k, n = mu.k, mu.n
    frame = CenteredFrame.of(T)
    bubbles = [bubble_delta(T, a, frame) for a in enumerate_k_indices(k, n)]
    taus = build_local_space(T, k - 1, "whitney⁻").forms
    A = np.array([[div_side_pairing(b, t, T) for b in bubbles] for t in taus])
    rhs = -np.array([div_side_pairing(mu, t, T) for t in taus])
    coef = _consistent_solve(A, rhs)
    out = PolyForm.zero(k, n)
    for c, b in zip(coef, bubbles):
        out = out + b * float(c)
    return out


def local_dual_div_basis(T: Simplex, whitney_restrictions: Sequence[PolyForm]) -> list[PolyForm]:
    """Forms ``mu_i`` in ``star kappa_T star(P0) + H2_delta`` with
    ``div_side_pairing(mu_i, psi_j) = delta_ij``.

    ``whitney_restrictions`` are the restrictions to ``T`` of the global
    lower-degree Whitney functions whose support meets ``T``.
    """
    if not whitney_restrictions:
        return []
    k = whitney_restrictions[0].k + 1
    n = T.n
    frame = CenteredFrame.of(T)
    gens = _star_koszul_family(k, frame) + [bubble_delta(T, a, frame) for a in enumerate_k_indices(k, n)]
    L = np.array([[div_side_pairing(g, psi, T) for g in gens] for psi in whitney_restrictions])
    if L.shape[0] != L.shape[1]:
        raise DomainError(f"{L.shape[0]} local functions against {L.shape[1]} generators")
    try:
        C = scipy.linalg.solve(L, np.eye(L.shape[0]))
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise DomainError("singular local dual system") from exc
    if np.linalg.cond(L) > 1e12:
        raise DomainError("singular local dual system")
    duals = []
    for i in range(L.shape[0]):
        out = PolyForm.zero(k, n)
        for c, g in zip(C[:, i], gens):
            out = out + g * float(c)
        duals.append(out)
    return duals


# ---------------------------------------------------------------------------
# local operator matrices and constants
# ---------------------------------------------------------------------------

def operator_matrix(op, domain: Sequence[PolyForm], codomain: Sequence[PolyForm], T: Simplex):
    """Coordinates of ``op(g)`` in ``codomain`` for each ``g`` in ``domain``,
    plus the largest relative L2 residual of that representation."""
    G = gram_matrix(codomain, T)
    images = [op(g) for g in domain]
    R = np.array([[l2_inner(c, im, T) for im in images] for c in codomain])
    coords = np.linalg.solve(G, R)
    worst = 0.0
    for j, im in enumerate(images):
        nrm2 = l2_inner(im, im, T)
        proj2 = float(coords[:, j] @ G @ coords[:, j])
        worst = max(worst, abs(nrm2 - proj2) / max(nrm2, 1e-300))
    return coords, np.sqrt(worst)


def _ratio_sup(forms, num_op, den_ops, T) -> float:
    """``sup ||num_op mu|| / sqrt(sum ||den mu||^2)`` over ``span(forms)``."""
    N = gram_matrix([num_op(f) for f in forms], T)
    D = sum(gram_matrix([op(f) for f in forms], T) for op in den_ops)
    w = scipy.linalg.eigh(N, D, eigvals_only=True)
    return float(np.sqrt(w[-1]))


def local_inverse_constants(T: Simplex, k: int) -> dict[str, float]:
    """Largest ratios ``||mu|| / ||d* mu||`` and ``||mu|| / ||d mu||`` on the
    subspaces where those operators are injective, and the combined
    ``||mu - P0 mu|| / (||d mu||^2 + ||d* mu||^2)^{1/2}`` constant."""
    n = T.n
    frame = CenteredFrame.of(T)
    idx = enumerate_k_indices(k, n)
    ident = lambda f: f  # noqa: E731
    delta_side = _star_koszul_family(k, frame) + [bubble_delta(T, a, frame) for a in idx]
    d_side = _koszul_family(k, frame) + [bubble_d(T, a, frame) for a in idx]
    out = {
        "delta": _ratio_sup(delta_side, ident, [adjoint_codifferential], T),
        "d": _ratio_sup(d_side, ident, [ext_deriv], T),
    }
    full = delta_side + d_side
    # mean-free part: everything except constants is already mean-free
    out["combined"] = _ratio_sup(full, ident, [ext_deriv, adjoint_codifferential], T)
    return out
