"""The nonconforming space V = V_rot + V_div for planar 1-forms.

Every function of V is stored cellwise by its coefficients in the local
basis of ``build_local_space(T, 1, "m+δ")``::

    g0 = (1, 0)        g1 = (0, 1)
    g2 = (-y~, x~)     g3 = (-x~, -y~)
    g4 = (x~^2 - c1, 0)   g5 = (0, y~^2 - c2)

with ``x~ = x - centroid``.  A global basis is a sparse matrix ``B`` of shape
``(6F, N)``; row ``6t + i`` holds the coefficient of ``g_i`` on triangle
``t``.  Mass and stiffness matrices follow as ``B^T blkdiag(.) B``.

Membership in V means two families of dual-continuity conditions:

* rot side: ``sum_T (rot mu, eta) - (mu, curl eta) = 0`` for every CR0
  function ``eta``;
* div side: ``sum_T (div mu, tau) + (mu, grad tau) = 0`` for every
  continuous P1 function ``tau``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exterior_core import PolyForm, Simplex
from .local_spaces import CORRECTION_TOL, InconsistentConstraints, build_local_space
from .mesh import Mesh2D, vertex_patch
from .quadrature import triangle_points
from .whitney import HarmonicBasis, build_space

NGEN = 6
# monomials in centered coordinates: 1, x, y, x^2, xy, y^2
MONOS = ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))
_MONO_INDEX = {m: i for i, m in enumerate(MONOS)}
GS_PIVOT_TOL = 1e-12
DENSE_EIG_LIMIT = 1500


def _derivative_matrix(axis: int) -> np.ndarray:
    """Action of d/dx (axis 0) or d/dy (axis 1) on monomial coefficients."""
    D = np.zeros((len(MONOS), len(MONOS)))
    for i, (a, b) in enumerate(MONOS):
        p = (a, b)[axis]
        if p:
            target = (a - 1, b) if axis == 0 else (a, b - 1)
            D[_MONO_INDEX[target], i] = p
    return D


DX, DY = _derivative_matrix(0), _derivative_matrix(1)


class PatchAnomaly(RuntimeWarning):
    """The vertex-patch flux functional vanished identically."""


class CellBasis:
    """Vectorized data of the local generators on every triangle."""

    def __init__(self, mesh: Mesh2D):
        self.mesh = mesh
        F = mesh.num_triangles
        self.centroids = mesh.centroids
        pts, w = triangle_points(mesh.corners, 4)
        xt = pts - self.centroids[:, None, :]
        area = mesh.areas
        # centered moments int x~^a y~^b for a + b <= 4
        mom = np.zeros((F, 5, 5))
        for a in range(5):
            for b in range(5 - a):
                if a + b != 1:  # first moments vanish by centering
                    mom[:, a, b] = np.einsum("fq,fq->f", w, xt[..., 0] ** a * xt[..., 1] ** b)
        self.moments = mom
        self.quad_c = np.stack([mom[:, 2, 0], mom[:, 0, 2]], axis=1) / area[:, None]
        MM = np.empty((F, 6, 6))
        for i, (a1, b1) in enumerate(MONOS):
            for j, (a2, b2) in enumerate(MONOS):
                MM[:, i, j] = mom[:, a1 + a2, b1 + b2]
        self.mono_gram = MM

        P = np.zeros((F, NGEN, 2, 6))
        P[:, 0, 0, 0] = 1.0
        P[:, 1, 1, 0] = 1.0
        P[:, 2, 0, 2] = -1.0
        P[:, 2, 1, 1] = 1.0
        P[:, 3, 0, 1] = -1.0
        P[:, 3, 1, 2] = -1.0
        P[:, 4, 0, 3] = 1.0
        P[:, 4, 0, 0] = -self.quad_c[:, 0]
        P[:, 5, 1, 5] = 1.0
        P[:, 5, 1, 0] = -self.quad_c[:, 1]
        self.components = P
        self.rot = np.einsum("fim,km->fik", P[:, :, 1], DX) - np.einsum("fim,km->fik", P[:, :, 0], DY)
        self.div = np.einsum("fim,km->fik", P[:, :, 0], DX) + np.einsum("fim,km->fik", P[:, :, 1], DY)

        self.gram = np.einsum("ficm,fmn,fjcn->fij", P, MM, P)
        self.rot_gram = np.einsum("fim,fmn,fjn->fij", self.rot, MM, self.rot)
        self.div_gram = np.einsum("fim,fmn,fjn->fij", self.div, MM, self.div)
        self.stiffness = self.rot_gram + self.div_gram

        g = mesh.bary_gradients
        # lambda_j = 1/3 + grad(lambda_j) . x~
        lam = np.zeros((F, 3, 6))
        lam[:, :, 0] = 1.0 / 3.0
        lam[:, :, 1] = g[:, :, 0]
        lam[:, :, 2] = g[:, :, 1]
        mean = MM[:, :, 0]  # int of each monomial
        comp_int = np.einsum("ficm,fm->fic", P, mean)
        # div side: (mu, grad lambda_j) + (div mu, lambda_j)
        self.flux = np.einsum("fic,fjc->fji", comp_int, g) + np.einsum("fim,fmn,fjn->fji", self.div, MM, lam)
        # rot side against psi_j = 1 - 2 lambda_j with curl psi_j = (-2 g_j1, 2 g_j0)
        psi = -2.0 * lam
        psi[:, :, 0] += 1.0
        curl_psi = np.stack([-2.0 * g[:, :, 1], 2.0 * g[:, :, 0]], axis=2)
        self.rot_pairing = np.einsum("fim,fmn,fjn->fji", self.rot, MM, psi) - np.einsum(
            "fic,fjc->fji", comp_int, curl_psi
        )

        # Whitney edge functions in generator coordinates (unsigned)
        pidx, qidx = [1, 2, 0], [2, 0, 1]
        W = np.zeros((F, 3, NGEN))
        W[:, :, 0:2] = (g[:, qidx] - g[:, pidx]) / 3.0
        W[:, :, 2] = g[:, pidx, 0] * g[:, qidx, 1] - g[:, pidx, 1] * g[:, qidx, 0]
        self.whitney = W

    # --- evaluation -------------------------------------------------------
    def monomials_at(self, pts: np.ndarray, cells: np.ndarray | None = None) -> np.ndarray:
        """Centered monomials (N, Q, 6) at points ``pts (N, Q, 2)`` lying in
        triangles ``cells`` (default: one row per triangle)."""
        centers = self.centroids if cells is None else self.centroids[cells]
        xt = pts - centers[:, None, :]
        x, y = xt[..., 0], xt[..., 1]
        return np.stack([np.ones_like(x), x, y, x * x, x * y, y * y], axis=-1)

    def evaluate(self, coef: np.ndarray, pts: np.ndarray, cells: np.ndarray | None = None):
        """Field, rot and div of cellwise coefficients ``coef (F, 6)`` at
        ``pts (N, Q, 2)``; row ``i`` of ``pts`` lies in triangle ``cells[i]``."""
        if cells is not None:
            coef = coef[cells]
        comps = self.components if cells is None else self.components[cells]
        rot_c = self.rot if cells is None else self.rot[cells]
        div_c = self.div if cells is None else self.div[cells]
        mono = self.monomials_at(pts, cells)
        field_c = np.einsum("fi,ficm->fcm", coef, comps)
        vals = np.einsum("fcm,fqm->fqc", field_c, mono)
        rot = np.einsum("fqm,fm->fq", mono, np.einsum("fi,fim->fm", coef, rot_c))
        div = np.einsum("fqm,fm->fq", mono, np.einsum("fi,fim->fm", coef, div_c))
        return vals, rot, div

    def generator_values(self, pts: np.ndarray) -> np.ndarray:
        """Values (F, Q, 6, 2) of every generator at ``pts (F, Q, 2)``."""
        return np.einsum("ficm,fqm->fqic", self.components, self.monomials_at(pts))

    def whitney_coefficients(self, u: np.ndarray) -> np.ndarray:
        """Cellwise generator coefficients ``(F, 6)`` of a Whitney field."""
        s = self.mesh.tri_edge_signs * u[self.mesh.tri_edges]
        return np.einsum("fj,fji->fi", s, self.whitney)

    def whitney_matrix(self) -> sp.csr_matrix:
        """``(6F, E)`` map from Whitney coefficients to generator coefficients."""
        mesh = self.mesh
        F = mesh.num_triangles
        vals = mesh.tri_edge_signs[:, :, None] * self.whitney  # (F, 3, 6)
        rows = 6 * np.arange(F)[:, None, None] + np.arange(NGEN)[None, None, :]
        rows = np.broadcast_to(rows, vals.shape)
        cols = np.broadcast_to(mesh.tri_edges[:, :, None], vals.shape)
        return sp.csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(6 * F, mesh.num_edges))

    def block_diag(self, blocks: np.ndarray) -> sp.csr_matrix:
        return sp.block_diag(list(blocks), format="csr")

    def polyforms(self, t: int) -> tuple[PolyForm, ...]:
        """The generators on triangle ``t`` built symbolically."""
        return build_local_space(Simplex(self.mesh.corners[t]), 1, "m+δ").forms


# ---------------------------------------------------------------------------
# basis construction
# ---------------------------------------------------------------------------

def rot_side_corrections(cells: CellBasis) -> np.ndarray:
    """Per-cell ``(F, 2, 6)`` maps from generator coefficients to the bubble
    coefficients (g4, g5) cancelling all three local flux moments.

    Raises ``InconsistentConstraints`` if a Whitney function's redundant
    third moment is not matched.
    """
    Lb = cells.flux[:, :, 4:6]  # (F, 3, 2)
    pinv = np.linalg.pinv(Lb)  # (F, 2, 3)
    corr = -np.einsum("fkj,fji->fki", pinv, cells.flux)
    # consistency on the Whitney functions actually corrected
    w = cells.whitney  # (F, 3 edges, 6)
    fixed = np.einsum("fji,fei->fej", cells.flux, w) + np.einsum(
        "fjk,fki,fei->fej", Lb, corr, w
    )
    scale = np.abs(np.einsum("fji,fei->fej", cells.flux, w)).max(axis=(1, 2)) + 1e-300
    worst = float((np.abs(fixed).max(axis=(1, 2)) / scale).max())
    if worst > CORRECTION_TOL:
        raise InconsistentConstraints(f"bubble correction residual {worst:.3e}")
    return corr


def local_div_duals(cells: CellBasis) -> np.ndarray:
    """``(F, 6, 3)``: column j is the dual form of local vertex j in
    ``span{g3, g4, g5}`` with flux moment ``delta_ij`` against ``lambda_i``."""
    L = cells.flux[:, :, 3:6]
    cond = np.linalg.cond(L)
    if np.any(cond > 1e12):
        raise np.linalg.LinAlgError("singular local dual system")
    inv = np.linalg.inv(L)  # (F, 3 gens, 3 vertices)
    out = np.zeros((len(L), NGEN, 3))
    out[:, 3:6, :] = inv
    return out


@dataclass
class VBasisFunction:
    id: int
    kind: str  # "rot" | "div"
    anchor: int  # edge id for rot-type, vertex id for div-type
    cells: np.ndarray
    coefficients: np.ndarray  # (len(cells), 6)
    _cell_basis: CellBasis = field(repr=False, default=None)

    @property
    def support(self) -> list[tuple[int, PolyForm]]:
        out = []
        for t, c in zip(self.cells.tolist(), self.coefficients):
            gens = self._cell_basis.polyforms(t)
            form = PolyForm.zero(1, 2)
            for ci, g in zip(c, gens):
                if ci != 0.0:
                    form = form + g * float(ci)
            out.append((t, form))
        return out


@dataclass
class VSpace:
    mesh: Mesh2D
    cells: CellBasis
    basis: sp.csc_matrix  # (6F, N)
    kinds: np.ndarray  # 0 rot, 1 div
    anchors: np.ndarray
    anomalies: list[int] = field(default_factory=list)

    @property
    def ndofs(self) -> int:
        return self.basis.shape[1]

    @property
    def num_rot(self) -> int:
        return int(np.sum(self.kinds == 0))

    @property
    def num_div(self) -> int:
        return int(np.sum(self.kinds == 1))

    def function(self, i: int) -> VBasisFunction:
        col = self.basis[:, i].tocoo()
        cells = np.unique(col.row // NGEN)
        coef = np.zeros((len(cells), NGEN))
        pos = {t: k for k, t in enumerate(cells.tolist())}
        for r, v in zip(col.row.tolist(), col.data.tolist()):
            coef[pos[r // NGEN], r % NGEN] = v
        kind = "rot" if self.kinds[i] == 0 else "div"
        return VBasisFunction(i, kind, int(self.anchors[i]), cells, coef, self.cells)

    @property
    def functions(self) -> list[VBasisFunction]:
        return [self.function(i) for i in range(self.ndofs)]

    @cached_property
    def mass_matrix(self) -> sp.csr_matrix:
        G = self.cells.block_diag(self.cells.gram)
        return (self.basis.T @ G @ self.basis).tocsr()

    @cached_property
    def stiffness_matrix(self) -> sp.csr_matrix:
        K = self.cells.block_diag(self.cells.stiffness)
        return (self.basis.T @ K @ self.basis).tocsr()

    def cell_coefficients(self, c: np.ndarray) -> np.ndarray:
        """``(F, 6)`` generator coefficients of the field with V-coefficients ``c``."""
        return (self.basis @ c).reshape(-1, NGEN)


def expected_dimension(mesh: Mesh2D) -> int:
    return mesh.num_edges + sum(len(t) - 1 for t in mesh.vertex_triangles)


def _rot_columns(mesh: Mesh2D, cells: CellBasis, corrections: np.ndarray):
    F = mesh.num_triangles
    # corrected local functions (F, 3, 6)
    local = cells.whitney.copy()
    local[:, :, 4:6] += np.einsum("fki,fei->fek", corrections, cells.whitney)
    local *= mesh.tri_edge_signs[:, :, None]
    rows = np.broadcast_to(6 * np.arange(F)[:, None, None] + np.arange(NGEN)[None, None, :], local.shape)
    cols = np.broadcast_to(mesh.tri_edges[:, :, None], local.shape)
    keep = local != 0.0
    return rows[keep], cols[keep], local[keep]


def build_v_rot(mesh: Mesh2D, cells: CellBasis | None = None, correct: bool = True) -> sp.csc_matrix:
    """One function per edge: the Whitney function plus cellwise bubbles
    that zero its flux moments against the local barycentric coordinates.

    ``correct=False`` returns the raw Whitney functions (negative control).
    """
    cells = cells or CellBasis(mesh)
    corr = rot_side_corrections(cells) if correct else np.zeros((mesh.num_triangles, 2, NGEN))
    r, c, v = _rot_columns(mesh, cells, corr)
    return sp.csc_matrix((v, (r, c)), shape=(NGEN * mesh.num_triangles, mesh.num_edges))


def build_v_div(mesh: Mesh2D, cells: CellBasis | None = None):
    """For each vertex with an ``N``-cell patch, ``N - 1`` combinations of
    the cellwise dual forms that annihilate the patch flux functional.

    Returns ``(B_div, anchors, anomalies)``.
    """
    cells = cells or CellBasis(mesh)
    duals = local_div_duals(cells)
    F = mesh.num_triangles
    rows, cols, vals, anchors, anomalies = [], [], [], [], []
    col = 0
    for a in range(mesh.num_vertices):
        patch = vertex_patch(mesh, a)
        n = len(patch)
        if n == 0:
            continue
        local = [int(np.flatnonzero(mesh.triangles[t] == a)[0]) for t in patch]
        mus = np.array([duals[t][:, j] for t, j in zip(patch, local)])  # (n, 6)
        functional = np.array([cells.flux[t, j] @ mu for t, j, mu in zip(patch, local, mus)])
        weights = np.array([mu @ cells.gram[t] @ mu for t, mu in zip(patch, mus)])
        if np.abs(functional).max() <= 1e-12 * np.sqrt(weights.max()):
            anomalies.append(a)
            warnings.warn(f"flux functional vanishes on the patch of vertex {a}", PatchAnomaly, stacklevel=2)
            kernel = np.eye(n)
        else:
            kernel = np.zeros((n, n - 1))
            for i in range(n - 1):
                kernel[i, i] = 1.0 / functional[i]
                kernel[i + 1, i] = -1.0 / functional[i + 1]
        # modified Gram-Schmidt in the L2 inner product of the patch
        basis = []
        for v in kernel.T:
            v = v.copy()
            lead = np.sqrt(v @ (weights * v))
            for q in basis:
                v -= (q @ (weights * v)) * q
            nrm = np.sqrt(v @ (weights * v))
            if nrm <= GS_PIVOT_TOL * lead:
                continue
            basis.append(v / nrm)
        for q in basis:
            for t, c, mu in zip(patch, q, mus):
                nz = np.flatnonzero(mu)
                rows.extend((NGEN * t + nz).tolist())
                cols.extend([col] * len(nz))
                vals.extend((c * mu[nz]).tolist())
            anchors.append(a)
            col += 1
    B = sp.csc_matrix((vals, (rows, cols)), shape=(NGEN * F, col))
    return B, np.array(anchors, dtype=np.int64), anomalies


def build_vspace(mesh: Mesh2D) -> VSpace:
    cells = CellBasis(mesh)
    Br = build_v_rot(mesh, cells)
    Bd, div_anchors, anomalies = build_v_div(mesh, cells)
    B = sp.hstack([Br, Bd], format="csc")
    kinds = np.concatenate([np.zeros(Br.shape[1], dtype=np.int64), np.ones(Bd.shape[1], dtype=np.int64)])
    anchors = np.concatenate([np.arange(mesh.num_edges), div_anchors])
    return VSpace(mesh, cells, B, kinds, anchors, anomalies)


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------

def div_test_matrix(mesh: Mesh2D, cells: CellBasis) -> sp.csr_matrix:
    """``(V, 6F)``: flux pairing of every P1 hat function with every generator."""
    F = mesh.num_triangles
    rows = np.broadcast_to(mesh.triangles[:, :, None], (F, 3, NGEN))
    cols = np.broadcast_to(6 * np.arange(F)[:, None, None] + np.arange(NGEN)[None, None, :], (F, 3, NGEN))
    return sp.csr_matrix((cells.flux.ravel(), (rows.ravel(), cols.ravel())), shape=(mesh.num_vertices, NGEN * F))


def rot_test_matrix(mesh: Mesh2D, cells: CellBasis) -> sp.csr_matrix:
    """``(E_int, 6F)``: rot-side pairing of every CR0 function with every generator."""
    F = mesh.num_triangles
    cr = build_space(mesh, "crouzeixRaviart0")
    rows = np.broadcast_to(cr.cell_dofs[:, :, None], (F, 3, NGEN))
    cols = np.broadcast_to(6 * np.arange(F)[:, None, None] + np.arange(NGEN)[None, None, :], (F, 3, NGEN))
    keep = rows >= 0
    return sp.csr_matrix(
        (cells.rot_pairing[keep], (rows[keep], cols[keep])), shape=(cr.ndofs, NGEN * F)
    )


@dataclass
class MembershipReport:
    max_rot_residual: float
    max_div_residual: float
    count: int

    @property
    def max_residual(self) -> float:
        return max(self.max_rot_residual, self.max_div_residual)

    def ok(self, tol: float = 1e-10) -> bool:
        return self.max_residual <= tol


def membership_residuals(mesh: Mesh2D, cells: CellBasis, B: sp.spmatrix) -> tuple[np.ndarray, np.ndarray]:
    """Per-column max residuals of the rot-side and div-side conditions."""
    R_rot = abs(rot_test_matrix(mesh, cells) @ B)
    R_div = abs(div_test_matrix(mesh, cells) @ B)
    rot = np.asarray(R_rot.max(axis=0).todense()).ravel() if R_rot.shape[0] else np.zeros(B.shape[1])
    div = np.asarray(R_div.max(axis=0).todense()).ravel()
    return rot, div


def verify_membership(space: VSpace) -> MembershipReport:
    rot, div = membership_residuals(space.mesh, space.cells, space.basis)
    return MembershipReport(float(rot.max(initial=0.0)), float(div.max(initial=0.0)), space.ndofs)


@dataclass
class KernelReport:
    dimension: int
    expected: int
    nonconstant_fraction: float
    harmonic_mismatch: float
    eigenvalues: np.ndarray

    def ok(self, tol: float = 1e-8) -> bool:
        return self.dimension == self.expected and self.nonconstant_fraction <= tol and self.harmonic_mismatch <= tol


def smallest_eigenpairs(A: sp.spmatrix, M: sp.spmatrix, k: int):
    """``k`` smallest generalized eigenpairs of ``A x = lam M x`` (A psd, M spd)."""
    n = A.shape[0]
    k = min(k, n)
    if n <= DENSE_EIG_LIMIT:
        w, v = scipy.linalg.eigh(A.toarray(), M.toarray(), subset_by_index=[0, k - 1])
        return w, v
    w, v = spla.eigsh(A.tocsc(), k=k, M=M.tocsc(), sigma=-1.0, which="LM")
    order = np.argsort(w)
    return w[order], v[:, order]


def kernel_tolerance(A: sp.spmatrix, M: sp.spmatrix) -> float:
    """Threshold below which a generalized eigenvalue counts as zero."""
    scale = float(np.max(np.abs(A.diagonal()) / M.diagonal()))
    return 1e-8 * scale


def kernel_check(space: VSpace, harmonic: HarmonicBasis) -> KernelReport:
    """Numerical kernel of the stiffness matrix versus the harmonic forms."""
    A, M = space.stiffness_matrix, space.mass_matrix
    k = len(harmonic) + 2
    w, v = smallest_eigenpairs(A, M, k)
    tol = kernel_tolerance(A, M)
    ker = v[:, w <= tol]
    cells = space.cells
    frac = 0.0
    consts = []
    for c in ker.T:
        coef = space.cell_coefficients(c)
        total = c @ (M @ c)
        rest = coef[:, 2:]
        nonconst = np.einsum("fi,fij,fj->", rest, cells.gram[:, 2:, 2:], rest)
        frac = max(frac, float(np.sqrt(max(nonconst, 0.0) / total)))
        consts.append(coef[:, :2])
    mismatch = 0.0
    if len(harmonic) and ker.shape[1] == len(harmonic):
        # compare the two subspaces of piecewise constants in the area-weighted inner product
        area = space.mesh.areas
        hv = harmonic.cell_values().reshape(len(harmonic), -1).T
        kv = np.stack([c.ravel() for c in consts], axis=1)
        sw = np.sqrt(np.repeat(area, 2))[:, None]
        qh, _ = np.linalg.qr(sw * hv)
        qk, _ = np.linalg.qr(sw * kv)
        # sine of the largest principal angle, without the cancellation of sqrt(1 - cos^2)
        mismatch = float(np.linalg.norm(qk - qh @ (qh.T @ qk), 2))
    return KernelReport(ker.shape[1], len(harmonic), frac, mismatch, w)


def embed_harmonic(space: VSpace, harmonic: HarmonicBasis, check_tol: float = 1e-8) -> np.ndarray:
    """V-coefficients ``(N, b1)`` of the harmonic forms, mass-orthonormal in V."""
    if len(harmonic) == 0:
        return np.zeros((space.ndofs, 0))
    cells = space.cells
    F = space.mesh.num_triangles
    G = cells.block_diag(cells.gram)
    targets = np.zeros((NGEN * F, len(harmonic)))
    for ell, vals in enumerate(harmonic.cell_values()):
        loc = np.zeros((F, NGEN))
        loc[:, :2] = vals
        targets[:, ell] = loc.ravel()
    M = space.mass_matrix
    rhs = space.basis.T @ (G @ targets)
    lu = spla.splu(M.tocsc())
    X = lu.solve(np.asarray(rhs))
    diff = space.basis @ X - targets
    err = np.sqrt(np.einsum("ij,ij->j", diff, G @ diff) / np.einsum("ij,ij->j", targets, G @ targets))
    if err.max() > check_tol:
        raise RuntimeError(f"harmonic form not representable in V (relative defect {err.max():.3e})")
    Gm = X.T @ (M @ X)
    L = np.linalg.cholesky(0.5 * (Gm + Gm.T))
    return np.linalg.solve(L, X.T).T


# ---------------------------------------------------------------------------
# debug dump
# ---------------------------------------------------------------------------

def format_basis(space: VSpace, limit: int | None = None) -> str:
    """Per function: a header line, then per support cell the monomial
    coefficients (1, x, y, x^2, xy, y^2) of both components in global
    coordinates."""
    lines = []
    n = space.ndofs if limit is None else min(limit, space.ndofs)
    for i in range(n):
        fn = space.function(i)
        lines.append(f"function {fn.id} {fn.kind} {fn.anchor} cells {len(fn.cells)}")
        for t, form in fn.support:
            coefs = []
            for comp in ((1,), (2,)):
                terms = form.component(comp).terms
                coefs += [terms.get(m, 0.0) for m in MONOS]
            lines.append(f"  cell {t} " + " ".join(f"{c:.17g}" for c in coefs))
    return "\n".join(lines) + "\n"


def dump_basis(space: VSpace, path: str | Path, limit: int | None = None) -> None:
    Path(path).write_text(format_basis(space, limit), encoding="utf-8")
