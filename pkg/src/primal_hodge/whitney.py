"""Lowest-order Whitney-type spaces on a planar mesh.

* ``lagrangeP1``: continuous piecewise linears (0-forms), one dof per vertex.
* ``edgeWhitney1``: ``lambda_a grad lambda_b - lambda_b grad lambda_a`` for
  the edge ``a -> b`` (low to high index), unit tangential moment.
* ``piecewiseP0``: cell indicators (2-forms through their star scalars).
* ``crouzeixRaviart0``: midpoint-continuous piecewise linears vanishing at
  boundary midpoints, one dof per interior edge; local basis ``1 - 2 lambda_j``.

The 2-form spaces are handled through their star scalars.  Piecewise
constant 1-forms (the ambient space of the Hodge decomposition) are stored
as ``(F, 2)`` arrays flattened cell-major.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exterior_core import Poly, PolyForm, Simplex
from .mesh import Mesh2D, betti1

KINDS = ("lagrangeP1", "edgeWhitney1", "piecewiseP0", "crouzeixRaviart0")
DEGREE = {"lagrangeP1": 0, "edgeWhitney1": 1, "piecewiseP0": 2, "crouzeixRaviart0": 2}
NULL_TOL = 1e-10
DENSE_LIMIT = 2500  # switch to sparse eigen solves above this many unknowns


@dataclass
class WhitneySpace:
    kind: str
    mesh: Mesh2D
    ndofs: int
    cell_dofs: np.ndarray  # (F, nloc) global dof per local function, -1 if absent
    cell_signs: np.ndarray  # (F, nloc) orientation sign per local function

    def local_basis(self, t: int) -> list[PolyForm]:
        """Local shape functions on triangle ``t`` as polynomial forms, with
        orientation signs applied (absent dofs are still listed)."""
        T = Simplex(self.mesh.corners[t])
        lam = [T.barycentric(i) for i in range(3)]
        grads = self.mesh.bary_gradients[t]
        if self.kind == "lagrangeP1":
            return [PolyForm.basis((), 2, lam[i]) for i in range(3)]
        if self.kind == "piecewiseP0":
            return [PolyForm.basis((1, 2), 2, 1.0)]
        if self.kind == "crouzeixRaviart0":
            one = Poly.constant(2)
            return [PolyForm.basis((1, 2), 2, one - lam[j] * 2.0) for j in range(3)]
        out = []
        for j in range(3):
            p, q = (j + 1) % 3, (j + 2) % 3
            comps = {}
            for c in range(2):
                comps[(c + 1,)] = lam[p] * float(grads[q, c]) - lam[q] * float(grads[p, c])
            out.append(PolyForm(1, 2, comps) * float(self.cell_signs[t, j]))
        return out


def build_space(mesh: Mesh2D, kind: str) -> WhitneySpace:
    F = mesh.num_triangles
    if kind == "lagrangeP1":
        return WhitneySpace(kind, mesh, mesh.num_vertices, mesh.triangles.copy(), np.ones((F, 3), dtype=int))
    if kind == "edgeWhitney1":
        return WhitneySpace(kind, mesh, mesh.num_edges, mesh.tri_edges.copy(), mesh.tri_edge_signs.copy())
    if kind == "piecewiseP0":
        return WhitneySpace(kind, mesh, F, np.arange(F)[:, None], np.ones((F, 1), dtype=int))
    if kind == "crouzeixRaviart0":
        interior = mesh.interior_edges
        number = -np.ones(mesh.num_edges, dtype=np.int64)
        number[interior] = np.arange(len(interior))
        return WhitneySpace(kind, mesh, len(interior), number[mesh.tri_edges], np.ones((F, 3), dtype=int))
    raise ValueError(f"unknown space kind {kind!r}; expected one of {KINDS}")


# ---------------------------------------------------------------------------
# matrices
# ---------------------------------------------------------------------------

def gradient_incidence(mesh: Mesh2D) -> sp.csr_matrix:
    """``E x V``: -1 at the tail, +1 at the head of each edge."""
    E = mesh.num_edges
    rows = np.repeat(np.arange(E), 2)
    cols = mesh.edges.ravel()
    vals = np.tile([-1.0, 1.0], E)
    return sp.csr_matrix((vals, (rows, cols)), shape=(E, mesh.num_vertices))


def rot_incidence(mesh: Mesh2D) -> sp.csr_matrix:
    """``F x E`` signed incidence: circulation of each edge function around each cell."""
    F = mesh.num_triangles
    rows = np.repeat(np.arange(F), 3)
    return sp.csr_matrix(
        (mesh.tri_edge_signs.ravel().astype(float), (rows, mesh.tri_edges.ravel())), shape=(F, mesh.num_edges)
    )


def differential_matrix(source: WhitneySpace, target: WhitneySpace) -> sp.csr_matrix:
    """Matrix of ``d`` between consecutive conforming spaces.

    ``lagrangeP1 -> edgeWhitney1`` has entries ``+-1``.
    ``edgeWhitney1 -> piecewiseP0`` maps to cell values of ``rot``; its rows
    are ``+-1 / |T|``.
    """
    pair = (source.kind, target.kind)
    if pair == ("lagrangeP1", "edgeWhitney1"):
        return gradient_incidence(source.mesh)
    if pair == ("edgeWhitney1", "piecewiseP0"):
        return (sp.diags(1.0 / source.mesh.areas) @ rot_incidence(source.mesh)).tocsr()
    raise ValueError(f"no differential from {source.kind} to {target.kind}")


def _assemble(space: WhitneySpace, local: np.ndarray) -> sp.csr_matrix:
    dofs, signs = space.cell_dofs, space.cell_signs
    keep = dofs >= 0
    S = signs[:, :, None] * signs[:, None, :] * local
    ii = np.broadcast_to(dofs[:, :, None], S.shape)
    jj = np.broadcast_to(dofs[:, None, :], S.shape)
    mask = keep[:, :, None] & keep[:, None, :]
    return sp.csr_matrix((S[mask], (ii[mask], jj[mask])), shape=(space.ndofs, space.ndofs))


def _bary_products(mesh: Mesh2D) -> np.ndarray:
    """``int_T lambda_i lambda_j = |T| (1 + delta_ij) / 12``, shape (F, 3, 3)."""
    return mesh.areas[:, None, None] * (np.ones((3, 3)) + np.eye(3)) / 12.0


def local_mass_matrices(space: WhitneySpace) -> np.ndarray:
    """Unsigned per-cell mass matrices ``(F, nloc, nloc)``."""
    mesh = space.mesh
    area = mesh.areas
    if space.kind == "piecewiseP0":
        return area[:, None, None].copy()
    if space.kind == "lagrangeP1":
        return _bary_products(mesh)
    if space.kind == "crouzeixRaviart0":
        return area[:, None, None] * np.eye(3)[None] / 3.0
    # Whitney: phi_j = lambda_p g_q - lambda_q g_p with (p, q) = (j+1, j+2)
    g = mesh.bary_gradients
    B = _bary_products(mesh)
    dot = np.einsum("fic,fjc->fij", g, g)
    p = np.array([1, 2, 0])
    q = np.array([2, 0, 1])
    P, Q = p[:, None], q[:, None]
    Pj, Qj = p[None, :], q[None, :]
    return (
        B[:, P, Pj] * dot[:, Q, Qj]
        - B[:, P, Qj] * dot[:, Q, Pj]
        - B[:, Q, Pj] * dot[:, P, Qj]
        + B[:, Q, Qj] * dot[:, P, Pj]
    )


def mass_matrix(space: WhitneySpace) -> sp.csr_matrix:
    if space.kind == "piecewiseP0":
        return sp.diags(space.mesh.areas).tocsr()
    return _assemble(space, local_mass_matrices(space))


def whitney_cell_values(mesh: Mesh2D, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Centroid value ``(F, 2)`` and cellwise ``rot`` of a Whitney field.

    On each cell the field equals its centroid value plus ``rot/2 * (-y~, x~)``.
    """
    g = mesh.bary_gradients
    s = mesh.tri_edge_signs * u[mesh.tri_edges]
    p = [1, 2, 0]
    q = [2, 0, 1]
    const = np.einsum("fj,fjc->fc", s, (g[:, q] - g[:, p]) / 3.0)
    cross = g[:, p, 0] * g[:, q, 1] - g[:, p, 1] * g[:, q, 0]
    rot = 2.0 * np.einsum("fj,fj->f", s, cross)
    return const, rot


# ---------------------------------------------------------------------------
# piecewise-constant 1-forms and the Hodge decomposition
# ---------------------------------------------------------------------------

def p0_vector_mass(mesh: Mesh2D) -> sp.csr_matrix:
    return sp.diags(np.repeat(mesh.areas, 2)).tocsr()


def gradient_to_p0(mesh: Mesh2D) -> sp.csr_matrix:
    """``2F x V``: cellwise gradient of P1 functions."""
    F = mesh.num_triangles
    g = mesh.bary_gradients
    rows = (2 * np.arange(F)[:, None, None] + np.arange(2)[None, None, :]).repeat(3, axis=1)
    cols = np.broadcast_to(mesh.triangles[:, :, None], rows.shape)
    return sp.csr_matrix((g.ravel(), (rows.ravel(), cols.ravel())), shape=(2 * F, mesh.num_vertices))


def curl_cr_to_p0(mesh: Mesh2D) -> sp.csr_matrix:
    """``2F x E_int``: cellwise ``curl psi = (d_y psi, -d_x psi)`` of CR0 functions."""
    space = build_space(mesh, "crouzeixRaviart0")
    F = mesh.num_triangles
    g = mesh.bary_gradients
    curl = np.stack([-2.0 * g[:, :, 1], 2.0 * g[:, :, 0]], axis=2)  # (F, 3, 2)
    rows = (2 * np.arange(F)[:, None, None] + np.arange(2)[None, None, :]).repeat(3, axis=1)
    cols = np.broadcast_to(space.cell_dofs[:, :, None], rows.shape)
    keep = cols >= 0
    return sp.csr_matrix((curl[keep], (rows[keep], cols[keep])), shape=(2 * F, space.ndofs))


@dataclass
class HarmonicBasis:
    """Mass-orthonormal discrete harmonic Whitney 1-forms (columns)."""

    mesh: Mesh2D
    coefficients: np.ndarray  # (E, b1)

    def __len__(self) -> int:
        return self.coefficients.shape[1]

    def cell_values(self) -> np.ndarray:
        """``(b1, F, 2)`` piecewise-constant values."""
        return np.stack([whitney_cell_values(self.mesh, u)[0] for u in self.coefficients.T]) if len(self) else np.zeros(
            (0, self.mesh.num_triangles, 2)
        )


def _orthonormalize(X: np.ndarray, M) -> np.ndarray:
    if X.shape[1] == 0:
        return X
    G = X.T @ (M @ X)
    L = np.linalg.cholesky(0.5 * (G + G.T))
    return np.linalg.solve(L, X.T).T


def _sparse_null_space(S: sp.spmatrix, M: sp.spmatrix, expected: int) -> np.ndarray:
    """Generalized eigenvectors of ``S x = lam M x`` with ``lam`` numerically zero."""
    k = min(expected + 2, S.shape[0] - 1)
    scale = abs(spla.eigsh(S, k=1, M=M, which="LM", return_eigenvectors=False, tol=1e-3)[0])
    vals, vecs = spla.eigsh(S, k=k, M=M, sigma=-1e-3 * scale, which="LM")
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    keep = np.abs(vals) <= NULL_TOL * scale * 1e2
    return vecs[:, keep]


def discrete_harmonic_forms(mesh: Mesh2D) -> HarmonicBasis:
    """Basis of ``{u : rot u = 0, u M-orthogonal to grad P1}``."""
    C = rot_incidence(mesh)
    M1 = mass_matrix(build_space(mesh, "edgeWhitney1"))
    G = gradient_incidence(mesh)
    E = mesh.num_edges
    if E <= DENSE_LIMIT:
        top = C.toarray()
        bot = (G.T @ M1).toarray()
        stack = np.vstack([top / np.linalg.norm(top, 2), bot / np.linalg.norm(bot, 2)])
        _, s, vt = np.linalg.svd(stack)
        s_full = np.zeros(E)
        s_full[: len(s)] = s
        X = vt[s_full <= NULL_TOL * s[0]].T
    else:
        # S is positive semidefinite with kernel exactly the harmonic space
        MG = M1 @ G
        S = C.T @ sp.diags(1.0 / mesh.areas) @ C + (MG @ MG.T) / mesh.areas.mean()
        X = _sparse_null_space(S.tocsc(), M1.tocsc(), betti1(mesh))
    return HarmonicBasis(mesh, _orthonormalize(X, M1))


@dataclass
class HodgeReport:
    rank_gradients: int
    harmonic_dim: int
    rank_curls: int
    total_dim: int
    orthogonality: dict[str, float] = field(default_factory=dict)
    harmonic_residual: float = 0.0

    @property
    def rank_sum(self) -> int:
        return self.rank_gradients + self.harmonic_dim + self.rank_curls

    @property
    def max_orthogonality(self) -> float:
        return max(self.orthogonality.values(), default=0.0)

    def ok(self, tol: float = 1e-10) -> bool:
        return self.rank_sum == self.total_dim and self.max_orthogonality <= tol and self.harmonic_residual <= tol


def _range_basis(X: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Orthonormal basis of ``range(X)`` in the inner product ``diag(w)``."""
    sw = np.sqrt(w)[:, None]
    U, s, _ = np.linalg.svd(sw * X, full_matrices=False)
    if len(s) == 0 or s[0] == 0:
        return U[:, :0]
    return U[:, s > NULL_TOL * s[0]]


def hodge_decomposition_check(mesh: Mesh2D, harmonic: HarmonicBasis | None = None) -> HodgeReport:
    """Ranks and mutual orthogonality of ``grad P1``, the harmonic forms and
    ``curl_h CR0`` inside the piecewise-constant 1-forms."""
    harmonic = harmonic or discrete_harmonic_forms(mesh)
    w = np.repeat(mesh.areas, 2)
    grads = _range_basis(gradient_to_p0(mesh).toarray(), w)
    curls = _range_basis(curl_cr_to_p0(mesh).toarray(), w)
    if len(harmonic):
        harm = _range_basis(harmonic.cell_values().reshape(len(harmonic), -1).T, w)
    else:
        harm = np.zeros((2 * mesh.num_triangles, 0))
    orth = {}
    for name, a, b in (("grad-harm", grads, harm), ("grad-curl", grads, curls), ("harm-curl", harm, curls)):
        orth[name] = float(np.abs(a.T @ b).max()) if a.size and b.size else 0.0
    # harmonic members satisfy their defining conditions
    C = rot_incidence(mesh)
    M1 = mass_matrix(build_space(mesh, "edgeWhitney1"))
    G = gradient_incidence(mesh)
    res = 0.0
    for u in harmonic.coefficients.T:
        res = max(res, np.abs(C @ u).max(initial=0.0), np.abs(G.T @ (M1 @ u)).max(initial=0.0))
    return HodgeReport(grads.shape[1], harm.shape[1], curls.shape[1], 2 * mesh.num_triangles, orth, float(res))


# ---------------------------------------------------------------------------
# dump format
# ---------------------------------------------------------------------------

def format_matrix(A) -> str:
    A = sp.coo_matrix(A)
    order = np.lexsort((A.col, A.row))
    lines = [f"{A.shape[0]} {A.shape[1]} {A.nnz}"]
    lines += [f"{i} {j} {v!r}" for i, j, v in zip(A.row[order].tolist(), A.col[order].tolist(), A.data[order].tolist())]
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> sp.csr_matrix:
    lines = text.strip().split("\n")
    rows, cols, nnz = (int(t) for t in lines[0].split())
    data = [line.split() for line in lines[1 : 1 + nnz]]
    i = np.array([int(d[0]) for d in data], dtype=np.int64)
    j = np.array([int(d[1]) for d in data], dtype=np.int64)
    v = np.array([float(d[2]) for d in data])
    return sp.csr_matrix((v, (i, j)), shape=(rows, cols))


def dump_matrix(A, path: str | Path) -> None:
    Path(path).write_text(format_matrix(A), encoding="utf-8")


def dense_null_space(A: np.ndarray, tol: float = NULL_TOL) -> np.ndarray:
    """Orthonormal kernel basis by SVD with a relative singular value cutoff."""
    return scipy.linalg.null_space(A, rcond=tol)
