"""Primal nonconforming solver, the classical mixed oracle, and diagnostics.

The primal problem: find ``omega`` in V and a harmonic ``theta`` with

    <theta, mu> + sum_T <rot omega, rot mu> + <div omega, div mu> = <f, mu>
    <omega, s> = 0                      for every discrete harmonic s.

The mixed oracle works on the conforming chain P1 -> Whitney -> P0 with the
unknowns ``(theta~, sigma~, omega~)`` and ``sigma~ = -div_h omega~``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fespace_v import NGEN, CellBasis, VSpace, build_vspace, embed_harmonic, kernel_tolerance, smallest_eigenpairs
from .mesh import Mesh2D, level_mesh, refine
from .quadrature import triangle_points
from .whitney import (
    HarmonicBasis,
    build_space,
    discrete_harmonic_forms,
    gradient_incidence,
    mass_matrix,
    rot_incidence,
    whitney_cell_values,
)

SOLVER_TOL = 1e-10
DEFAULT_QUAD = 6

Field = Callable[[np.ndarray], np.ndarray]


class SolverError(RuntimeError):
    """Factorization breakdown or an unmet residual contract."""


@dataclass(frozen=True)
class AnalyticField:
    """A forcing term with, when known, the exact solution it produces.

    Callables take points of shape ``(..., 2)``; ``omega`` and ``forcing``
    return ``(..., 2)``, ``rot`` and ``div`` return ``(...)``.
    """

    name: str
    domain: str
    forcing: Field
    omega: Field | None = None
    rot: Field | None = None
    div: Field | None = None
    regularity: str = "smooth"

    @property
    def has_exact(self) -> bool:
        return self.omega is not None


def _eigenfield() -> AnalyticField:
    pi = np.pi

    def omega(x):
        sx, cx = np.sin(pi * x[..., 0]), np.cos(pi * x[..., 0])
        sy, cy = np.sin(pi * x[..., 1]), np.cos(pi * x[..., 1])
        return np.stack([sx * cy, cx * sy], axis=-1)

    return AnalyticField(
        name="eigenfield",
        domain="unit_square",
        forcing=lambda x: 2 * pi**2 * omega(x),
        omega=omega,
        rot=lambda x: np.zeros(x.shape[:-1]),
        div=lambda x: 2 * pi * np.cos(pi * x[..., 0]) * np.cos(pi * x[..., 1]),
    )


def _constant_push() -> AnalyticField:
    return AnalyticField(
        name="constant_push",
        domain="lshape",
        forcing=lambda x: np.broadcast_to(np.array([1.0, 0.0]), x.shape).copy(),
        regularity="corner singularity",
    )


def _swirl() -> AnalyticField:
    def forcing(x):
        return np.stack([-(x[..., 1] - 1.5), x[..., 0] - 1.5], axis=-1)

    return AnalyticField(name="swirl", domain="square_with_hole", forcing=forcing)


def manufactured_solutions() -> list[AnalyticField]:
    return [_eigenfield(), _constant_push(), _swirl()]


def problem_for(domain: str) -> AnalyticField:
    for problem in manufactured_solutions():
        if problem.domain == domain:
            return problem
    raise KeyError(domain)


# ---------------------------------------------------------------------------
# loads
# ---------------------------------------------------------------------------

def generator_loads(space: VSpace, forcing: Field, quad_degree: int = DEFAULT_QUAD) -> np.ndarray:
    """``(6F,)`` integrals of ``forcing`` against every local generator."""
    pts, w = triangle_points(space.mesh.corners, quad_degree)
    vals = space.cells.generator_values(pts)  # (F, Q, 6, 2)
    f = forcing(pts)
    return np.einsum("fq,fqic,fqc->fi", w, vals, f).ravel()


def piecewise_constant_loads(space: VSpace, values: np.ndarray) -> np.ndarray:
    """Exact generator loads of a cellwise-constant field ``values (F, 2)``."""
    loc = np.zeros((space.mesh.num_triangles, NGEN))
    loc[:, :2] = values
    return space.cells.block_diag(space.cells.gram) @ loc.ravel()


def cell_means(mesh: Mesh2D, forcing: Field, quad_degree: int = DEFAULT_QUAD) -> np.ndarray:
    """L2 projection onto piecewise constants, ``(F, 2)``."""
    pts, w = triangle_points(mesh.corners, quad_degree)
    return np.einsum("fq,fqc->fc", w, forcing(pts)) / mesh.areas[:, None]


# ---------------------------------------------------------------------------
# primal scheme
# ---------------------------------------------------------------------------

@dataclass
class AssembledSystem:
    space: VSpace
    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    harmonic: np.ndarray  # (N, b1) V-coefficients, mass-orthonormal
    load: np.ndarray  # <f, mu_i>
    rhs: np.ndarray  # <f - P_H f, mu_i>

    @property
    def coupling(self) -> np.ndarray:
        """``H_il = <mu_i, s_l>``."""
        return self.mass @ self.harmonic

    @property
    def harmonic_projection(self) -> np.ndarray:
        """Coefficients of ``P_H f`` in the harmonic basis."""
        return self.harmonic.T @ self.load


@dataclass
class Solution:
    space: VSpace
    omega: np.ndarray
    theta: np.ndarray
    residual: float

    def cell_coefficients(self) -> np.ndarray:
        return self.space.cell_coefficients(self.omega)


def assemble_from_loads(space: VSpace, harmonic: np.ndarray, local_loads: np.ndarray) -> AssembledSystem:
    load = space.basis.T @ local_loads
    M = space.mass_matrix
    rhs = load - M @ (harmonic @ (harmonic.T @ load))
    return AssembledSystem(space, space.stiffness_matrix, M, harmonic, load, rhs)


def assemble_primal(
    mesh: Mesh2D,
    space: VSpace,
    harmonic: HarmonicBasis,
    f: AnalyticField | Field,
    quad_degree: int = DEFAULT_QUAD,
) -> AssembledSystem:
    if quad_degree < 2:
        raise ValueError("quadrature degree must be at least 2")
    if space.mesh is not mesh:
        raise ValueError("space was built on a different mesh")
    forcing = f.forcing if isinstance(f, AnalyticField) else f
    X = embed_harmonic(space, harmonic)
    return assemble_from_loads(space, X, generator_loads(space, forcing, quad_degree))


def _solve_saddle(K: sp.spmatrix, rhs: np.ndarray, tol: float) -> tuple[np.ndarray, float]:
    norm = np.linalg.norm(rhs)
    if norm == 0.0:
        return np.zeros_like(rhs), 0.0
    try:
        lu = spla.splu(K.tocsc())
    except RuntimeError as exc:
        raise SolverError(f"factorization failed: {exc}") from exc
    x = lu.solve(rhs)
    resid = float(np.linalg.norm(K @ x - rhs) / norm)
    if not np.isfinite(resid) or resid > tol:
        d = np.abs(lu.U.diagonal())
        raise SolverError(
            f"relative residual {resid:.3e} exceeds {tol:.1e}; pivot ratio {d.min() / d.max():.3e}"
        )
    return x, resid


def solve_primal(system: AssembledSystem, tol: float = SOLVER_TOL) -> Solution:
    """Solve ``[[A, MH], [H^T M, 0]] [omega; t] = [b; 0]``; the multiplier is
    ``P_H f = H^T load`` plus ``t`` (zero up to round-off since ``b`` is
    already projected)."""
    N = system.stiffness.shape[0]
    MH = sp.csr_matrix(system.coupling)
    K = sp.bmat([[system.stiffness, MH], [MH.T, None]], format="csc")
    rhs = np.concatenate([system.rhs, np.zeros(system.harmonic.shape[1])])
    x, resid = _solve_saddle(K, rhs, tol)
    omega, t = x[:N], x[N:]
    return Solution(system.space, omega, system.harmonic_projection + t, resid)


# ---------------------------------------------------------------------------
# mixed oracle
# ---------------------------------------------------------------------------

@dataclass
class MixedSolution:
    mesh: Mesh2D
    harmonic: HarmonicBasis
    theta: np.ndarray
    sigma: np.ndarray  # P1 coefficients
    omega: np.ndarray  # Whitney coefficients
    residual: float


def solve_mixed_from_loads(
    mesh: Mesh2D, harmonic: HarmonicBasis, whitney_load: np.ndarray, tol: float = SOLVER_TOL
) -> MixedSolution:
    M1 = mass_matrix(build_space(mesh, "edgeWhitney1"))
    M0 = mass_matrix(build_space(mesh, "lagrangeP1"))
    G = gradient_incidence(mesh)
    C = rot_incidence(mesh)
    K = C.T @ sp.diags(1.0 / mesh.areas) @ C
    Hc = sp.csr_matrix(harmonic.coefficients)
    b1 = Hc.shape[1]
    M1G = M1 @ G
    M1H = M1 @ Hc
    S = sp.bmat(
        [
            [sp.csr_matrix((b1, b1)) if b1 else None, None, M1H.T if b1 else None],
            [None, -M0, M1G.T],
            [M1H if b1 else None, M1G, K],
        ],
        format="csc",
    )
    V = mesh.num_vertices
    rhs = np.concatenate([np.zeros(b1 + V), whitney_load])
    x, resid = _solve_saddle(S, rhs, tol)
    return MixedSolution(mesh, harmonic, x[:b1], x[b1 : b1 + V], x[b1 + V :], resid)


def assemble_and_solve_mixed(
    mesh: Mesh2D,
    harmonic: HarmonicBasis,
    f: AnalyticField | Field,
    quad_degree: int = DEFAULT_QUAD,
    tol: float = SOLVER_TOL,
) -> MixedSolution:
    forcing = f.forcing if isinstance(f, AnalyticField) else f
    cells = CellBasis(mesh)
    pts, w = triangle_points(mesh.corners, quad_degree)
    vals = cells.generator_values(pts)
    loc = np.einsum("fq,fqic,fqc->fi", w, vals, forcing(pts)).ravel()
    return solve_mixed_from_loads(mesh, harmonic, cells.whitney_matrix().T @ loc, tol)


# ---------------------------------------------------------------------------
# equivalence for piecewise-constant data
# ---------------------------------------------------------------------------

def _relative(diff: float, ref: float) -> float:
    if ref == 0.0:
        return 0.0 if diff == 0.0 else float("inf")
    return diff / ref


@dataclass
class EquivalenceReport:
    theta: float
    codifferential: float
    rot: float
    cell_mean: float
    primal_residual: float
    mixed_residual: float

    @property
    def residuals(self) -> dict[str, float]:
        return {
            "theta": self.theta,
            "codifferential": self.codifferential,
            "rot": self.rot,
            "cell_mean": self.cell_mean,
        }

    @property
    def worst(self) -> float:
        return max(self.residuals.values())

    def ok(self, tol: float = 1e-8) -> bool:
        return self.worst <= tol


def equivalence_check(
    mesh: Mesh2D,
    f0: np.ndarray,
    space: VSpace | None = None,
    harmonic: HarmonicBasis | None = None,
    tol: float = SOLVER_TOL,
) -> EquivalenceReport:
    """Solve both schemes with the cellwise-constant right side ``f0 (F, 2)``
    and compare the four quantities that coincide in exact arithmetic."""
    space = space or build_vspace(mesh)
    harmonic = harmonic if harmonic is not None else discrete_harmonic_forms(mesh)
    cells = space.cells
    loc = piecewise_constant_loads(space, f0)
    system = assemble_from_loads(space, embed_harmonic(space, harmonic), loc)
    primal = solve_primal(system, tol)
    mixed = solve_mixed_from_loads(mesh, harmonic, cells.whitney_matrix().T @ loc, tol)

    coef = primal.cell_coefficients()
    MM = cells.mono_gram

    def l2(poly):  # cellwise monomial coefficients (F, 6)
        return float(np.sqrt(max(np.einsum("fi,fij,fj->", poly, MM, poly), 0.0)))

    # -div of the primal solution against sigma~, both cellwise linear
    codiff = -np.einsum("fi,fim->fm", coef, cells.div)
    s = mixed.sigma[mesh.triangles]  # (F, 3)
    g = mesh.bary_gradients
    sigma = np.zeros_like(codiff)
    sigma[:, 0] = s.sum(axis=1) / 3.0
    sigma[:, 1:3] = np.einsum("fj,fjc->fc", s, g)

    whit_mean, whit_rot = whitney_cell_values(mesh, mixed.omega)
    rot = np.einsum("fi,fim->fm", coef, cells.rot)
    rot_ref = np.zeros_like(rot)
    rot_ref[:, 0] = whit_rot
    area = mesh.areas[:, None]
    mean = coef[:, :2]  # the other generators are mean-free

    # one scale for all four: the graph norm of the mixed solution, so that
    # an identically vanishing component (e.g. rot of a gradient) is not
    # measured relative to round-off
    whit_l2 = float(np.sqrt(mixed.omega @ (mass_matrix(build_space(mesh, "edgeWhitney1")) @ mixed.omega)))
    scale = whit_l2 + l2(rot_ref) + l2(sigma) + float(np.linalg.norm(mixed.theta))
    r_codiff = _relative(l2(codiff - sigma), scale)
    r_rot = _relative(l2(rot - rot_ref), scale)
    r_mean = _relative(float(np.sqrt(np.sum(area * (mean - whit_mean) ** 2))), scale)
    r_theta = _relative(float(np.linalg.norm(primal.theta - mixed.theta)), scale)
    return EquivalenceReport(r_theta, r_codiff, r_rot, r_mean, primal.residual, mixed.residual)


# ---------------------------------------------------------------------------
# errors
# ---------------------------------------------------------------------------

@dataclass
class ErrorNorms:
    l2: float
    rot: float
    div: float

    @property
    def total(self) -> float:
        return self.l2 + self.rot + self.div

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.l2, self.rot, self.div)


def _norms(w, dv, dr, dd) -> ErrorNorms:
    return ErrorNorms(
        float(np.sqrt(np.einsum("fq,fqc,fqc->", w, dv, dv))),
        float(np.sqrt(np.einsum("fq,fq,fq->", w, dr, dr))),
        float(np.sqrt(np.einsum("fq,fq,fq->", w, dd, dd))),
    )


def error_norms(solution: Solution, exact: AnalyticField, quad_degree: int = DEFAULT_QUAD) -> ErrorNorms:
    """Broken L2 norms of the error, its rot and its div."""
    if not exact.has_exact:
        raise ValueError(f"{exact.name} has no closed-form solution")
    mesh = solution.space.mesh
    pts, w = triangle_points(mesh.corners, quad_degree)
    vals, rot, div = solution.space.cells.evaluate(solution.cell_coefficients(), pts)
    return _norms(w, vals - exact.omega(pts), rot - exact.rot(pts), div - exact.div(pts))


def ancestor_map(chain: list[Mesh2D]) -> np.ndarray:
    """Cell of ``chain[0]`` containing each cell of ``chain[-1]``; every mesh
    in the chain must be a refinement of the one before it."""
    anc = np.arange(chain[-1].num_triangles)
    for coarse, fine in reversed(list(zip(chain, chain[1:]))):
        if fine.parent is None or fine.num_triangles != 4 * coarse.num_triangles:
            raise ValueError("mesh chain is not a refinement sequence")
        anc = fine.parent[anc]
    return anc


def error_against_reference(
    coarse: Solution, reference: Solution, ancestors: np.ndarray, quad_degree: int = DEFAULT_QUAD
) -> ErrorNorms:
    """Errors of ``coarse`` measured against a solution on a nested finer mesh."""
    fine_mesh = reference.space.mesh
    pts, w = triangle_points(fine_mesh.corners, quad_degree)
    rv, rr, rd = reference.space.cells.evaluate(reference.cell_coefficients(), pts)
    cv, cr, cd = coarse.space.cells.evaluate(coarse.cell_coefficients(), pts, ancestors)
    return _norms(w, cv - rv, cr - rr, cd - rd)


def l2_projection(space: VSpace, field_fn: Field, quad_degree: int = DEFAULT_QUAD) -> Solution:
    """Best L2 approximation in V, packaged as a solution for error checks."""
    load = space.basis.T @ generator_loads(space, field_fn, quad_degree)
    c = spla.splu(space.mass_matrix.tocsc()).solve(load)
    return Solution(space, c, np.zeros(0), 0.0)


def fitted_rate(h: np.ndarray, e: np.ndarray) -> float:
    """Least-squares slope of ``log e`` against ``log h``."""
    h, e = np.asarray(h, float), np.asarray(e, float)
    return float(np.polyfit(np.log(h), np.log(e), 1)[0])


def successive_rates(e: list[float]) -> list[float | None]:
    """``log2(e_{l-1} / e_l)`` per level (halving mesh sizes)."""
    out: list[float | None] = [None]
    for a, b in zip(e, e[1:]):
        out.append(float(np.log2(a / b)) if a > 0 and b > 0 else None)
    return out


# ---------------------------------------------------------------------------
# Poincare constant
# ---------------------------------------------------------------------------

def poincare_estimate(system: AssembledSystem | tuple, extra: int = 3) -> float:
    """``1/sqrt(lambda_min)`` over the mass-orthogonal complement of ker A."""
    A, M = (system.stiffness, system.mass) if isinstance(system, AssembledSystem) else system
    A, M = sp.csr_matrix(A), sp.csr_matrix(M)
    tol = kernel_tolerance(A, M)
    k = extra
    while True:
        w, _ = smallest_eigenpairs(A, M, k)
        positive = w[w > tol]
        if positive.size or k >= A.shape[0]:
            break
        k = min(2 * k, A.shape[0])
    if not positive.size:
        return float("inf")
    return float(1.0 / np.sqrt(positive[0]))


# ---------------------------------------------------------------------------
# pipelines
# ---------------------------------------------------------------------------

@dataclass
class LevelResult:
    level: int
    h: float
    dofs: int
    errors: ErrorNorms
    residual: float
    seconds: float = 0.0


@dataclass
class ConvergenceStudy:
    domain: str
    problem: str
    rows: list[LevelResult] = field(default_factory=list)

    def rates(self) -> dict[str, float]:
        h = [r.h for r in self.rows]
        return {
            name: fitted_rate(h, [getattr(r.errors, name) for r in self.rows])
            for name in ("l2", "rot", "div", "total")
        }


def solve_level(mesh: Mesh2D, problem: AnalyticField, quad_degree: int = DEFAULT_QUAD, tol: float = SOLVER_TOL):
    space = build_vspace(mesh)
    harmonic = discrete_harmonic_forms(mesh)
    system = assemble_primal(mesh, space, harmonic, problem, quad_degree)
    return solve_primal(system, tol)


def convergence_study(
    domain: str,
    levels: range,
    quad_degree: int = DEFAULT_QUAD,
    tol: float = SOLVER_TOL,
    clock: Callable[[], float] | None = None,
) -> ConvergenceStudy:
    """Errors per level: against the exact solution when one is known,
    otherwise against the solution one level finer than the last."""
    problem = problem_for(domain)
    study = ConvergenceStudy(domain, problem.name)
    meshes = [level_mesh(domain, levels[0])]
    for _ in levels[1:]:
        meshes.append(refine(meshes[-1]))
    solutions, times = [], []
    for mesh in meshes:
        start = clock() if clock else 0.0
        solutions.append(solve_level(mesh, problem, quad_degree, tol))
        times.append((clock() - start) if clock else 0.0)
    if problem.has_exact:
        errors = [error_norms(s, problem, quad_degree) for s in solutions]
    else:
        chain = meshes + [refine(meshes[-1])]
        reference = solve_level(chain[-1], problem, quad_degree, tol)
        errors = [
            error_against_reference(s, reference, ancestor_map(chain[i:]), quad_degree)
            for i, s in enumerate(solutions)
        ]
    for lvl, mesh, sol, err, sec in zip(levels, meshes, solutions, errors, times):
        study.rows.append(LevelResult(lvl, mesh.h, sol.space.ndofs, err, sol.residual, sec))
    return study
