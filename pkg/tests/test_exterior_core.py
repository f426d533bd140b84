import itertools
import math

import numpy as np
import pytest

from primal_hodge.exterior_core import (
    CenteredFrame,
    DomainError,
    Poly,
    PolyForm,
    Simplex,
    adjoint_codifferential,
    codifferential,
    complement,
    enumerate_k_indices,
    ext_deriv,
    hodge_star,
    koszul,
    l2_inner,
    random_polyform,
    simplex_integrate,
)

REF_TRIANGLE = Simplex([[0, 0], [1, 0], [0, 1]])


def brute_inversions(seq):
    return sum(1 for i, j in itertools.combinations(range(len(seq)), 2) if seq[i] > seq[j])


def random_simplex(n, rng):
    while True:
        try:
            return Simplex(rng.normal(size=(n + 1, n)))
        except DomainError:
            continue


def test_k_indices_small_cases():
    assert enumerate_k_indices(1, 2) == [(1,), (2,)]
    assert enumerate_k_indices(2, 3) == [(1, 2), (1, 3), (2, 3)]
    assert enumerate_k_indices(0, 4) == [()]


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_k_indices_counts(n):
    for k in range(n + 1):
        idx = enumerate_k_indices(k, n)
        assert len(idx) == math.comb(n, k)
        assert idx == sorted(set(idx))


def test_k_indices_domain():
    with pytest.raises(DomainError):
        enumerate_k_indices(3, 2)
    with pytest.raises(DomainError):
        enumerate_k_indices(-1, 2)


def test_complement_examples():
    assert complement((1,), 2) == ((2,), 1)
    assert complement((2,), 2) == ((1,), -1)
    beta, sign = complement((1, 3), 4)
    assert beta == (2, 4)
    assert sign == (-1) ** brute_inversions((1, 3, 2, 4)) == -1


def test_ext_deriv_examples():
    n = 2
    x1 = Poly.coordinate(n, 1)
    form = PolyForm.basis((2,), n, x1)
    assert ext_deriv(form).close_to(PolyForm.basis((1, 2), n))
    vol = PolyForm.basis((1, 2), n)
    assert ext_deriv(koszul(vol)).close_to(2 * vol)
    assert ext_deriv(vol).is_zero()  # k == n


@pytest.mark.parametrize("n", [2, 3, 4])
def test_dd_and_deltadelta_vanish(n):
    rng = np.random.default_rng(n)
    for k in range(n + 1):
        w = random_polyform(k, n, 3, rng)
        assert ext_deriv(ext_deriv(w)).max_abs_coef() <= 1e-12 * max(1, w.max_abs_coef())
        assert codifferential(codifferential(w)).max_abs_coef() <= 1e-12 * max(1, w.max_abs_coef())


@pytest.mark.parametrize("n", [2, 3, 4])
def test_double_star(n):
    for k in range(n + 1):
        for alpha in enumerate_k_indices(k, n):
            w = PolyForm.basis(alpha, n)
            assert hodge_star(hodge_star(w)).close_to(w * (-1) ** (k * (n - k)))


def test_star_examples():
    assert hodge_star(PolyForm.basis((1,), 2)).close_to(PolyForm.basis((2,), 2))
    assert hodge_star(PolyForm.basis((), 2)).close_to(PolyForm.basis((1, 2), 2))


def test_codifferential_is_plus_divergence_in_plane():
    n = 2
    w = PolyForm(1, n, {(1,): Poly.coordinate(n, 1), (2,): Poly.coordinate(n, 2)})
    assert codifferential(w).close_to(PolyForm.basis((), n, 2.0))
    assert adjoint_codifferential(w).close_to(PolyForm.basis((), n, -2.0))


@pytest.mark.parametrize("n", [2, 3, 4])
def test_delta_star_koszul_star(n):
    # delta(star kappa star dx^alpha) for alpha of length k-1
    for k in range(1, n + 1):
        for alpha in enumerate_k_indices(k - 1, n):
            base = PolyForm.basis(alpha, n)
            got = codifferential(hodge_star(koszul(hodge_star(base))))
            want = base * ((-1) ** (k * n - n - 1) * (n - k + 1))
            assert got.close_to(want)


def test_adjoint_codifferential_is_l2_adjoint():
    # <d a, b> = <a, delta* b> when b vanishes on the boundary of T
    rng = np.random.default_rng(4)
    T = REF_TRIANGLE
    lam = [T.barycentric(i) for i in range(3)]
    cut = lam[0] * lam[1] * lam[2]
    for k in range(2):
        a = random_polyform(k, 2, 2, rng)
        b = random_polyform(k + 1, 2, 1, rng) * cut
        lhs = l2_inner(ext_deriv(a), b, T)
        rhs = l2_inner(a, adjoint_codifferential(b), T)
        assert lhs == pytest.approx(rhs, rel=1e-11, abs=1e-13)


def test_koszul_example_and_nilpotent():
    n = 2
    got = koszul(PolyForm.basis((1, 2), n))
    want = PolyForm(1, n, {(1,): -Poly.coordinate(n, 2), (2,): Poly.coordinate(n, 1)})
    assert got.close_to(want)
    w = random_polyform(3, 3, 2, np.random.default_rng(0))
    assert koszul(koszul(w)).max_abs_coef() <= 1e-12 * w.max_abs_coef()


@pytest.mark.parametrize("n", [2, 3, 4])
def test_koszul_identities(n):
    rng = np.random.default_rng(10 + n)
    T = random_simplex(n, rng)
    frame = CenteredFrame.of(T)
    for k in range(1, n + 1):
        for alpha in enumerate_k_indices(k, n):
            base = PolyForm.basis(alpha, n)
            assert ext_deriv(koszul(base, frame)).close_to(base * k)
            assert ext_deriv(koszul(base)).close_to(base * k)


def test_integration_examples():
    T = REF_TRIANGLE
    assert simplex_integrate(Poly.constant(2), T) == pytest.approx(0.5, rel=1e-15)
    l1, l2 = T.barycentric(1), T.barycentric(2)
    assert simplex_integrate(l1 * l2, T) == pytest.approx(1 / 24, rel=1e-14)


def test_integration_against_monte_carlo():
    rng = np.random.default_rng(7)
    T = REF_TRIANGLE
    p = T.barycentric(1) * T.barycentric(2)
    u = rng.random((400_000, 2))
    inside = u[u.sum(axis=1) <= 1]
    mc = 0.5 * p(inside).mean()
    assert abs(mc - 1 / 24) < 1e-4


@pytest.mark.parametrize("n", [2, 3, 4])
def test_centering_integrals_vanish(n):
    rng = np.random.default_rng(n)
    T = random_simplex(n, rng)
    frame = CenteredFrame.of(T)
    for j in range(1, n + 1):
        assert abs(simplex_integrate(frame.coord(j), T)) <= 1e-12 * T.volume * T.diameter
        assert abs(simplex_integrate(frame.centered_square(j), T)) <= 1e-12 * T.volume * T.diameter**2


@pytest.mark.parametrize("n", [2, 3])
def test_integration_affine_invariance(n):
    rng = np.random.default_rng(20 + n)
    T = random_simplex(n, rng)
    A = rng.normal(size=(n, n)) + 2 * np.eye(n)
    shift = rng.normal(size=n)
    p = random_polyform(0, n, 3, rng).component(())
    # q = p o A^{-1}(x - shift), built by composing polynomials
    Ainv = np.linalg.inv(A)
    pre = []
    for i in range(n):
        terms = {(0,) * n: -float(Ainv[i] @ shift)}
        for j in range(n):
            e = [0] * n
            e[j] = 1
            terms[tuple(e)] = Ainv[i, j]
        pre.append(Poly(n, terms))
    q = Poly(n)
    for e, c in p.terms.items():
        term = Poly.constant(n, c)
        for i, m in enumerate(e):
            for _ in range(m):
                term = term * pre[i]
        q = q + term
    lhs = simplex_integrate(q, T.mapped(A, shift))
    rhs = abs(np.linalg.det(A)) * simplex_integrate(p, T)
    assert lhs == pytest.approx(rhs, rel=1e-11)


def test_integration_matches_quadrature_on_random_tetrahedron():
    # independent route: dense quadrature via sampling the reference simplex map
    rng = np.random.default_rng(3)
    T = random_simplex(3, rng)
    p = random_polyform(0, 3, 2, rng).component(())
    from primal_hodge.quadrature import simplex_rule

    pts, wts = simplex_rule(3, 4)
    x = T.vertices[0] + pts @ T.jacobian.T
    approx = T.volume * np.sum(wts * p(x))
    assert simplex_integrate(p, T) == pytest.approx(approx, rel=1e-11)


def test_l2_inner_examples():
    T = REF_TRIANGLE
    d1, d2 = PolyForm.basis((1,), 2), PolyForm.basis((2,), 2)
    assert l2_inner(d1, d1, T) == pytest.approx(T.volume)
    assert l2_inner(d1, d2, T) == 0.0
    w = random_polyform(1, 2, 2, np.random.default_rng(1))
    assert l2_inner(w, w, T) > 0
    with pytest.raises(DomainError):
        l2_inner(d1, PolyForm.basis((1, 2), 2), T)


def test_degenerate_simplex_rejected():
    with pytest.raises(DomainError):
        Simplex([[0, 0], [1, 1], [2, 2]])


def test_zero_conventions():
    assert codifferential(PolyForm.basis((), 2)).k == -1
    assert koszul(PolyForm.basis((), 3)).is_zero()
