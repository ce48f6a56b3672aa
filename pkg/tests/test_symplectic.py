import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from skewpulse.symplectic import (
    J,
    LagrangianFrame,
    SampledPath,
    SymplecticError,
    apply_J,
    crossing_form_flow,
    hormander_index,
    intersection_dim,
    lambda_R,
    maslov_index_pair,
    principal_sines,
    quadratic_form_Q,
    random_lagrangian,
    random_symplectic,
    symplectic_form,
    triple_index,
    triple_index_via_transversal,
    write_crossings_csv,
)
from skewpulse.symplectic import _dim3

seeds = st.integers(0, 2**31 - 1)
dims = st.integers(1, 3)

E1 = np.array([[1.0], [0.0]])
E2 = np.array([[0.0], [1.0]])
DIAG = np.array([[1.0], [1.0]])
ANTI = np.array([[1.0], [-1.0]])


def rotating_line(t):
    return np.array([[np.cos(t)], [np.sin(t)]])


def flow_path(l0, s):
    """``t -> exp(t J S) l0``; its crossing form on any intersection is ``<S xi, xi>``."""
    from scipy.linalg import expm

    gen = J(l0.shape[1]) @ s
    return lambda t: expm(t * gen) @ l0


def test_form_basic_values():
    assert symplectic_form([1, 0], [0, 1]) == 1.0
    with pytest.raises(SymplecticError):
        symplectic_form([1, 0], [1, 0, 0, 0])


def test_J_matches_apply_J():
    z = np.arange(12.0).reshape(6, 2)
    assert np.array_equal(J(3) @ z, apply_J(z))


def test_lambda_R_examples():
    fr = lambda_R(2, 1).columns
    assert np.array_equal(fr, [[1, 0], [0, 0], [0, 0], [0, 1]])
    assert np.array_equal(lambda_R(1, 1).columns, [[1], [0]])
    for n in range(1, 5):
        for j in range(1, n + 1):
            assert lambda_R(n, j).is_lagrangian()
    with pytest.raises(SymplecticError):
        lambda_R(2, 3)


def test_frame_validation():
    with pytest.raises(SymplecticError, match="2n x n"):
        LagrangianFrame(np.ones((3, 1)))
    with pytest.raises(SymplecticError, match="rank"):
        LagrangianFrame(np.zeros((4, 2)))


def test_intersection_examples():
    l = lambda_R(2, 1)
    assert intersection_dim(l, l) == 2
    assert intersection_dim(lambda_R(1, 1), E2) == 0
    with pytest.raises(SymplecticError):
        intersection_dim(l, l, tol=0.5)


def test_crossing_form_scalar_pulse_centre():
    # E^u(0) of the scalar pulse contains (u''(0), u'(0)) = (-3/4, 0); A = diag(1, B(0))
    a = np.diag([1.0, 2 * 1.5 - 1.0])
    rec = crossing_form_flow(a, np.array([[-0.75], [0.0]]), lambda_R(1, 1))
    assert rec.signature == 1 and rec.intersection_dim == 1
    # unnormalised form value <D^-1 p, p> = 9/16 for p = -3/4
    assert rec.form_eigenvalues[0] * 0.75**2 == pytest.approx(9 / 16)


def test_crossing_form_zero_and_empty():
    rec = crossing_form_flow(np.zeros((2, 2)), E1, E1)
    assert rec.signature == 0 and rec.form_eigenvalues == [0.0]
    with pytest.raises(SymplecticError, match="no crossing here"):
        crossing_form_flow(np.eye(2), E1, E2)


def test_constant_transversal_pair():
    assert maslov_index_pair(E1, E2, np.linspace(0, 1, 5))[0] == 0


def test_rotating_line_crossing():
    ts = np.linspace(0.1, np.pi - 0.1, 41)
    total, recs = maslov_index_pair(rotating_line, E2, ts)
    assert total == -1
    assert recs[0].location == pytest.approx(np.pi / 2, abs=1e-8)
    # the other order flips the sign
    assert maslov_index_pair(E2, rotating_line, ts)[0] == 1


def test_reversal_rotating_line():
    ts = np.linspace(0.1, np.pi - 0.1, 41)
    back = lambda s: rotating_line(np.pi - s)
    assert maslov_index_pair(back, E2, ts)[0] == -maslov_index_pair(rotating_line, E2, ts)[0]


def test_endpoint_convention():
    # crossing at the left end counts the positive part, at the right end minus the negative part
    ts = np.linspace(np.pi / 2, np.pi - 0.1, 21)
    assert maslov_index_pair(E2, rotating_line, ts)[0] == 1
    assert maslov_index_pair(rotating_line, E2, ts)[0] == 0
    ts = np.linspace(0.1, np.pi / 2, 21)
    assert maslov_index_pair(E2, rotating_line, ts)[0] == 0
    assert maslov_index_pair(rotating_line, E2, ts)[0] == -1


def test_sampled_path_reproduces_samples():
    rng = np.random.default_rng(3)
    frames = [random_lagrangian(2, rng).columns for _ in range(4)]
    path = SampledPath([0, 1, 2, 3], frames)
    for t, f in zip(range(4), frames):
        assert principal_sines(path(t), f)[-1] < 1e-10
    assert LagrangianFrame(path(1.37)).is_lagrangian()


def test_quadratic_form_hand_value():
    basis, form = quadratic_form_Q(E1, E2, DIAG)
    assert basis.shape == (2, 1)
    assert form[0, 0] == pytest.approx(1.0)


def test_quadratic_form_alpha_equals_beta():
    rng = np.random.default_rng(0)
    a, d = random_lagrangian(2, rng), random_lagrangian(2, rng)
    _, form = quadratic_form_Q(a, a, d)
    assert np.allclose(form, 0.0, atol=1e-12)


def test_triple_index_hand_values():
    # pinned to omega = <J., .>; see the note in triple_index
    assert triple_index(E1, E2, DIAG) == 1
    assert triple_index(E1, E2, ANTI) == 0


def test_hormander_hand_values():
    assert hormander_index(E1, E2, DIAG, ANTI) == -1
    rng = np.random.default_rng(5)
    l, k1, k2 = (random_lagrangian(2, rng) for _ in range(3))
    assert hormander_index(l, l, k1, k2) == 0


def test_crossings_csv(tmp_path):
    ts = np.linspace(0.1, np.pi - 0.1, 41)
    _, recs = maslov_index_pair(rotating_line, E2, ts)
    path = tmp_path / "c.csv"
    write_crossings_csv(recs, path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["location", "dim", "signature", "form_eigenvalues"]
    assert float(rows[1][0]) == pytest.approx(np.pi / 2) and rows[1][2] == "-1"


@given(seeds, dims)
def test_form_antisymmetric_and_J_invariant(seed, n):
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal((2, 2 * n))
    assert abs(symplectic_form(u, u)) <= 1e-15 * (u @ u)
    assert symplectic_form(u, v) == pytest.approx(-symplectic_form(v, u))
    assert symplectic_form(apply_J(u), apply_J(v)) == pytest.approx(symplectic_form(u, v))


@given(seeds, dims)
def test_random_lagrangian_isotropic(seed, n):
    fr = random_lagrangian(n, np.random.default_rng(seed))
    assert fr.isotropy_defect <= 1e-10
    s = random_symplectic(n, np.random.default_rng(seed + 1), scale=0.5)
    assert LagrangianFrame(s @ fr.columns).is_lagrangian(1e-10)


@given(seeds, dims)
def test_intersection_symmetric(seed, n):
    rng = np.random.default_rng(seed)
    a, b = random_lagrangian(n, rng), random_lagrangian(n, rng)
    assert intersection_dim(a, b) == intersection_dim(b, a) == 0
    assert intersection_dim(a, a) == n


@given(seeds, dims)
def test_triple_index_formulas_agree(seed, n):
    rng = np.random.default_rng(seed)
    a, b, k = (random_lagrangian(n, rng) for _ in range(3))
    assert triple_index(a, b, k) == triple_index_via_transversal(a, b, k)
    assert triple_index(a, b, b) == 0


@given(seeds, dims)
def test_quadratic_form_kernel(seed, n):
    # ker Q(a, b; d) = a cap b + a cap d; force a one-dimensional a cap b
    rng = np.random.default_rng(seed)
    b = random_lagrangian(n, rng).columns
    d = random_lagrangian(n, rng).columns
    s = rng.standard_normal((n, n))
    s = s + s.T
    # a shares b's first column and is otherwise generic
    p = np.eye(n)
    p[0, 0] = 0.0
    s = p @ s @ p
    a = b + apply_J(b) @ s
    basis, form = quadratic_form_Q(a, b, d)
    kernel = basis.shape[1] - np.linalg.matrix_rank(form, tol=1e-8) if basis.size else 0
    assert kernel == intersection_dim(a, b, 1e-7) + intersection_dim(a, d, 1e-7) - _dim3(a, b, d, 1e-7)


@given(seeds, st.integers(1, 2))
def test_symplectic_invariance_of_pair_index(seed, n):
    rng = np.random.default_rng(seed)
    l0 = random_lagrangian(n, rng).columns
    s = rng.standard_normal((2 * n, 2 * n))
    path = flow_path(l0, np.eye(2 * n) + 0.1 * (s + s.T))
    v = random_lagrangian(n, rng).columns
    ts = np.linspace(0.0, 3.0, 61)
    if min(principal_sines(path(0.0), v)[0], principal_sines(path(3.0), v)[0]) < 1e-3:
        return
    base = maslov_index_pair(path, v, ts)[0]
    sym = random_symplectic(n, rng, scale=0.3)
    moved = maslov_index_pair(lambda t: sym @ path(t), sym @ v, ts)[0]
    assert base == moved
    # a positive definite flow only crosses positively
    assert maslov_index_pair(v, path, ts)[0] >= 0
