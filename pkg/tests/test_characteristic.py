import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stargraph.characteristic import build, fd_weights, phi_reference, second_derivative
from stargraph.model import EdgePotential, Problem, StarGraph
from stargraph.transforms import SineTransform

from conftest import SQRT2, away_from_poles, random_complex_problem, random_disk

potential = st.lists(st.floats(-0.5, 0.5) | st.complex_numbers(max_magnitude=0.5), min_size=0, max_size=4)
problems = st.builds(
    lambda ls, qs: Problem(StarGraph(ls), tuple(EdgePotential(q) for q in qs[: len(ls)])),
    st.lists(st.floats(0.3, 2.5), min_size=2, max_size=4),
    st.lists(potential, min_size=4, max_size=4),
)
points = st.complex_numbers(max_magnitude=20)


def test_zero_potentials_reduce_to_closed_form():
    lengths = [1.0, SQRT2, 0.7]
    cf = build(Problem.from_lengths(lengths))
    z = np.array([0.3, 2.0 + 0.5j, 7.1])
    expected = np.zeros(3, complex)
    for j, l in enumerate(lengths):
        others = np.prod([np.sin(z * lk) for k, lk in enumerate(lengths) if k != j], axis=0)
        expected += z * np.cos(z * l) * others
    assert np.allclose(cf(z), expected, rtol=1e-14)


def test_equal_edges_closed_form():
    cf = build(Problem.from_lengths([1, 1]))
    assert cf(0.5) == pytest.approx(0.5 * math.sin(1), rel=1e-14)
    assert cf(0.0) == 0
    # d/dz z sin 2z at 1 is sin 2 + 2 cos 2 = 0.0770038
    assert cf.derivative(1.0) == pytest.approx(math.sin(2) + 2 * math.cos(2), rel=1e-13)


def test_phi_matches_quadrature_assembly():
    p = Problem.from_lengths([1, SQRT2], [[0.3], []])
    assert abs(build(p)(2.0) - phi_reference(p, 2.0)) <= 1e-12 * build(p).magnitude(2.0)
    q = Problem.from_lengths([1, SQRT2], [[0.3], [-0.2]])
    z = 3 + 0.5j
    assert abs(build(q)(z) - phi_reference(q, z)) <= 1e-9 * abs(phi_reference(q, z))


def test_phi_matches_quadrature_at_random_points(rng):
    for _ in range(3):
        p = random_complex_problem(rng, order=4)
        z = random_disk(rng, 100, 30.0)
        z = z[away_from_poles(z, p.graph.lengths, 1e-6)]
        cf = build(p)
        assert np.all(np.abs(cf(z) - phi_reference(p, z)) <= 1e-9 * cf.magnitude(z))


@given(problems, points)
@settings(max_examples=60, deadline=None)
def test_parity(problem, z):
    cf = build(problem)
    scale = cf.magnitude(z)
    assert abs(cf(-z) - (-1) ** cf.m * cf(z)) <= 1e-11 * scale
    assert abs(cf.derivative(-z) - (-1) ** (cf.m + 1) * cf.derivative(z)) <= 1e-10 * (1 + abs(z)) * scale


@given(problems, points, st.floats(-20, 20))
@settings(max_examples=60, deadline=None)
def test_reality_and_conjugate_symmetry(problem, z, x):
    cf = build(problem)
    assert abs(cf(x).imag) <= 1e-12 * cf.magnitude(x)
    assert abs(cf(np.conj(z)) - np.conj(cf(z))) <= 1e-11 * cf.magnitude(z)


@given(problems, st.integers(0, 3), st.integers(0, 3), points)
@settings(max_examples=60, deadline=None)
def test_conjugating_one_coefficient_leaves_phi_unchanged(problem, j, n, z):
    j %= problem.graph.m
    p = problem.potentials[j]
    if p.order == 0:
        return
    coeffs = p.coeffs.copy()
    coeffs[n % p.order] = np.conj(coeffs[n % p.order])
    pots = list(problem.potentials)
    pots[j] = EdgePotential(coeffs)
    flipped = build(problem.with_potentials(pots))
    cf = build(problem)
    assert abs(flipped(z) - cf(z)) <= 1e-12 * cf.magnitude(z)


@given(problems, points)
@settings(max_examples=60, deadline=None)
def test_nonlocal_residual_is_minus_phi(problem, z):
    cf = build(problem)
    assert abs(cf.nonlocal_residual(z) + cf(z)) <= 1e-10 * cf.magnitude(z)


def test_nonlocal_residual_closed_form():
    cf = build(Problem.from_lengths([1, 1]))
    assert cf.nonlocal_residual(0.5) == pytest.approx(-0.5 * math.sin(1), rel=1e-14)


def test_derivative_matches_finite_differences(rng):
    for _ in range(3):
        cf = build(random_complex_problem(rng))
        z = random_disk(rng, 20, 20.0)
        h = 1e-6 * (1 + np.abs(z))
        fd = (cf(z + h) - cf(z - h)) / (2 * h)
        assert np.all(np.abs(cf.derivative(z) - fd) <= 1e-5 * np.maximum(np.abs(fd), 1e-3 * cf.magnitude(z)))


def test_edge_solution_boundary_values(rng):
    cf = build(random_complex_problem(rng, lengths=(1.0, SQRT2, 0.6)))
    for z in (2.3, 4.0 + 1j):
        vertex = cf.vertex_value(z)
        assert vertex == pytest.approx(np.prod(np.sin(z * cf.lengths)))
        for j, l in enumerate(cf.lengths):
            assert cf.edge_solution(j, l, z) == 0
            assert cf.edge_solution(j, 0.0, z) == pytest.approx(vertex, abs=1e-15)


def test_edge_solution_one_term_formula():
    cf = build(Problem.from_lengths([1, 1], [[0.5], []]))
    z, x = 2.3, 0.4
    direct = (math.sin(z * 0.6) + math.sin(z) * 0.5 * math.sin(math.pi * 0.6) / (z * z - math.pi**2)) * math.sin(z)
    assert cf.edge_solution(0, x, z) == pytest.approx(direct, rel=1e-14)


def test_edge_solution_errors():
    cf = build(Problem.from_lengths([1, 2]))
    with pytest.raises(IndexError):
        cf.edge_solution(2, 0.5, 1.0)
    with pytest.raises(ValueError):
        cf.edge_solution(0, 1.5, 1.0)
    with pytest.raises(ValueError):
        cf.ode_residual(0, 1.0, grid_points=8)


def test_ode_residual_for_free_edge():
    cf = build(Problem.from_lengths([1, 1]))
    phi = cf.edge_solution(0, np.linspace(0, 1, 257), 2.0)
    assert cf.ode_residual(0, 2.0, 256, order=4) <= 1e-6 * np.max(np.abs(phi))
    assert cf.ode_residual(0, 2.0, 256) <= 1e-6 * np.max(np.abs(phi))


def test_ode_residual_fourth_order_convergence():
    cf = build(Problem.from_lengths([1, SQRT2], [[0.4], []]))
    grids = [32, 64, 128, 256]
    res = [cf.ode_residual(0, 3.0, n, order=4) for n in grids]
    rates = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    assert np.all(rates > 3.5) and np.all(rates < 4.8)
    ratio = cf.ode_residual(0, 3.0, 32, order=4) / cf.ode_residual(0, 3.0, 512, order=4)
    assert 16**4 / 4 <= ratio <= 16**4 * 4


def test_fd_weights_are_exact():
    assert fd_weights((-1, 0, 1), 2) == (1.0, -2.0, 1.0)
    w = fd_weights((-2, -1, 0, 1, 2), 2)
    assert np.allclose(w, [-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12])
    x = np.linspace(0, 1, 201)
    d2 = second_derivative(np.sin(3 * x), x[1] - x[0])
    assert np.max(np.abs(d2 + 9 * np.sin(3 * x))) < 1e-9


def test_magnitude_bounds_phi(rng):
    cf = build(random_complex_problem(rng))
    z = random_disk(rng, 50, 15.0)
    assert np.all(np.abs(cf(z)) <= cf.magnitude(z) * (1 + 1e-12))


def test_pairing_term_uses_edge_length():
    # with a single mode on a long edge, Phi picks up (l/2)|q|^2 through the pairing term
    l = 3.0
    p = Problem.from_lengths([l, 1.0], [[0.7], []])
    cf = build(p)
    z = 1.1
    t = SineTransform([0.7], l)
    k = math.pi / l
    pair = math.sin(z * l) * 0.7 * (l / 2) * 0.7 / (z * z - k * k)
    expected = (2 * t(z) + pair + z * math.cos(z * l)) * math.sin(z) + z * math.cos(z) * math.sin(z * l)
    assert cf(z) == pytest.approx(expected, rel=1e-13)
