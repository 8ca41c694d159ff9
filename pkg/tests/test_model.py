import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stargraph.characteristic import build
from stargraph.model import (
    EdgePotential,
    InvalidProblemError,
    NumericalPolicy,
    Problem,
    StarGraph,
    load_problem,
    problem_from_dict,
    problem_to_dict,
    project_to_fourier,
    rational_independence_check,
    save_problem,
    validate,
)
from stargraph.transforms import synthesize


def test_graph_properties_and_immutability():
    g = StarGraph([1.0, 2.5, 0.5])
    assert g.m == 3
    assert g.total_length == pytest.approx(4.0)
    with pytest.raises(ValueError):
        g.lengths[0] = 3.0


def test_potential_helpers():
    p = EdgePotential([1 + 2j, 3])
    assert p.order == 2
    assert np.array_equal(p.conj().coeffs, [1 - 2j, 3])
    assert np.array_equal(p.resized(4).coeffs, [1 + 2j, 3, 0, 0])
    assert np.array_equal(p.resized(1).coeffs, [1 + 2j])
    assert EdgePotential.zeros(3) == EdgePotential([0, 0, 0])


@pytest.mark.parametrize(
    "lengths, coeffs, fragment",
    [
        ([1.0], [[]], "edge count below 2"),
        ([1.0, -1.0], [[], []], "nonpositive length"),
        ([1.0, 0.0], [[], []], "nonpositive length"),
        ([1.0, float("nan")], [[], []], "nonfinite length"),
        ([1.0, 1.0], [[]], "does not match"),
        ([1.0, 1.0], [[float("inf")], []], "nonfinite coefficient on edge 1"),
    ],
)
def test_validate_reports_each_violation(lengths, coeffs, fragment):
    problem = Problem(StarGraph(lengths), tuple(EdgePotential(c) for c in coeffs))
    diags = validate(problem)
    assert any(fragment in d for d in diags), diags
    with pytest.raises(InvalidProblemError) as info:
        build(problem)
    assert info.value.diagnostics == diags


def test_validate_policy_and_purity():
    policy = NumericalPolicy(pole_band=0.0, winding_round_tol=0.7, newton_max_iter=0)
    problem = Problem.from_lengths([1, 2], policy=policy)
    diags = validate(problem)
    assert len(diags) == 3
    assert validate(problem) == diags
    assert validate(Problem.from_lengths([1, 2])) == []


def test_validate_is_pure_for_valid_and_invalid():
    p = Problem.from_lengths([1, -2], [[0.1], [float("nan")]])
    assert validate(p) == validate(p)


@pytest.mark.parametrize(
    "lengths, max_coeff, expected",
    [
        ((1, 1), 1, (False, (1, -1))),
        ((1, math.sqrt(2)), 20, (True, None)),
        ((1, 2, 3), 1, (False, (1, 1, -1))),
    ],
)
def test_rational_independence_examples(lengths, max_coeff, expected):
    assert rational_independence_check(lengths, max_coeff, 1e-9) == expected


@given(st.lists(st.integers(1, 6), min_size=2, max_size=3), st.floats(0.3, 3.0))
@settings(max_examples=40, deadline=None)
def test_commensurate_lengths_always_have_a_witness(multiples, base):
    lengths = [k * base for k in multiples]
    independent, witness = rational_independence_check(lengths, 6)
    assert not independent
    assert abs(np.dot(witness, lengths)) < 1e-9 * max(lengths)
    assert next(v for v in witness if v) > 0


def test_project_basis_function_and_zero():
    x = np.linspace(0, 1, 101)
    p = project_to_fourier(np.sin(np.pi * (1 - x)), 1.0, 4)
    assert np.allclose(p.coeffs, [1, 0, 0, 0], atol=1e-12)
    assert np.all(project_to_fourier(np.zeros(50), 1.0, 3).coeffs == 0)


def test_project_polynomial_matches_closed_form():
    # int_0^1 x(1-x) sin(n pi (1-x)) dx * 2 = 4(1 - (-1)^n)/(n pi)^3
    x = np.linspace(0, 1, 4001)
    p = project_to_fourier(x * (1 - x), 1.0, 3)
    n = np.arange(1, 4)
    exact = 4 * (1 - (-1.0) ** n) / (n * np.pi) ** 3
    assert np.allclose(p.coeffs, exact, atol=1e-7)


def test_project_needs_enough_samples():
    with pytest.raises(ValueError):
        project_to_fourier(np.zeros(7), 1.0, 3)


@given(
    st.lists(st.floats(-2, 2), min_size=1, max_size=8),
    st.floats(0.2, 5.0),
)
@settings(max_examples=50, deadline=None)
def test_synthesize_then_project_round_trip(coeffs, l):
    p = EdgePotential(coeffs)
    x = np.linspace(0, l, 2 * p.order + 9)
    back = project_to_fourier(synthesize(p, l, x), l, p.order)
    scale = max(1.0, float(np.max(np.abs(p.coeffs))))
    assert np.max(np.abs(back.coeffs - p.coeffs)) <= 1e-10 * scale


def test_json_round_trip(tmp_path):
    problem = Problem.from_lengths([1.0, 2.0], [[0.1 + 0.2j, -0.3], [0.5]], NumericalPolicy(rng_seed=7))
    path = tmp_path / "p.json"
    save_problem(problem, path)
    again = load_problem(path)
    assert again == problem
    assert problem_to_dict(again) == problem_to_dict(problem)


def test_json_defaults_and_errors(tmp_path):
    p = problem_from_dict({"lengths": [1, 2], "potentials": [{"re": [0.5]}, {"re": []}]})
    assert p.potentials[0].coeffs[0] == 0.5
    assert p.policy == NumericalPolicy()
    assert problem_from_dict({"lengths": [1, 2]}).order == 0
    with pytest.raises(InvalidProblemError):
        problem_from_dict({"potentials": []})
    with pytest.raises(InvalidProblemError):
        problem_from_dict({"lengths": [1, 2], "policy": {"bogus": 1}})
    with pytest.raises(InvalidProblemError):
        problem_from_dict({"lengths": [1, 2], "potentials": [{"re": [1], "im": [1, 2]}, {}]})
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(InvalidProblemError):
        load_problem(bad)
