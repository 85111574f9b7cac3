import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from derreg.problem import (
    AllocationProblem, CostFunction, InfeasibleProblemError, brute_force_solve, check_feasible,
    oracle_solve, random_problem, rc_closed_form, solve_reference,
)


def quad(a, lo, hi, p_ref, b=0.0):
    return AllocationProblem.quadratic(a, b, lo, hi, p_ref)


# --- check_feasible ---------------------------------------------------------

def test_feasible_midpoint():
    assert check_feasible(AllocationProblem([-1, -1], [1, 1], 0.0))


def test_infeasible_above_capacity():
    assert not check_feasible(AllocationProblem([-1, -1], [1, 1], 2.5))


def test_feasible_on_upper_boundary():
    assert check_feasible(AllocationProblem([-1, -5, -3], [1, 5, 3], 9.0))


# --- oracle_solve -----------------------------------------------------------

def test_oracle_symmetric_split():
    p = oracle_solve(quad([1, 1], [-5, -5], [5, 5], 4.0)).p
    np.testing.assert_allclose(p, [2.0, 2.0], atol=1e-9)


def test_oracle_kkt_ratio():
    p = oracle_solve(quad([1, 2], [-5, -5], [5, 5], 3.0)).p
    np.testing.assert_allclose(p, [2.0, 1.0], atol=1e-9)


def test_oracle_saturates_small_agent():
    p = oracle_solve(quad([1, 1], [-1, -5], [1, 5], 4.0)).p
    np.testing.assert_allclose(p, [1.0, 3.0], atol=1e-9)


def test_oracle_rejects_infeasible():
    with pytest.raises(InfeasibleProblemError):
        oracle_solve(quad([1, 1], [-1, -1], [1, 1], 3.0))


def test_oracle_rejects_constant_costs():
    with pytest.raises(ValueError):
        oracle_solve(AllocationProblem([-1, -1], [1, 1], 0.5))


@st.composite
def problems(draw, max_n=8):
    n = draw(st.integers(1, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    return random_problem(np.random.default_rng(seed), n)


@given(problems())
def test_oracle_is_feasible_and_kkt(prob):
    p = oracle_solve(prob).p
    assert abs(p.sum() - prob.p_ref) <= 1e-7 * max(1.0, abs(prob.p_ref))
    assert np.all(p >= prob.lower - 1e-12) and np.all(p <= prob.upper + 1e-12)
    # interior agents share one marginal cost; saturated ones sit on the right side of it
    grad = 2 * prob.a * p + prob.b
    free = (p > prob.lower + 1e-7) & (p < prob.upper - 1e-7)
    if free.sum() >= 1:
        lam = np.median(grad[free])
        np.testing.assert_allclose(grad[free], lam, atol=1e-5)
        at_lo = p <= prob.lower + 1e-7
        at_hi = p >= prob.upper - 1e-7
        assert np.all(grad[at_lo & ~free] >= lam - 1e-5)
        assert np.all(grad[at_hi & ~free] <= lam + 1e-5)


@given(problems(), st.floats(0.01, 100.0))
def test_oracle_invariant_to_cost_scaling(prob, c):
    scaled = AllocationProblem.quadratic(prob.a * c, prob.b * c, prob.lower, prob.upper, prob.p_ref)
    np.testing.assert_allclose(oracle_solve(scaled).p, oracle_solve(prob).p, atol=1e-6)


@given(problems(max_n=4))
def test_oracle_not_worse_than_random_feasible_points(prob):
    best = prob.objective(oracle_solve(prob).p)
    rng = np.random.default_rng(0)
    ref = rc_closed_form(prob).p
    for _ in range(20):
        # random zero-sum perturbation, projected back into the box
        d = rng.normal(size=prob.n)
        d -= d.mean()
        for t in (1e-3, 1e-1):
            q = ref + t * d
            if np.all(q >= prob.lower) and np.all(q <= prob.upper):
                assert prob.objective(q) >= best - 1e-7


def test_oracle_matches_brute_force_small():
    rng = np.random.default_rng(7)
    for _ in range(5):
        prob = random_problem(rng, int(rng.integers(2, 4)))
        np.testing.assert_allclose(oracle_solve(prob).p, brute_force_solve(prob).p, atol=1e-2)


# --- rc_closed_form ---------------------------------------------------------

def test_rc_symmetric():
    np.testing.assert_allclose(rc_closed_form(AllocationProblem([-1, -1], [1, 1], 1.0)).p, [0.5, 0.5])


def test_rc_unequal_ranges():
    np.testing.assert_allclose(rc_closed_form(AllocationProblem([-1, -3], [1, 3], 2.0)).p, [0.5, 1.5])


@given(problems())
def test_rc_lower_reference_gives_lower_bounds(prob):
    at_lo = prob.with_p_ref(float(prob.lower.sum()))
    np.testing.assert_allclose(rc_closed_form(at_lo).p, prob.lower, atol=1e-12)


@given(problems())
def test_rc_equal_fraction(prob):
    p = rc_closed_form(prob).p
    frac = (p - prob.lower) / (prob.upper - prob.lower)
    np.testing.assert_allclose(frac, frac[0], atol=1e-12)
    assert p.sum() == pytest.approx(prob.p_ref, abs=1e-9)


def test_rc_zero_capacity():
    with pytest.raises(ValueError):
        rc_closed_form(AllocationProblem([0, 0], [0, 0], 0.0))


def test_solve_reference_routes_by_cost_class():
    lo, hi = np.array([-1.0, -3.0]), np.array([1.0, 3.0])
    assert np.allclose(solve_reference(AllocationProblem(lo, hi, 2.0)).p, [0.5, 1.5])
    assert np.allclose(solve_reference(quad([1, 1], lo, hi, 2.0)).p, [1.0, 1.0])


def test_cost_function_validation():
    with pytest.raises(ValueError):
        CostFunction("quadratic", 0.0)
    with pytest.raises(ValueError):
        CostFunction("cubic")
    f = CostFunction("quadratic", 2.0, 1.0)
    assert f(3.0) == 21.0 and f.derivative(3.0) == 13.0


def test_problem_shape_checks():
    with pytest.raises(ValueError):
        AllocationProblem([0, 0], [1], 0.0)
    with pytest.raises(ValueError):
        AllocationProblem([1.0], [0.0], 0.0)
