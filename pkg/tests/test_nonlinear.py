import math

import numpy as np
import pytest
from scipy.optimize import bisect

from model.feeder import Phase
from solvers.injections import net_injections
from solvers.network import build_index
from solvers.nonlinear import PhasorSolution, SweepOptions, residual, solve_nonlinear

from conftest import single_phase_line

A, B, C = Phase.A, Phase.B, Phase.C


def two_bus_magnitude(r, x, p, q, v0=1.0):
    """
    |V| at the load end of one line feeding a constant-power load, from the
    quadratic u^2 - (v0^2 - 2(rp + xq)) u + |z|^2 |s|^2 = 0 in u = |V|^2.
    """
    b = v0 * v0 - 2.0 * (r * p + x * q)
    c = (r * r + x * x) * (p * p + q * q)
    u = bisect(lambda u: u * u - b * u + c, 0.5 * b, 1.5 * v0 * v0, xtol=1e-15)
    return math.sqrt(u)


def test_zero_injections_flat_profile(ieee13):
    sol = solve_nonlinear(ieee13, {})
    assert sol.converged
    assert sol.iterations <= 2
    np.testing.assert_allclose(sol.magnitudes(), 1.04)


def test_two_bus_against_bisection(line):
    sol = solve_nonlinear(line, {("l", A): -0.01})
    assert sol.converged
    expected = two_bus_magnitude(0.01, 0.02, 0.01, 0.0)
    assert sol.magnitude("l", A) == pytest.approx(expected, abs=1e-8)
    assert sol.magnitude("l", A) ** 2 == pytest.approx(0.9998, abs=1e-6)


@pytest.mark.parametrize("p,q", [(0.2, 0.1), (0.5, 0.0), (0.05, -0.3)])
def test_two_bus_heavier_loads(p, q):
    feeder = single_phase_line(r=0.02, x=0.05)
    sol = solve_nonlinear(feeder, {("l", A): -complex(p, q)})
    assert sol.converged
    assert sol.magnitude("l", A) == pytest.approx(two_bus_magnitude(0.02, 0.05, p, q), abs=1e-8)


def test_balanced_fixture_is_symmetric(twobus):
    sol = solve_nonlinear(twobus, net_injections(twobus, load_scale=1.0))
    va, vb, vc = (sol.voltage("leaf", p) for p in (A, B, C))
    assert abs(va) == pytest.approx(abs(vb), abs=1e-10)
    assert abs(vb) == pytest.approx(abs(vc), abs=1e-10)
    assert vb / va == pytest.approx(np.exp(-2j * np.pi / 3), abs=1e-9)
    assert vc / va == pytest.approx(np.exp(2j * np.pi / 3), abs=1e-9)


def test_residual_small_when_converged(twobus, chain5, tree25, ieee13, long_lateral):
    for feeder in (twobus, chain5, tree25, ieee13, long_lateral):
        inj = net_injections(feeder, load_scale=1.0)
        sol = solve_nonlinear(feeder, inj)
        assert sol.converged
        assert residual(feeder, sol, inj) < 1e-6


def test_residual_detects_perturbation(ieee13):
    inj = net_injections(ieee13, load_scale=1.0)
    sol = solve_nonlinear(ieee13, inj)
    v = sol.v.copy()
    v[sol.index.node("675", A)] += 0.01
    bad = PhasorSolution(sol.index, v, sol.i_branch, sol.s_flow, sol.iterations, sol.converged)
    assert residual(ieee13, bad, inj) > 1e-4


def test_residual_of_exact_two_bus_state(line):
    index = build_index(line)
    v0 = 1.0 + 0j
    v_leaf = 0.99 - 0.004j
    z = line.segments[0].diagonal(A)
    current = (v0 - v_leaf) / z
    s_load = v_leaf * np.conj(current)
    v = np.zeros(index.n_nodes, dtype=complex)
    v[index.node("s", A)] = v0
    v[index.node("l", A)] = v_leaf
    sol = PhasorSolution(
        index=index,
        v=v,
        i_branch=np.array([current]),
        s_flow=np.array([v0 * np.conj(current)]),
        iterations=0,
        converged=True,
    )
    assert residual(line, sol, {("l", A): -s_load}) < 1e-12


def test_losses_positive_for_consumption(tree25, ieee13):
    for feeder in (tree25, ieee13):
        sol = solve_nonlinear(feeder, net_injections(feeder, load_scale=1.0))
        total = sum(sol.losses().values())
        assert total.real >= 0


def test_collapse_is_reported_not_raised(line):
    # far past the loadability limit of this line: no real solution exists
    sol = solve_nonlinear(line, {("l", A): -20.0})
    assert not sol.converged
    assert sol.collapsed or sol.iterations == SweepOptions().max_iterations


def test_iteration_cap_reported(ieee13):
    sol = solve_nonlinear(ieee13, net_injections(ieee13), options=SweepOptions(max_iterations=1))
    assert not sol.converged
    assert sol.iterations == 1


def test_warm_start_converges_faster(tree25):
    inj = net_injections(tree25, load_scale=1.0)
    cold = solve_nonlinear(tree25, inj)
    warm = solve_nonlinear(tree25, inj, v_init=cold.v)
    assert warm.converged
    assert warm.iterations < cold.iterations
    np.testing.assert_allclose(warm.v, cold.v, atol=1e-8)


def test_linear_error_grows_with_loading(chain5):
    from solvers.linear import solve_linear

    errors = []
    for loading in (0.5, 1.0, 2.0, 3.0):
        inj = net_injections(chain5, load_scale=loading)
        errors.append(
            np.max(np.abs(solve_linear(chain5, inj).magnitudes() - solve_nonlinear(chain5, inj).magnitudes()))
        )
    assert errors == sorted(errors)
    assert errors[0] < 0.01 < errors[-1]


def test_sweep_options_validate():
    with pytest.raises(ValueError):
        SweepOptions(tolerance=0).validate()
    with pytest.raises(ValueError):
        SweepOptions(collapse_threshold=1.5).validate()
