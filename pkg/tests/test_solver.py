import numpy as np
import pytest

from robust_wsrm.conic import ConicProgram, concat
from robust_wsrm.solver import (INFEASIBLE, OPTIMAL, UNBOUNDED, SolverOptions, primal_violation, solve)

from socp_pair import dual_value, primal_value, random_instance

BACKENDS = ["clarabel", "cvxopt"]


@pytest.mark.parametrize("backend", BACKENDS)
def test_linear(backend):
    prog = ConicProgram()
    x = prog.variable((), "x")
    prog.add_nonneg(x - 1.0)
    prog.maximize(-x)
    sol = solve(prog, SolverOptions(backend=backend, fallback=None))
    assert sol.status == OPTIMAL
    assert sol.value(x) == pytest.approx(1.0, abs=1e-7)


@pytest.mark.parametrize("backend", BACKENDS)
def test_soc(backend):
    prog = ConicProgram()
    t = prog.variable((), "t")
    prog.add_soc(t, np.array([3.0, 4.0]))
    prog.maximize(-t)
    sol = solve(prog, SolverOptions(backend=backend, fallback=None))
    assert sol.value(t) == pytest.approx(5.0, abs=1e-6)


@pytest.mark.parametrize("backend", BACKENDS)
def test_psd(backend):
    prog = ConicProgram()
    t = prog.variable((), "t")
    one = np.array([[0.0, 1.0], [1.0, 0.0]])
    prog.add_psd(t * np.eye(2) + one)
    prog.maximize(-t)
    sol = solve(prog, SolverOptions(backend=backend, fallback=None))
    assert sol.value(t) == pytest.approx(1.0, abs=1e-6)
    assert primal_violation(prog, sol.x) <= 1e-6
    assert max(sol.residuals.values()) <= 1e-7


def test_infeasible_and_unbounded():
    prog = ConicProgram()
    x = prog.variable((), "x")
    prog.add_nonneg(concat([x - 2.0, 1.0 - x]))
    prog.maximize(x)
    assert solve(prog).status == INFEASIBLE
    prog = ConicProgram()
    x = prog.variable((), "x")
    prog.add_nonneg(x)
    prog.maximize(x)
    assert solve(prog).status == UNBOUNDED


def test_options_validated():
    with pytest.raises(ValueError):
        SolverOptions(tol_gap=0)
    with pytest.raises(ValueError):
        SolverOptions(max_iterations=0)
    with pytest.raises(ValueError):
        SolverOptions(backend="mosek")


def test_weak_duality_reported(rng):
    f, A, d = random_instance(rng)
    _, sol = primal_value(f, A, d)
    assert sol.objective <= sol.dual_objective + 1e-6 or sol.objective == pytest.approx(sol.dual_objective, abs=1e-6)


def test_socp_pair_values_agree(rng):
    for _ in range(20):
        f, A, d = random_instance(rng)
        p, sp = primal_value(f, A, d)
        q, sq = dual_value(f, A, d)
        assert sp.optimal and sq.optimal
        assert p == pytest.approx(q, abs=1e-6)
