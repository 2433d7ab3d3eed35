import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from robust_wsrm.conic import (CExpr, ConicProgram, Expr, bmat, complex_lmi_embed, concat, geometric_mean_objective,
                               hyperbolic_feasible, hyperbolic_to_soc, squared_norm_soc)
from robust_wsrm.solver import solve

from conftest import crand


def soc_ok(arg, tol=1e-12):
    return np.linalg.norm(arg[1:]) <= arg[0] + tol


def const(v):
    return Expr.constant(np.asarray(v, dtype=float))


@pytest.mark.parametrize("z,x,y,ok", [(1, 1, 1, True), (2, 1, 1, False), (1, 4, 1, True)])
def test_hyperbolic_examples(z, x, y, ok):
    arg = hyperbolic_to_soc(const(z), const(x), const(y)).value(np.zeros(0))
    assert soc_ok(arg) == ok
    assert hyperbolic_feasible(z, x, y) == ok


def test_hyperbolic_random_triples(rng):
    z, x, y = rng.uniform(-3, 3, (3, 10_000))
    # keep away from the boundary where rounding decides
    keep = np.abs(z * z - x * y) > 1e-9
    for zi, xi, yi in zip(z[keep], x[keep], y[keep]):
        assert hyperbolic_feasible(zi, xi, yi) == (zi * zi <= xi * yi and xi >= 0 and yi >= 0)


def test_squared_norm_soc():
    arg = squared_norm_soc(const([1.0, 2.0]), const(5.0)).value(np.zeros(0))
    assert soc_ok(arg, 1e-12)
    arg = squared_norm_soc(const([1.0, 2.0]), const(4.9)).value(np.zeros(0))
    assert not soc_ok(arg)


def _gm_program(bounds=None, A=None, b=None, k=None):
    prog = ConicProgram()
    k = k or len(bounds)
    t = prog.variable(k, "t")
    prog.add_nonneg(t, "pos")
    if bounds is not None:
        prog.add_nonneg(np.asarray(bounds, float) - t, "box")
    if A is not None:
        prog.add_nonneg(b - A @ t, "poly")
    g = geometric_mean_objective(prog, [t[i] for i in range(k)])
    prog.maximize(g)
    return prog, t, g


def test_gm_two_leaves():
    prog = ConicProgram()
    t = prog.variable(2, "t")
    prog.add_nonneg(concat([4.0 - t[0], 1.0 - t[1]]))
    g = geometric_mean_objective(prog, [t[0], t[1]])
    prog.maximize(g)
    sol = solve(prog)
    assert sol.value(g) == pytest.approx(2.0, abs=1e-6)


def test_gm_symmetric_box():
    prog, t, g = _gm_program(bounds=[3.0] * 4)
    sol = solve(prog)
    np.testing.assert_allclose(sol.value(t), 3.0, atol=1e-5)
    assert sol.value(g) == pytest.approx(3.0, abs=1e-5)


def _grid_argmax(A, b, lo, hi, n=61, rounds=6):
    """Zooming grid search for the max product over ``A t <= b``; the shrink keeps the optimum inside."""
    best = None
    for _ in range(rounds):
        axes = [np.linspace(l, h, n) for l, h in zip(lo, hi)]
        pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
        pts = pts[np.all(pts @ A.T <= b + 1e-12, axis=1)]
        best = pts[np.argmax(pts.prod(axis=1))]
        span = 4 * (hi - lo) / (n - 1)
        lo, hi = np.maximum(best - span, 0), best + span
    return best


def test_gm_three_leaves_matches_grid(rng):
    for _ in range(3):
        A = rng.uniform(0.2, 1.0, (4, 3))
        b = np.ones(4)
        prog, t, _ = _gm_program(A=A, b=b, k=3)
        best = solve(prog).value(t)
        grid = _grid_argmax(A, b, np.zeros(3), (b[:, None] / A).min(axis=0))
        assert np.prod(grid) <= np.prod(best) * (1 + 1e-6)
        np.testing.assert_allclose(best, grid, atol=1e-3)


@given(st.integers(1, 7), st.integers(0, 10_000))
def test_gm_bound_holds_at_feasible_points(k, seed):
    rng = np.random.default_rng(seed)
    prog, t, g = _gm_program(bounds=rng.uniform(0.5, 3, k))
    sol = solve(prog)
    tv = sol.value(t)
    assert sol.value(g) <= np.prod(tv) ** (1 / k) * (1 + 1e-6) + 1e-8
    # at the optimum equality is attained
    assert sol.value(g) == pytest.approx(np.prod(tv) ** (1 / k), rel=1e-5)


def test_embed_examples(rng):
    np.testing.assert_array_equal(complex_lmi_embed(np.ones((1, 1))), np.eye(2))
    H = np.diag([2.0, -1.0])
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(complex_lmi_embed(H))), [-1, -1, 2, 2])
    with pytest.raises(ValueError):
        complex_lmi_embed(np.array([[1.0, 1j], [1j, 1.0]]))


@given(st.integers(0, 10_000), st.integers(1, 5))
def test_embed_doubles_spectrum(seed, m):
    rng = np.random.default_rng(seed)
    A = crand(rng, m, m)
    H = A + A.conj().T
    ev = np.linalg.eigvalsh(H)
    emb = np.linalg.eigvalsh(complex_lmi_embed(H))
    np.testing.assert_allclose(emb, np.repeat(ev, 2), atol=1e-10)
    assert abs(ev[0] - emb[0]) <= 1e-10


def test_embed_of_expression(rng):
    prog = ConicProgram()
    W = prog.hermitian_variable(3)
    x = rng.standard_normal(prog.n)
    Wv = W.value(x)
    np.testing.assert_allclose(Wv, Wv.conj().T)
    np.testing.assert_allclose(complex_lmi_embed(W).value(x), complex_lmi_embed(Wv))


def test_expression_algebra(rng):
    prog = ConicProgram()
    z = prog.complex_variable(3, "z")
    x = rng.standard_normal(prog.n)
    zv = z.value(x)
    M = crand(rng, 2, 3)
    np.testing.assert_allclose((M @ z).value(x), M @ zv)
    np.testing.assert_allclose(z.H.value(x), zv.conj().reshape(1, 3) if z.H.ndim == 2 else zv.conj())
    np.testing.assert_allclose((2.0 * z - zv).value(x), zv)
    B = bmat([[np.eye(1), z.reshape(1, 3)], [z.reshape(1, 3).H, np.eye(3)]])
    v = B.value(x)
    np.testing.assert_allclose(v[1:, 0], zv.conj())
    np.testing.assert_allclose(v, v.conj().T)


def test_psd_block_must_be_symmetric():
    prog = ConicProgram()
    prog.variable(1)
    with pytest.raises(ValueError):
        prog.add_psd(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_counts_and_dump():
    prog = ConicProgram()
    x = prog.variable(2, "x")
    prog.add_nonneg(x)
    prog.add_soc(1.0, x)
    prog.add_eq(x[0] - x[1])
    prog.maximize(x[0])
    assert prog.counts() == {"eq": 1, "nonneg": 1, "soc": 1, "psd": 0}
    text = prog.dump()
    assert text.startswith("variables 2") and "soc" in text
