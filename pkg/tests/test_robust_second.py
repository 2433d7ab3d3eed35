import numpy as np
import pytest

from robust_wsrm.conic import CExpr, ConicProgram
from robust_wsrm.ellipsoid_approx import lfj_inflate, max_volume_inner_ellipsoid
from robust_wsrm.model import NetworkConfig, generate_channels
from robust_wsrm.robust_second import (approximating_ellipsoid, build_iteration_problem_second, extract_beamformer,
                                       robust_violation, run_second, s_lemma_lmi)
from robust_wsrm.robust_first import build_iteration_problem_first
from robust_wsrm.sca import SCAOptions, certified_rate, fallback_state, run
from robust_wsrm.solver import solve
from robust_wsrm.uncertainty import Ellipsoid, make_box, random_ellipsoids, sample

from conftest import crand


def min_beta(hbar, w, ell):
    prog = ConicProgram()
    beta = prog.variable((), "beta")
    W = CExpr.constant(np.outer(w, w.conj()), prog.n)
    s_lemma_lmi(prog, hbar, W, ell, beta)
    prog.maximize(-beta)
    sol = solve(prog)
    assert sol.optimal
    return sol.value(beta)


def sampled_max(hbar, w, ell, rng, n=100_000):
    x = ell.boundary(rng, n)
    return float(np.max(np.abs((hbar + x.conj()) @ w) ** 2))


def test_zero_matrix():
    assert min_beta(np.array([1.0, 0.0]), np.zeros(2, dtype=complex), Ellipsoid(np.eye(2, dtype=complex))) == \
        pytest.approx(0.0, abs=1e-7)


def test_ball_example():
    b = min_beta(np.array([1.0, 0.0]), np.array([1.0, 0.0], dtype=complex), Ellipsoid(np.eye(2, dtype=complex)))
    assert b == pytest.approx(4.0, rel=1e-6)


def test_s_lemma_exact_on_random_ellipsoids(rng):
    for _ in range(50):
        A = crand(rng, 2, 2) * 0.5
        ell = Ellipsoid(A, 0.3 * crand(rng, 2))
        hbar, w = crand(rng, 2), crand(rng, 2)
        b = min_beta(hbar, w, ell)
        m = sampled_max(hbar, w, ell, rng)
        assert m <= b * (1 + 1e-6)
        assert m >= 0.99 * b


def test_extract_rank_one(rng):
    w = crand(rng, 4)
    got, ratio = extract_beamformer(np.outer(w, w.conj()))
    assert abs(np.vdot(w, got)) == pytest.approx(np.linalg.norm(w) * np.linalg.norm(got), rel=1e-9)
    assert ratio <= 1e-12
    got, ratio = extract_beamformer(np.eye(2))
    assert ratio == pytest.approx(1.0) and np.linalg.norm(got) == pytest.approx(1.0)


def test_extract_perturbed(rng):
    w = crand(rng, 4)
    E = crand(rng, 4, 4)
    W = np.outer(w, w.conj()) + 1e-6 * (E + E.conj().T)
    got, _ = extract_beamformer(W, w)
    cos = abs(np.vdot(w, got)) / (np.linalg.norm(w) * np.linalg.norm(got))
    assert 1 - cos <= 1e-2


def test_geometry_ordering(rng):
    s = make_box(4, 0.1)
    inner = approximating_ellipsoid(s)
    outer = approximating_ellipsoid(s, use_lfj=True)
    assert s.contains(inner.boundary(rng, 5000).conj(), tol=1e-6).all()
    assert outer.contains_row(sample(s, 5000, rng, "boundary_biased")).all()


def test_variable_count():
    cfg = NetworkConfig.from_snr(2, (2, 2), 4, 10)
    ch = generate_channels(cfg, 0)
    ip = build_iteration_problem_second(ch, make_box(4, 0.1), cfg, fallback_state(cfg, 1e-3))
    assert len(ip.extras["W"]) == cfg.K
    names = ip.prog.names
    # each Hermitian W carries T^2 real parameters
    assert sum(n.startswith("W0.") for n in names) == cfg.T ** 2
    assert sum(n.startswith("w.") for n in names) == 2 * cfg.K * cfg.T


def test_tiny_rho_matches_nominal():
    cfg = NetworkConfig.from_snr(2, (2, 2), 4, 10)
    ch = generate_channels(cfg, 1)
    a = run(ch, cfg, SCAOptions(seed=1)).objective
    b = run_second(ch, make_box(4, 1e-8), cfg, SCAOptions(seed=1)).objective
    assert b == pytest.approx(a, rel=1e-3)


def test_lfj_below_inner_and_safe():
    cfg = NetworkConfig.from_snr(2, (2, 2), 4, 10)
    ch = generate_channels(cfg, 3)
    s = make_box(4, 0.05)
    inner = run_second(ch, s, cfg, SCAOptions(seed=3))
    lfj = run_second(ch, s, cfg, SCAOptions(seed=3), use_lfj=True)
    assert lfj.objective <= inner.objective + 1e-6
    assert np.all(np.diff(lfj.history) >= -1e-6)
    v = robust_violation(lfj.beams, ch, s, cfg, lfj.extras["threshold"], lfj.extras["mu"],
                         np.random.default_rng(0), 1000)
    assert v <= 1e-6
    assert "rank_ratio" in inner.extras and len(inner.extras["rank_ratio"]) == cfg.K


@pytest.mark.parametrize("seed", range(3))
def test_lfj_no_better_than_first_at_matched_state(seed):
    # equal multipliers in the first approach reproduce the LFJ certificate on a box
    cfg = NetworkConfig.from_snr(2, (2, 2), 4, 10)
    ch = generate_channels(cfg, seed)
    s = make_box(4, 0.05)
    lfj_state = run_second(ch, s, cfg, SCAOptions(seed=seed, restarts=3), use_lfj=True).state
    for st in (fallback_state(cfg, 1e-3), lfj_state):
        vals = []
        for ip in (build_iteration_problem_first(ch, s, cfg, st),
                   build_iteration_problem_second(ch, s, cfg, st, use_lfj=True)):
            sol = solve(ip.prog)
            assert sol.optimal
            vals.append(certified_rate(sol.value(ip.t), cfg))
        assert vals[1] <= vals[0] + 1e-6
