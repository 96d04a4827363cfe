import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dircarto.array import ArrayConfig, build_manifold, effective_row, gamma_row, random_beam
from dircarto.beams import (
    BeamWindow,
    coverage_gain,
    discovery_beam,
    gram_det,
    next_discovery,
    null_complement,
    nullspace_beam,
    tracking_beam,
)
from dircarto.errors import PreconditionError


def _setup(M=3, P=6, seed=0, gain=1.0):
    rng = np.random.default_rng(seed)
    cfg = ArrayConfig(elements=M, gain=gain)
    A = build_manifold(cfg, rng.uniform(0, 20, (P, 2)), (10.0, -15.0))
    return A, cfg, rng


def _unit(u):
    return u / np.linalg.norm(u)


def test_window_normalizes_and_caps():
    win = BeamWindow(3, capacity=2)
    for r in ([3, 0, 0], [0, 2j, 0], [0, 0, 5]):
        win.append(r)
    assert len(win) == 2
    assert np.allclose(np.linalg.norm(win.rows, axis=1), 1)
    assert np.allclose(win.rows[0], [0, 1j, 0])
    with pytest.raises(PreconditionError):
        win.append([0, 0, 0])


def test_omni_discovery_is_sqrt_gain():
    A, cfg, _ = _setup(M=1, P=4, gain=2.5)
    w = discovery_beam(A, BeamWindow(4), cfg)
    assert np.allclose(w, [np.sqrt(2.5)])


def test_discovery_picks_uncovered_direction():
    # manifold whose row space is spanned by e1, e2, e3 among 4 grid points
    A = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0]], dtype=complex)
    cfg = ArrayConfig(elements=3)
    win = BeamWindow(4, [[1, 0, 0, 0], [0, 1, 0, 0]])
    w = discovery_beam(A, win, cfg, commit=False)
    u = _unit(effective_row(A, w))
    assert abs(abs(u[2]) - 1) < 1e-12


def test_discovery_appends_realized_row():
    A, cfg, _ = _setup()
    win = BeamWindow(A.shape[1])
    w = discovery_beam(A, win, cfg)
    assert len(win) == 1
    assert np.allclose(win.rows[0], _unit(effective_row(A, w)))


def test_covered_row_space_falls_back():
    A, cfg, rng = _setup(M=2, P=5)
    win = BeamWindow(5)
    for _ in range(3):
        win.append(effective_row(A, random_beam(rng, cfg)))
    assert null_complement(A, win) is None
    w = discovery_beam(A, win, cfg, commit=False)
    assert np.vdot(w, w).real == pytest.approx(cfg.gain, rel=1e-12)
    with pytest.raises(PreconditionError):
        nullspace_beam(A, win, cfg)


def test_nullspace_empty_window_equals_discovery():
    A, cfg, _ = _setup()
    assert np.allclose(nullspace_beam(A, None, cfg), discovery_beam(A, None, cfg))


def test_nullspace_last_direction_unique():
    A, cfg, rng = _setup(M=3, P=6)
    win = BeamWindow(6)
    for _ in range(2):
        win.append(effective_row(A, random_beam(rng, cfg)))
    w = nullspace_beam(A, win.copy(), cfg)
    u = _unit(effective_row(A, w))
    assert max(abs(np.vdot(r, u)) for r in win.rows) < 1e-8
    # the complement is one-dimensional, so any other realizable orthogonal row is parallel
    w2 = discovery_beam(A, win.copy(), cfg)
    assert abs(abs(np.vdot(_unit(effective_row(A, w2)), u)) - 1) < 1e-8


def test_nullspace_matches_discovery_objective():
    A, cfg, rng = _setup(M=4, P=8, seed=3)
    win = BeamWindow(8)
    win.append(effective_row(A, random_beam(rng, cfg)))
    d = coverage_gain(win, effective_row(A, discovery_beam(A, win.copy(), cfg)))
    n = coverage_gain(win, effective_row(A, nullspace_beam(A, win.copy(), cfg)))
    assert n == pytest.approx(d, abs=1e-8)


def test_tracking_single_source_steers_at_it():
    A, cfg, _ = _setup(M=4, P=6)
    x = np.zeros(6)
    x[2] = 0.7
    w = tracking_beam(A, x, cfg)
    a = A[:, 2]
    assert abs(abs(np.vdot(w, a)) - np.linalg.norm(w) * np.linalg.norm(a)) < 1e-12 * np.linalg.norm(a)


def test_tracking_empty_estimate_falls_back():
    A, cfg, _ = _setup()
    win = BeamWindow(A.shape[1])
    w = tracking_beam(A, np.zeros(A.shape[1]), cfg, win)
    assert np.allclose(w, discovery_beam(A, BeamWindow(A.shape[1]), cfg))
    with pytest.raises(PreconditionError):
        tracking_beam(A, -np.ones(A.shape[1]), cfg)


def test_tracking_dominates_random_beams():
    A, cfg, rng = _setup(M=4, P=6, seed=5)
    x = np.zeros(6)
    x[[1, 4]] = 1.0
    best = gamma_row(A, tracking_beam(A, x, cfg)) @ x
    assert all(gamma_row(A, random_beam(rng, cfg)) @ x <= best * (1 + 1e-12) for _ in range(1000))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(3, 9), st.integers(0, 1000), st.floats(0.1, 10), st.floats(0.01, 100))
def test_beam_properties(M, P, seed, gain, c):
    A, cfg, rng = _setup(M, P, seed, gain)
    x = rng.uniform(0, 1, P)
    w = tracking_beam(A, x, cfg)
    assert np.allclose(tracking_beam(A, c * x, cfg), w, atol=1e-12)
    win = BeamWindow(P)
    info = [1.0]
    for k in range(min(M, P)):
        w = next_discovery(A, win, cfg)
        assert abs(np.vdot(w, w).real - gain) <= 1e-12 * gain
        R = win.rows
        # fresh directions while the row space allows them, never a repeated row
        assert gram_det(R) > gram_det(np.vstack([R[:-1], R[-2:-1]])) if k else gram_det(R) == pytest.approx(1)
        info.append(float(np.linalg.det(np.eye(P) + R.conj().T @ R).real))
    # the information determinant grows with every scanned row
    assert all(b >= a * (1 - 1e-12) for a, b in zip(info, info[1:]))
