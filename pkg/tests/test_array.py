import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dircarto.array import ArrayConfig, build_manifold, effective_row, gamma_row, normalize_beam
from dircarto.errors import ConfigError, PreconditionError
from dircarto.scene import build_grid


def _manifold(M=4, seed=0):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 50, (6, 2))
    return build_manifold(ArrayConfig(elements=M), pts, (25.0, -3.0))


def test_first_element_is_real_path_loss():
    pts = np.array([[3.0, 4.0], [10.0, 2.0]])
    A = build_manifold(ArrayConfig(elements=5), pts, (0.0, 0.0))
    R = np.hypot(*pts.T)
    assert np.allclose(A[0], 1 / R**2) and np.all(A[0].imag == 0)


def test_broadside_has_zero_phase():
    A = build_manifold(ArrayConfig(elements=6), np.array([[0.0, 3.0]]), (0.0, 0.0))
    assert np.allclose(A[:, 0], 1 / 9)


def test_hand_evaluated_entry():
    # theta = pi/6 at R = 1: x = sin(pi/6), y = cos(pi/6)
    pt = np.array([[np.sin(np.pi / 6), np.cos(np.pi / 6)]])
    A = build_manifold(ArrayConfig(elements=2, spacing=0.5, wavelength=1.0, path_loss=2), pt, (0.0, 0.0))
    assert abs(A[1, 0]) == pytest.approx(1.0)
    assert np.angle(A[1, 0]) == pytest.approx(-np.pi / 2)


def test_column_magnitudes_m_independent():
    A = build_manifold(ArrayConfig(elements=8), build_grid(100, 100, 10, 10), (37.1, 12.9))
    mag = np.abs(A)
    assert np.all(mag.max(axis=0) - mag.min(axis=0) <= 1e-15 * mag.max(axis=0))


def test_omni_gamma_is_pure_path_loss():
    pts = np.array([[3.0, 4.0], [6.0, 8.0]])
    cfg = ArrayConfig(elements=1, gain=2.0)
    A = build_manifold(cfg, pts, (0.0, 0.0))
    g = gamma_row(A, np.array([np.sqrt(2.0)]))
    assert np.allclose(g, 2.0 / np.array([5.0, 10.0]) ** 4)


def test_gamma_zero_for_orthogonal_beam():
    A = _manifold()
    a = A[:, 2]
    w = np.array([a[1], -a[0], 0, 0]).conj()  # w^H a = 0
    w = normalize_beam(w, 1.0)
    assert gamma_row(A, w)[2] == pytest.approx(0, abs=1e-20)


def test_two_element_sum_and_difference_beams():
    pt = np.array([[np.sin(np.pi / 6), np.cos(np.pi / 6)]])  # phase step -pi/2
    A = build_manifold(ArrayConfig(elements=2), pt, (0.0, 0.0))
    a = A[:, 0]
    w_match = normalize_beam(a, 1.0)
    w_null = normalize_beam(np.array([a[0], -a[1]]), 1.0)
    brute = lambda w: abs(np.sum(np.conj(w) * a)) ** 2  # noqa: E731
    assert gamma_row(A, w_match)[0] == pytest.approx(brute(w_match))
    assert gamma_row(A, w_match)[0] == pytest.approx(2.0)  # C1 * M / R^(2 eta)
    assert gamma_row(A, w_null)[0] == pytest.approx(0, abs=1e-15)


def test_effective_row_first_element_selector():
    A = _manifold()
    u = effective_row(A, np.array([np.sqrt(3.0), 0, 0, 0]))
    assert np.allclose(u, np.sqrt(3.0) * A[0].conj())
    assert np.allclose(u.imag, 0)


def test_zero_beam_rejected():
    with pytest.raises(PreconditionError):
        normalize_beam(np.zeros(3), 1.0)


def test_dimension_mismatch():
    with pytest.raises(PreconditionError):
        gamma_row(_manifold(4), np.ones(3))


@pytest.mark.parametrize("kw", [{"elements": 0}, {"spacing": 0}, {"wavelength": -1}, {"path_loss": 0}, {"gain": 0}])
def test_config_invariants(kw):
    with pytest.raises(ConfigError):
        ArrayConfig(**kw)


complex_vec = st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3)), min_size=4, max_size=4)


@settings(max_examples=60, deadline=None)
@given(complex_vec, st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 100))
def test_gamma_properties(parts, cr, ci, seed):
    w = np.array([a + 1j * b for a, b in parts])
    A = _manifold(4, seed)
    g = gamma_row(A, w)
    u = effective_row(A, w)
    assert np.all(g >= 0)
    assert np.allclose(g, np.abs(u) ** 2, rtol=1e-12, atol=0)
    c = cr + 1j * ci
    assert np.allclose(gamma_row(A, c * w), abs(c) ** 2 * g, rtol=1e-10, atol=1e-300)
