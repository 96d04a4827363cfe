import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dircarto.errors import ConfigError, GeometryError
from dircarto.scene import Move, build_grid, geometry, make_trajectory, random_moves


def test_grid_10x10_cell_centers():
    g = build_grid(100, 100, 10, 10)
    assert g.size == 100
    assert np.allclose(g.points[0], (5, 5))
    assert np.allclose(g.points[-1], (95, 95))


def test_grid_single_cell():
    g = build_grid(1, 1, 1, 1)
    assert g.size == 1
    assert np.allclose(g.points[0], (0.5, 0.5))


def test_grid_rectangular_row_major():
    g = build_grid(10, 20, 2, 2)
    assert np.allclose(g.points, [(2.5, 5), (7.5, 5), (2.5, 15), (7.5, 15)])


@pytest.mark.parametrize("dims", [(0, 1, 1, 1), (1, -1, 1, 1), (1, 1, 0, 1), (1, 1, 1, 0)])
def test_grid_rejects_bad_dimensions(dims):
    with pytest.raises(ConfigError):
        build_grid(*dims)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 1e3), st.floats(0.1, 1e3), st.integers(1, 20), st.integers(1, 20))
def test_grid_points_distinct_and_inside(w, h, r, c):
    g = build_grid(w, h, r, c)
    assert g.size == r * c
    assert np.all(g.points >= 0) and np.all(g.points[:, 0] <= w) and np.all(g.points[:, 1] <= h)
    assert len({tuple(p) for p in g.points}) == r * c


def test_geometry_345():
    R, _ = geometry((3, 4), (0, 0))
    assert R == 5


def test_geometry_broadside():
    R, th = geometry((0, 7), (0, 0))
    assert R == 7 and th == 0


def test_geometry_diagonal():
    R, th = geometry((5, 5), (0, 0))
    assert R == pytest.approx(5 * np.sqrt(2))
    assert th == pytest.approx(np.pi / 4)


def test_geometry_behind_array_keeps_sine():
    # a point behind the array is folded but sin(theta) is unchanged
    _, front = geometry((3, 4), (0, 0))
    _, back = geometry((3, -4), (0, 0))
    assert np.sin(front) == pytest.approx(np.sin(back))


def test_geometry_coincident_point_rejected():
    with pytest.raises(GeometryError):
        geometry((1.0, 1.0), (1.0, 1.0 + 1e-8))


def test_geometry_deterministic_bits():
    pts = build_grid(100, 100, 10, 10).points
    a = geometry(pts, (12.3, 45.6))
    b = geometry(pts, (12.3, 45.6))
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_trajectory_static():
    tr = make_trajectory([(6, 1.0)], 5, 10)
    for t in range(1, 6):
        x = tr.at(t)
        assert np.flatnonzero(x).tolist() == [6] and x[6] == 1.0


def test_trajectory_move_keeps_power():
    tr = make_trajectory([(6, 1.0)], 40, 10, [Move(0, 7, 21)])
    for t in range(1, 21):
        assert np.flatnonzero(tr.at(t)).tolist() == [6]
    for t in range(21, 41):
        assert np.flatnonzero(tr.at(t)).tolist() == [7] and tr.at(t)[7] == 1.0


def test_trajectory_empty():
    tr = make_trajectory([], 4, 9)
    assert not np.any(tr.powers)


def test_trajectory_overlap_sums():
    tr = make_trajectory([(2, 1.0), (2, 0.5)], 3, 5)
    assert tr.at(1)[2] == 1.5


def test_trajectory_index_out_of_range():
    with pytest.raises(ConfigError):
        make_trajectory([(10, 1.0)], 3, 10)
    with pytest.raises(ConfigError):
        make_trajectory([(1, 1.0)], 3, 10, [Move(0, 12, 2)])
    with pytest.raises(ConfigError):
        make_trajectory([(1, 1.0)], 3, 10, [Move(3, 2, 2)])


def test_support_size_matches_declared_sources():
    rng = np.random.default_rng(3)
    sources = [(int(i), 1.0) for i in rng.choice(100, 8, replace=False)]
    moves = random_moves(rng, sources, 100, 100, 20)
    tr = make_trajectory(sources, 100, 100, moves)
    assert all(np.count_nonzero(tr.at(t)) == 8 for t in range(1, 101))
    assert [m.slot for m in moves] == [21, 41, 61, 81]
