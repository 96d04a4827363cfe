"""Physical world: candidate grid, sensor layout and ground-truth emitter powers.

Grid indices are 0-based in the Python API. Slots are 1-based (``t = 1..T``),
so the trajectory array row ``t - 1`` holds ``x(t)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from dircarto.errors import ConfigError, GeometryError

EPS_GEO = 1e-6  # meters; minimum sensor-to-grid-point separation


@dataclass(frozen=True)
class Grid:
    width: float
    height: float
    points: np.ndarray  # (P, 2), row-major over cells
    rows: int = 0
    cols: int = 0

    @property
    def size(self) -> int:
        return self.points.shape[0]


def build_grid(width: float, height: float, rows: int, cols: int) -> Grid:
    """Place ``rows * cols`` candidate points at the cell centers of the area.

    Points are ordered row-major: index ``p = i * cols + j`` sits at
    ``((j + 1/2) * width / cols, (i + 1/2) * height / rows)``.
    """
    if width <= 0 or height <= 0:
        raise ConfigError(f"grid dimensions must be positive, got {width}x{height}")
    if int(rows) != rows or int(cols) != cols or rows < 1 or cols < 1:
        raise ConfigError(f"grid needs rows, cols >= 1, got {rows}x{cols}")
    rows, cols = int(rows), int(cols)
    xs = (np.arange(cols) + 0.5) * (width / cols)
    ys = (np.arange(rows) + 0.5) * (height / rows)
    gx, gy = np.meshgrid(xs, ys)
    points = np.column_stack([gx.ravel(), gy.ravel()])
    points.setflags(write=False)
    return Grid(float(width), float(height), points, rows, cols)


@dataclass(frozen=True)
class SensorLayout:
    positions: np.ndarray  # (N, 2)
    broadside: np.ndarray  # (N,) broadside direction, radians from +x

    @property
    def count(self) -> int:
        return self.positions.shape[0]


def make_layout(positions, broadside=None) -> SensorLayout:
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    if positions.ndim != 2 or positions.shape[1] != 2 or positions.shape[0] < 1:
        raise ConfigError("sensor positions must be a non-empty (N, 2) array")
    if broadside is None:
        broadside = np.full(positions.shape[0], np.pi / 2)
    broadside = np.broadcast_to(np.asarray(broadside, dtype=float), (positions.shape[0],)).copy()
    positions = positions.copy()
    positions.setflags(write=False)
    broadside.setflags(write=False)
    return SensorLayout(positions, broadside)


def geometry(points, sensor, broadside: float = np.pi / 2):
    """Distance and arrival angle of grid points seen from one sensor.

    The angle is measured from the array broadside, positive towards the
    array axis obtained by rotating the broadside by -90 degrees (for the
    default +y broadside, the axis is +x). Points behind the array are folded
    into ``[-pi/2, pi/2]``; a ULA only sees ``sin(theta)``, which folding
    leaves unchanged.

    Accepts a single point ``(2,)`` or an array ``(P, 2)``.
    """
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    v = pts - np.asarray(sensor, dtype=float)
    R = np.hypot(v[:, 0], v[:, 1])
    if np.any(R < EPS_GEO):
        bad = int(np.argmin(R))
        raise GeometryError(f"sensor at {tuple(sensor)} coincides with point {bad} (R={R[bad]:.3g} m)")
    b = np.array([np.cos(broadside), np.sin(broadside)])
    b[np.abs(b) < 1e-15] = 0.0  # exact axes for multiples of 90 degrees
    axis = np.array([b[1], -b[0]])
    theta = np.arctan2(v @ axis, np.abs(v @ b))
    if single:
        return float(R[0]), float(theta[0])
    return R, theta


@dataclass(frozen=True)
class Move:
    source: int  # ordinal of the source in the initial list
    index: int  # destination grid index
    slot: int  # first slot at the new location


@dataclass(frozen=True)
class Trajectory:
    powers: np.ndarray  # (T, P)
    sources: tuple = ()
    moves: tuple = ()

    @property
    def slots(self) -> int:
        return self.powers.shape[0]

    def at(self, t: int) -> np.ndarray:
        return self.powers[t - 1]


def make_trajectory(sources, T: int, P: int, moves=()) -> Trajectory:
    """Materialize ``x(t)`` for ``t = 1..T``.

    ``sources`` is a sequence of ``(index, power)`` pairs; ``moves`` relocate a
    source (by ordinal) at a given slot, keeping its power. Sources sharing a
    grid point add up.
    """
    if T < 1 or P < 1:
        raise ConfigError(f"need T >= 1 and P >= 1, got T={T}, P={P}")
    sources = [(int(i), float(pw)) for i, pw in sources]
    moves = sorted((m if isinstance(m, Move) else Move(*m) for m in moves), key=lambda m: m.slot)
    for i, pw in sources:
        if not 0 <= i < P:
            raise ConfigError(f"source index {i} outside grid of {P} points", key="sources")
        if pw < 0 or not np.isfinite(pw):
            raise ConfigError(f"source power must be >= 0, got {pw}", key="sources")
    for m in moves:
        if not 0 <= m.source < len(sources):
            raise ConfigError(f"move references unknown source {m.source}", key="moves")
        if not 0 <= m.index < P:
            raise ConfigError(f"move target {m.index} outside grid of {P} points", key="moves")
        if m.slot < 1:
            raise ConfigError(f"move slot must be >= 1, got {m.slot}", key="moves")

    where = [i for i, _ in sources]
    power = [pw for _, pw in sources]
    powers = np.zeros((T, P))
    k = 0
    for t in range(1, T + 1):
        while k < len(moves) and moves[k].slot <= t:
            where[moves[k].source] = moves[k].index
            k += 1
        np.add.at(powers[t - 1], where, power)
    powers.setflags(write=False)
    return Trajectory(powers, tuple(sources), tuple(moves))


@dataclass(frozen=True)
class Scenario:
    grid: Grid
    layout: SensorLayout
    trajectory: Trajectory
    meta: dict = field(default_factory=dict)

    @property
    def slots(self) -> int:
        return self.trajectory.slots


def random_sensor_positions(rng: np.random.Generator, grid: Grid, n: int, min_sep: float = 0.0):
    """Uniform sensor positions over the area, rejecting spots closer than
    ``max(min_sep, EPS_GEO)`` to any grid point."""
    sep = max(min_sep, EPS_GEO)
    out = []
    for _ in range(1000 * n):
        if len(out) == n:
            break
        p = rng.uniform((0.0, 0.0), (grid.width, grid.height))
        if np.min(np.hypot(*(grid.points - p).T)) >= sep:
            out.append(p)
    if len(out) < n:
        raise ConfigError(f"could not place {n} sensors with separation {sep} m")
    return np.array(out)


def random_sources(rng: np.random.Generator, P: int, k: int, power=1.0):
    if k > P:
        raise ConfigError(f"cannot place {k} sources on {P} grid points", key="n_sources")
    idx = rng.choice(P, size=k, replace=False)
    return [(int(i), float(power)) for i in idx]


def random_moves(rng: np.random.Generator, sources, P: int, T: int, every: int):
    """One source jumps to a free grid point every ``every`` slots (first at
    slot ``every + 1``), cycling through sources in order."""
    if every <= 0 or not sources:
        return []
    where = [i for i, _ in sources]
    moves = []
    for n, slot in enumerate(range(every + 1, T + 1, every)):
        s = n % len(sources)
        free = np.setdiff1d(np.arange(P), where)
        if free.size == 0:
            break
        dest = int(rng.choice(free))
        where[s] = dest
        moves.append(Move(s, dest, slot))
    return moves
