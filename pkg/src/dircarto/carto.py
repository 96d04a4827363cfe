"""Radio maps from power estimates, and the error metrics used to score runs."""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from dircarto.errors import PreconditionError
from dircarto.scene import EPS_GEO, Grid


@dataclass(frozen=True)
class RadioMap:
    values: np.ndarray  # (rows, cols), row 0 at the bottom (y ~ 0)
    width: float
    height: float
    slot: int = 0
    estimate: np.ndarray | None = None

    @property
    def shape(self):
        return self.values.shape

    def to_csv(self) -> str:
        rows, cols = self.values.shape
        buf = io.StringIO()
        buf.write(f"# width={self.width!r},height={self.height!r},rows={rows},cols={cols},slot={self.slot}\n")
        buf.write(",".join(f"c{j}" for j in range(cols)) + "\n")
        for r in self.values:
            buf.write(",".join(repr(float(v)) for v in r) + "\n")
        return buf.getvalue()

    def to_pgm(self) -> bytes:
        """Binary P5 image, brightest cell = 255, top row = far edge (y = height)."""
        rows, cols = self.values.shape
        peak = float(self.values.max()) if self.values.size else 0.0
        if peak > 0:
            img = np.round(self.values / peak * 255)
        else:
            img = np.zeros_like(self.values)
        img = np.clip(img, 0, 255).astype(np.uint8)[::-1]
        return f"P5\n{cols} {rows}\n255\n".encode() + img.tobytes()


def rss_at(queries, xhat, grid: Grid, path_loss: float = 2.0) -> np.ndarray:
    """``RSS(g) = sum_p xhat_p / R_{g,p}**eta`` at each query point ``g``.

    Distances below the geometric floor are clamped to it.
    """
    x = np.asarray(getattr(xhat, "x", xhat), dtype=float)
    q = np.atleast_2d(np.asarray(queries, dtype=float))
    active = np.flatnonzero(x)
    if active.size == 0:
        return np.zeros(q.shape[0])
    d = q[:, None, :] - grid.points[None, active, :]
    R = np.maximum(np.hypot(d[..., 0], d[..., 1]), EPS_GEO)
    return (x[active][None, :] / R**path_loss).sum(axis=1)


def interpolate_map(xhat, grid: Grid, resolution=(100, 100), path_loss: float = 2.0, slot: int = 0) -> RadioMap:
    """Raster of ``rss_at`` over the area, sampled at raster cell centers."""
    rows, cols = (resolution, resolution) if np.isscalar(resolution) else resolution
    if rows < 1 or cols < 1:
        raise PreconditionError(f"map resolution must be at least 1x1, got {rows}x{cols}")
    xs = (np.arange(cols) + 0.5) * grid.width / cols
    ys = (np.arange(rows) + 0.5) * grid.height / rows
    gx, gy = np.meshgrid(xs, ys)
    vals = rss_at(np.column_stack([gx.ravel(), gy.ravel()]), xhat, grid, path_loss).reshape(rows, cols)
    x = np.asarray(getattr(xhat, "x", xhat), dtype=float)
    return RadioMap(vals, grid.width, grid.height, slot, x.copy())


def normalized_error(x, xhat) -> float:
    """``||x - xhat|| / ||x||``; falls back to ``||xhat||`` when ``x`` is zero."""
    x = np.asarray(x, dtype=float)
    xh = np.asarray(getattr(xhat, "x", xhat), dtype=float)
    if x.shape != xh.shape:
        raise PreconditionError(f"truth of shape {x.shape} vs estimate of shape {xh.shape}")
    nx = np.linalg.norm(x)
    if nx == 0:
        return float(np.linalg.norm(xh))
    return float(np.linalg.norm(x - xh) / nx)


@dataclass
class ErrorTrace:
    values: np.ndarray  # (T,)
    absolute: np.ndarray | None = None  # (T,) True where the truth was empty
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.absolute is None:
            self.absolute = np.zeros(self.values.shape, dtype=bool)

    def __len__(self):
        return self.values.size


def error_trace(truth, estimates, **meta) -> ErrorTrace:
    """Per-slot normalized error of ``estimates`` (T, P) against ``truth`` (T, P)."""
    truth = np.asarray(truth, dtype=float)
    est = np.asarray(estimates, dtype=float)
    vals = np.array([normalized_error(x, xh) for x, xh in zip(truth, est)])
    absolute = np.linalg.norm(truth, axis=1) == 0
    return ErrorTrace(vals, absolute, dict(meta))


def mse_over_trials(traces) -> ErrorTrace:
    """Per-slot mean of normalized errors across trials.

    Despite the name (kept for the figure it reproduces) this averages the
    normalized errors themselves; nothing is squared.
    """
    traces = list(traces)
    if not traces:
        raise PreconditionError("need at least one trace")
    lengths = {len(t) for t in traces}
    if len(lengths) != 1:
        raise PreconditionError(f"traces differ in length: {sorted(lengths)}")
    vals = np.mean([t.values for t in traces], axis=0)
    absolute = np.any([t.absolute for t in traces], axis=0)
    return ErrorTrace(vals, absolute, {"trials": len(traces)})
