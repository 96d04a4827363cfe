"""Run configured experiments and write their artifacts.

A sweep is a list of points, each a label plus setting overrides, crossed
with a list of seeds. Every (point, seed) pair is an independent job; its
files are written atomically by the job, and the parent aggregates the
summary and the manifest. Jobs never share random state, so results do not
depend on ``jobs`` or on scheduling.
"""

from __future__ import annotations

import hashlib
import io
import logging
import math
import os
import re
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

import dircarto
from dircarto.carto import interpolate_map
from dircarto.config import ExperimentConfig, dump_config
from dircarto.scene import (
    Scenario,
    build_grid,
    make_layout,
    make_trajectory,
    random_moves,
    random_sensor_positions,
    random_sources,
)
from dircarto.seeding import substream
from dircarto.tracker import RunResult, World, run

log = logging.getLogger(__name__)


def build_scenario(cfg: ExperimentConfig, seed: int) -> Scenario:
    sc = lambda k: cfg.get("scenario", k)  # noqa: E731
    grid = build_grid(sc("width"), sc("height"), sc("rows"), sc("cols"))
    geo = sc("layout_seed") if sc("layout_seed") is not None else seed
    if sc("positions"):
        pos = np.array(sc("positions"), dtype=float)
    else:
        pos = random_sensor_positions(substream(geo, "sensors"), grid, sc("sensors"), sc("min_separation"))
    layout = make_layout(pos, np.full(len(pos), np.deg2rad(sc("broadside_deg"))))
    if sc("source_indices"):
        sources = [(i - 1, sc("source_power")) for i in sc("source_indices")]
    else:
        sources = random_sources(substream(geo, "sources"), grid.size, sc("sources"), sc("source_power"))
    moves = random_moves(substream(geo, "moves"), sources, grid.size, sc("slots"), sc("move_every"))
    traj = make_trajectory(sources, sc("slots"), grid.size, moves)
    return Scenario(grid, layout, traj, {"layout_seed": geo})


def run_trial(cfg: ExperimentConfig, seed: int):
    """One closed-loop run; returns the scenario and its :class:`RunResult`."""
    scenario = build_scenario(cfg, seed)
    world = World(scenario, cfg.array(), cfg.noise(), cfg.get("noise", "snr_db"))
    tcfg = cfg.tracker(seed)
    graph = cfg.graph(scenario.layout.count) if tcfg.mode == "distributed" else None
    return scenario, run(world, tcfg, graph)


# file formats


def _num(v) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    return repr(v)


def trace_csv(result: RunResult) -> str:
    buf = io.StringIO()
    buf.write("slot,estimator,error,absolute,disagreement,phase\n")
    absolute = np.linalg.norm(result.truth, axis=1) == 0
    T, E = result.errors.shape
    for t in range(T):
        for e in range(E):
            buf.write(f"{t + 1},{e + 1},{_num(result.errors[t, e])},{int(absolute[t])},"
                      f"{_num(result.disagreement[t])},{result.phases[t]}\n")
    return buf.getvalue()


def estimate_csv(scenario: Scenario, result: RunResult) -> str:
    """Final-slot truth and estimates, one row per (grid point, estimator)."""
    g = scenario.grid
    buf = io.StringIO()
    buf.write("index,row,col,x,y,truth,estimator,estimate\n")
    truth = result.truth[-1]
    for p in range(g.size):
        r, c = divmod(p, g.cols)
        for e in range(result.estimates.shape[1]):
            buf.write(f"{p + 1},{r + 1},{c + 1},{_num(g.points[p, 0])},{_num(g.points[p, 1])},"
                      f"{_num(truth[p])},{e + 1},{_num(result.estimates[-1, e, p])}\n")
    return buf.getvalue()


def sensors_csv(scenario: Scenario) -> str:
    buf = io.StringIO()
    buf.write("sensor,x,y,broadside_deg\n")
    lay = scenario.layout
    for n in range(lay.count):
        buf.write(f"{n + 1},{_num(lay.positions[n, 0])},{_num(lay.positions[n, 1])},"
                  f"{_num(np.rad2deg(lay.broadside[n]))}\n")
    return buf.getvalue()


def _write_atomic(path: Path, data):
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# jobs


@dataclass
class TrialSummary:
    point: int
    seed: int
    errors: np.ndarray  # (T,) mean over estimators
    disagreement: np.ndarray  # (T,)
    iterations: int = 0
    nonconverged: int = 0
    lam_max: float = 0.0
    diagnostics: int = 0
    sigma2: float = 0.0
    files: list = field(default_factory=list)
    error: str | None = None


def write_trial(outdir: Path, cfg: ExperimentConfig, scenario: Scenario, result: RunResult, maps: bool = True):
    files = []

    def put(name, data):
        _write_atomic(outdir / name, data)
        files.append(outdir / name)

    put("trace.csv", trace_csv(result))
    put("estimate.csv", estimate_csv(scenario, result))
    put("sensors.csv", sensors_csv(scenario))
    if maps:
        res = (cfg.get("map", "rows"), cfg.get("map", "cols"))
        eta = cfg.get("array", "path_loss")
        T = scenario.slots
        est = interpolate_map(result.estimates[-1, 0], scenario.grid, res, eta, slot=T)
        truth = interpolate_map(result.truth[-1], scenario.grid, res, eta, slot=T)
        put("map.csv", est.to_csv())
        put("map.pgm", est.to_pgm())
        put("truth_map.csv", truth.to_csv())
        put("truth_map.pgm", truth.to_pgm())
    return files


def _job(args):
    index, cfg, seed, outdir, maps = args
    try:
        scenario, result = run_trial(cfg, seed)
        files = write_trial(Path(outdir), cfg, scenario, result, maps) if outdir is not None else []
    except Exception as exc:  # reported in the manifest, the sweep carries on
        log.error("point %d seed %d failed: %s", index, seed, exc)
        return TrialSummary(index, seed, np.zeros(0), np.zeros(0), error=f"{type(exc).__name__}: {exc}")
    solves = [s for slot in result.solver for s in slot]
    return TrialSummary(
        index,
        seed,
        result.mean_error,
        result.disagreement,
        iterations=max((s[0] for s in solves), default=0),
        nonconverged=sum(not s[3] for s in solves),
        lam_max=max((float(s[2]) for s in solves), default=0.0),
        diagnostics=len(result.diagnostics),
        sigma2=result.noise.sigma2,
        files=[str(f) for f in files],
    )


def _safe(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", str(label)) or "_"


@dataclass
class Point:
    label: str
    config: ExperimentConfig
    overrides: dict = field(default_factory=dict)


def points_from_config(cfg: ExperimentConfig):
    axis = cfg.get("sweep", "axis")
    if not axis:
        return [Point("base", cfg)]
    return [Point(v, cfg.with_values({axis: v}), {axis: v}) for v in cfg.get("sweep", "values")]


def points_from_overrides(cfg: ExperimentConfig, spec):
    """``spec`` is ``[(label, {'section.key': value}), ...]``."""
    return [Point(label, cfg.with_values(ov), dict(ov)) for label, ov in spec]


def execute(points, seeds, out: Path | None, jobs: int = 1, maps: str = "first"):
    """Run every (point, seed) job; returns summaries grouped per point.

    ``maps`` is ``"first"`` (maps for the first seed of each point), ``"all"``
    or ``"none"``. With ``out=None`` nothing is written.
    """
    tasks = []
    for i, pt in enumerate(points):
        for k, seed in enumerate(seeds):
            d = None if out is None else Path(out) / "points" / f"{i + 1:02d}_{_safe(pt.label)}" / f"seed{seed}"
            want = maps == "all" or (maps == "first" and k == 0)
            tasks.append((i, pt.config, seed, None if d is None else str(d), want))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_job, tasks))
    else:
        results = [_job(t) for t in tasks]
    grouped = [[] for _ in points]
    for r in results:
        grouped[r.point].append(r)
    return grouped


def summary_csv(points, grouped) -> str:
    buf = io.StringIO()
    buf.write("point,label,trials,failed,final_slot,final_error_mean,final_error_std,final_disagreement_mean\n")
    for i, (pt, rs) in enumerate(zip(points, grouped)):
        ok = [r for r in rs if r.error is None]
        if ok:
            fin = np.array([r.errors[-1] for r in ok])
            dis = np.array([r.disagreement[-1] for r in ok])
            T = ok[0].errors.size
            dis_mean = _num(np.mean(dis)) if not np.all(np.isnan(dis)) else "nan"
            buf.write(f"{i + 1},{pt.label},{len(ok)},{len(rs) - len(ok)},{T},{_num(fin.mean())},"
                      f"{_num(fin.std())},{dis_mean}\n")
        else:
            buf.write(f"{i + 1},{pt.label},0,{len(rs)},0,nan,nan,nan\n")
    return buf.getvalue()


def mean_trace_csv(points, grouped, what: str = "errors") -> str:
    """Per-slot mean over trials, one column per point."""
    cols = []
    for rs in grouped:
        ok = [getattr(r, what) for r in rs if r.error is None]
        cols.append(np.mean(ok, axis=0) if ok else np.zeros(0))
    T = max((c.size for c in cols), default=0)
    buf = io.StringIO()
    buf.write("slot," + ",".join(_safe(p.label) for p in points) + "\n")
    for t in range(T):
        buf.write(f"{t + 1}," + ",".join(_num(c[t]) if t < c.size else "" for c in cols) + "\n")
    return buf.getvalue()


def _fmt_overrides(ov: dict) -> str:
    return ", ".join(f"{k}={v}" for k, v in ov.items()) or "no overrides"


def write_manifest(out: Path, command: str, cfg: ExperimentConfig, points, seeds, grouped, extra=None):
    """``key: value`` lines covering every file under ``out`` with its hash."""
    cfg_text = (out / "config.ini").read_bytes()
    failed = [r for rs in grouped for r in rs if r.error is not None]
    ok = [r for rs in grouped for r in rs if r.error is None]
    lines = [
        f"tool: dircarto {dircarto.__version__}",
        f"command: {command}",
        "config: config.ini",
        f"config_sha256: {hashlib.sha256(cfg_text).hexdigest()}",
        f"seeds: {', '.join(str(s) for s in seeds)}",
        f"points: {len(points)}",
    ]
    for i, p in enumerate(points):
        lines.append(f"point {i + 1}: {p.label} ({_fmt_overrides(p.overrides)})")
    lines += [
        f"jobs_total: {sum(len(rs) for rs in grouped)}",
        f"jobs_failed: {len(failed)}",
        f"status: {'partial' if failed else 'complete'}",
        f"solver_max_iterations: {max((r.iterations for r in ok), default=0)}",
        f"solver_nonconverged_solves: {sum(r.nonconverged for r in ok)}",
        f"solver_lam_max: {_num(max((r.lam_max for r in ok), default=0.0))}",
        f"run_diagnostics: {sum(r.diagnostics for r in ok)}",
    ]
    sig = sorted({r.sigma2 for r in ok})
    if sig:
        lines.append(f"noise_sigma2_range: {_num(sig[0])} .. {_num(sig[-1])}")
    for r in failed:
        lines.append(f"failure point {r.point + 1} seed {r.seed}: {r.error}")
    for k, v in (extra or {}).items():
        lines.append(f"{k}: {v}")
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name != "manifest.txt" and not p.name.startswith("."))
    for p in files:
        lines.append(f"artifact {p.relative_to(out).as_posix()}: sha256 {sha256_file(p)} bytes {p.stat().st_size}")
    _write_atomic(out / "manifest.txt", "\n".join(lines) + "\n")


def sweep(cfg: ExperimentConfig, points, seeds, out, jobs: int = 1, command: str = "sweep", maps: str = "first"):
    """Run a sweep and write config, per-trial files, summaries and manifest.

    Returns the grouped summaries; ``status`` in the manifest is ``partial``
    when any job failed.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _write_atomic(out / "config.ini", dump_config(cfg))
    grouped = execute(points, seeds, out, jobs, maps)
    _write_atomic(out / "summary.csv", summary_csv(points, grouped))
    _write_atomic(out / "mean_error.csv", mean_trace_csv(points, grouped, "errors"))
    if any(not np.all(np.isnan(r.disagreement)) for rs in grouped for r in rs if r.error is None):
        _write_atomic(out / "mean_disagreement.csv", mean_trace_csv(points, grouped, "disagreement"))
    write_manifest(out, command, cfg, points, seeds, grouped)
    return grouped
