"""Closed sensing loop: measure, estimate, re-steer.

Slots run ``t = 1..T``. All sensors start from random beams; after the
estimate of slot ``t`` the beams for ``t + 1`` are tracking beams when
``t % B == 0`` and discovery beams otherwise. The estimator sees the last
``min(t, B)`` slots of measurements.

Centralized mode keeps one fusion-center estimate and updates discovery beams
greedily in sensor order, each sensor seeing the rows already committed in
the same slot. Distributed mode keeps one estimate per sensor; sensor ``n``
uses only rows from its neighborhood and its neighbors' estimates from the
previous slot, so the order sensors are processed in does not matter.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from itertools import combinations

import numpy as np

from dircarto.array import ArrayConfig, build_manifold, effective_row, gamma_row, random_beam
from dircarto.beams import BeamWindow, next_discovery, tracking_beam
from dircarto.carto import normalized_error
from dircarto.errors import ConfigError, PreconditionError
from dircarto.rxsim import NoiseModel, measure_rss, sigma2_for_snr
from dircarto.scene import Scenario
from dircarto.seeding import substream
from dircarto.sparse import MeasurementWindow, PowerEstimate, SolverConfig, solve_consensus, solve_lasso

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrackerConfig:
    block: int = 6
    mode: str = "centralized"
    solver: SolverConfig = SolverConfig()
    beams: str = "adaptive"  # "fixed" holds the random initial beams, "random" redraws them every slot
    seed: int = 0

    def __post_init__(self):
        if int(self.block) != self.block or self.block < 2:
            raise ConfigError(f"block length must be an integer >= 2, got {self.block}", key="block")
        if self.beams not in ("adaptive", "fixed", "random"):
            raise ConfigError(f"beams must be adaptive, fixed or random, got {self.beams!r}", key="beams")
        if self.mode not in ("centralized", "distributed"):
            raise ConfigError(f"mode must be centralized or distributed, got {self.mode!r}", key="mode")


class ConnectivityGraph:
    """Symmetric sensor graph; every sensor is its own neighbor."""

    def __init__(self, n: int, edges=()):
        if n < 1:
            raise ConfigError("graph needs at least one node")
        adj = np.eye(n, dtype=bool)
        for i, j in edges:
            if not (0 <= i < n and 0 <= j < n):
                raise ConfigError(f"edge ({i}, {j}) outside {n} nodes", key="graph")
            adj[i, j] = adj[j, i] = True
        self.adjacency = adj

    @property
    def size(self) -> int:
        return self.adjacency.shape[0]

    def neighbors(self, n: int) -> list:
        return [int(i) for i in np.flatnonzero(self.adjacency[n])]

    def edges(self) -> list:
        return [(i, j) for i, j in combinations(range(self.size), 2) if self.adjacency[i, j]]

    def contains(self, other: "ConnectivityGraph") -> bool:
        return bool(np.all(self.adjacency[other.adjacency]))

    @classmethod
    def complete(cls, n):
        return cls(n, combinations(range(n), 2))

    @classmethod
    def ring(cls, n, hops=1):
        """Circulant graph linking each node to the next ``hops`` nodes on a ring."""
        return cls(n, [(i, (i + h) % n) for i in range(n) for h in range(1, hops + 1) if (i + h) % n != i])

    @classmethod
    def parse(cls, n, text):
        """Edge list, one ``i j`` pair per line, 1-indexed; ``#`` starts a comment."""
        edges = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                i, j = (int(p) for p in parts)
            except ValueError:
                raise ConfigError(f"expected 'i j', got {line!r}", key="graph", line=lineno) from None
            if not (1 <= i <= n and 1 <= j <= n):
                raise ConfigError(f"edge ({i}, {j}) outside 1..{n}", key="graph", line=lineno)
            edges.append((i - 1, j - 1))
        return cls(n, edges)

    def to_text(self) -> str:
        return "".join(f"{i + 1} {j + 1}\n" for i, j in self.edges())


def consensus_disagreement(estimates) -> float:
    """Mean pairwise distance between estimates over their mean norm."""
    xs = [np.asarray(getattr(e, "x", e), dtype=float) for e in estimates]
    if len(xs) < 2:
        raise PreconditionError("disagreement needs at least two estimates")
    if len({x.shape for x in xs}) != 1:
        raise PreconditionError("estimates differ in length")
    X = np.array(xs)
    scale = np.mean(np.linalg.norm(X, axis=1))
    if scale == 0:
        return 0.0
    pair = np.mean([np.linalg.norm(X[i] - X[j]) for i, j in combinations(range(len(xs)), 2)])
    return float(pair / scale)


@dataclass
class World:
    """Scenario plus the sensing hardware and noise that observe it."""

    scenario: Scenario
    array: ArrayConfig = ArrayConfig()
    noise: NoiseModel = NoiseModel(deterministic=True)
    snr_db: float | None = None  # overrides noise.sigma2 once initial beams exist
    manifolds: list = field(default_factory=list)

    def __post_init__(self):
        if not self.manifolds:
            lay = self.scenario.layout
            self.manifolds = [
                build_manifold(self.array, self.scenario.grid, lay.positions[n], lay.broadside[n])
                for n in range(lay.count)
            ]


@dataclass
class Record:
    """One measurement with the beam that took it."""

    slot: int
    sensor: int
    beam: np.ndarray
    u: np.ndarray
    gamma: np.ndarray
    y: float
    noise_mean: float


@dataclass
class RunResult:
    """Traces of a run. ``estimates`` is (T, E, P) with E = 1 (fusion center)
    or N (one per sensor)."""

    mode: str
    truth: np.ndarray
    estimates: np.ndarray
    errors: np.ndarray  # (T, E)
    disagreement: np.ndarray  # (T,), NaN with a single estimator
    beams: np.ndarray  # (T, N, M)
    phases: list  # per slot: how its beams were chosen ("init", "track", "discover", "fixed", "random")
    records: list  # per slot: list of Record
    noise: NoiseModel
    diagnostics: list = field(default_factory=list)
    solver: list = field(default_factory=list)  # per slot: list of (iterations, kkt, lam, converged)

    @property
    def mean_error(self) -> np.ndarray:
        return self.errors.mean(axis=1)

    def events(self):
        for t in range(self.truth.shape[0]):
            for e in range(self.estimates.shape[1]):
                yield t + 1, e, self.estimates[t, e], self.errors[t, e], self.disagreement[t]


def _window(records, sensors, P, slots):
    rows = [r for t_recs in records for r in t_recs if r.sensor in sensors]
    if not rows:
        return MeasurementWindow.empty(P)
    return MeasurementWindow(
        np.array([r.y for r in rows]),
        np.array([r.gamma for r in rows]),
        np.array([r.noise_mean for r in rows]),
        slots=slots,
    )


def _beam_window(records, sensors, P, cap):
    win = BeamWindow(P, capacity=cap)
    for t_recs in records:
        for r in t_recs:
            if r.sensor in sensors:
                win.append(r.u)
    return win


def run(world: World, cfg: TrackerConfig = TrackerConfig(), graph: ConnectivityGraph | None = None) -> RunResult:
    """Simulate the full loop over every slot of the scenario."""
    sc = world.scenario
    N, P, T, B = sc.layout.count, sc.grid.size, sc.slots, cfg.block
    A = world.manifolds
    distributed = cfg.mode == "distributed"
    diagnostics = []
    if distributed:
        if graph is None:
            graph = ConnectivityGraph.complete(N)
        if graph.size != N:
            raise ConfigError(f"graph has {graph.size} nodes for {N} sensors", key="graph")
        hoods = [graph.neighbors(n) for n in range(N)]
        for n, h in enumerate(hoods):
            if h == [n] and N > 1:
                diagnostics.append(f"sensor {n} has no neighbors; running solo")
    else:
        hoods = [list(range(N))]
    E = len(hoods) if distributed else 1

    beams = [random_beam(substream(cfg.seed, "init-beam", n), world.array) for n in range(N)]
    noise = world.noise
    if world.snr_db is not None:
        sig = np.mean([gamma_row(A[n], beams[n]) @ sc.trajectory.at(1) for n in range(N)])
        noise = replace(noise, sigma2=sigma2_for_snr(world.snr_db, sig, world.array.gain))

    solver = cfg.solver
    if solver.lam_rule == "noise" and solver.snapshots is None:
        solver = replace(solver, snapshots=np.inf if noise.deterministic else noise.snapshots)

    estimates = np.zeros((T, E, P))
    errors = np.zeros((T, E))
    disagreement = np.full(T, np.nan)
    beam_trace = np.zeros((T, N, world.array.elements), dtype=complex)
    records, phases, solver_log = [], ["init"], []
    prev = [PowerEstimate(np.zeros(P), owner=str(e)) for e in range(E)]

    for t in range(1, T + 1):
        x = sc.trajectory.at(t)
        slot_recs = []
        for n in range(N):
            m = measure_rss(A[n], beams[n], x, noise, substream(cfg.seed, "rss", n, t), slot=t, sensor=n)
            slot_recs.append(Record(t, n, beams[n], effective_row(A[n], beams[n]), gamma_row(A[n], beams[n]), m.y, m.noise_mean))
            beam_trace[t - 1, n] = beams[n]
        records.append(slot_recs)
        recent = records[-B:]
        span = (max(1, t - B + 1), t)

        current = []
        for e, hood in enumerate(hoods):
            win = _window(recent, set(hood), P, span)
            owner = f"sensor{e}" if distributed else "fc"
            if distributed:
                # before the first slot every estimate is the zero vector
                anchors = [prev[i] for i in hood]
                est = solve_consensus(win, solver, anchors, warm=prev[e], owner=owner)
            else:
                est = solve_lasso(win, solver, warm=prev[e], owner=owner)
            diagnostics.extend(f"t={t} {owner}: {d}" for d in est.diagnostics)
            current.append(est)
        prev = current
        solver_log.append([(e.iterations, e.kkt, e.lam, e.converged) for e in current])
        for e, est in enumerate(current):
            estimates[t - 1, e] = est.x
            errors[t - 1, e] = normalized_error(x, est.x)
        if E > 1:
            disagreement[t - 1] = consensus_disagreement(current)

        if t == T:
            break
        if cfg.beams == "fixed":
            phases.append("fixed")
            continue
        if cfg.beams == "random":
            phases.append("random")
            beams = [random_beam(substream(cfg.seed, "beam", n, t + 1), world.array) for n in range(N)]
            continue
        scanned = records[-(B - 1):]
        if t % B == 0:
            phases.append("track")
            beams = [tracking_beam(A[n], current[n if distributed else 0].x, world.array,
                                   _beam_window(scanned, set(hoods[n if distributed else 0]), P, None))
                     for n in range(N)]
        else:
            phases.append("discover")
            if distributed:
                beams = [next_discovery(A[n], _beam_window(scanned, set(hoods[n]), P, None), world.array)
                         for n in range(N)]
            else:
                shared = _beam_window(scanned, set(range(N)), P, None)
                beams = [next_discovery(A[n], shared, world.array) for n in range(N)]

    return RunResult(
        mode=cfg.mode,
        truth=np.array(sc.trajectory.powers),
        estimates=estimates,
        errors=errors,
        disagreement=disagreement,
        beams=beam_trace,
        phases=phases,
        records=records,
        noise=noise,
        diagnostics=diagnostics,
        solver=solver_log,
    )
