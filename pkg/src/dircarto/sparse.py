"""Windowed nonnegative l1 recovery of grid powers.

The solver minimizes

    ||S ((y - m) - G x)||^2 + lam * sum_p c_p |x_p| + alpha * kappa * sum_i ||a_i - x||^2

over ``x >= 0`` (or all ``x`` when ``nonneg`` is off). ``a_i`` are neighbor
estimates; ``kappa`` is the median diagonal entry of the (row-scaled) Hessian,
so ``alpha`` is free of the units the propagation matrix carries and
compares the pull towards neighbors with the data curvature of a typical
grid point (``kappa = 1`` for an empty window).

``S`` scales residual ``i`` by ``mean(y) / y_i``: an RSS averaged over ``K``
snapshots spreads in proportion to its own mean, and the scaling equalizes
that spread across rows, and for exact data it fits relative rather than
absolute residuals across the wide RSS range. With ``rows = "auto"`` the
scaling is applied whenever ``snapshots`` is given (``inf`` included); a
window of unspecified origin keeps ``S = I``. ``c_p`` is the column norm of the scaled propagation
matrix, so the penalty thresholds every grid point at the same correlation
level. The default penalty is tied to the residual spread (``lam_rule =
"noise"``) and vanishes for exact data.

Propagation columns differ in norm by orders of magnitude (power falls as
``R**-4`` by default), so iterations run in column-equilibrated coordinates
``z = d * x`` with ``d_p`` the root of the Hessian diagonal. This is the same
objective under a diagonal metric. Every ``polish_every`` iterations the
current support is refined by an exact active-set solve restricted to it;
the result is kept only if it lowers the objective, so the objective trace
stays monotone.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from dircarto.errors import PreconditionError

log = logging.getLogger(__name__)


@dataclass
class MeasurementWindow:
    y: np.ndarray  # (rows,)
    gamma: np.ndarray  # (rows, P)
    noise_mean: np.ndarray  # (rows,)
    slots: tuple = (0, 0)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        self.gamma = np.asarray(self.gamma, dtype=float)
        if self.gamma.ndim == 1:
            self.gamma = self.gamma.reshape(self.y.size, -1)
        self.noise_mean = np.broadcast_to(np.asarray(self.noise_mean, dtype=float), self.y.shape).copy()
        if self.gamma.shape[0] != self.y.size:
            raise PreconditionError(f"{self.gamma.shape[0]} propagation rows for {self.y.size} measurements")

    @property
    def rows(self) -> int:
        return self.y.size

    @property
    def size(self) -> int:
        return self.gamma.shape[1]

    @property
    def target(self) -> np.ndarray:
        return self.y - self.noise_mean

    @classmethod
    def empty(cls, P: int):
        return cls(np.zeros(0), np.zeros((0, P)), np.zeros(0))


@dataclass(frozen=True)
class SolverConfig:
    lam: float | None = None  # None: chosen by lam_rule
    lam_rule: str = "noise"  # "ratio": lam_ratio * max_p |G_p^T b| / weight_p; "noise": see noise_lam
    lam_ratio: float = 0.01
    noise_scale: float = 1.0  # multiplier on the noise-level lam
    snapshots: float | None = None  # RSS averaging count behind each row; inf means exact data
    alpha: float = 0.0
    kappa: str = "median"  # consensus unit: "median" Hessian diagonal entry, or "spectral" = ||G||_2^2
    max_iters: int = 20000
    tol: float = 1e-9
    nonneg: bool = True
    accelerate: bool = True
    polish_every: int = 25  # 0 disables the exact refinement
    weighting: str = "column"  # "column": lam * sum_p ||G_p|| |x_p|; "uniform": lam * ||x||_1
    rows: str = "auto"  # "inverse": residual i scaled by mean(y) / y_i; "uniform": unscaled; "auto": inverse when snapshots is set

    def __post_init__(self):
        if self.lam is not None and not self.lam >= 0:
            raise PreconditionError(f"lam must be >= 0, got {self.lam}")
        if not self.lam_ratio >= 0:
            raise PreconditionError(f"lam_ratio must be >= 0, got {self.lam_ratio}")
        if not self.alpha >= 0:
            raise PreconditionError(f"alpha must be >= 0, got {self.alpha}")
        if not self.tol > 0:
            raise PreconditionError(f"tol must be > 0, got {self.tol}")
        if self.weighting not in ("column", "uniform"):
            raise PreconditionError(f"weighting must be 'column' or 'uniform', got {self.weighting!r}")
        if self.lam_rule not in ("ratio", "noise"):
            raise PreconditionError(f"lam_rule must be 'ratio' or 'noise', got {self.lam_rule!r}")
        if not self.noise_scale >= 0:
            raise PreconditionError(f"noise_scale must be >= 0, got {self.noise_scale}")
        if self.snapshots is not None and not self.snapshots >= 1:
            raise PreconditionError(f"snapshots must be >= 1, got {self.snapshots}")
        if self.kappa not in ("median", "spectral"):
            raise PreconditionError(f"kappa must be 'median' or 'spectral', got {self.kappa!r}")
        if self.rows not in ("auto", "inverse", "uniform"):
            raise PreconditionError(f"rows must be 'auto', 'inverse' or 'uniform', got {self.rows!r}")
        if self.max_iters < 1:
            raise PreconditionError(f"max_iters must be >= 1, got {self.max_iters}")


@dataclass
class PowerEstimate:
    x: np.ndarray
    slot: int = 0
    owner: str = "fc"
    iterations: int = 0
    objective: float = 0.0
    converged: bool = True
    lam: float = 0.0
    kkt: float = 0.0
    history: np.ndarray = field(default_factory=lambda: np.zeros(0))
    diagnostics: list = field(default_factory=list)


def power_iteration(apply, n: int, tol: float = 1e-6, max_iters: int = 500) -> float:
    """Largest eigenvalue of a PSD operator given as a matvec."""
    v = np.ones(n) / np.sqrt(n)
    lam = 0.0
    for _ in range(max_iters):
        Av = apply(v)
        new = float(np.linalg.norm(Av))
        if new == 0:
            return 0.0
        v = Av / new
        if abs(new - lam) <= tol * new:
            return new
        lam = new
    return lam


def noise_lam(y, snapshots, P: int, scale: float = 1.0, weighting: str = "column") -> float:
    """Noise-level penalty ``scale * 2 sigma sqrt(2 log P)`` for column weights.

    ``sigma`` is the residual spread of a row, ``rms(y) / sqrt(K)`` for RSS
    averaged over ``K`` snapshots (after inverse scaling every row has about
    the same). With column weighting this thresholds every grid point at the
    same z-score. Exact data (``K`` infinite or unset) gives zero.
    """
    y = np.asarray(y, dtype=float)
    if snapshots is None or np.isinf(snapshots) or y.size == 0:
        return 0.0
    if weighting != "column":
        raise PreconditionError("the noise-level penalty assumes column weighting")
    sigma = float(np.sqrt(np.mean(y * y))) / np.sqrt(snapshots)
    return scale * 2 * sigma * np.sqrt(2 * np.log(max(P, 2)))


def row_scale(y, floor: float = 1e-6) -> np.ndarray:
    """Residual weights ``mean(y) / y_i`` with ``y_i`` floored at ``floor * max(y)``.

    An averaged RSS has spread proportional to its own mean, so this makes
    every row equally trustworthy. All-zero data gets unit weights.
    """
    y = np.asarray(y, dtype=float)
    top = float(np.max(y, initial=0.0))
    if not top > 0:
        return np.ones(y.shape)
    yy = np.maximum(y, floor * top)
    return float(np.mean(yy)) / yy


class _Problem:
    """Quadratic-plus-weighted-l1 objective in its smooth/nonsmooth split."""

    def __init__(self, win: MeasurementWindow, cfg: SolverConfig, anchors):
        self.diagnostics = []
        G = win.gamma
        b = win.target
        keep = np.any(G != 0, axis=1)
        if not np.all(keep):
            self.diagnostics.append(f"dropped {int(np.sum(~keep))} all-zero propagation rows")
            G, b = G[keep], b[keep]
        scaled_y = win.y[keep]
        if (cfg.rows == "inverse" or (cfg.rows == "auto" and cfg.snapshots is not None)) and b.size:
            s = row_scale(scaled_y)
            G, b = G * s[:, None], b * s
            scaled_y = scaled_y * s
        self.P = win.size
        # smooth part: x^T (H + rho I) x - 2 h^T x + c0
        self.H = G.T @ G
        self.h = G.T @ b
        self.c0 = float(b @ b)

        colnorm = np.sqrt(np.diag(self.H))
        if cfg.weighting == "column":
            self.weights = colnorm
        else:
            self.weights = np.where(colnorm > 0, 1.0, 0.0)
        if cfg.lam is not None:
            self.lam = float(cfg.lam)
        elif cfg.lam_rule == "noise":
            self.lam = noise_lam(scaled_y, cfg.snapshots, self.P, cfg.noise_scale, cfg.weighting)
        else:
            seen = self.weights > 0
            self.lam = cfg.lam_ratio * float(np.max(np.abs(self.h[seen]) / self.weights[seen], initial=0.0))
        self.nonneg = cfg.nonneg

        self.rho = 0.0  # alpha * kappa * |N|
        if anchors is not None and cfg.alpha > 0 and len(anchors):
            A = np.asarray(anchors, dtype=float)
            if not G.shape[0]:
                kappa = 1.0
            elif cfg.kappa == "median":
                kappa = float(np.median(np.diag(self.H)))
            else:
                kappa = power_iteration(lambda v: self.H @ v, self.P)
            if kappa == 0:
                kappa = 1.0
            c = cfg.alpha * kappa
            self.rho = c * A.shape[0]
            self.h = self.h + c * A.sum(axis=0)
            self.c0 += c * float(np.sum(A * A))

        diag = np.diag(self.H) + self.rho
        self.dead = diag <= 0  # column never observed and no anchor
        self.d = np.sqrt(np.where(self.dead, 1.0, diag))
        inv = 1.0 / self.d
        self.L = power_iteration(lambda v: inv * (self.H @ (inv * v)) + self.rho * inv * inv * v, self.P)
        self.L = 2 * max(self.L, 1e-300) * 1.01
        self.ref = np.sqrt(self.c0)

    def hess(self, x):
        return self.H @ x + self.rho * x

    def grad(self, x):
        return 2 * (self.hess(x) - self.h)

    def objective(self, x):
        smooth = float(x @ self.hess(x)) - 2 * float(self.h @ x) + self.c0
        return max(smooth, 0.0) + self.lam * float(self.weights @ np.abs(x))

    def prox(self, v, step):
        """Prox of the weighted l1 term (+ nonnegativity) with per-coordinate steps."""
        t = self.lam * self.weights * step
        if self.nonneg:
            out = np.maximum(v - t, 0.0)
        else:
            out = np.sign(v) * np.maximum(np.abs(v) - t, 0.0)
        out[self.dead] = 0.0
        return out

    def _residual(self, x):
        g = self.grad(x)
        lw = self.lam * self.weights
        if self.nonneg:
            r = np.where(x > 0, g + lw, np.minimum(g + lw, 0.0))
        else:
            r = np.where(x != 0, g + lw * np.sign(x), np.sign(g) * np.maximum(np.abs(g) - lw, 0.0))
        r[self.dead] = 0.0
        return r / self.d

    def kkt(self, x):
        """Scaled projected-gradient residual, relative to ``sqrt(F(0))``."""
        r = float(np.linalg.norm(self._residual(x)))
        return r / self.ref if self.ref > 0 else r

    def _support_solve(self, S, rhs_shift):
        Q = self.H[np.ix_(S, S)] + self.rho * np.eye(S.size)
        rhs = self.h[S] - rhs_shift
        try:
            return np.linalg.solve(Q, rhs)
        except np.linalg.LinAlgError:
            return np.linalg.lstsq(Q, rhs, rcond=None)[0]

    def polish(self, x, tol):
        """Exact refinement from ``x``, or None.

        Nonnegative mode runs a Lawson-Hanson style active-set search seeded
        with the support of ``x``; signed mode re-solves on the current support
        and sign pattern.
        """
        if not self.nonneg:
            S = np.flatnonzero(x)
            if S.size == 0:
                return None
            sgn = np.sign(x[S])
            xs = self._support_solve(S, 0.5 * self.lam * self.weights[S] * sgn)
            if not np.all(np.isfinite(xs)) or np.any(np.sign(xs) != sgn):
                return None
            out = np.zeros_like(x)
            out[S] = xs
            return out

        half = 0.5 * self.lam * self.weights
        x = x.copy()
        passive = x > 0
        banned = self.dead.copy()
        for _ in range(2 * self.P + 2):
            for _inner in range(self.P + 1):
                S = np.flatnonzero(passive)
                if S.size == 0:
                    x[:] = 0.0
                    break
                s = self._support_solve(S, half[S])
                if not np.all(np.isfinite(s)):
                    return None
                if np.all(s > 0):
                    x[:] = 0.0
                    x[S] = s
                    break
                neg = s <= 0
                xs = x[S][neg]
                step = float(np.min(xs / (xs - s[neg])))
                x[S] += step * (s - x[S])
                drop = S[x[S] <= 0]
                if step == 0 and drop.size:
                    banned[drop] = True
                passive[drop] = False
                x[~passive] = 0.0
            r = self._residual(x)
            cand = ~passive & ~banned & (r < -tol * max(self.ref, 1e-300))
            if not np.any(cand):
                return x
            j = int(np.argmin(np.where(cand, r, np.inf)))
            passive[j] = True
        return x


def _solve(win, cfg, warm, anchors, owner):
    prob = _Problem(win, cfg, anchors)
    P = prob.P
    step = 1.0 / (prob.L * prob.d**2)  # coordinate steps of the scaled iteration

    x = np.zeros(P) if warm is None else np.array(getattr(warm, "x", warm), dtype=float)
    if x.shape != (P,):
        raise PreconditionError(f"warm start of length {x.shape} for {P} grid points")
    if prob.nonneg:
        x = np.maximum(x, 0.0)
    x[prob.dead] = 0.0
    F = prob.objective(x)
    history = [F]
    y, t_mom = x.copy(), 1.0
    kkt = prob.kkt(x)
    it = 0
    while kkt > cfg.tol and it < cfg.max_iters:
        it += 1
        z = prob.prox(y - step * prob.grad(y), step)
        Fz = prob.objective(z)
        x_old = x
        if Fz <= F:
            x, F = z, Fz
        if cfg.accelerate:
            t_new = 0.5 * (1 + np.sqrt(1 + 4 * t_mom * t_mom))
            y = x + (t_mom / t_new) * (z - x) + ((t_mom - 1) / t_new) * (x - x_old)
            t_mom = t_new
        else:
            y = x
        if cfg.polish_every and it % cfg.polish_every == 0:
            xp = prob.polish(x, cfg.tol)
            if xp is not None:
                Fp = prob.objective(xp)
                if Fp <= F:
                    x, F, y, t_mom = xp, Fp, xp.copy(), 1.0
        history.append(F)
        kkt = prob.kkt(x)

    converged = kkt <= cfg.tol
    diagnostics = list(prob.diagnostics)
    if not converged:
        diagnostics.append(f"no convergence after {it} iterations (kkt {kkt:.3g})")
        log.warning("%s: solver stopped at max_iters=%d with kkt residual %.3g", owner, cfg.max_iters, kkt)
    return PowerEstimate(
        x=x,
        slot=win.slots[1],
        owner=owner,
        iterations=it,
        objective=F,
        converged=converged,
        lam=prob.lam,
        kkt=kkt,
        history=np.asarray(history),
        diagnostics=diagnostics,
    )


def solve_lasso(win: MeasurementWindow, cfg: SolverConfig = SolverConfig(), warm=None, owner="fc") -> PowerEstimate:
    """Nonnegative lasso fit of the window, warm-started from ``warm``."""
    return _solve(win, cfg, warm, None, owner)


def solve_consensus(win: MeasurementWindow, cfg: SolverConfig, neighbors, warm=None, owner="fc") -> PowerEstimate:
    """Lasso fit pulled towards the neighbors' previous estimates.

    With ``alpha == 0`` this is exactly :func:`solve_lasso`.
    """
    anchors = [np.asarray(getattr(n, "x", n), dtype=float) for n in neighbors]
    for a in anchors:
        if a.shape != (win.size,):
            raise PreconditionError(f"neighbor estimate of length {a.shape} for {win.size} grid points")
    if cfg.alpha == 0:
        return _solve(win, cfg, warm, None, owner)
    return _solve(win, cfg, warm, anchors, owner)


def oracle_enumerate(win: MeasurementWindow, k_max: int) -> PowerEstimate:
    """Best nonnegative least-squares fit over all supports of size <= k_max.

    Residual ties (relative gap below 1e-12) go to the smaller support, then
    to the lexicographically smaller one.
    """
    P = win.size
    if P > 15 or k_max > 3:
        raise PreconditionError(f"exhaustive search limited to P <= 15 and k_max <= 3 (got P={P}, k_max={k_max})")
    G, b = win.gamma, win.target
    scale = max(float(np.linalg.norm(b)), 1e-300)
    best_x, best_r, best_key = np.zeros(P), float(np.linalg.norm(b)), ()
    for k in range(1, k_max + 1):
        for S in itertools.combinations(range(P), k):
            coef, r = nnls(G[:, S], b)
            x = np.zeros(P)
            x[list(S)] = coef
            key = tuple(int(i) for i in np.flatnonzero(x))
            better = r < best_r - 1e-12 * scale
            tie = abs(r - best_r) <= 1e-12 * scale
            if better or (tie and (len(key), key) < (len(best_key), best_key)):
                best_x, best_r, best_key = x, r, key
    return PowerEstimate(x=best_x, slot=win.slots[1], owner="oracle", objective=best_r**2)
