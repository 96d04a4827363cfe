"""Received-signal and RSS synthesis for one sensor and one slot."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dircarto.array import effective_row, gamma_row
from dircarto.errors import ConfigError, PreconditionError


@dataclass(frozen=True)
class NoiseModel:
    """Per-element noise variance and snapshot averaging.

    ``deterministic=True`` replaces the random RSS by its expectation
    ``gamma^T x + ||w||^2 sigma2``. ``symbols`` picks the source symbol law:
    circular Gaussian, or constant modulus with a uniform random phase. Both
    give ``E|s_p|^2 = x_p``.
    """

    sigma2: float = 0.0
    snapshots: int = 100
    deterministic: bool = False
    symbols: str = "gaussian"

    def __post_init__(self):
        if not (np.isfinite(self.sigma2) and self.sigma2 >= 0):
            raise ConfigError(f"noise variance must be >= 0, got {self.sigma2}", key="sigma2")
        if int(self.snapshots) != self.snapshots or self.snapshots < 1:
            raise ConfigError(f"snapshots must be an integer >= 1, got {self.snapshots}", key="snapshots")
        if self.symbols not in ("gaussian", "constant"):
            raise ConfigError(f"symbols must be gaussian or constant, got {self.symbols!r}", key="symbols")

    def mean(self, w: np.ndarray) -> float:
        return float(np.vdot(w, w).real) * self.sigma2


@dataclass(frozen=True)
class Measurement:
    slot: int
    sensor: int
    y: float
    beam: np.ndarray
    noise_mean: float


def _complex_normal(rng, size, var):
    return np.sqrt(var / 2) * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def synth_received(A, w, x, noise: NoiseModel, rng: np.random.Generator, size: int | None = None):
    """Baseband samples ``r = w^H A s + w^H z``.

    ``s_p ~ CN(0, x_p)`` (or ``sqrt(x_p) e^{j phi}`` for constant-modulus
    symbols) independently over points and samples, and ``z ~ CN(0, sigma2 I)``. Silent points are skipped, which is exact since
    their symbols are identically zero. Returns a scalar, or ``size`` samples.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise PreconditionError("source powers must be nonnegative")
    K = 1 if size is None else int(size)
    u = effective_row(A, w)
    active = np.flatnonzero(x)
    r = np.zeros(K, dtype=complex)
    if active.size:
        if noise.symbols == "constant":
            s = np.sqrt(x[active]) * np.exp(2j * np.pi * rng.random((K, active.size)))
        else:
            s = _complex_normal(rng, (K, active.size), x[active])
        r += s @ u[active]
    if noise.sigma2 > 0:
        z = _complex_normal(rng, (K, w.shape[0]), noise.sigma2)
        r += z @ w.conj()
    return r[0] if size is None else r


def measure_rss(A, w, x, noise: NoiseModel, rng: np.random.Generator | None, *, slot=0, sensor=0) -> Measurement:
    """RSS averaged over ``noise.snapshots`` independent samples."""
    m = noise.mean(w)
    if noise.deterministic:
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise PreconditionError("source powers must be nonnegative")
        y = float(gamma_row(A, w) @ x) + m
    else:
        r = synth_received(A, w, x, noise, rng, size=noise.snapshots)
        y = float(np.mean(r.real**2 + r.imag**2))
    return Measurement(slot, sensor, y, w, m)


def sigma2_for_snr(snr_db: float, expected_signal: float, gain: float) -> float:
    """Noise variance giving ``expected_signal / (gain * sigma2) = 10**(snr_db/10)``."""
    if np.isinf(snr_db) and snr_db > 0:
        return 0.0
    return float(expected_signal) / (gain * 10 ** (snr_db / 10))
