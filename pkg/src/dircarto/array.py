"""ULA manifold matrices and the propagation rows they induce.

A beam ``w`` turns the manifold ``A`` (M x P) into an effective row
``u = w^H A``; the expected RSS contribution of grid point ``p`` is
``|u_p|^2 x_p``. Path loss ``1 / R**eta`` multiplies the field, so power
falls off as ``1 / R**(2 * eta)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dircarto.errors import ConfigError, PreconditionError
from dircarto.scene import geometry


@dataclass(frozen=True)
class ArrayConfig:
    elements: int = 8
    spacing: float = 0.5  # meters
    wavelength: float = 1.0  # meters
    path_loss: float = 2.0
    gain: float = 1.0  # ||w||^2

    def __post_init__(self):
        if int(self.elements) != self.elements or self.elements < 1:
            raise ConfigError(f"elements must be an integer >= 1, got {self.elements}", key="elements")
        for name in ("spacing", "wavelength", "path_loss", "gain"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be positive, got {v}", key=name)


def build_manifold(config: ArrayConfig, points, sensor, broadside: float = np.pi / 2) -> np.ndarray:
    """Manifold of one sensor over all grid points.

    Entry ``(m, p)`` is ``R_p**-eta * exp(-2j*pi*d*m/lambda * sin(theta_p))``
    with ``m`` counted from 0.
    """
    pts = getattr(points, "points", points)
    R, theta = geometry(pts, sensor, broadside)
    m = np.arange(config.elements)[:, None]
    phase = -2j * np.pi * config.spacing / config.wavelength * m * np.sin(theta)[None, :]
    A = np.exp(phase) / R[None, :] ** config.path_loss
    A.setflags(write=False)
    return A


def effective_row(A: np.ndarray, w: np.ndarray) -> np.ndarray:
    if A.shape[0] != w.shape[0]:
        raise PreconditionError(f"beam length {w.shape[0]} does not match {A.shape[0]} elements")
    return w.conj() @ A


def gamma_row(A: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Propagation row ``gamma_p = |w^H a_p|^2``."""
    u = effective_row(A, w)
    return u.real**2 + u.imag**2


def normalize_beam(w: np.ndarray, gain: float) -> np.ndarray:
    norm = np.linalg.norm(w)
    if not norm > 0:
        raise PreconditionError("cannot normalize an all-zero beam")
    return np.sqrt(gain) * w / norm


def canonical_phase(v: np.ndarray) -> np.ndarray:
    """Rotate ``v`` so its largest-magnitude entry is real positive.

    Near-ties in magnitude go to the lowest index.
    """
    mag = np.abs(v)
    k = int(np.flatnonzero(mag >= mag.max() * (1 - 1e-9))[0])
    if mag[k] == 0:
        return v
    return v * (np.conj(v[k]) / mag[k])


def random_beam(rng: np.random.Generator, config: ArrayConfig) -> np.ndarray:
    w = rng.standard_normal(config.elements) + 1j * rng.standard_normal(config.elements)
    return normalize_beam(w, config.gain)
