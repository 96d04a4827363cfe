"""Beam updates: D-optimal discovery, matched-filter tracking, null-space path.

Work happens on effective rows ``u = w^H A`` (length-P complex vectors). A
sensor can only realize rows in the span ``S`` of the rows of its manifold.
Adding a unit row ``u`` to a window with row span ``U`` multiplies the Gram
determinant by ``||(I - P_U) u||^2``, so the D-optimal next row is the top
eigenvector of the compression of ``I - P_U`` to ``S``.

When the optimum is not unique (e.g. an empty window, or a complement of
dimension > 1) the tie goes to the direction that a unit-norm beam receives
most strongly, i.e. the strongest right singular direction of the manifold
within the optimal set. The null-space path uses the same rule, so both paths
agree whenever the complement is non-trivial.
"""

from __future__ import annotations

import logging

import numpy as np

from dircarto.array import ArrayConfig, canonical_phase, effective_row, normalize_beam
from dircarto.errors import PreconditionError

log = logging.getLogger(__name__)

TIE_TOL = 1e-9
NULL_TOL = 1e-9


class BeamWindow:
    """Unit-normalized effective rows scanned recently.

    ``capacity`` bounds the number of rows kept (oldest dropped first).
    """

    def __init__(self, P: int, rows=(), capacity: int | None = None):
        self.P = P
        self.capacity = capacity
        self._rows = []
        for r in rows:
            self.append(r)

    def append(self, u):
        u = np.asarray(u, dtype=complex).reshape(-1)
        if u.size != self.P:
            raise PreconditionError(f"row of length {u.size} for window over {self.P} points")
        n = np.linalg.norm(u)
        if not n > 0:
            raise PreconditionError("cannot store an all-zero effective row")
        self._rows.append(u / n)
        if self.capacity is not None and len(self._rows) > self.capacity:
            del self._rows[0]

    def copy(self):
        out = BeamWindow(self.P, capacity=self.capacity)
        out._rows = list(self._rows)
        return out

    @property
    def rows(self) -> np.ndarray:
        if not self._rows:
            return np.zeros((0, self.P), dtype=complex)
        return np.array(self._rows)

    def __len__(self):
        return len(self._rows)

    def basis(self) -> np.ndarray:
        """Orthonormal basis (P, q) of the span of the stored rows."""
        R = self.rows
        if R.shape[0] == 0:
            return np.zeros((self.P, 0), dtype=complex)
        E, s, _ = np.linalg.svd(R.T, full_matrices=False)
        return E[:, s > s[0] * 1e-10]


def gram_det(rows) -> float:
    """Determinant of the Gram matrix of unit-normalized rows."""
    R = np.atleast_2d(np.asarray(rows, dtype=complex))
    if R.shape[0] == 0:
        return 1.0
    R = R / np.linalg.norm(R, axis=1, keepdims=True)
    return float(np.linalg.det(R @ R.conj().T).real)


def coverage_gain(window: BeamWindow, u) -> float:
    """Factor by which appending unit ``u`` multiplies the Gram determinant."""
    u = np.asarray(u, dtype=complex)
    u = u / np.linalg.norm(u)
    E = window.basis()
    res = u - E @ (E.conj().T @ u)
    return float(np.vdot(res, res).real)


def _row_space(A):
    """Orthonormal basis Q (P, r) of the realizable rows and manifold gains."""
    Q, s, _ = np.linalg.svd(A.T, full_matrices=False)
    keep = s > s[0] * 1e-12
    return Q[:, keep], s[keep] / s[0]


def _strongest(Z, s):
    """Unit vector in span(Z) (columns orthonormal) maximizing ||u|| / ||w||."""
    if Z.shape[1] == 1:
        return Z[:, 0]
    M = Z.conj().T @ (Z / (s**2)[:, None])
    vals, vecs = np.linalg.eigh(M)
    return Z @ vecs[:, 0]


def _row_to_beam(A, u, cfg: ArrayConfig):
    """Regularized least-squares beam realizing row ``u``, at gain ``cfg.gain``."""
    AAh = A @ A.conj().T
    eps = 1e-10 * np.trace(AAh).real / A.shape[0]
    K = AAh + eps * np.eye(A.shape[0])
    target = A @ u.conj()
    w = np.linalg.solve(K, target)
    # iterated Tikhonov: removes the eps bias for rows inside the row space
    for _ in range(3):
        w = w + np.linalg.solve(K, target - AAh @ w)
    return canonical_phase(normalize_beam(w, cfg.gain))


def _commit(A, w, window):
    if window is not None:
        window.append(effective_row(A, w))
    return w


def discovery_beam(A, window: BeamWindow | None, cfg: ArrayConfig, commit: bool = True):
    """D-optimal beam for sensor manifold ``A`` given the scanned ``window``.

    The realized row of the returned beam is appended to ``window`` when
    ``commit`` is set.
    """
    P = A.shape[1]
    if window is None:
        window = BeamWindow(P)
    Q, s = _row_space(A)
    E = window.basis()
    C = E.conj().T @ Q
    H = np.eye(Q.shape[1]) - C.conj().T @ C
    vals, vecs = np.linalg.eigh(H)
    top = vals[-1]
    if top < 1e-10:
        # row space already covered: take the direction the window covers least
        log.info("discovery: row space inside window span, using least-covered direction")
        Y = window.rows.conj() @ Q
        cov_vals, cov_vecs = np.linalg.eigh(Y.conj().T @ Y)
        z = cov_vecs[:, 0]
    else:
        z = _strongest(vecs[:, vals >= top - TIE_TOL], s)
    w = _row_to_beam(A, Q @ z, cfg)
    return _commit(A, w, window) if commit else w


def null_complement(A, window: BeamWindow | None):
    """Coordinates (in the row-space basis) of realizable rows orthogonal to
    every window row, with the basis and gains; ``None`` if there are none."""
    Q, s = _row_space(A)
    if window is None or len(window) == 0:
        return np.eye(Q.shape[1], dtype=complex), Q, s
    Y = window.rows.conj() @ Q
    _, sv, Vh = np.linalg.svd(Y, full_matrices=True)
    rank = int(np.sum(sv > NULL_TOL))
    Z = Vh[rank:].conj().T
    if Z.shape[1] == 0:
        return None
    return Z, Q, s


def nullspace_beam(A, window: BeamWindow | None, cfg: ArrayConfig, commit: bool = True):
    """Beam whose effective row is orthogonal to all window rows.

    Raises :class:`PreconditionError` when the complement is empty; use
    :func:`discovery_beam` then.
    """
    found = null_complement(A, window)
    if found is None:
        raise PreconditionError("window rows span the whole realizable row space; no null-space beam")
    Z, Q, s = found
    w = _row_to_beam(A, Q @ _strongest(Z, s), cfg)
    return _commit(A, w, window) if commit else w


def next_discovery(A, window: BeamWindow, cfg: ArrayConfig, commit: bool = True):
    """Null-space beam when one exists, the general D-optimal beam otherwise."""
    if null_complement(A, window) is not None:
        return nullspace_beam(A, window, cfg, commit)
    return discovery_beam(A, window, cfg, commit)


def tracking_beam(A, xhat, cfg: ArrayConfig, window: BeamWindow | None = None, commit: bool = True):
    """Matched-filter beam ``w ~ A xhat`` steered at the estimated field.

    Falls back to a discovery beam when the estimate is empty.
    """
    x = np.asarray(getattr(xhat, "x", xhat), dtype=float)
    if np.any(x < 0):
        raise PreconditionError("estimate must be nonnegative")
    wt = A @ x
    n = np.linalg.norm(wt)
    if not n > 0 or n < 1e-300:
        log.info("tracking: empty estimate, issuing discovery beam")
        return next_discovery(A, window if window is not None else BeamWindow(A.shape[1]), cfg, commit)
    w = canonical_phase(normalize_beam(wt, cfg.gain))
    return _commit(A, w, window) if commit else w
