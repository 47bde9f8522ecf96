"""Exact and iterative (first-order Taylor) pseudo-inverses of tall complex matrices."""
from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import InvalidArgumentError, SingularMatrixError

COND_LIMIT = 1e12
POWER_ITERATIONS = 20


def _as_matrix(H) -> np.ndarray:
    H = np.asarray(H, dtype=np.complex128)
    if H.ndim != 2:
        raise InvalidArgumentError(f"expected a matrix, got shape {H.shape}")
    if not np.all(np.isfinite(H)):
        raise InvalidArgumentError("matrix has non-finite entries")
    return H


def gram_inverse(H) -> np.ndarray:
    """(H^H H)^{-1} through a Cholesky solve with one refinement pass."""
    H = _as_matrix(H)
    n, k = H.shape
    if n < k:
        raise InvalidArgumentError(f"need N >= K, got {n}x{k}")
    G = H.conj().T @ H
    cond = np.linalg.cond(G) if np.any(G) else np.inf
    if not cond < COND_LIMIT:
        raise SingularMatrixError("H^H H is singular or ill-conditioned", cond)
    try:
        factor = scipy.linalg.cho_factor(G, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"Cholesky failed: {exc}", cond) from exc
    eye = np.eye(k, dtype=np.complex128)
    X = scipy.linalg.cho_solve(factor, eye)
    X = X + scipy.linalg.cho_solve(factor, eye - G @ X)
    return X


def pinv_exact(H) -> np.ndarray:
    """H (H^H H)^{-1} for a full-column-rank N x K matrix."""
    H = _as_matrix(H)
    return H @ gram_inverse(H)


def taylor_pinv_step(D, H) -> np.ndarray:
    """One expansion step: 2 D - D (H^H D)."""
    D = np.asarray(D, dtype=np.complex128)
    H = np.asarray(H, dtype=np.complex128)
    if D.shape != H.shape:
        raise InvalidArgumentError(f"shape mismatch {D.shape} vs {H.shape}")
    return 2.0 * D - D @ (H.conj().T @ D)


def spectral_norm_sq_estimate(H, iterations: int = POWER_ITERATIONS) -> float:
    """sigma_max(H)^2 by power iteration on H^H H from a fixed start vector."""
    H = np.asarray(H, dtype=np.complex128)
    G = H.conj().T @ H
    x = np.ones(G.shape[0], dtype=np.complex128) / np.sqrt(G.shape[0])
    lam = 0.0
    for _ in range(iterations):
        y = G @ x
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        x = y / norm
        lam = float(np.real(np.vdot(x, G @ x)))
    return lam


def taylor_init(H, init: str = "spectral_scaled") -> np.ndarray:
    H = np.asarray(H, dtype=np.complex128)
    if init == "paper_raw":
        return H.copy()
    if init == "spectral_scaled":
        lam = spectral_norm_sq_estimate(H)
        if lam <= 0.0:
            raise SingularMatrixError("zero channel matrix", np.inf)
        return H / lam
    raise InvalidArgumentError(f"unknown init {init!r}")


def taylor_iterates(H, iterations: int, init: str = "spectral_scaled") -> list[np.ndarray]:
    """All iterates D^(0..L) of the recursion."""
    if iterations < 0:
        raise InvalidArgumentError("iterations must be >= 0")
    H = _as_matrix(H)
    D = taylor_init(H, init)
    out = [D]
    for _ in range(iterations):
        D = taylor_pinv_step(D, H)
        out.append(D)
    return out


def taylor_pinv(H, iterations: int, init: str = "spectral_scaled"):
    """Iterated Taylor pseudo-inverse.

    Returns the final iterate and the Frobenius distance of every iterate to
    :func:`pinv_exact`.  With ``init="paper_raw"`` the recursion starts at H
    itself and is only locally convergent, so the trace may grow.
    """
    H = _as_matrix(H)
    if H.shape[0] < H.shape[1]:
        raise InvalidArgumentError(f"need N >= K, got {H.shape}")
    exact = pinv_exact(H)
    iterates = taylor_iterates(H, iterations, init)
    trace = [float(np.linalg.norm(D - exact)) for D in iterates]
    return iterates[-1], trace
