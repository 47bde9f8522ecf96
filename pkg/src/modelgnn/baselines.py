"""Closed-form precoders: MRT, ZFBF, R-ZFBF, the optimal-structure form and TGNN.

All functions take a complex N x K channel and return an N x K precoding
matrix whose total power ``trace(V^H V)`` equals ``p_max``.
"""
from __future__ import annotations

import numpy as np

from .errors import DegenerateInputError, InvalidArgumentError
from .linalg import pinv_exact, taylor_iterates

POWER_SLACK = 1e-9


def power_of(V) -> float:
    V = np.asarray(V)
    return float(np.real(np.vdot(V, V)))


def is_power_feasible(V, p_max: float, rtol: float = POWER_SLACK) -> bool:
    return power_of(V) <= p_max * (1.0 + rtol)


def _channel(H) -> np.ndarray:
    H = np.asarray(H, dtype=np.complex128)
    if H.ndim != 2:
        raise InvalidArgumentError(f"expected N x K channel, got {H.shape}")
    return H


def _check_p(p_max):
    if not p_max > 0:
        raise InvalidArgumentError("p_max must be positive")


def equal_power_columns(D, p_max: float) -> np.ndarray:
    """Unit-norm columns of ``D`` scaled to p_max / K each."""
    D = np.asarray(D, dtype=np.complex128)
    norms = np.linalg.norm(D, axis=0)
    if np.any(norms == 0.0):
        raise InvalidArgumentError("zero column: direction undefined")
    return D / norms * np.sqrt(p_max / D.shape[1])


def power_normalize(V_raw, p_max: float) -> np.ndarray:
    """sqrt(p_max) V / ||V||_F, so the budget is met with equality."""
    _check_p(p_max)
    V_raw = np.asarray(V_raw, dtype=np.complex128)
    norm = np.linalg.norm(V_raw)
    if norm == 0.0 or not np.isfinite(norm):
        raise DegenerateInputError("cannot normalize a zero or non-finite precoder")
    return np.sqrt(p_max) * V_raw / norm


def mrt(H, p_max: float) -> np.ndarray:
    _check_p(p_max)
    return equal_power_columns(_channel(H), p_max)


def zfbf(H, p_max: float) -> np.ndarray:
    """Zero-forcing directions with equal per-user power."""
    _check_p(p_max)
    return equal_power_columns(pinv_exact(_channel(H)), p_max)


def rzf(H, p_max: float, sigma2: float) -> np.ndarray:
    _check_p(p_max)
    if not sigma2 >= 0:
        raise InvalidArgumentError("sigma2 must be non-negative")
    H = _channel(H)
    K = H.shape[1]
    G = H.conj().T @ H + (K * sigma2 / p_max) * np.eye(K)
    return power_normalize(H @ np.linalg.solve(G, np.eye(K)), p_max)


def structured_precoder(H, lambda_diag, t_diag, sigma2: float, p_max: float | None = None,
                        atol: float = 1e-6) -> np.ndarray:
    """Optimal-solution structure with given multipliers and user powers.

    Column k points along column k of H (Lambda H^H H + sigma2 I)^{-1} and
    carries power t_k, so the total power is trace(T).
    """
    H = _channel(H)
    lam = np.asarray(lambda_diag, dtype=float)
    t = np.asarray(t_diag, dtype=float)
    K = H.shape[1]
    if lam.shape != (K,) or t.shape != (K,):
        raise InvalidArgumentError("lambda_diag and t_diag need K entries")
    if np.any(lam <= 0) or np.any(t < 0):
        raise InvalidArgumentError("lambda must be positive and t non-negative")
    if p_max is None:
        p_max = float(t.sum())
    if abs(lam.sum() - p_max) > atol or abs(t.sum() - p_max) > atol:
        raise InvalidArgumentError(
            f"trace(Lambda)={lam.sum():.6g}, trace(T)={t.sum():.6g} must equal p_max={p_max:.6g}")
    F = lam[:, None] * (H.conj().T @ H) + sigma2 * np.eye(K)
    D = H @ np.linalg.solve(F, np.eye(K))
    norms = np.linalg.norm(D, axis=0)
    if np.any(norms == 0.0):
        raise InvalidArgumentError("zero channel column")
    return D / norms * np.sqrt(t)


def tgnn_precoder(H, iterations: int, p_max: float) -> np.ndarray:
    """Precoder of a perfectly trained TGNN: L scaled Taylor steps, equal power."""
    _check_p(p_max)
    D = taylor_iterates(_channel(H), iterations, "spectral_scaled")[-1]
    return equal_power_columns(D, p_max)


def zf_leakage(H, V) -> float:
    """max_{j != k} |h_j^H v_k|."""
    A = np.abs(np.asarray(H).conj().T @ np.asarray(V))
    np.fill_diagonal(A, 0.0)
    return float(A.max()) if A.size else 0.0


__all__ = [
    "power_of", "is_power_feasible", "equal_power_columns", "power_normalize",
    "mrt", "zfbf", "rzf", "structured_precoder", "tgnn_precoder", "zf_leakage",
]
