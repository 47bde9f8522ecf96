"""Sum-rate evaluation and the WMMSE oracle for single- and multi-cell downlinks.

Multi-cell channels use the layout ``H[i, m, :, k]`` = channel from the
antennas of BS ``i`` to user ``k`` of cell ``m``; precoders are stacked as
``V[m]`` (N x K) for the users served by BS ``m``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .baselines import mrt, rzf, zfbf
from .errors import ConsistencyError, InvalidArgumentError, SingularMatrixError

MONOTONE_TOL = 1e-9


@dataclass(frozen=True)
class WmmseOptions:
    max_iterations: int = 200
    objective_tolerance: float = 1e-5
    bisection_tolerance: float = 1e-8
    init: str = "best"
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise InvalidArgumentError("max_iterations must be >= 1")
        if not (self.objective_tolerance > 0 and self.bisection_tolerance > 0):
            raise InvalidArgumentError("tolerances must be positive")
        if self.init not in ("best", "mrt", "random"):
            raise InvalidArgumentError(f"unknown init {self.init!r}")


def sum_rate(H, V, sigma2: float):
    """Per-user rates log2(1 + SINR_k) and their sum for one cell."""
    H = np.asarray(H, dtype=np.complex128)
    V = np.asarray(V, dtype=np.complex128)
    if H.shape != V.shape:
        raise InvalidArgumentError(f"shape mismatch {H.shape} vs {V.shape}")
    G = np.abs(H.conj().T @ V) ** 2  # G[k, j] = |h_k^H v_j|^2
    signal = np.diag(G)
    interference = G.sum(axis=1) - signal
    rates = np.log2(1.0 + signal / (interference + sigma2))
    return rates, float(rates.sum())


def sum_rate_batch(H, V, sigma2: float) -> np.ndarray:
    """Sum rates of stacked (S, N, K) channels and precoders."""
    G = np.abs(np.einsum("snk,snj->skj", np.conj(H), V)) ** 2
    signal = np.diagonal(G, axis1=1, axis2=2)
    interference = G.sum(axis=2) - signal
    return np.log2(1.0 + signal / (interference + sigma2)).sum(axis=1)


def _cross_gains(H, V) -> np.ndarray:
    # g[m, k, i, j] = h_{k_m, i}^H v_{j_i}
    return np.einsum("imnk,inj->mkij", np.conj(H), V)


def _check_multicell(H, V=None):
    H = np.asarray(H, dtype=np.complex128)
    if H.ndim != 4 or H.shape[0] != H.shape[1]:
        raise InvalidArgumentError(f"expected (M, M, N, K) channels, got {H.shape}")
    if V is not None:
        V = np.asarray(V, dtype=np.complex128)
        M, _, N, K = H.shape
        if V.shape != (M, N, K):
            raise InvalidArgumentError(f"expected (M, N, K) precoders, got {V.shape}")
    return H, V


def sum_rate_multicell(H, V, sigma2: float):
    """Rates of every user ``(m, k)`` (an M x K array) and their sum."""
    H, V = _check_multicell(H, V)
    M, K = H.shape[0], H.shape[3]
    P = np.abs(_cross_gains(H, V)) ** 2
    mm, kk = np.meshgrid(np.arange(M), np.arange(K), indexing="ij")
    signal = P[mm, kk, mm, kk]
    interference = P.sum(axis=(2, 3)) - signal
    rates = np.log2(1.0 + signal / (interference + sigma2))
    return rates, float(rates.sum())


def _solve_power_dual(A, B, p_max, tol):
    """Minimize over V: tr(V^H A V) - 2 Re tr(V^H B) s.t. ||V||_F^2 <= p_max."""
    lam, U = np.linalg.eigh(A)
    lam = np.maximum(lam, 0.0)
    C = U.conj().T @ B
    weight = np.sum(np.abs(C) ** 2, axis=1)

    def power(mu):
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.sum(weight / (lam + mu) ** 2)
        return np.inf if not np.isfinite(val) else float(val)

    scale = max(float(lam.max()), 1e-300)
    if lam.min() > 1e-12 * scale and power(0.0) <= p_max:
        mu = 0.0
    else:
        lo, hi = 0.0, 1e-10 * scale
        while power(hi) > p_max:
            lo, hi = hi, hi * 4.0
        for _ in range(400):
            if p_max - power(hi) <= tol * p_max or hi - lo <= 1e-15 * hi:
                break
            mid = 0.5 * (lo + hi) if lo == 0.0 else np.sqrt(lo * hi)
            if power(mid) > p_max:
                lo = mid
            else:
                hi = mid
        mu = hi
    V = U @ (C / (lam + mu)[:, None])
    if mu > 0.0:
        # active budget: meet it with equality so the residual bisection gap
        # does not cost objective near convergence
        used = float(np.real(np.vdot(V, V)))
        if used > 0.0:
            V = V * np.sqrt(p_max / used)
    return V, mu


def _closed_form_starts(h, p_max, sigma2):
    N, K = h.shape
    yield "mrt", lambda: mrt(h, p_max)
    yield "rzf", lambda: rzf(h, p_max, sigma2)
    if N >= K:
        yield "zfbf", lambda: zfbf(h, p_max)


def _initial_precoders(H, p_max, sigma2, opts):
    M, _, N, K = H.shape
    if opts.init == "best":
        # each BS starts from whichever closed form serves its own cell best
        V = _initial_precoders(H, p_max, sigma2, WmmseOptions(init="mrt"))
        for m in range(M):
            best = sum_rate_multicell(H, V, sigma2)[1]
            for _, make in _closed_form_starts(H[m, m], p_max, sigma2):
                try:
                    cand = make()
                except (SingularMatrixError, InvalidArgumentError, np.linalg.LinAlgError):
                    continue
                trial = V.copy()
                trial[m] = cand
                rate = sum_rate_multicell(H, trial, sigma2)[1]
                if rate > best:
                    best, V = rate, trial
        return V
    if opts.init == "random":
        rng = np.random.default_rng(opts.seed)
        V = rng.standard_normal((M, N, K)) + 1j * rng.standard_normal((M, N, K))
        return V * np.sqrt(p_max) / np.linalg.norm(V, axis=(1, 2), keepdims=True)
    V = np.zeros((M, N, K), dtype=np.complex128)
    for m in range(M):
        h = H[m, m]
        norms = np.linalg.norm(h, axis=0)
        safe = np.where(norms > 0, norms, 1.0)
        V[m] = np.where(norms > 0, h / safe, 0.0) * np.sqrt(p_max / K)
    return V


def wmmse_p2(H, p_max: float, sigma2: float, opts: WmmseOptions | None = None):
    """WMMSE for coordinated multi-cell beamforming with a per-BS power budget.

    Returns ``(V, objective_trace)`` with ``V`` of shape (M, N, K); the trace
    holds the total sum rate after initialization and after every iteration.
    """
    opts = opts or WmmseOptions()
    if not (p_max > 0 and sigma2 > 0):
        raise InvalidArgumentError("p_max and sigma2 must be positive")
    H, _ = _check_multicell(H)
    M, _, N, K = H.shape
    if not np.any(H):
        return np.zeros((M, N, K), dtype=np.complex128), [0.0]

    V = _initial_precoders(H, p_max, sigma2, opts)
    trace = [sum_rate_multicell(H, V, sigma2)[1]]
    mm, kk = np.meshgrid(np.arange(M), np.arange(K), indexing="ij")
    for _ in range(opts.max_iterations):
        g = _cross_gains(H, V)
        total = np.sum(np.abs(g) ** 2, axis=(2, 3)) + sigma2
        s = g[mm, kk, mm, kk]
        u = s / total
        w = total / np.maximum(total - np.abs(s) ** 2, 1e-300)
        coef = w * np.abs(u) ** 2  # (M, K)
        V_new = np.empty_like(V)
        for i in range(M):
            Hi = H[i].transpose(1, 0, 2).reshape(N, M * K)  # columns: users of every cell
            A = (Hi * coef.reshape(-1)) @ Hi.conj().T
            B = H[i, i] * (w[i] * u[i])
            V_new[i], _ = _solve_power_dual(A, B, p_max, opts.bisection_tolerance)
        V = V_new
        trace.append(sum_rate_multicell(H, V, sigma2)[1])
        if trace[-1] < trace[-2] - MONOTONE_TOL * max(1.0, abs(trace[-2])):
            raise ConsistencyError(
                f"WMMSE objective decreased from {trace[-2]!r} to {trace[-1]!r}")
        if abs(trace[-1] - trace[-2]) < opts.objective_tolerance:
            break
    return V, trace


def wmmse_p1(H, p_max: float, sigma2: float, opts: WmmseOptions | None = None):
    """Single-cell WMMSE; returns an N x K precoder and the sum-rate trace."""
    H = np.asarray(H, dtype=np.complex128)
    if H.ndim != 2:
        raise InvalidArgumentError(f"expected N x K channel, got {H.shape}")
    V, trace = wmmse_p2(H[None, None], p_max, sigma2, opts)
    return V[0], trace


def wmmse_batch(H, p_max: float, sigma2: float, opts: WmmseOptions | None = None) -> np.ndarray:
    """Oracle precoders for stacked (S, N, K) or (S, M, M, N, K) channels."""
    H = np.asarray(H)
    if H.ndim == 3:
        return np.stack([wmmse_p1(h, p_max, sigma2, opts)[0] for h in H]) if len(H) else \
            np.zeros_like(H)
    return np.stack([wmmse_p2(h, p_max, sigma2, opts)[0] for h in H])


__all__ = ["WmmseOptions", "sum_rate", "sum_rate_batch", "sum_rate_multicell",
           "wmmse_p1", "wmmse_p2", "wmmse_batch"]
