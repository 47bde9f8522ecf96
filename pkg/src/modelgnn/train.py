"""Reverse-mode gradients, Adam, and the unsupervised SE / EE training loops.

Training follows an internal unit convention: channels are scaled by
sqrt(p_max / sigma2) before entering the network, after which the budget and
the noise power are both 1.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch

from . import gnn
from .errors import InvalidArgumentError, NumericError
from .scenario import ChannelDataset, apply_snr_scaling

RHO_DEFAULT = 1.0 / 0.311
P_C_DEFAULT = 17.6
P_0_DEFAULT = 43.3
PA_WATTS_PER_ANTENNA = 20.0


@dataclass
class TrainConfig:
    loss: str = "se"
    learning_rate: float | None = None
    batch_size: int = 100
    epochs: int = 50
    r_min: float = 0.0
    # multiplier on the scale of EE (~1e-2 bit/s/Hz/W); larger values let the
    # hinge term dominate and pin the policy at full power
    beta: float = 0.01
    lambda_init: float = 0.01
    rho: float = RHO_DEFAULT
    p_c: float = P_C_DEFAULT
    p_0: float = P_0_DEFAULT
    p_max_watts: float | None = None  # radiated budget; None means 20 W per antenna
    seed: int = 0

    def __post_init__(self):
        if self.loss not in ("se", "ee"):
            raise InvalidArgumentError(f"unknown loss {self.loss!r}")
        if self.learning_rate is None:
            self.learning_rate = 0.001 if self.loss == "ee" else 0.01
        if not self.learning_rate > 0:
            raise InvalidArgumentError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise InvalidArgumentError("batch_size must be >= 1 and epochs >= 0")
        if self.r_min < 0:
            raise InvalidArgumentError("r_min must be non-negative")
        if self.p_max_watts is not None and not self.p_max_watts > 0:
            raise InvalidArgumentError("p_max_watts must be positive")

    def budget_watts(self, n_antennas: int) -> float:
        if self.p_max_watts is not None:
            return float(self.p_max_watts)
        return PA_WATTS_PER_ANTENNA * n_antennas


@dataclass
class AdamState:
    m: list[torch.Tensor]
    v: list[torch.Tensor]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, tensors: Sequence[torch.Tensor]):
        return cls([torch.zeros_like(t) for t in tensors], [torch.zeros_like(t) for t in tensors])


@dataclass
class TrainHistory:
    loss: list[float] = field(default_factory=list)
    val_metric: list[float] = field(default_factory=list)
    csr: list[float] = field(default_factory=list)
    multiplier: list[float] = field(default_factory=list)
    wall_clock: list[float] = field(default_factory=list)

    def __len__(self):
        return len(self.loss)


# ---------------------------------------------------------------------------
# differentiable objectives


def rates_torch(H: torch.Tensor, V: torch.Tensor, sigma2: float = 1.0) -> torch.Tensor:
    """Per-user rates ``(..., K)`` for single-cell ``(..., N, K)`` inputs."""
    G = torch.einsum("...nk,...nj->...kj", H.conj(), V)
    G = G.real ** 2 + G.imag ** 2
    signal = torch.diagonal(G, dim1=-2, dim2=-1)
    interference = G.sum(dim=-1) - signal
    return torch.log2(1.0 + signal / (interference + sigma2))


def rates_multicell_torch(H: torch.Tensor, V: torch.Tensor, sigma2: float = 1.0) -> torch.Tensor:
    """Per-user rates ``(..., M, K)``; H is ``(..., M, M, N, K)``, V is ``(..., M, N, K)``."""
    g = torch.einsum("...imnk,...inj->...mkij", H.conj(), V)
    g = g.real ** 2 + g.imag ** 2
    M, K = g.shape[-4], g.shape[-3]
    signal = g.reshape(*g.shape[:-4], M * K, M * K).diagonal(dim1=-2, dim2=-1)
    signal = signal.reshape(*g.shape[:-4], M, K)
    interference = g.sum(dim=(-2, -1)) - signal
    return torch.log2(1.0 + signal / (interference + sigma2))


def power_torch(V: torch.Tensor) -> torch.Tensor:
    return torch.sum(V.real ** 2 + V.imag ** 2, dim=(-2, -1))


def project_to_budget(V: torch.Tensor, p_max: float = 1.0) -> torch.Tensor:
    """Scale down to sqrt(p_max) V / ||V|| only where the budget is exceeded."""
    p = power_torch(V)
    scale = torch.where(p > p_max, torch.sqrt(p_max / p), torch.ones_like(p))
    return V * scale[..., None, None]


def energy_efficiency_torch(H, V, cfg: TrainConfig) -> tuple[torch.Tensor, torch.Tensor]:
    """EE in bit/s/Hz per watt and per-user rates, for internal-unit V (budget 1)."""
    rates = rates_torch(H, V)
    n = H.shape[-2]
    consumed = cfg.rho * cfg.budget_watts(n) * power_torch(V) + n * cfg.p_c + cfg.p_0
    return rates.sum(dim=-1) / consumed, rates


def se_loss(params, H: torch.Tensor) -> torch.Tensor:
    """Per-sample negative sum rate (unit budget, unit noise)."""
    if isinstance(params, gnn.MultiCellModelParams):
        V = gnn.multicell_forward(H, params, 1.0)
        return -rates_multicell_torch(H, V).sum(dim=(-2, -1))
    V = gnn.forward(H, params, 1.0)
    return -rates_torch(H, V).sum(dim=-1)


def ee_precoder(H: torch.Tensor, params, adapter: gnn.ScaleAdapter | None) -> torch.Tensor:
    V = gnn.forward(H, params, 1.0)
    if adapter is not None:
        eta = gnn.scale_adapter_forward(adapter, torch.tensor(float(H.shape[-1])))
        V = V * eta
    return project_to_budget(V, 1.0)


def ee_loss(params, adapter, H: torch.Tensor, cfg: TrainConfig, multiplier: float):
    """Per-sample Lagrangian: -EE + lambda * mean_k relu(r_min - R_k); also returns violations."""
    V = ee_precoder(H, params, adapter)
    ee, rates = energy_efficiency_torch(H, V, cfg)
    violation = torch.relu(cfg.r_min - rates).mean(dim=-1)
    return -ee + multiplier * violation, violation


# ---------------------------------------------------------------------------
# gradients and optimizer


def _param_list(params) -> list[torch.Tensor]:
    if hasattr(params, "tensors"):
        return list(params.tensors())
    return list(params)


def _rebuild(params, tensors):
    if hasattr(params, "with_tensors"):
        return params.with_tensors(tensors)
    return list(tensors)


def gradient(loss: Callable, params, batch, *, return_loss: bool = False):
    """Gradient of the batch-mean of ``loss(params, batch)``.

    ``loss`` returns a scalar or one value per sample; a non-finite value
    raises :class:`NumericError` naming the first offending sample.
    """
    leaves = [t.detach().clone().requires_grad_(True) for t in _param_list(params)]
    values = loss(_rebuild(params, leaves), batch)
    values = torch.as_tensor(values)
    flat = values.reshape(-1)
    bad = ~torch.isfinite(flat.detach())
    if bool(bad.any()):
        raise NumericError("non-finite loss", int(torch.nonzero(bad)[0]))
    total = flat.mean()
    if total.requires_grad:
        grads = torch.autograd.grad(total, leaves, allow_unused=True)
    else:
        grads = [None] * len(leaves)
    grads = [torch.zeros_like(t) if g is None else g for t, g in zip(leaves, grads)]
    return (grads, float(total.detach())) if return_loss else grads


def adam_step(params: Sequence[torch.Tensor], grads: Sequence[torch.Tensor], state: AdamState,
              lr: float):
    """One bias-corrected Adam update; returns new parameter tensors and the state."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise InvalidArgumentError("parameter, gradient and state lengths differ")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    out = []
    with torch.no_grad():
        for i, (p, g) in enumerate(zip(params, grads)):
            if p.shape != g.shape or p.shape != state.m[i].shape:
                raise InvalidArgumentError(f"shape mismatch at parameter {i}")
            state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
            state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
            step = lr * (state.m[i] / c1) / (torch.sqrt(state.v[i] / c2) + state.eps)
            out.append(p.detach() - step)
    return out, state


# ---------------------------------------------------------------------------
# data handling


def scaled_samples(data, p_max: float | None = None, sigma2: float | None = None):
    """Normalize the accepted dataset forms into a list of SNR-scaled complex arrays.

    ``data`` is a ChannelDataset (its config supplies power and noise), a
    stacked array, or a list of per-sample arrays (variable K allowed).
    """
    if isinstance(data, ChannelDataset):
        p_max = data.config.p_max if p_max is None else p_max
        sigma2 = data.config.sigma2 if sigma2 is None else sigma2
        arr = data.single_cell() if data.config.M == 1 else data.tensor
        return [apply_snr_scaling(h, p_max, sigma2) for h in arr]
    p_max = 1.0 if p_max is None else p_max
    sigma2 = 1.0 if sigma2 is None else sigma2
    return [apply_snr_scaling(np.asarray(h, dtype=np.complex128), p_max, sigma2) for h in data]


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def grouped_per_sample(fn, samples, idx):
    """Apply ``fn(H_stack)`` to samples grouped by shape; returns per-sample values in ``idx`` order.

    Parameter shapes do not depend on (N, K), so grouping equal shapes is
    exactly per-sample evaluation.
    """
    groups: dict[tuple, list[int]] = {}
    for pos, i in enumerate(idx):
        groups.setdefault(samples[i].shape, []).append(pos)
    out = [None] * len(idx)
    for positions in groups.values():
        H = torch.as_tensor(np.stack([samples[idx[p]] for p in positions]))
        vals = fn(H)
        for j, p in enumerate(positions):
            out[p] = vals[j] if isinstance(vals, torch.Tensor) else [v[j] for v in vals]
    return out


def _check_finite(values, idx):
    for pos, v in enumerate(values):
        if not bool(torch.isfinite(v.detach())):
            raise NumericError("non-finite loss", int(idx[pos]))


# ---------------------------------------------------------------------------
# training loops


def _validation_ratio(params, val):
    if val is None:
        return float("nan")
    from .metrics import precode_batch  # local import: metrics depends on this module
    H_val, oracle_rates = val
    learned = precode_batch(params, H_val)
    return 100.0 * float(np.mean(learned)) / float(np.mean(oracle_rates))


def train_se(data, params: gnn.GnnParams, config: TrainConfig | None = None, *,
             p_max: float | None = None, sigma2: float | None = None, val=None,
             callback=None):
    """Minimize the mean negative sum rate over ``data``.

    ``params`` are the initial weights (left untouched).  ``val`` is an
    optional ``(scaled_channels, oracle_sum_rates)`` pair evaluated each epoch.
    Returns the trained parameters and a :class:`TrainHistory`.
    """
    config = config or TrainConfig()
    samples = scaled_samples(data, p_max, sigma2)
    rng = np.random.default_rng(config.seed)
    current = params.clone()
    tensors = current.tensors()
    state = AdamState.zeros_like(tensors)
    history = TrainHistory()
    start = time.perf_counter()
    for _ in range(config.epochs):
        epoch_loss, seen = 0.0, 0
        for idx in _batches(len(samples), config.batch_size, rng):
            def batch_loss(p, idx):
                vals = grouped_per_sample(lambda H: se_loss(p, H), samples, idx)
                _check_finite(vals, idx)
                return torch.stack(vals)
            try:
                grads, value = gradient(batch_loss, current, idx, return_loss=True)
            except NumericError as exc:
                exc.params, exc.history = current, history
                raise
            tensors, state = adam_step(tensors, grads, state, config.learning_rate)
            current = current.with_tensors(tensors)
            epoch_loss += value * len(idx)
            seen += len(idx)
        history.loss.append(epoch_loss / max(seen, 1))
        history.val_metric.append(_validation_ratio(current, val))
        history.wall_clock.append(time.perf_counter() - start)
        if callback is not None:
            callback(current, history)
    return current, history


def train_ee(data, params: gnn.GnnParams, config: TrainConfig, adapter: gnn.ScaleAdapter | None = None,
             *, p_max: float | None = None, sigma2: float | None = None, callback=None):
    """Lagrangian training for energy efficiency under per-user minimum rates.

    The multiplier is shared by all users and updated once per epoch by
    ``lambda <- max(0, lambda + beta * mean violation)``.
    Returns ``(params, adapter, history)``.
    """
    if config.loss != "ee":
        raise InvalidArgumentError("train_ee needs an EE config")
    samples = scaled_samples(data, p_max, sigma2)
    rng = np.random.default_rng(config.seed)
    current = params.clone()
    adapter = (adapter or gnn.ScaleAdapter.init(config.seed)).clone()
    n_gnn = len(current.tensors())
    tensors = current.tensors() + adapter.tensors()
    state = AdamState.zeros_like(tensors)
    multiplier = float(config.lambda_init)
    history = TrainHistory()
    start = time.perf_counter()
    for _ in range(config.epochs):
        epoch_loss, epoch_violation, seen = 0.0, 0.0, 0
        satisfied = total_users = 0
        for idx in _batches(len(samples), config.batch_size, rng):
            stats = {}

            def batch_loss(ts, idx):
                p = current.with_tensors(ts[:n_gnn])
                a = adapter.with_tensors(ts[n_gnn:])

                def per_group(H):
                    loss, viol = ee_loss(p, a, H, config, multiplier)
                    return loss, viol
                vals = grouped_per_sample(per_group, samples, idx)
                losses = torch.stack([v[0] for v in vals])
                _check_finite(losses, idx)
                stats["violation"] = float(torch.stack([v[1] for v in vals]).detach().sum())
                return losses
            try:
                grads, value = gradient(batch_loss, tensors, idx, return_loss=True)
            except NumericError as exc:
                exc.params, exc.history = current, history
                raise
            tensors, state = adam_step(tensors, grads, state, config.learning_rate)
            current = current.with_tensors(tensors[:n_gnn])
            adapter = adapter.with_tensors(tensors[n_gnn:])
            epoch_loss += value * len(idx)
            epoch_violation += stats["violation"]
            seen += len(idx)
        mean_violation = epoch_violation / max(seen, 1)
        multiplier = max(0.0, multiplier + config.beta * mean_violation)
        with torch.no_grad():
            for i in range(0, len(samples), 256):
                chunk = list(range(i, min(i + 256, len(samples))))
                rates = grouped_per_sample(
                    lambda H: rates_torch(H, ee_precoder(H, current, adapter)), samples, chunk)
                for r in rates:
                    satisfied += int((r >= config.r_min).sum())
                    total_users += r.numel()
        history.loss.append(epoch_loss / max(seen, 1))
        history.csr.append(100.0 * satisfied / max(total_users, 1))
        history.multiplier.append(multiplier)
        history.wall_clock.append(time.perf_counter() - start)
        if callback is not None:
            callback(current, history)
    history.final_multiplier = multiplier
    history.adam_steps = state.step
    return current, adapter, history


def train_se_multicell(data, params: gnn.MultiCellModelParams, config: TrainConfig | None = None,
                       **kwargs):
    """Multi-cell variant: same loop, per-BS normalization and the coordinated sum rate."""
    if not isinstance(params, gnn.MultiCellModelParams):
        raise InvalidArgumentError("multi-cell training needs MultiCellModelParams")
    return train_se(data, params, config, **kwargs)


def smoothed(values, window: int = 5) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if len(values) < window:
        return values
    return np.convolve(values, np.ones(window) / window, mode="valid")


def is_finite_number(x) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)
