"""Evaluation metrics, FLOP accounting, diagnostics and generalization sweeps."""
from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch

from . import gnn
from .errors import DegenerateInputError, InvalidArgumentError
from .scenario import apply_snr_scaling, sample_single_cell
from .wmmse import WmmseOptions, sum_rate, sum_rate_multicell, wmmse_p1


@dataclass
class MetricsRecord:
    se_ratio: float
    csr: float = 100.0
    ee_ratio: float | None = None
    per_user_rates: list = field(default_factory=list)
    flops: int = 0
    wall_clock: float = 0.0
    scenario: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.se_ratio >= 0:
            raise InvalidArgumentError("se_ratio must be non-negative")
        if not 0.0 <= self.csr <= 100.0:
            raise InvalidArgumentError("csr must lie in [0, 100]")

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# per-sample rates


def _rates(h, v, sigma2):
    h = np.asarray(h)
    if h.ndim == 4:
        return sum_rate_multicell(h, v, sigma2)[0].reshape(-1)
    return sum_rate(h, v, sigma2)[0]


def sum_rates(H_set, V_set, sigma2: float) -> np.ndarray:
    if len(H_set) != len(V_set):
        raise InvalidArgumentError("channel and precoder sets differ in length")
    return np.array([_rates(h, v, sigma2).sum() for h, v in zip(H_set, V_set)], dtype=float)


def per_user_rates(H_set, V_set, sigma2: float) -> list[float]:
    """Every user's rate over the whole set, sample-major."""
    return [float(r) for h, v in zip(H_set, V_set) for r in _rates(h, v, sigma2)]


def se_ratio(H_set, V_learned, V_oracle, sigma2: float) -> float:
    """100 * mean learned sum rate / mean oracle sum rate."""
    learned = sum_rates(H_set, V_learned, sigma2)
    oracle = sum_rates(H_set, V_oracle, sigma2)
    return ratio_of_means(learned, oracle)


def ratio_of_means(learned, oracle) -> float:
    denom = float(np.mean(oracle)) if len(oracle) else 0.0
    if not denom > 0:
        raise DegenerateInputError("oracle sum rate is zero")
    return 100.0 * float(np.mean(learned)) / denom


def ee(H, V, rho: float, p_c: float, p_0: float, sigma2: float, N: int | None = None) -> float:
    """Sum rate over consumed power rho * tr(V^H V) + N p_c + p_0."""
    H = np.asarray(H)
    V = np.asarray(V)
    if N is None:
        N = H.shape[-2]
    total = float(np.real(np.vdot(V, V)))
    if total == 0.0:
        return 0.0
    consumed = rho * total + N * p_c + p_0
    if not consumed > 0:
        raise InvalidArgumentError("consumed power must be positive")
    return float(_rates(H, V, sigma2).sum()) / consumed


def ee_physical(h, v, p_max: float, sigma2: float, budget_watts: float, rho: float, p_c: float,
                p_0: float) -> float:
    """EE with the abstract budget p_max mapped to ``budget_watts`` of radiated power.

    Only the ratio P/sigma2 is fixed by the SNR, so the noise power scales
    together with the budget and rates are unchanged.
    """
    scale = budget_watts / p_max
    h = np.asarray(h)
    return ee(h, np.asarray(v) * np.sqrt(scale), rho, p_c, p_0, sigma2 * scale, h.shape[-2])


def constraint_satisfaction_ratio(H_set, V_set, r_min: float, sigma2: float) -> float:
    """Percentage of (sample, user) pairs whose rate reaches r_min."""
    met = total = 0
    for h, v in zip(H_set, V_set):
        r = _rates(h, v, sigma2)
        met += int(np.sum(r >= r_min))
        total += r.size
    return 100.0 * met / total if total else 100.0


def normalized_correlation(H, V) -> np.ndarray:
    """|h_k^H v_k| / (||h_k|| ||v_k||) for every user k."""
    H = np.asarray(H, dtype=np.complex128)
    V = np.asarray(V, dtype=np.complex128)
    if H.shape != V.shape or H.ndim != 2:
        raise InvalidArgumentError("expected matching N x K matrices")
    hn = np.linalg.norm(H, axis=0)
    vn = np.linalg.norm(V, axis=0)
    if np.any(hn == 0) or np.any(vn == 0):
        raise DegenerateInputError("zero channel or precoder column")
    c = np.abs(np.sum(H.conj() * V, axis=0)) / (hn * vn)
    return np.minimum(c, 1.0)


def cdf_values(values: Iterable[float]) -> list[float]:
    """Sorted values, ready for an empirical-CDF plot."""
    return sorted(float(v) for v in np.ravel(np.asarray(list(values), dtype=float)))


# ---------------------------------------------------------------------------
# FLOPs


def flop_count(arch: str, N: int, K: int, widths: Sequence[int]) -> int:
    """Closed-form multiply/add count of one forward pass."""
    widths = [int(w) for w in widths]
    if len(widths) < 2:
        raise InvalidArgumentError("need at least two widths")
    total = 0
    for j_in, j_out in zip(widths[:-1], widths[1:]):
        if arch == "vanilla":
            total += 6 * N * K * j_out * j_in + 2 * N * K * j_in
        elif arch == "model":
            total += 2 * N * K * K * j_in + 12 * N * K * j_out * j_in - 2 * K * j_out * j_in \
                + 4 * N * K * j_in
        else:
            raise InvalidArgumentError(f"no FLOP formula for {arch!r}")
    return total


# ---------------------------------------------------------------------------
# running trained networks


def precode(params, H, *, p_max: float = 1.0, sigma2: float = 1.0,
            adapter: gnn.ScaleAdapter | None = None, ee_mode: bool = False) -> np.ndarray:
    """Physical-unit precoders of a trained network for stacked channels.

    The network sees sqrt(p_max/sigma2)-scaled channels and a unit budget;
    the output is rescaled by sqrt(p_max).
    """
    from .train import ee_precoder  # local import avoids a cycle
    H = np.asarray(H, dtype=np.complex128)
    scaled = torch.as_tensor(apply_snr_scaling(H, p_max, sigma2))
    with torch.no_grad():
        if ee_mode:
            V = ee_precoder(scaled, params, adapter)
        else:
            V = gnn.forward(scaled, params, 1.0)
    return V.numpy() * np.sqrt(p_max)


def precode_batch(params, H_scaled) -> np.ndarray:
    """Sum rates of the network on already-scaled channels (unit budget and noise)."""
    if isinstance(H_scaled, (list, tuple)):
        return np.array([precode_batch(params, h[None])[0] for h in H_scaled])
    V = precode(params, H_scaled)
    return sum_rates(list(H_scaled), list(V), 1.0)


def oracle_precoders(H_set, p_max: float, sigma2: float, opts: WmmseOptions | None = None):
    from .wmmse import wmmse_p2
    out = []
    for h in H_set:
        h = np.asarray(h)
        out.append(wmmse_p2(h, p_max, sigma2, opts)[0] if h.ndim == 4 else wmmse_p1(h, p_max, sigma2, opts)[0])
    return out


def generalization_sweep(params, N: int, K_list: Sequence[int], samples_per_K: int, snr_db: float,
                         oracle: str = "wmmse", seed: int = 0, opts: WmmseOptions | None = None,
                         scenario: str = "users") -> list[MetricsRecord]:
    """Evaluate one trained network at several user counts without retraining."""
    if oracle not in ("wmmse", "none"):
        raise InvalidArgumentError(f"unknown oracle {oracle!r}")
    sigma2 = 10.0 ** (-snr_db / 10.0)
    records = []
    for K in K_list:
        H = sample_single_cell(N, K, samples_per_K, seed + 7919 * int(K))
        t0 = time.perf_counter()
        V = precode(params, H, p_max=1.0, sigma2=sigma2)
        elapsed = time.perf_counter() - t0
        learned = sum_rates(list(H), list(V), sigma2)
        if oracle == "wmmse":
            ref = sum_rates(list(H), oracle_precoders(H, 1.0, sigma2, opts), sigma2)
            ratio = ratio_of_means(learned, ref)
        else:
            ratio = float(np.mean(learned))
        widths = params.widths
        arch = "vanilla" if isinstance(params, gnn.VanillaParams) else "model"
        records.append(MetricsRecord(
            se_ratio=ratio, per_user_rates=per_user_rates(list(H), list(V), sigma2),
            flops=flop_count(arch, N, K, widths), wall_clock=elapsed,
            scenario=f"{scenario}:N={N},K={K},snr={snr_db:g}"))
    return records


# ---------------------------------------------------------------------------
# output


def write_jsonl(path, records: Iterable[MetricsRecord | dict], append: bool = False) -> None:
    with open(path, "a" if append else "w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict() if isinstance(r, MetricsRecord) else r) + "\n")


def read_jsonl(path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


def write_csv(path, rows: Sequence[dict]) -> None:
    rows = list(rows)
    keys: list[str] = []
    for r in rows:
        keys.extend(k for k in r if k not in keys)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        writer.writerows(rows)
