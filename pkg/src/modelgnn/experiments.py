"""End-to-end experiment recipes shared by the acceptance suite and ``scripts/``.

Each recipe trains on freshly sampled channels, evaluates on a disjoint
held-out set and returns plain dictionaries, so callers can print, tabulate
or assert on them.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import torch

from . import baselines, gnn, metrics, train
from .scenario import ScenarioConfig, UserCountDistribution, sample_channel, sample_single_cell, \
    sample_variable_k
from .wmmse import sum_rate_multicell, wmmse_p2

TEST_SEED_OFFSET = 1_000_003


@dataclass
class SeRun:
    arch: str
    N: int
    K: int
    snr_db: float
    n_train: int = 1000
    n_test: int = 100
    epochs: int = 100
    batch_size: int = 100
    widths: list | None = None
    pooling: str = "sum"
    learning_rate: float | None = None
    seed: int = 0

    @property
    def sigma2(self) -> float:
        return 10.0 ** (-self.snr_db / 10.0)


_oracle_cache: dict = {}


def oracle_sum_rates(H: np.ndarray, sigma2: float) -> np.ndarray:
    """WMMSE sum rates for a stacked set, memoized on the array bytes."""
    key = (H.shape, sigma2, hash(H.tobytes()))
    if key not in _oracle_cache:
        V = metrics.oracle_precoders(H, 1.0, sigma2)
        _oracle_cache[key] = metrics.sum_rates(list(H), V, sigma2)
    return _oracle_cache[key]


def train_se_single(run: SeRun, H_train=None):
    """Train one single-cell network; returns (params, history, seconds)."""
    if H_train is None:
        H_train = sample_single_cell(run.N, run.K, run.n_train, run.seed)
    widths = run.widths or gnn.default_widths(run.arch, "se")
    params = gnn.init_params(run.arch, widths, seed=run.seed, pooling=run.pooling)
    cfg = train.TrainConfig(epochs=run.epochs, batch_size=run.batch_size,
                            learning_rate=run.learning_rate, seed=run.seed)
    t0 = time.perf_counter()
    params, hist = train.train_se(H_train, params, cfg, p_max=1.0, sigma2=run.sigma2)
    return params, hist, time.perf_counter() - t0


def se_ratio_run(run: SeRun) -> dict:
    """Train, then report the SE ratio against WMMSE on held-out channels."""
    params, hist, seconds = train_se_single(run)
    H_test = sample_single_cell(run.N, run.K, run.n_test, run.seed + TEST_SEED_OFFSET)
    V = metrics.precode(params, H_test, p_max=1.0, sigma2=run.sigma2)
    learned = metrics.sum_rates(list(H_test), list(V), run.sigma2)
    ratio = metrics.ratio_of_means(learned, oracle_sum_rates(H_test, run.sigma2))
    return {"arch": run.arch, "N": run.N, "K": run.K, "snr_db": run.snr_db, "seed": run.seed,
            "se_ratio": ratio, "train_seconds": seconds, "final_loss": hist.loss[-1],
            "params": params}


def correlation_run(run: SeRun) -> dict:
    """Median normalized correlation between each user's channel and its learned beam."""
    params, _, seconds = train_se_single(run)
    H_test = sample_single_cell(run.N, run.K, run.n_test, run.seed + TEST_SEED_OFFSET)
    V = metrics.precode(params, H_test, p_max=1.0, sigma2=run.sigma2)
    corr = np.concatenate([metrics.normalized_correlation(h, v) for h, v in zip(H_test, V)])
    return {"N": run.N, "K": run.K, "seed": run.seed, "median_correlation": float(np.median(corr)),
            "correlations": corr, "train_seconds": seconds}


def generalization_run(arch: str, N: int, mean_k: float, K_eval, snr_db: float, *, n_train: int,
                       n_test: int, epochs: int, widths=None, seed: int = 0,
                       batch_size: int = 100, learning_rate: float | None = None) -> dict:
    """Train once with K drawn from an exponential law, then evaluate at several fixed K."""
    sigma2 = 10.0 ** (-snr_db / 10.0)
    data = sample_variable_k(N, UserCountDistribution.exponential(mean_k), n_train, seed)
    params = gnn.init_params(arch, widths or gnn.default_widths(arch, "se"), seed=seed)
    cfg = train.TrainConfig(epochs=epochs, batch_size=batch_size, learning_rate=learning_rate,
                            seed=seed)
    t0 = time.perf_counter()
    params, _ = train.train_se(data, params, cfg, p_max=1.0, sigma2=sigma2)
    seconds = time.perf_counter() - t0
    ratios = {}
    for K in K_eval:
        H_test = sample_single_cell(N, K, n_test, seed + TEST_SEED_OFFSET + K)
        V = metrics.precode(params, H_test, p_max=1.0, sigma2=sigma2)
        learned = metrics.sum_rates(list(H_test), list(V), sigma2)
        ratios[K] = metrics.ratio_of_means(learned, oracle_sum_rates(H_test, sigma2))
    return {"arch": arch, "N": N, "seed": seed, "se_ratio": ratios, "train_seconds": seconds}


def multicell_run(M: int, N: int, K: int, snr_db: float, *, n_train: int = 1000, n_test: int = 100,
                  epochs: int = 100, widths=None, seed: int = 0, batch_size: int = 100,
                  learning_rate: float | None = None, omit_nonneighbor: bool = True) -> dict:
    """Coordinated multi-cell Model-GNN against the multi-cell WMMSE oracle."""
    sigma2 = 10.0 ** (-snr_db / 10.0)
    H_train = sample_channel(ScenarioConfig(M, N, K, seed=seed), n_train).tensor
    H_test = sample_channel(ScenarioConfig(M, N, K, seed=seed + TEST_SEED_OFFSET), n_test).tensor
    params = gnn.init_params("model-multicell", widths or gnn.default_widths("model-multicell"), seed=seed,
                             omit_nonneighbor=omit_nonneighbor)
    cfg = train.TrainConfig(epochs=epochs, batch_size=batch_size, learning_rate=learning_rate,
                            seed=seed)
    t0 = time.perf_counter()
    params, _ = train.train_se_multicell(H_train, params, cfg, p_max=1.0, sigma2=sigma2)
    seconds = time.perf_counter() - t0
    V = metrics.precode(params, H_test, p_max=1.0, sigma2=sigma2)
    learned = np.array([sum_rate_multicell(h, v, sigma2)[1] for h, v in zip(H_test, V)])
    oracle = np.array([sum_rate_multicell(h, wmmse_p2(h, 1.0, sigma2)[0], sigma2)[1] for h in H_test])
    return {"M": M, "N": N, "K": K, "seed": seed, "se_ratio": metrics.ratio_of_means(learned, oracle),
            "train_seconds": seconds}


def ee_run(N: int, K: int, snr_db: float, r_min: float, *, n_train: int = 1000, n_test: int = 100,
           epochs: int = 200, seed: int = 0, **train_kwargs) -> dict:
    """EE-trained Model-GNN with scale adapter versus full-power ZFBF on held-out channels."""
    sigma2 = 10.0 ** (-snr_db / 10.0)
    cfg = train.TrainConfig(loss="ee", epochs=epochs, r_min=r_min, seed=seed, **train_kwargs)
    H_train = sample_single_cell(N, K, n_train, seed)
    H_test = sample_single_cell(N, K, n_test, seed + TEST_SEED_OFFSET)
    params = gnn.init_params("model", gnn.default_widths("model", "ee"), seed=seed)
    t0 = time.perf_counter()
    params, adapter, hist = train.train_ee(H_train, params, cfg, p_max=1.0, sigma2=sigma2)
    seconds = time.perf_counter() - t0
    V = metrics.precode(params, H_test, p_max=1.0, sigma2=sigma2, adapter=adapter, ee_mode=True)
    budget = cfg.budget_watts(N)

    def ee_watts(h, v):
        return metrics.ee_physical(h, v, 1.0, sigma2, budget, cfg.rho, cfg.p_c, cfg.p_0)

    ee_learned = np.array([ee_watts(h, v) for h, v in zip(H_test, V)])
    ee_zf = np.array([ee_watts(h, baselines.zfbf(h, 1.0)) for h in H_test])
    powers = np.array([baselines.power_of(v) for v in V])
    with torch.no_grad():
        eta = float(gnn.scale_adapter_forward(adapter, torch.tensor(float(K))))
    return {"N": N, "K": K, "seed": seed, "ee": float(ee_learned.mean()),
            "ee_zfbf_full_power": float(ee_zf.mean()),
            "csr": metrics.constraint_satisfaction_ratio(list(H_test), list(V), r_min, sigma2),
            "max_power": float(powers.max()), "mean_power": float(powers.mean()), "eta": eta,
            "final_multiplier": hist.final_multiplier, "train_seconds": seconds}
