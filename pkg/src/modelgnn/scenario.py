"""Scenarios, Rayleigh channel sampling, SNR scaling and the dataset file format."""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidArgumentError

MAGIC = b"PGNN"
VERSION = 1
# magic, version, M, N, K, <pad to 8>, S, precision, reserved
_HEADER = struct.Struct("<4sIIII4xQII")
HEADER_SIZE = _HEADER.size  # 40


@dataclass(frozen=True)
class ScenarioConfig:
    cells: int = 1
    antennas_per_bs: int = 8
    users_per_cell: int = 4
    p_max: float = 1.0
    sigma2: float = 1.0
    snr_db: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.snr_db is not None:
            # only the power/noise ratio matters: pin p_max and derive the noise
            object.__setattr__(self, "p_max", 1.0)
            object.__setattr__(self, "sigma2", 10.0 ** (-self.snr_db / 10.0))
        for name in ("cells", "antennas_per_bs", "users_per_cell"):
            if int(getattr(self, name)) < 1:
                raise InvalidArgumentError(f"{name} must be >= 1")
        if not self.p_max > 0 or not self.sigma2 > 0:
            raise InvalidArgumentError("p_max and sigma2 must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidArgumentError("seed must fit in 64 unsigned bits")

    @property
    def M(self) -> int:
        return self.cells

    @property
    def N(self) -> int:
        return self.antennas_per_bs

    @property
    def K(self) -> int:
        return self.users_per_cell

    @property
    def snr(self) -> float:
        return self.p_max / self.sigma2


@dataclass(frozen=True, eq=False)
class ChannelDataset:
    """Channels indexed ``[s, i, m, n, k]``: antenna n of BS i to user k of cell m."""

    config: ScenarioConfig
    tensor: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = self.config
        t = np.asarray(self.tensor, dtype=np.complex128)
        if t.ndim != 5 or t.shape[1:] != (c.M, c.M, c.N, c.K):
            raise InvalidArgumentError(
                f"tensor shape {t.shape} does not match (S, {c.M}, {c.M}, {c.N}, {c.K})")
        if not np.all(np.isfinite(t)):
            raise InvalidArgumentError("channel tensor contains non-finite entries")
        t.setflags(write=False)
        object.__setattr__(self, "tensor", t)

    @property
    def sample_count(self) -> int:
        return self.tensor.shape[0]

    def __len__(self):
        return self.sample_count

    def single_cell(self) -> np.ndarray:
        """The (S, N, K) view of a one-cell dataset."""
        if self.config.M != 1:
            raise InvalidArgumentError("dataset has more than one cell")
        return self.tensor[:, 0, 0]

    def subset(self, start: int, stop: int) -> "ChannelDataset":
        return ChannelDataset(self.config, self.tensor[start:stop])

    def equals(self, other: "ChannelDataset") -> bool:
        return (self.config.M, self.config.N, self.config.K) == (
            other.config.M, other.config.N, other.config.K) and \
            self.tensor.tobytes() == other.tensor.tobytes()


def _cn01(rng: np.random.Generator, shape) -> np.ndarray:
    scale = math.sqrt(0.5)
    return scale * rng.standard_normal(shape) + 1j * scale * rng.standard_normal(shape)


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Per-sample generator, so sample ``index`` does not depend on the dataset size."""
    return np.random.default_rng([int(seed), int(index)])


def sample_channel(config: ScenarioConfig, count: int) -> ChannelDataset:
    """Draw ``count`` i.i.d. CN(0, 1) channel realizations."""
    if count < 0:
        raise InvalidArgumentError("count must be non-negative")
    shape = (config.M, config.M, config.N, config.K)
    out = np.empty((count,) + shape, dtype=np.complex128)
    for s in range(count):
        out[s] = _cn01(sample_rng(config.seed, s), shape)
    return ChannelDataset(config, out)


def sample_single_cell(n: int, k: int, count: int, seed: int) -> np.ndarray:
    """Convenience wrapper returning an (S, N, K) array."""
    return sample_channel(ScenarioConfig(1, n, k, seed=seed), count).single_cell()


def apply_snr_scaling(H, p_max: float, sigma2: float):
    """Scale channels by sqrt(p_max / sigma2) so a unit budget and unit noise can be used."""
    if not p_max > 0 or not sigma2 > 0:
        raise InvalidArgumentError("p_max and sigma2 must be positive")
    return H * math.sqrt(p_max / sigma2)


@dataclass(frozen=True)
class UserCountDistribution:
    kind: str = "fixed"
    value: float = 4
    lo: int = 2
    hi: int = 30

    def __post_init__(self):
        if self.kind == "fixed":
            if int(self.value) < 1:
                raise InvalidArgumentError("fixed user count must be >= 1")
        elif self.kind == "exponential":
            if not self.value > 0:
                raise InvalidArgumentError("exponential mean must be positive")
        elif self.kind == "uniform":
            if not 1 <= self.lo <= self.hi:
                raise InvalidArgumentError("uniform bounds must satisfy 1 <= lo <= hi")
        else:
            raise InvalidArgumentError(f"unknown user-count distribution {self.kind!r}")

    @classmethod
    def fixed(cls, k: int):
        return cls("fixed", value=k)

    @classmethod
    def exponential(cls, mean: float):
        return cls("exponential", value=mean)

    @classmethod
    def uniform(cls, lo: int, hi: int):
        return cls("uniform", lo=lo, hi=hi)


def sample_user_count(dist: UserCountDistribution, rng: np.random.Generator) -> int:
    if dist.kind == "fixed":
        return int(dist.value)
    if dist.kind == "exponential":
        return max(2, int(np.rint(rng.exponential(dist.value))))
    return int(rng.integers(dist.lo, dist.hi + 1))


def sample_variable_k(n: int, dist: UserCountDistribution, count: int, seed: int) -> list[np.ndarray]:
    """Single-cell channels whose user count is drawn per sample from ``dist``."""
    out = []
    for s in range(count):
        rng = sample_rng(seed, s)
        k = sample_user_count(dist, rng)
        out.append(_cn01(rng, (n, k)))
    return out


def write_dataset(path, dataset: ChannelDataset) -> None:
    c = dataset.config
    header = _HEADER.pack(MAGIC, VERSION, c.M, c.N, c.K, dataset.sample_count, 64, 0)
    payload = np.ascontiguousarray(dataset.tensor).astype("<c16", copy=False).tobytes()
    Path(path).write_bytes(header + payload)


def read_dataset(path, *, p_max: float = 1.0, sigma2: float = 1.0, seed: int = 0) -> ChannelDataset:
    """Read a dataset file; power, noise and seed are not stored and come from the caller."""
    raw = Path(path).read_bytes()
    if len(raw) < HEADER_SIZE:
        raise FormatError("truncated header", len(raw))
    magic, version, m, n, k, s, precision, _ = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if min(m, n, k) < 1:
        raise FormatError("zero dimension in header", 8)
    if precision != 64:
        raise FormatError(f"unsupported precision {precision}", 32)
    expected = HEADER_SIZE + s * m * m * n * k * 16
    if len(raw) < expected:
        raise FormatError(f"truncated payload (expected {expected} bytes)", len(raw))
    if len(raw) > expected:
        raise FormatError("trailing bytes after payload", expected)
    tensor = np.frombuffer(raw, dtype="<c16", offset=HEADER_SIZE).reshape(s, m, m, n, k)
    config = ScenarioConfig(m, n, k, p_max=p_max, sigma2=sigma2, seed=seed)
    return ChannelDataset(config, tensor.astype(np.complex128))


def dataset_io(path, dataset: ChannelDataset | None = None, **kwargs):
    """Write ``dataset`` to ``path`` when given, otherwise read it back."""
    if dataset is not None:
        write_dataset(path, dataset)
        return None
    return read_dataset(path, **kwargs)
