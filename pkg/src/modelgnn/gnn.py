"""Edge-GNN forward passes over the antenna-user precoding graph.

Edge features are real tensors of shape ``(B, N, K, J)`` (single cell) or
``(B, M, M, N, K, J)`` (multi-cell, indexed ``[b, i, m, n, k]`` for antenna n
of BS i and user k of cell m).  Feature pairs ``(2t, 2t + 1)`` are the real
and imaginary part of complex channel ``t``.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import ClassVar

import numpy as np
import torch

from .errors import DegenerateInputError, FormatError, InvalidArgumentError

DTYPE = torch.float64
CDTYPE = torch.complex128
EPS = 1e-12

MODEL_SE_WIDTHS = [2, 32, 32, 8, 2]
MODEL_EE_WIDTHS = [2, 32, 32, 32, 8, 2]
# one more hidden layer than single-cell SE: coordination across cells benefits from depth
MULTICELL_WIDTHS = [2, 32, 32, 32, 8, 2]
VANILLA_WIDTHS = [2, 64, 512, 512, 64, 2]
ADAPTER_WIDTHS = [1, 16, 16, 1]
ADAPTER_INPUT_SCALE = 0.1


# ---------------------------------------------------------------------------
# tensor conversions


def as_complex_tensor(H) -> torch.Tensor:
    if isinstance(H, torch.Tensor):
        return H.to(CDTYPE)
    return torch.as_tensor(np.asarray(H, dtype=np.complex128))


def edge_input(H: torch.Tensor) -> torch.Tensor:
    """[Re h, Im h] on every edge."""
    return torch.stack([H.real, H.imag], dim=-1).to(DTYPE)


def pairs_to_complex(D: torch.Tensor) -> torch.Tensor:
    if D.shape[-1] % 2:
        raise InvalidArgumentError(f"feature width {D.shape[-1]} is odd")
    return torch.complex(D[..., 0::2], D[..., 1::2])


def complex_to_pairs(Z: torch.Tensor) -> torch.Tensor:
    return torch.stack([Z.real, Z.imag], dim=-1).flatten(-2)


def activation(X: torch.Tensor, mode: str = "tensor", sample_dims: int = 3) -> torch.Tensor:
    """Norm activation X / ||X||.

    ``tensor`` normalizes each sample's whole layer output, ``edge`` each edge
    vector separately, ``none`` is the identity.
    """
    if mode == "none":
        return X
    if mode == "tensor":
        dims = tuple(range(max(0, X.ndim - sample_dims), X.ndim))
        return X / (torch.sqrt(torch.sum(X * X, dim=dims, keepdim=True)) + EPS)
    if mode == "edge":
        return X / (torch.sqrt(torch.sum(X * X, dim=-1, keepdim=True)) + EPS)
    raise InvalidArgumentError(f"unknown activation {mode!r}")


def power_normalize_torch(V: torch.Tensor, p_max: float = 1.0, dims=(-2, -1)) -> torch.Tensor:
    norm = torch.sqrt(torch.sum(V.real ** 2 + V.imag ** 2, dim=dims, keepdim=True))
    if torch.any(norm == 0):
        # non-finite values pass through so callers can locate the bad sample
        raise DegenerateInputError("cannot normalize a zero precoder")
    return math.sqrt(p_max) * V / norm


# ---------------------------------------------------------------------------
# parameters


@dataclass
class GnnParams:
    widths: list[int]
    layers: list[dict[str, torch.Tensor]] = field(repr=False)

    NAMES: ClassVar[tuple] = ()
    ARCH: ClassVar[str] = ""

    def names(self) -> tuple:
        return self.NAMES

    def tensors(self) -> list[torch.Tensor]:
        return [layer[name] for layer in self.layers for name in self.names()]

    def n_layers(self) -> int:
        return len(self.widths) - 1

    def clone(self, requires_grad: bool = False):
        layers = [{k: v.detach().clone().requires_grad_(requires_grad) for k, v in layer.items()}
                  for layer in self.layers]
        return self._replace_layers(layers)

    def _replace_layers(self, layers):
        kwargs = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "layers"}
        return type(self)(layers=layers, **kwargs)

    def with_tensors(self, tensors):
        it = iter(tensors)
        layers = [{name: next(it) for name in self.names()} for _ in self.layers]
        return self._replace_layers(layers)

    def num_parameters(self) -> int:
        return sum(t.numel() for t in self.tensors())


@dataclass
class VanillaParams(GnnParams):
    pooling: str = "sum"
    NAMES = ("S", "P", "Q")
    ARCH = "vanilla"


@dataclass
class ModelParams(GnnParams):
    retain_c: bool = False
    ARCH = "model"

    def names(self):
        return ("S0", "S1", "P0", "Q0", "Q1") + (("P1",) if self.retain_c else ())


@dataclass
class MultiCellModelParams(GnnParams):
    omit_nonneighbor: bool = True
    NAMES = ("s", "p_a", "p_r", "q_a", "q_r")
    ARCH = "model-multicell"


def _check_widths(widths, arch):
    widths = [int(w) for w in widths]
    if len(widths) < 2 or widths[0] != 2 or widths[-1] != 2:
        raise InvalidArgumentError(f"widths must start and end with 2, got {widths}")
    if any(w < 1 for w in widths):
        raise InvalidArgumentError("widths must be positive")
    if arch != "vanilla" and any(w % 2 for w in widths):
        raise InvalidArgumentError(f"model widths must all be even, got {widths}")
    return widths


def default_widths(arch: str, loss: str = "se") -> list[int]:
    if arch == "vanilla":
        return list(VANILLA_WIDTHS)
    if arch == "model-multicell":
        return list(MULTICELL_WIDTHS)
    return list(MODEL_EE_WIDTHS if loss == "ee" else MODEL_SE_WIDTHS)


def init_params(arch: str, widths=None, seed: int = 0, *, pooling: str = "sum",
                retain_c: bool = False, omit_nonneighbor: bool = True) -> GnnParams:
    """Uniform(-sqrt(1/J_in), sqrt(1/J_in)) weights, deterministic per seed."""
    widths = _check_widths(widths if widths is not None else default_widths(arch), arch)
    gen = torch.Generator().manual_seed(int(seed))

    def draw(rows, cols):
        bound = math.sqrt(1.0 / cols)
        return (torch.rand(rows, cols, generator=gen, dtype=DTYPE) * 2.0 - 1.0) * bound

    layers = []
    for j_in, j_out in zip(widths[:-1], widths[1:]):
        if arch == "vanilla":
            names, shapes = VanillaParams.NAMES, [(j_out, j_in)] * 3
        elif arch == "model":
            names = ("S0", "S1", "P0", "Q0", "Q1") + (("P1",) if retain_c else ())
            shapes = [(j_out, j_in)] * len(names)
        elif arch == "model-multicell":
            names = MultiCellModelParams.NAMES
            p_in = j_in if omit_nonneighbor else 2 * j_in
            shapes = [(j_out, 2 * j_in), (j_out, p_in), (j_out, p_in),
                      (j_out, 2 * j_in), (j_out, 2 * j_in)]
        else:
            raise InvalidArgumentError(f"unknown architecture {arch!r}")
        layers.append({n: draw(*s) for n, s in zip(names, shapes)})

    if arch == "vanilla":
        if pooling not in ("sum", "mean", "max"):
            raise InvalidArgumentError(f"unknown pooling {pooling!r}")
        return VanillaParams(widths, layers, pooling=pooling)
    if arch == "model":
        return ModelParams(widths, layers, retain_c=retain_c)
    return MultiCellModelParams(widths, layers, omit_nonneighbor=omit_nonneighbor)


def tgnn_layer(retain_c: bool = False) -> dict[str, torch.Tensor]:
    """Single-channel Model-GNN weights for which a layer is one Taylor step.

    On a real-pair edge feature, S0 = 2 I and S1 = -I give 2 d - sum_j a_jk d_nj.
    """
    eye = torch.eye(2, dtype=DTYPE)
    zero = torch.zeros(2, 2, dtype=DTYPE)
    layer = {"S0": 2.0 * eye, "S1": -eye, "P0": zero.clone(), "Q0": zero.clone(),
             "Q1": zero.clone()}
    if retain_c:
        layer["P1"] = zero.clone()
    return layer


def tgnn_params(n_layers: int) -> ModelParams:
    return ModelParams([2] * (n_layers + 1), [tgnn_layer() for _ in range(n_layers)])


# ---------------------------------------------------------------------------
# vanilla edge-GNN


def _pool_excluding_self(D: torch.Tensor, dim: int, pooling: str) -> torch.Tensor:
    n = D.shape[dim]
    if pooling in ("sum", "mean"):
        out = D.sum(dim=dim, keepdim=True) - D
        return out / n if pooling == "mean" else out
    if n == 1:
        return torch.zeros_like(D)
    top2 = torch.topk(D, 2, dim=dim).values
    first = top2.narrow(dim, 0, 1)
    second = top2.narrow(dim, 1, 1)
    return torch.where(D == first, second, first)


def vanilla_layer_forward(D: torch.Tensor, layer: dict, pooling: str = "sum",
                          act: str = "tensor") -> torch.Tensor:
    """sigma(S d_nk + PL_{i != n} P d_ik + PL_{j != k} Q d_nj)."""
    S, P, Q = layer["S"], layer["P"], layer["Q"]
    if D.shape[-1] != S.shape[1]:
        raise InvalidArgumentError(f"feature width {D.shape[-1]} != weight width {S.shape[1]}")
    if pooling in ("sum", "mean"):
        n, k = D.shape[-3], D.shape[-2]
        cp, cq = (1.0 / n, 1.0 / k) if pooling == "mean" else (1.0, 1.0)
        col = D.sum(dim=-3, keepdim=True)
        row = D.sum(dim=-2, keepdim=True)
        out = D @ (S - cp * P - cq * Q).T + (cp * col) @ P.T + (cq * row) @ Q.T
    else:
        # max is nonlinear: pool the transformed neighbor features
        out = (D @ S.T + _pool_excluding_self(D @ P.T, -3, pooling)
               + _pool_excluding_self(D @ Q.T, -2, pooling))
    return activation(out, act)


def vanilla_forward_raw(H, params: VanillaParams, act: str = "tensor") -> torch.Tensor:
    H = as_complex_tensor(H)
    D = edge_input(H)
    last = params.n_layers() - 1
    for ell, layer in enumerate(params.layers):
        D = vanilla_layer_forward(D, layer, params.pooling, act if ell < last else "none")
    return pairs_to_complex(D)[..., 0]


def vanilla_forward(H, params: VanillaParams, p_max: float = 1.0,
                    act: str = "tensor") -> torch.Tensor:
    """Vanilla-GNN precoder, power-normalized per sample."""
    return power_normalize_torch(vanilla_forward_raw(H, params, act), p_max)


# ---------------------------------------------------------------------------
# Model-GNN


def model_step1(D: torch.Tensor, H) -> torch.Tensor:
    """Concatenate each edge feature with its Taylor aggregation D (H^H D)."""
    H = as_complex_tensor(H)
    Dc = pairs_to_complex(D)                                   # (..., N, K, T)
    A = torch.einsum("...nj,...nkt->...jkt", H.conj(), Dc)     # a_jk = h_j^H d_k
    B = torch.einsum("...njt,...jkt->...nkt", Dc, A)
    return torch.cat([D, complex_to_pairs(B)], dim=-1)


def model_layer_forward(D: torch.Tensor, H, layer: dict, omit_c: bool = True,
                        act: str = "tensor") -> torch.Tensor:
    J = D.shape[-1]
    if layer["S0"].shape[1] != J:
        raise InvalidArgumentError(f"feature width {J} != weight width {layer['S0'].shape[1]}")
    C = model_step1(D, H)
    Dm, Bm = C[..., :J], C[..., J:]
    col_d = Dm.sum(dim=-3, keepdim=True)
    row_d = Dm.sum(dim=-2, keepdim=True)
    row_b = Bm.sum(dim=-2, keepdim=True)
    out = (Dm @ layer["S0"].T + Bm @ layer["S1"].T + col_d @ layer["P0"].T
           + row_d @ layer["Q0"].T + row_b @ layer["Q1"].T)
    if not omit_c:
        if "P1" not in layer:
            raise InvalidArgumentError("term (c) requested but layer has no P1")
        out = out + Bm.sum(dim=-3, keepdim=True) @ layer["P1"].T
    return activation(out, act)


def model_forward_raw(H, params: ModelParams, omit_c: bool | None = None,
                      act: str = "tensor") -> torch.Tensor:
    H = as_complex_tensor(H)
    omit = (not params.retain_c) if omit_c is None else omit_c
    D = edge_input(H)
    last = params.n_layers() - 1
    for ell, layer in enumerate(params.layers):
        D = model_layer_forward(D, H, layer, omit, act if ell < last else "none")
    return pairs_to_complex(D)[..., 0]


def model_forward(H, params: ModelParams, p_max: float = 1.0, omit_c: bool | None = None,
                  act: str = "tensor") -> torch.Tensor:
    """Model-GNN precoder, power-normalized per sample."""
    return power_normalize_torch(model_forward_raw(H, params, omit_c, act), p_max)


# ---------------------------------------------------------------------------
# multi-cell Model-GNN


def multicell_step1(D: torch.Tensor, H) -> torch.Tensor:
    """Per-BS Taylor aggregation: only BS i's antennas enter a_{j k} for edges of BS i."""
    H = as_complex_tensor(H)
    Dc = pairs_to_complex(D)                                          # (B, M, M, N, K, T)
    A = torch.einsum("...ipnj,...imnkt->...ipjmkt", H.conj(), Dc)
    B = torch.einsum("...ipnjt,...ipjmkt->...imnkt", Dc, A)
    return torch.cat([D, complex_to_pairs(B)], dim=-1)


def model_layer_forward_multicell(D: torch.Tensor, H, layer: dict,
                                  omit_nonneighbor: bool = True,
                                  act: str = "tensor") -> torch.Tensor:
    """Multi-cell update with intra/inter weights on both sides of every edge.

    For edge (n of BS i, k of cell m): ``p_a`` aggregates the other antennas of
    BS i toward the same user, ``p_r`` the antennas of the other BSs, ``q_a``
    the other users of cell m on the same antenna and ``q_r`` the users of the
    other cells.
    """
    H = as_complex_tensor(H)
    if D.ndim < 5 or H.shape[-4:] != D.shape[-5:-1] or D.shape[-5] != D.shape[-4]:
        raise InvalidArgumentError(f"inconsistent shapes D {tuple(D.shape)}, H {tuple(H.shape)}")
    J = D.shape[-1]
    if layer["s"].shape[1] != 2 * J:
        raise InvalidArgumentError(f"feature width {J} does not match layer weights")
    C = multicell_step1(D, H)
    P = C[..., :J] if omit_nonneighbor else C
    # axes: -5 BS i, -4 cell m, -3 antenna n, -2 user k
    per_bs = P.sum(dim=-3, keepdim=True)                 # sum over antennas of BS i
    all_bs = per_bs.sum(dim=-5, keepdim=True)            # and over every BS
    per_cell = C.sum(dim=-2, keepdim=True)               # sum over users of cell m
    all_cells = per_cell.sum(dim=-4, keepdim=True)       # and over every cell
    out = (C @ layer["s"].T
           + (per_bs - P) @ layer["p_a"].T
           + (all_bs - per_bs) @ layer["p_r"].T
           + (per_cell - C) @ layer["q_a"].T
           + (all_cells - per_cell) @ layer["q_r"].T)
    return activation(out, act, sample_dims=5)


def multicell_edge_input(H) -> torch.Tensor:
    return edge_input(as_complex_tensor(H))


def multicell_forward_raw(H, params: MultiCellModelParams, act: str = "tensor") -> torch.Tensor:
    H = as_complex_tensor(H)
    D = edge_input(H)
    last = params.n_layers() - 1
    for ell, layer in enumerate(params.layers):
        D = model_layer_forward_multicell(D, H, layer, params.omit_nonneighbor,
                                          act if ell < last else "none")
    V = pairs_to_complex(D)[..., 0]                      # (..., M, M, N, K)
    return torch.diagonal(V, dim1=-4, dim2=-3).movedim(-1, -3)  # (..., M, N, K)


def multicell_forward(H, params: MultiCellModelParams, p_max: float = 1.0,
                      act: str = "tensor") -> torch.Tensor:
    """Per-cell precoders ``(..., M, N, K)``, each BS normalized to p_max."""
    return power_normalize_torch(multicell_forward_raw(H, params, act), p_max)


def forward(H, params: GnnParams, p_max: float = 1.0, act: str = "tensor") -> torch.Tensor:
    if isinstance(params, VanillaParams):
        return vanilla_forward(H, params, p_max, act)
    if isinstance(params, ModelParams):
        return model_forward(H, params, p_max, act=act)
    if isinstance(params, MultiCellModelParams):
        return multicell_forward(H, params, p_max, act)
    raise InvalidArgumentError(f"unsupported parameter type {type(params).__name__}")


# ---------------------------------------------------------------------------
# scale adapter


@dataclass
class ScaleAdapter:
    """Feed-forward map from the user count K to a power scale eta_K in (0, 1).

    The sigmoid output keeps eta_K inside the unit budget.  With an unbounded
    output a scale above 1 is clipped by the feasibility projection, its
    gradient vanishes and training can never lower the power again.
    """

    weights: list[torch.Tensor] = field(repr=False)
    biases: list[torch.Tensor] = field(repr=False)

    @classmethod
    def init(cls, seed: int = 0, eta0: float = 0.7):
        if not 0.0 < eta0 < 1.0:
            raise InvalidArgumentError("eta0 must lie in (0, 1)")
        gen = torch.Generator().manual_seed(int(seed) + 7919)
        weights, biases = [], []
        for j_in, j_out in zip(ADAPTER_WIDTHS[:-1], ADAPTER_WIDTHS[1:]):
            bound = math.sqrt(1.0 / j_in)
            weights.append((torch.rand(j_out, j_in, generator=gen, dtype=DTYPE) * 2 - 1) * bound)
            biases.append((torch.rand(j_out, generator=gen, dtype=DTYPE) * 2 - 1) * bound)
        # logit(eta0) so a fresh adapter starts near eta0
        biases[-1] = torch.full((1,), math.log(eta0 / (1.0 - eta0)), dtype=DTYPE)
        weights[-1] = weights[-1] * 0.1
        return cls(weights, biases)

    def tensors(self) -> list[torch.Tensor]:
        return [t for pair in zip(self.weights, self.biases) for t in pair]

    def with_tensors(self, tensors):
        tensors = list(tensors)
        return ScaleAdapter(tensors[0::2], tensors[1::2])

    def clone(self, requires_grad: bool = False):
        return self.with_tensors([t.detach().clone().requires_grad_(requires_grad)
                                  for t in self.tensors()])


def scale_adapter_forward(adapter: ScaleAdapter, K) -> torch.Tensor:
    """eta_K in (0, 1) for a user count (or a tensor of counts)."""
    x = torch.as_tensor(K, dtype=DTYPE).reshape(-1, 1) * ADAPTER_INPUT_SCALE
    last = len(adapter.weights) - 1
    for ell, (W, b) in enumerate(zip(adapter.weights, adapter.biases)):
        x = x @ W.T + b
        if ell < last:
            x = torch.tanh(x)
    out = torch.sigmoid(x).reshape(-1)
    return out[0] if torch.as_tensor(K).ndim == 0 else out


# ---------------------------------------------------------------------------
# checkpoint format

CKPT_MAGIC = b"PGNP"
CKPT_VERSION = 1
ARCH_TAGS = {"vanilla": 1, "model": 2, "model-multicell": 3}
POOLING_CODES = {"sum": 0, "mean": 1, "max": 2}
FLAG_RETAIN_C = 1 << 4
FLAG_KEEP_NONNEIGHBOR = 1 << 5
FLAG_ADAPTER = 1 << 8


def _flags(params: GnnParams, adapter) -> int:
    flags = 0
    if isinstance(params, VanillaParams):
        flags |= POOLING_CODES[params.pooling]
    if isinstance(params, ModelParams) and params.retain_c:
        flags |= FLAG_RETAIN_C
    if isinstance(params, MultiCellModelParams) and not params.omit_nonneighbor:
        flags |= FLAG_KEEP_NONNEIGHBOR
    if adapter is not None:
        flags |= FLAG_ADAPTER
    return flags


def save_params(path, params: GnnParams, adapter: ScaleAdapter | None = None) -> None:
    """Write ``magic, version, arch tag, flags, width count, widths, f64 matrices``."""
    parts = [struct.pack("<4sIIII", CKPT_MAGIC, CKPT_VERSION, ARCH_TAGS[params.ARCH],
                         _flags(params, adapter), len(params.widths)),
             struct.pack(f"<{len(params.widths)}I", *params.widths)]
    tensors = params.tensors() + (adapter.tensors() if adapter is not None else [])
    for t in tensors:
        parts.append(t.detach().cpu().numpy().astype("<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_params(path):
    """Returns ``(params, adapter_or_None)``."""
    raw = Path(path).read_bytes()
    if len(raw) < 20:
        raise FormatError("truncated checkpoint header", len(raw))
    magic, version, tag, flags, n_widths = struct.unpack_from("<4sIIII", raw)
    if magic != CKPT_MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if version != CKPT_VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    arch = {v: k for k, v in ARCH_TAGS.items()}.get(tag)
    if arch is None:
        raise FormatError(f"unknown architecture tag {tag}", 8)
    offset = 20
    if len(raw) < offset + 4 * n_widths:
        raise FormatError("truncated width list", len(raw))
    widths = list(struct.unpack_from(f"<{n_widths}I", raw, offset))
    offset += 4 * n_widths
    pooling = {v: k for k, v in POOLING_CODES.items()}.get(flags & 0xF, "sum")
    template = init_params(arch, widths, 0, pooling=pooling,
                           retain_c=bool(flags & FLAG_RETAIN_C),
                           omit_nonneighbor=not flags & FLAG_KEEP_NONNEIGHBOR)
    adapter_template = ScaleAdapter.init() if flags & FLAG_ADAPTER else None

    def read_like(templates):
        nonlocal offset
        out = []
        for t in templates:
            nbytes = 8 * t.numel()
            if len(raw) < offset + nbytes:
                raise FormatError("truncated parameter payload", len(raw))
            arr = np.frombuffer(raw, dtype="<f8", count=t.numel(), offset=offset)
            out.append(torch.tensor(arr.reshape(tuple(t.shape)), dtype=DTYPE))
            offset += nbytes
        return out

    params = template.with_tensors(read_like(template.tensors()))
    adapter = None
    if adapter_template is not None:
        adapter = adapter_template.with_tensors(read_like(adapter_template.tensors()))
    if offset != len(raw):
        raise FormatError("trailing bytes after parameters", offset)
    return params, adapter
