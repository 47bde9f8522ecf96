"""Command-line entry point: gen, train, eval, sweep, flops.

Exit codes: 0 success, 2 usage or configuration error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import builtins
import configparser
import csv
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from . import baselines, gnn, metrics, train
from .errors import FormatError, InvalidArgumentError, NumericError, SingularMatrixError
from .scenario import (ChannelDataset, ScenarioConfig, UserCountDistribution, apply_snr_scaling,
                       read_dataset, sample_channel, sample_variable_k, write_dataset)
from .wmmse import WmmseOptions

log = logging.getLogger("modelgnn")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
GNN_ARCHS = ("vanilla", "model", "model-multicell")
BASELINE_ARCHS = ("tgnn", "mrt", "zfbf", "rzf", "bnn-structured")
ARCHS = GNN_ARCHS + BASELINE_ARCHS
TEST_SEED_OFFSET = 1_000_003


class ConfigError(Exception):
    """Bad or missing configuration entry; reported with exit code 2."""


def _new_parser() -> configparser.ConfigParser:
    return configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)


# ---------------------------------------------------------------------------
# configuration


class RunConfig:
    """Typed access to an INI file with sections scenario, arch, train and eval."""

    def __init__(self, parser: configparser.ConfigParser, source: str = "<defaults>"):
        self.parser = parser
        self.source = source
        for section in ("scenario", "arch", "train", "eval"):
            if not parser.has_section(section):
                parser.add_section(section)

    @classmethod
    def load(cls, path) -> "RunConfig":
        parser = _new_parser()
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            parser.read_string(text, source=str(path))
        except configparser.ParsingError as exc:
            lineno, line = exc.errors[0]
            raise ConfigError(f"{path}: line {lineno}: cannot parse {line.strip()!r}") from exc
        except configparser.Error as exc:
            line = getattr(exc, "lineno", None)
            where = f": line {line}" if line else ""
            raise ConfigError(f"{path}{where}: {exc.message}") from exc
        return cls(parser, str(path))

    def has(self, section, key) -> bool:
        return self.parser.has_option(section, key)

    def raw(self, section, key, default=None, required=False):
        if self.parser.has_option(section, key):
            return self.parser.get(section, key)
        if required:
            raise ConfigError(f"{self.source}: missing required field [{section}] {key}")
        return default

    def _typed(self, section, key, fn, kind, default, required):
        value = self.raw(section, key, None, required)
        if value is None:
            return default
        try:
            return fn(value)
        except ValueError as exc:
            raise ConfigError(
                f"{self.source}: field [{section}] {key} = {value!r} is not a valid {kind}") from exc

    def int(self, section, key, default=None, required=False):
        return self._typed(section, key, int, "integer", default, required)

    def float(self, section, key, default=None, required=False):
        return self._typed(section, key, float, "number", default, required)

    def bool(self, section, key, default=False):
        value = self.raw(section, key)
        if value is None:
            return default
        lowered = value.strip().lower()
        if lowered in ("1", "yes", "true", "on"):
            return True
        if lowered in ("0", "no", "false", "off"):
            return False
        raise ConfigError(f"{self.source}: field [{section}] {key} = {value!r} is not a boolean")

    def list(self, section, key, fn=None, default=None):
        value = self.raw(section, key)
        if value is None:
            return default
        fn = fn or builtins.float
        try:
            return [fn(v) for v in value.replace(";", ",").split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"{self.source}: field [{section}] {key} = {value!r} is not a list") from exc

    def set(self, section, key, value):
        self.parser.set(section, key, str(value))

    def snapshot(self) -> dict:
        return {s: dict(self.parser.items(s)) for s in self.parser.sections()}

    @classmethod
    def from_snapshot(cls, snapshot: dict, source: str = "<snapshot>") -> "RunConfig":
        parser = _new_parser()
        parser.read_dict(snapshot)
        return cls(parser, source)

    def copy(self) -> "RunConfig":
        return RunConfig.from_snapshot(self.snapshot(), self.source)


def parse_users(text: str) -> UserCountDistribution:
    """``4`` (fixed), ``exp:4`` or ``uniform:2:30``."""
    parts = text.strip().split(":")
    try:
        if len(parts) == 1:
            return UserCountDistribution.fixed(int(parts[0]))
        if parts[0] in ("exp", "exponential") and len(parts) == 2:
            return UserCountDistribution.exponential(float(parts[1]))
        if parts[0] == "uniform" and len(parts) == 3:
            return UserCountDistribution.uniform(int(parts[1]), int(parts[2]))
    except (ValueError, InvalidArgumentError) as exc:
        raise ConfigError(f"invalid users specification {text!r}: {exc}") from exc
    raise ConfigError(f"invalid users specification {text!r}")


def scenario_from(cfg: RunConfig, seed: int | None = None) -> tuple[ScenarioConfig, UserCountDistribution, int]:
    cells = cfg.int("scenario", "cells", 1)
    n = cfg.int("scenario", "antennas", required=True)
    users = parse_users(cfg.raw("scenario", "users", required=True))
    samples = cfg.int("scenario", "samples", 1000)
    if samples < 0:
        raise ConfigError(f"{cfg.source}: field [scenario] samples must be >= 0")
    seed = cfg.int("scenario", "seed", 0) if seed is None else seed
    snr = cfg.float("scenario", "snr_db")
    p_max = cfg.float("scenario", "p_max", 1.0)
    sigma2 = cfg.float("scenario", "sigma2", 1.0)
    k = int(users.value) if users.kind == "fixed" else 1
    try:
        sc = ScenarioConfig(cells, n, k, p_max=p_max, sigma2=sigma2, snr_db=snr, seed=seed)
    except InvalidArgumentError as exc:
        raise ConfigError(f"{cfg.source}: [scenario] {exc}") from exc
    return sc, users, samples


def train_config_from(cfg: RunConfig, loss: str, seed: int) -> train.TrainConfig:
    kwargs = dict(loss=loss, seed=seed)
    for key in ("learning_rate", "r_min", "beta", "lambda_init", "rho", "p_c", "p_0", "p_max_watts"):
        if cfg.has("train", key):
            kwargs[key] = cfg.float("train", key)
    for key in ("batch_size", "epochs"):
        if cfg.has("train", key):
            kwargs[key] = cfg.int("train", key)
    try:
        return train.TrainConfig(**kwargs)
    except InvalidArgumentError as exc:
        raise ConfigError(f"{cfg.source}: [train] {exc}") from exc


# ---------------------------------------------------------------------------
# helpers


def write_manifest(out: Path, command: str, cfg: RunConfig, seed: int, artifacts: dict,
                   started: float, status: str = "ok") -> Path:
    manifest = {
        "command": command,
        "config": cfg.snapshot(),
        "seed": seed,
        "artifacts": {k: str(v) for k, v in artifacts.items()},
        "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "elapsed_s": round(time.time() - started, 3),
        "status": status,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def load_or_generate(cfg: RunConfig, seed: int, *, test: bool = False):
    """Training (or held-out) channels: a stacked dataset or a list when K varies."""
    sc, users, samples = scenario_from(cfg, seed)
    section = "eval" if test else "scenario"
    path = cfg.raw(section, "dataset")
    if path:
        try:
            ds = read_dataset(path, p_max=sc.p_max, sigma2=sc.sigma2, seed=seed)
        except (OSError, FormatError) as exc:
            raise ConfigError(f"cannot load dataset {path}: {exc}") from exc
        return ds, sc
    if test:
        samples = cfg.int("eval", "samples", 100)
        seed = seed + TEST_SEED_OFFSET
    if users.kind != "fixed":
        return sample_variable_k(sc.N, users, samples, seed), sc
    return sample_channel(ScenarioConfig(sc.M, sc.N, sc.K, sc.p_max, sc.sigma2, seed=seed), samples), sc


def channel_list(data) -> list[np.ndarray]:
    if isinstance(data, ChannelDataset):
        return list(data.single_cell() if data.config.M == 1 else data.tensor)
    return [np.asarray(h) for h in data]


def dataset_hash(H_list, p_max, sigma2, opts: WmmseOptions) -> str:
    digest = hashlib.sha256()
    for h in H_list:
        digest.update(np.ascontiguousarray(h, dtype="<c16").tobytes())
        digest.update(str(h.shape).encode())
    digest.update(json.dumps([p_max, sigma2, asdict(opts)], sort_keys=True).encode())
    return digest.hexdigest()


def cached_oracle(H_list, p_max, sigma2, cache_dir: Path | None, opts: WmmseOptions | None = None):
    """WMMSE precoders, reused from ``cache_dir`` when the same channels were solved before."""
    opts = opts or WmmseOptions()
    if cache_dir is None:
        return metrics.oracle_precoders(H_list, p_max, sigma2, opts), False
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = cache_dir / f"wmmse-{dataset_hash(H_list, p_max, sigma2, opts)[:32]}.npz"
    if path.exists():
        with np.load(path) as data:
            return [data[f"v{i}"] for i in range(len(H_list))], True
    V = metrics.oracle_precoders(H_list, p_max, sigma2, opts)
    np.savez(path, **{f"v{i}": v for i, v in enumerate(V)})
    return V, False


def build_params(cfg: RunConfig, arch: str, loss: str, seed: int):
    widths = cfg.list("arch", "widths", int)
    try:
        return gnn.init_params(
            arch, widths, seed,
            pooling=cfg.raw("arch", "pooling", "sum"),
            retain_c=cfg.bool("arch", "retain_c", False),
            omit_nonneighbor=cfg.bool("arch", "omit_nonneighbor", True),
        ) if widths else gnn.init_params(
            arch, gnn.default_widths(arch, loss), seed,
            pooling=cfg.raw("arch", "pooling", "sum"),
            retain_c=cfg.bool("arch", "retain_c", False),
            omit_nonneighbor=cfg.bool("arch", "omit_nonneighbor", True),
        )
    except InvalidArgumentError as exc:
        raise ConfigError(f"{cfg.source}: [arch] {exc}") from exc


def baseline_precoder(arch: str, h: np.ndarray, p_max: float, sigma2: float, layers: int):
    if h.ndim == 4:
        return np.stack([baseline_precoder(arch, h[m, m], p_max, sigma2, layers)
                         for m in range(h.shape[0])])
    if arch == "mrt":
        return baselines.mrt(h, p_max)
    if arch == "zfbf":
        return baselines.zfbf(h, p_max)
    if arch == "rzf":
        return baselines.rzf(h, p_max, sigma2)
    if arch == "tgnn":
        return baselines.tgnn_precoder(h, layers, p_max)
    if arch == "bnn-structured":
        K = h.shape[1]
        uniform = np.full(K, p_max / K)
        return baselines.structured_precoder(h, uniform, uniform, sigma2, p_max)
    raise InvalidArgumentError(f"unknown baseline {arch!r}")


# ---------------------------------------------------------------------------
# core actions (also used by sweeps)


def train_once(cfg: RunConfig, arch: str, loss: str, seed: int):
    data, sc = load_or_generate(cfg, seed)
    params = build_params(cfg, arch, loss, seed)
    tc = train_config_from(cfg, loss, seed)
    if loss == "ee":
        if arch == "model-multicell":
            raise ConfigError("EE training is single-cell only")
        params, adapter, history = train.train_ee(data, params, tc, p_max=sc.p_max, sigma2=sc.sigma2)
        return params, adapter, history, tc
    params, history = train.train_se(data, params, tc, p_max=sc.p_max, sigma2=sc.sigma2)
    return params, None, history, tc


def evaluate(cfg: RunConfig, arch: str, seed: int, *, params=None, adapter=None, loss: str = "se",
             oracle: str = "wmmse", cache_dir: Path | None = None) -> metrics.MetricsRecord:
    data, sc = load_or_generate(cfg, seed, test=True)
    H_list = channel_list(data)
    if not H_list:
        raise ConfigError("evaluation set is empty")
    p_max, sigma2 = sc.p_max, sc.sigma2
    t0 = time.perf_counter()
    if arch in GNN_ARCHS:
        if params is None:
            raise ConfigError(f"arch {arch!r} needs a checkpoint")
        V = []
        for h in H_list:
            v = metrics.precode(params, h[None], p_max=p_max, sigma2=sigma2, adapter=adapter,
                                ee_mode=(loss == "ee"))[0]
            V.append(v)
    else:
        layers = cfg.int("arch", "layers", 40)
        V = [baseline_precoder(arch, h, p_max, sigma2, layers) for h in H_list]
    elapsed = time.perf_counter() - t0
    learned = metrics.sum_rates(H_list, V, sigma2)
    cached = False
    if oracle == "wmmse":
        V_ref, cached = cached_oracle(H_list, p_max, sigma2, cache_dir)
        ratio = metrics.ratio_of_means(learned, metrics.sum_rates(H_list, V_ref, sigma2))
    else:
        ratio = float(np.mean(learned))
    r_min = cfg.float("train", "r_min", 0.0)
    extra = {"oracle": oracle, "oracle_cached": cached, "mean_sum_rate": float(np.mean(learned))}
    single = all(h.ndim == 2 for h in H_list)
    if single:
        extra["normalized_correlation"] = [
            metrics.normalized_correlation(h, v).tolist() for h, v in zip(H_list, V)]
    ee_ratio = None
    if loss == "ee" and single:
        tc = train_config_from(cfg, "ee", seed)
        ee_learned = [ee_physical(h, v, p_max, sigma2, tc) for h, v in zip(H_list, V)]
        ee_zf = [ee_physical(h, baselines.zfbf(h, p_max), p_max, sigma2, tc) for h in H_list]
        extra["ee"] = float(np.mean(ee_learned))
        extra["ee_zfbf_full_power"] = float(np.mean(ee_zf))
        ee_ratio = 100.0 * extra["ee"] / extra["ee_zfbf_full_power"]
    widths = getattr(params, "widths", None)
    flops = 0
    if widths is not None and arch in ("vanilla", "model"):
        flops = metrics.flop_count(arch, sc.N, H_list[0].shape[-1], widths)
    return metrics.MetricsRecord(
        se_ratio=ratio,
        csr=metrics.constraint_satisfaction_ratio(H_list, V, r_min, sigma2),
        ee_ratio=ee_ratio,
        per_user_rates=metrics.per_user_rates(H_list, V, sigma2),
        flops=flops, wall_clock=elapsed,
        scenario=f"arch={arch},M={sc.M},N={sc.N},snr={10 * np.log10(sc.snr):g},seed={seed}",
        extra=extra)


def ee_physical(h, v, p_max, sigma2, tc: train.TrainConfig) -> float:
    return metrics.ee_physical(h, v, p_max, sigma2, tc.budget_watts(h.shape[-2]), tc.rho, tc.p_c,
                               tc.p_0)


def save_training(out: Path, params, adapter, history: train.TrainHistory, tc: train.TrainConfig):
    ckpt = out / "checkpoint.pgnp"
    gnn.save_params(ckpt, params, adapter)
    meta = {
        "epoch": len(history),
        "multiplier": history.multiplier[-1] if history.multiplier else None,
        "adam_steps": getattr(history, "adam_steps", None),
        "train_config": asdict(tc),
    }
    (out / "checkpoint.json").write_text(json.dumps(meta, indent=2) + "\n")
    hist = out / "history.csv"
    with open(hist, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss", "val_metric", "csr", "multiplier", "wall_clock"])
        for e in range(len(history)):
            w.writerow([e + 1, history.loss[e],
                        history.val_metric[e] if e < len(history.val_metric) else "",
                        history.csr[e] if e < len(history.csr) else "",
                        history.multiplier[e] if e < len(history.multiplier) else "",
                        history.wall_clock[e]])
    return ckpt, hist


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args, cfg: RunConfig, out: Path) -> dict:
    seed = command_seed(args, cfg)
    sc, users, samples = scenario_from(cfg, seed)
    artifacts = {}
    if users.kind == "fixed":
        ds = sample_channel(sc, samples)
        path = out / "dataset.pgnn"
        write_dataset(path, ds)
        artifacts["dataset"] = path
    else:
        # the file format fixes K, so variable-K data is written as one file per user count
        H = sample_variable_k(sc.N, users, samples, seed)
        for k in sorted({h.shape[1] for h in H}):
            stack = np.stack([h for h in H if h.shape[1] == k])[:, None, None]
            ds = ChannelDataset(ScenarioConfig(1, sc.N, k, sc.p_max, sc.sigma2, seed=seed), stack)
            path = out / f"dataset-K{k}.pgnn"
            write_dataset(path, ds)
            artifacts[f"dataset_K{k}"] = path
    return artifacts


def cmd_train(args, cfg: RunConfig, out: Path) -> dict:
    seed = command_seed(args, cfg)
    arch, loss = resolve_arch(args, cfg), resolve_loss(args, cfg)
    if arch not in GNN_ARCHS:
        raise ConfigError(f"arch {arch!r} has no trainable parameters")
    try:
        params, adapter, history, tc = train_once(cfg, arch, loss, seed)
    except NumericError as exc:
        last = getattr(exc, "params", None)
        if last is not None:
            gnn.save_params(out / "checkpoint.pgnp", last)
        raise
    ckpt, hist = save_training(out, params, adapter, history, tc)
    return {"checkpoint": ckpt, "checkpoint_meta": out / "checkpoint.json", "history": hist}


def cmd_eval(args, cfg: RunConfig, out: Path) -> dict:
    seed = command_seed(args, cfg)
    arch, loss = resolve_arch(args, cfg), resolve_loss(args, cfg)
    oracle = args.oracle or cfg.raw("eval", "oracle", "wmmse")
    params = adapter = None
    if arch in GNN_ARCHS:
        ckpt = args.checkpoint or cfg.raw("eval", "checkpoint")
        if not ckpt:
            raise ConfigError("missing required field [eval] checkpoint (or --checkpoint)")
        try:
            params, adapter = gnn.load_params(ckpt)
        except (OSError, FormatError) as exc:
            raise ConfigError(f"cannot load checkpoint {ckpt}: {exc}") from exc
    cache = Path(cfg.raw("eval", "cache_dir", str(out / "oracle-cache")))
    try:
        record = evaluate(cfg, arch, seed, params=params, adapter=adapter, loss=loss,
                          oracle=oracle, cache_dir=cache)
    except (InvalidArgumentError, RuntimeError) as exc:
        raise ConfigError(f"incompatible checkpoint and dataset: {exc}") from exc
    path = out / "metrics.jsonl"
    metrics.write_jsonl(path, [record])
    return {"metrics": path}


SWEEP_KEYS = {"snr": ("scenario", "snr_db"), "users": ("scenario", "users"),
              "samples": ("scenario", "samples")}
SWEEP_DEFAULTS = {"snr": "0,10,20", "users": ",".join(str(k) for k in range(2, 31, 2)),
                  "samples": "10,100,1000,10000"}


def cmd_sweep(args, cfg: RunConfig, out: Path) -> dict:
    kind = args.kind or cfg.raw("eval", "sweep", "snr")
    if kind not in SWEEP_KEYS:
        raise ConfigError(f"unknown sweep kind {kind!r}")
    grid = cfg.raw("eval", "grid", SWEEP_DEFAULTS[kind]).replace(";", ",").split(",")
    grid = [g.strip() for g in grid if g.strip()]
    n_seeds = cfg.int("eval", "seeds", 5)
    base_seed = command_seed(args, cfg)
    arch, loss = resolve_arch(args, cfg), resolve_loss(args, cfg)
    oracle = args.oracle or cfg.raw("eval", "oracle", "wmmse")
    section, key = SWEEP_KEYS[kind]
    cache = Path(cfg.raw("eval", "cache_dir", str(out / "oracle-cache")))
    rows = []
    for value in grid:
        point = cfg.copy()
        point.set(section, key, value)
        if kind == "users":
            point.set("eval", "samples", cfg.raw("eval", "samples", "100"))
        recs = []
        for s in range(n_seeds):
            seed = base_seed + s
            params = adapter = None
            if arch in GNN_ARCHS:
                params, adapter, _, _ = train_once(point, arch, loss, seed)
            # one held-out set per grid point so that the oracle is solved once
            recs.append(evaluate(point, arch, base_seed, params=params, adapter=adapter,
                                 loss=loss, oracle=oracle, cache_dir=cache))
        row = {kind: value, "arch": arch, "seeds": n_seeds,
               "se_ratio": float(np.mean([r.se_ratio for r in recs])),
               "se_ratio_std": float(np.std([r.se_ratio for r in recs])),
               "csr": float(np.mean([r.csr for r in recs])),
               "mean_sum_rate": float(np.mean([r.extra["mean_sum_rate"] for r in recs]))}
        if recs[0].ee_ratio is not None:
            row["ee_ratio"] = float(np.mean([r.ee_ratio for r in recs]))
        rows.append(row)
        log.info("%s=%s se_ratio=%.2f", kind, value, row["se_ratio"])
    path = out / f"sweep-{kind}.csv"
    metrics.write_csv(path, rows)
    return {"sweep": path}


def cmd_flops(args, cfg: RunConfig | None, out: Path | None) -> dict:
    arch = args.arch or "model"
    if arch not in ("vanilla", "model"):
        raise ConfigError(f"no FLOP formula for arch {arch!r}")
    try:
        widths = [int(w) for w in args.widths.split(",")] if args.widths else \
            gnn.default_widths(arch, args.loss or "se")
    except ValueError as exc:
        raise ConfigError(f"invalid --widths {args.widths!r}") from exc
    try:
        print(metrics.flop_count(arch, args.N, args.K, widths))
    except InvalidArgumentError as exc:
        raise ConfigError(str(exc)) from exc
    return {}


def resolve_arch(args, cfg: RunConfig) -> str:
    arch = args.arch or cfg.raw("arch", "name", "model")
    if arch not in ARCHS:
        raise ConfigError(f"unknown arch {arch!r}; choose from {', '.join(ARCHS)}")
    return arch


def resolve_loss(args, cfg: RunConfig) -> str:
    loss = args.loss or cfg.raw("train", "loss", "se")
    if loss not in ("se", "ee"):
        raise ConfigError(f"unknown loss {loss!r}")
    return loss


def command_seed(args, cfg: RunConfig) -> int:
    """Seed a command runs with: --seed, else the config entry of its section."""
    if args.seed is not None:
        return args.seed
    if args.command == "eval":
        return cfg.int("eval", "seed", cfg.int("scenario", "seed", 0))
    section = "scenario" if args.command == "gen" else "train"
    return cfg.int(section, "seed", 0)


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="modelgnn", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", default="runs/latest")
        p.add_argument("--arch")  # validated later so that errors name the field
        p.add_argument("--loss")
        p.add_argument("--oracle", choices=("wmmse", "none"))
        p.add_argument("-v", "--verbose", action="store_true")

    for name in ("gen", "train", "eval"):
        common(sub.add_parser(name))
    sub.choices["eval"].add_argument("--checkpoint")
    sw = sub.add_parser("sweep")
    common(sw)
    sw.add_argument("--kind", choices=tuple(SWEEP_KEYS))
    fl = sub.add_parser("flops")
    fl.add_argument("--arch", default="model")
    fl.add_argument("--loss", default="se")
    fl.add_argument("--N", type=int, required=True)
    fl.add_argument("--K", type=int, required=True)
    fl.add_argument("--widths")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    torch.set_default_dtype(torch.float64)
    if args.command == "flops":
        try:
            cmd_flops(args, None, None)
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        return EXIT_OK
    started = time.time()
    out = Path(args.out)
    cfg = None
    try:
        cfg = RunConfig.load(args.config)
        out.mkdir(parents=True, exist_ok=True)
        artifacts = COMMANDS[args.command](args, cfg, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, SingularMatrixError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        if cfg is not None:
            write_manifest(out, args.command, cfg, command_seed(args, cfg), {}, started,
                           status="numeric-failure")
        return EXIT_NUMERIC
    seed = command_seed(args, cfg)
    artifacts["manifest"] = out / "manifest.json"
    write_manifest(out, args.command, cfg, seed, artifacts, started)
    print(json.dumps({k: str(v) for k, v in artifacts.items()}))
    return EXIT_OK


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
