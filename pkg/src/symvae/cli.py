"""Command-line entry point: ``symvae {generate-data,train,sweep,eval,verify,report}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .data import ToyDatasetSpec, make_dataset, write_points
from .metrics import evaluate
from .models import Architecture, MlpSpec, ModelTriple, Network, build_triple
from .objectives import ObjectiveSpec, Variant
from .training import LOG_COLUMNS, TrainConfig, TrainingDivergedError, train_run
from .verification import run_verification

log = logging.getLogger("symvae")

FORMAT_VERSION = "symvae-1"
COMMANDS = ("generate-data", "train", "sweep", "eval", "verify", "report")
SUMMARY_METRICS = ("mse", "mode_coverage", "is_analog", "skl_estimate", "high_quality_fraction", "iw_loglik")


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# --------------------------------------------------------------------- config


@dataclass(frozen=True)
class ModelConfig:
    z_dim: int = 2
    encoder_hidden: tuple[int, ...] = Architecture.encoder_hidden
    decoder_hidden: tuple[int, ...] = Architecture.decoder_hidden
    discriminator_hidden: tuple[int, ...] = Architecture.discriminator_hidden
    generator_activation: str = Architecture.generator_activation
    discriminator_activation: str = Architecture.discriminator_activation

    def architecture(self) -> Architecture:
        return Architecture(tuple(self.encoder_hidden), tuple(self.decoder_hidden),
                            tuple(self.discriminator_hidden), self.generator_activation,
                            self.discriminator_activation)


@dataclass(frozen=True)
class RunConfig:
    objective: ObjectiveSpec = field(default_factory=ObjectiveSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: ToyDatasetSpec = field(default_factory=ToyDatasetSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    output_dir: str = "runs/default"

    def to_dict(self) -> dict:
        train = self.train.to_dict()
        train["disc_steps_per_gen_step"] = self.train.disc_steps_for(self.objective)
        return {"format_version": FORMAT_VERSION,
                "objective": {"variant": self.objective.variant.value, "lambda": self.objective.lam,
                              "generator_transform": self.objective.generator_transform,
                              "decoder_only": self.objective.decoder_only},
                "train": train, "data": self.data.to_dict(),
                "model": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self.model).items()},
                "output_dir": self.output_dir}


_INT, _FLOAT, _STR, _INTS = "integer", "number", "string", "list of integers"

_SCHEMA = {
    "objective": {"variant": _STR, "lambda": _FLOAT, "generator_transform": (_STR, None),
                  "decoder_only": "boolean"},
    "train": {"learning_rate": _FLOAT, "batch_size": _INT, "total_generator_steps": _INT,
              "disc_steps_per_gen_step": (_INT, None), "adam_beta1": _FLOAT, "adam_beta2": _FLOAT,
              "adam_epsilon": _FLOAT, "clip_value": _FLOAT, "seed": _INT, "eval_every": _INT,
              "eval_generated": _INT, "eval_real": _INT},
    "data": {f.name: (_INT if f.type in ("int", int) else _FLOAT) for f in fields(ToyDatasetSpec)},
    "model": {"z_dim": _INT, "encoder_hidden": _INTS, "decoder_hidden": _INTS, "discriminator_hidden": _INTS,
              "generator_activation": _STR, "discriminator_activation": _STR},
}


def _check_type(value, expected, path: str):
    options = expected if isinstance(expected, tuple) else (expected,)
    for kind in options:
        if kind is None and value is None:
            return None
        if kind == _INT and isinstance(value, int) and not isinstance(value, bool):
            return value
        if kind == _FLOAT and isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        if kind == _STR and isinstance(value, str):
            return value
        if kind == "boolean" and isinstance(value, bool):
            return value
        if kind == _INTS and isinstance(value, list) and all(isinstance(v, int) and not isinstance(v, bool)
                                                             for v in value):
            return tuple(value)
    names = " or ".join("null" if k is None else k for k in options)
    raise ConfigError(path, f"expected {names}, got {json.dumps(value)}")


def parse_config(text: str) -> RunConfig:
    """Strict JSON config: unknown keys and type mismatches name their JSON path."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("$", "top level must be an object")
    for key in doc:
        if key not in _SCHEMA and key not in ("output_dir", "format_version"):
            raise ConfigError(f"$.{key}", "unknown key")
    sections = {}
    for name, schema in _SCHEMA.items():
        raw = doc.get(name, {})
        if not isinstance(raw, dict):
            raise ConfigError(f"$.{name}", "expected object")
        values = {}
        for key, value in raw.items():
            if key not in schema:
                raise ConfigError(f"$.{name}.{key}", "unknown key")
            values[key] = _check_type(value, schema[key], f"$.{name}.{key}")
        sections[name] = values
    if "format_version" in doc and doc["format_version"] != FORMAT_VERSION:
        raise ConfigError("$.format_version", f"unsupported {doc['format_version']!r}, expected {FORMAT_VERSION}")
    output_dir = _check_type(doc.get("output_dir", RunConfig.output_dir), _STR, "$.output_dir")

    obj = dict(sections["objective"])
    declared_decoder_only = obj.pop("decoder_only", None)
    try:
        objective = ObjectiveSpec(obj.get("variant", "SVAE"), obj.get("lambda", 0.0), obj.get("generator_transform"))
    except ValueError as exc:
        raise ConfigError("$.objective", str(exc)) from None
    if declared_decoder_only is not None and declared_decoder_only != objective.decoder_only:
        raise ConfigError("$.objective.decoder_only",
                          f"{objective.variant.value} implies decoder_only={objective.decoder_only}")
    built = {}
    for name, cls in (("train", TrainConfig), ("data", ToyDatasetSpec), ("model", ModelConfig)):
        try:
            built[name] = cls(**sections[name])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"$.{name}", str(exc)) from None
    try:
        built["model"].architecture()
        build_triple(built["data"].dim, built["model"].z_dim, 0, built["model"].architecture(),
                     objective.decoder_only)
    except ValueError as exc:
        raise ConfigError("$.model", str(exc)) from None
    return RunConfig(objective, built["train"], built["data"], built["model"], output_dir)


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("$", f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text)


# ---------------------------------------------------------------- checkpoint


def _atomic_write(path: Path, writer) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            writer(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(path: str | os.PathLike, triple: ModelTriple, config: RunConfig, step: int) -> None:
    """npz archive: a JSON header plus one float64 array per ``group/param``."""
    header = {"format_version": FORMAT_VERSION, "x_dim": triple.x_dim, "z_dim": triple.z_dim, "step": step,
              "specs": {g: s.to_dict() for g, s in triple.specs().items()}, "config": config.to_dict()}
    arrays = {f"{g}/{k}": np.ascontiguousarray(v, dtype=np.float64)
              for g, params in triple.named_params().items() for k, v in params.items()}
    _atomic_write(Path(path), lambda fh: np.savez(fh, __header__=np.array(json.dumps(header)), **arrays))


def load_checkpoint(path: str | os.PathLike) -> tuple[ModelTriple, dict]:
    with np.load(path, allow_pickle=False) as archive:
        if "__header__" not in archive.files:
            raise ValueError(f"{path}: not a checkpoint (missing header)")
        header = json.loads(str(archive["__header__"]))
        if header.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported format {header.get('format_version')!r}")
        nets = {}
        for group, spec_dict in header["specs"].items():
            spec = MlpSpec.from_dict(spec_dict)
            params = {name: archive[f"{group}/{name}"].copy() for name in spec.param_shapes()}
            nets[group] = Network(spec, params)
    triple = ModelTriple(nets.get("encoder"), nets["decoder"], nets["discriminator"], header["x_dim"],
                         header["z_dim"])
    return triple, header


# ----------------------------------------------------------------------- runs


def _write_json(path: Path, obj) -> None:
    _atomic_write(path, lambda fh: fh.write((json.dumps(obj, indent=2, sort_keys=True) + "\n").encode()))


def _write_csv(path: Path, columns, rows) -> None:
    def writer(fh):
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(columns), extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: ("" if v is None else v) for k, v in row.items()})
        fh.write(buf.getvalue().encode())
    _atomic_write(path, writer)


def execute_run(config: RunConfig, out_dir: str | os.PathLike) -> dict:
    """One training run with all artifacts written to ``out_dir``; returns the summary record."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", config.to_dict())
    gmm, dataset = make_dataset(config.data)
    triple = build_triple(config.data.dim, config.model.z_dim, config.train.seed, config.model.architecture(),
                          config.objective.decoder_only)
    summary = {"format_version": FORMAT_VERSION, "variant": config.objective.variant.value,
               "lambda": config.objective.lam, "seed": config.train.seed,
               "generator_transform": config.objective.generator_transform}
    try:
        trained, rows = train_run(triple, config.objective, dataset.points, gmm, config.train)
    except TrainingDivergedError as exc:
        summary.update(status="diverged", error=str(exc), step=exc.step, phase=exc.phase)
        _write_json(out / "summary.json", summary)
        return summary
    _write_csv(out / "metrics.csv", LOG_COLUMNS, rows)
    save_checkpoint(out / "checkpoint.npz", trained, config, config.train.total_generator_steps)
    summary["status"] = "ok"
    summary["final"] = rows[-1] if rows else None
    _write_json(out / "summary.json", summary)
    return summary


def _execute_job(job: tuple[RunConfig, str]) -> dict:
    return execute_run(*job)


def sweep_jobs(base: RunConfig, variants, lambdas, n_seeds: int, root: Path) -> list[tuple[RunConfig, str]]:
    """Cross product of variants x lambdas x seeds; seed = base_seed + run_index.

    Only SVAE_R takes a regularization weight; other variants run at
    lambda = 0 once per seed.
    """
    jobs = []
    base_seed = base.train.seed
    for variant in variants:
        v = Variant.parse(variant)
        lams = sorted(set(lambdas)) if v is Variant.SVAE_R else [0.0]
        for lam in lams:
            for _ in range(n_seeds):
                seed = base_seed + len(jobs)
                transform = base.objective.generator_transform if v is base.objective.variant else None
                objective = ObjectiveSpec(v, lam, transform)
                train = TrainConfig(**dict(base.train.to_dict(), seed=seed))
                cfg = RunConfig(objective, train, base.data, base.model, str(root))
                jobs.append((cfg, str(root / f"{v.value}_lam{lam:g}_seed{seed}")))
    return jobs


def run_sweep(base: RunConfig, variants, lambdas, n_seeds: int, root: str | os.PathLike, jobs: int = 1) -> list[dict]:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    plan = sweep_jobs(base, variants, lambdas, n_seeds, root)
    _write_json(root / "sweep.json", {"format_version": FORMAT_VERSION, "base_config": base.to_dict(),
                                      "runs": [Path(d).name for _, d in plan]})
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            summaries = list(pool.map(_execute_job, plan))
    else:
        summaries = [_execute_job(job) for job in plan]
    rows = []
    for (_, run_dir), s in zip(plan, summaries):
        row = {"run": Path(run_dir).name, "variant": s["variant"], "lambda": s["lambda"], "seed": s["seed"],
               "status": s["status"]}
        row.update({k: (s.get("final") or {}).get(k) for k in SUMMARY_METRICS})
        rows.append(row)
    _write_csv(root / "sweep_summary.csv", ["run", "variant", "lambda", "seed", "status", *SUMMARY_METRICS], rows)
    return summaries


def _final_row(metrics_csv: Path) -> dict | None:
    with open(metrics_csv, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return rows[-1] if rows else None


def build_report(sweep_dir: str | os.PathLike) -> list[dict]:
    """Per (variant, lambda) mean/min/max of each final metric; missing runs are skipped with a warning."""
    root = Path(sweep_dir)
    manifest = root / "sweep.json"
    if manifest.exists():
        names = json.loads(manifest.read_text())["runs"]
    else:
        names = sorted(p.name for p in root.iterdir() if (p / "metrics.csv").exists())
    groups: dict[tuple[str, float], list[dict]] = {}
    for name in names:
        metrics = root / name / "metrics.csv"
        if not metrics.exists():
            log.warning("run %s is missing; skipped", name)
            continue
        final = _final_row(metrics)
        if final is None:
            log.warning("run %s has an empty log; skipped", name)
            continue
        groups.setdefault((final["variant"], float(final["lambda"])), []).append(final)
    table = []
    for (variant, lam), finals in sorted(groups.items()):
        row = {"variant": variant, "lambda": lam, "n_runs": len(finals)}
        for metric in SUMMARY_METRICS:
            vals = [float(f[metric]) for f in finals if f.get(metric) not in (None, "")]
            for stat, fn in (("mean", np.mean), ("min", np.min), ("max", np.max)):
                row[f"{metric}_{stat}"] = float(fn(vals)) if vals else None
        table.append(row)
    return table


# ----------------------------------------------------------------------- argv


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="overrides train.seed (the base seed for sweeps)")
    common.add_argument("--output", help="output directory (overrides output_dir)")
    common.add_argument("--jobs", type=_positive_int, default=1, help="worker processes for sweeps")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="symvae", description="Symmetric adversarial VAE toolkit")
    sub = parser.add_subparsers(dest="command", required=True, metavar="{" + ",".join(COMMANDS) + "}")
    sub.add_parser("generate-data", parents=[common], help="write the toy dataset CSV and its spec")
    p = sub.add_parser("train", parents=[common], help="one training run")
    p.add_argument("--variant", help="SVAE, SVAE_R, ALI, GAN or WGAN")
    p.add_argument("--lambda", dest="lam", type=float, help="regularization weight (SVAE_R only)")
    p.add_argument("--transform", help="generator transform: raw-f, log-sigmoid or log-sigmoid-ns")
    p = sub.add_parser("sweep", parents=[common], help="variants x lambdas x seeds")
    p.add_argument("--lambda", dest="lam", type=_float_list, default=[0.0, 0.01, 0.1])
    p.add_argument("--seeds", type=_positive_int, default=3, help="seeds per (variant, lambda)")
    p.add_argument("--variants", default="SVAE_R", help="comma-separated variants")
    p = sub.add_parser("eval", parents=[common], help="metrics for a saved checkpoint")
    p.add_argument("--checkpoint", help="checkpoint file (default: <output>/checkpoint.npz)")
    sub.add_parser("verify", parents=[common], help="identity and optimal-discriminator checks")
    p = sub.add_parser("report", parents=[common], help="aggregate a sweep directory")
    p.add_argument("sweep_dir", nargs="?", help="sweep directory (default: --output)")
    return parser


def _resolve(args) -> RunConfig:
    cfg = load_config(args.config)
    train, objective = cfg.train, cfg.objective
    if args.seed is not None:
        train = TrainConfig(**dict(train.to_dict(), seed=args.seed))
    if args.command == "train" and (args.variant or args.lam is not None or args.transform):
        variant = args.variant or objective.variant
        lam = objective.lam if args.lam is None else args.lam
        transform = args.transform or (objective.generator_transform
                                       if Variant.parse(variant) is objective.variant else None)
        try:
            objective = ObjectiveSpec(variant, lam, transform)
        except ValueError as exc:
            raise ConfigError("--variant/--lambda", str(exc)) from None
    return RunConfig(objective, train, cfg.data, cfg.model, args.output or cfg.output_dir)


def _cmd_generate(args, cfg: RunConfig) -> int:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _, ds = make_dataset(cfg.data)
    write_points(out / "data.csv", ds)
    _write_json(out / "data_spec.json", {"format_version": FORMAT_VERSION, **cfg.data.to_dict()})
    print(out / "data.csv")
    return 0


def _cmd_train(args, cfg: RunConfig) -> int:
    summary = execute_run(cfg, cfg.output_dir)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0 if summary["status"] == "ok" else 1


def _cmd_sweep(args, cfg: RunConfig) -> int:
    variants = [Variant.parse(v) for v in args.variants.split(",") if v.strip()]
    for lam in args.lam:
        if lam < 0 or not math.isfinite(lam):
            raise ConfigError("--lambda", f"lambda must be a nonnegative number, got {lam}")
    summaries = run_sweep(cfg, variants, args.lam, args.seeds, cfg.output_dir, args.jobs)
    bad = [s for s in summaries if s["status"] != "ok"]
    print(f"{len(summaries)} runs, {len(bad)} diverged; summary in {Path(cfg.output_dir) / 'sweep_summary.csv'}")
    return 0 if not bad else 1


def _cmd_eval(args, cfg: RunConfig) -> int:
    path = Path(args.checkpoint or Path(cfg.output_dir) / "checkpoint.npz")
    triple, header = load_checkpoint(path)
    saved = parse_config(json.dumps({k: v for k, v in header["config"].items()}))
    seed = saved.train.seed if args.seed is None else args.seed
    gmm, ds = make_dataset(saved.data)
    record = evaluate(triple, saved.objective, gmm, ds.points[: saved.train.eval_real], header["step"],
                      np.random.default_rng(seed), saved.train.eval_generated)
    text = json.dumps(record.to_dict(), indent=2, sort_keys=True)
    _write_json(path.parent / "eval.json", record.to_dict())
    print(text)
    return 0


def _cmd_verify(args, cfg: RunConfig) -> int:
    seed = 0 if args.seed is None else args.seed
    result = run_verification(seed=seed)
    result["format_version"] = FORMAT_VERSION
    result["seed"] = seed
    out = Path(cfg.output_dir)
    _write_json(out / "verify.json", result)
    for section in ("decompositions", "optimal_discriminator", "symmetric_kl"):
        rows = result[section]
        print(f"{section}: {sum(r['passed'] for r in rows)}/{len(rows)} passed")
    print("verify:", "PASS" if result["passed"] else "FAIL")
    return 0 if result["passed"] else 1


def _cmd_report(args, cfg: RunConfig) -> int:
    root = Path(args.sweep_dir or cfg.output_dir)
    table = build_report(root)
    if not table:
        print(f"no completed runs under {root}", file=sys.stderr)
        return 1
    columns = list(table[0].keys())
    _write_csv(root / "report.csv", columns, table)
    for row in table:
        print(f"{row['variant']:7s} lambda={row['lambda']:<6g} n={row['n_runs']} "
              f"modes={row['mode_coverage_mean']:.2f} is={row['is_analog_mean']:.3f} "
              f"mse={row['mse_mean'] if row['mse_mean'] is None else round(row['mse_mean'], 4)}")
    return 0


_HANDLERS = {"generate-data": _cmd_generate, "train": _cmd_train, "sweep": _cmd_sweep, "eval": _cmd_eval,
             "verify": _cmd_verify, "report": _cmd_report}


def run_command(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve(args)
        return _HANDLERS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
