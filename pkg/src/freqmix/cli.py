"""Command-line entry point: ``freqmix <subcommand> [flags]``.

Exit codes: 0 success, 1 check failed, 2 bad flags or config, 3 IO/format
error, 4 numeric divergence. Precedence for settings: flags > config file >
defaults. Every artifact-producing run writes ``replay.json`` next to its
outputs; ``freqmix replay replay.json`` re-runs it with the same arguments.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import data as dt
from . import numerics as nx
from . import pipeline as pl
from . import spectral as sp
from .attention import time_average_abs
from .model import FreqMixFormer, ModelConfig, coerce, parameter_count, parse_kv

log = logging.getLogger("freqmix")

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_IO, EXIT_DIVERGED = 0, 1, 2, 3, 4


class UsageError(ValueError):
    """Bad flag values or config contents (exit 2)."""


# ---------------------------------------------------------------------------
# config resolution


def _set_pairs(items) -> dict[str, str]:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def resolve_model_config(args, **forced) -> ModelConfig:
    """defaults < --config file < --set flags < forced (data-derived) values."""
    fields = {f.name: f.type for f in dataclasses.fields(ModelConfig)}
    kw = {}
    if getattr(args, "config", None):
        kw |= parse_kv(Path(args.config).read_text(), ModelConfig)
    for k, v in _set_pairs(getattr(args, "set", None)).items():
        if k not in fields:
            raise UsageError(f"unknown model key {k!r}")
        kw[k] = coerce(v, fields[k])
    kw |= forced
    return ModelConfig(**kw)


def resolve_schedule(args) -> pl.TrainingSchedule:
    kw = {}
    if getattr(args, "schedule", None):
        kw |= parse_kv(Path(args.schedule).read_text(), _ScheduleText)
    flag_map = {"epochs": "epochs", "batch_size": "batch_size", "lr": "base_lr",
                "warmup": "warmup_epochs", "weight_decay": "weight_decay",
                "momentum": "momentum", "clip_norm": "clip_norm", "seed": "seed"}
    for flag, key in flag_map.items():
        v = getattr(args, flag, None)
        if v is not None:
            kw[key] = v
    if getattr(args, "milestones", None) is not None:
        kw["decay_milestones"] = _int_list(args.milestones)
    if "decay_milestones" in kw and isinstance(kw["decay_milestones"], str):
        kw["decay_milestones"] = _int_list(kw["decay_milestones"])
    if kw.get("clip_norm") in (0, 0.0):
        kw["clip_norm"] = None
    return pl.TrainingSchedule(**kw)


@dataclasses.dataclass
class _ScheduleText:
    """Typed view of schedule keys as they appear in a key=value file."""
    epochs: int = 0
    batch_size: int = 0
    base_lr: float = 0.0
    warmup_epochs: int = 0
    decay_milestones: str = ""
    decay_factor: float = 0.0
    weight_decay: float = 0.0
    momentum: float = 0.0
    clip_norm: float = 0.0
    seed: int = 0


def _int_list(text: str) -> tuple:
    text = text.strip()
    return tuple(int(t) for t in text.split(",") if t.strip()) if text else ()


def schedule_text(s: pl.TrainingSchedule) -> str:
    rows = []
    for f in dataclasses.fields(s):
        v = getattr(s, f.name)
        if f.name == "decay_milestones":
            v = ",".join(str(m) for m in v)
        elif v is None:
            v = 0.0
        rows.append(f"{f.name}={v!r}" if isinstance(v, float) else f"{f.name}={v}")
    return "\n".join(rows) + "\n"


def run_digest(*parts: str) -> str:
    return hashlib.sha256("\n--\n".join(parts).encode()).hexdigest()[:12]


def write_replay(out_dir: Path, argv: list[str], resolved: dict, name: str = "replay.json") -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(json.dumps({"version": __version__, "argv": list(argv), "resolved": resolved},
                               indent=2, sort_keys=True) + "\n")
    return path


def parse_values(text: str) -> list:
    """``a..b`` (step 1 for integers, else one unit of the finest decimal), ``a..b:step`` or ``v1,v2``."""
    text = text.strip()
    if ".." not in text:
        vals = [v.strip() for v in text.split(",") if v.strip()]
        if not vals:
            raise UsageError("empty --values")
        return [_number(v) for v in vals]
    rng, _, step = text.partition(":")
    lo_s, hi_s = (t.strip() for t in rng.split("..", 1))
    lo, hi = _number(lo_s), _number(hi_s)
    if step:
        st = _number(step)
    else:
        places = max(_decimals(lo_s), _decimals(hi_s))
        st = 1 if places == 0 else 10.0 ** -places
    if not st > 0 or hi < lo:
        raise UsageError(f"bad range {text!r}")
    count = int(round((hi - lo) / st)) + 1
    places = max(_decimals(lo_s), _decimals(hi_s), _decimals(step) if step else 0)
    out = [lo + i * st for i in range(count)]
    return [int(v) for v in out] if all(isinstance(v, int) for v in (lo, hi, st)) else [round(v, places + 6) for v in out]


def _decimals(s: str) -> int:
    return len(s.split(".", 1)[1]) if "." in s else 0


def _number(s: str):
    try:
        return int(s)
    except ValueError:
        try:
            return float(s)
        except ValueError:
            raise UsageError(f"not a number: {s!r}") from None


# ---------------------------------------------------------------------------
# small writers


def write_pgm(path: Path, m: np.ndarray) -> None:
    """8-bit binary PGM, row-major, scaled so the largest |entry| maps to 255."""
    m = np.abs(np.asarray(m, dtype=np.float64))
    top = m.max()
    img = np.zeros(m.shape, dtype=np.uint8) if top == 0 else np.round(255 * m / top).astype(np.uint8)
    h, w = img.shape
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode() + img.tobytes())


def write_matrix_csv(path: Path, m: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in np.asarray(m):
            w.writerow([repr(float(v)) for v in row])


def write_rows(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _load_dataset(path, modality: str = "joint") -> dt.Dataset:
    ds = dt.read_canonical(path)
    return ds if modality == "joint" else ds.with_modality(modality)


def _model_for(ds: dt.Dataset, args) -> FreqMixFormer:
    cfg = resolve_model_config(args, J=ds.J, C_in=ds.C_in, F=ds.F, num_classes=ds.num_classes)
    return FreqMixFormer(cfg)


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args, argv) -> int:
    spec = dt.SynthSpec(J=args.J, F=args.F, classes=args.classes, samples=args.samples,
                        jitter_joints=tuple(_int_list(args.jitter_joints)), jitter_amp=args.amp,
                        noise=args.noise, n_high=args.n_high, low_var=args.low_var,
                        center=not args.no_center)
    ds = dt.synth_confusable(spec, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    dt.write_canonical(out, ds)
    resolved = {"synth": {k: (list(v) if isinstance(v, tuple) else v) for k, v in dataclasses.asdict(spec).items()},
                "seed": args.seed}
    write_replay(out.parent, argv, resolved, f"{out.name}.replay.json")
    print(f"wrote {len(ds)} samples ({int((ds.split == dt.TRAIN).sum())} train) to {out}")
    return EXIT_OK


def cmd_parse(args, argv) -> int:
    files = []
    for p in args.inputs:
        p = Path(p)
        files.extend(sorted(p.glob("*.skeleton")) if p.is_dir() else [p])
    if not files:
        raise UsageError("no .skeleton files given")
    seqs = [dt.load_ntu_file(f) for f in files]
    ds = dt.dataset_from_sequences(seqs, args.frames, num_classes=args.num_classes)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    dt.write_canonical(out, ds)
    write_replay(out.parent, argv, {"frames": args.frames, "files": [str(f) for f in files]},
                 f"{out.name}.replay.json")
    print(f"wrote {len(ds)} sequences to {out}")
    return EXIT_OK


def cmd_train(args, argv) -> int:
    ds = _load_dataset(args.data, args.modality)
    model = _model_for(ds, args)
    schedule = resolve_schedule(args)
    cfg_text, sch_text = model.cfg.to_text(), schedule_text(schedule)
    digest = run_digest(cfg_text, sch_text, str(Path(args.data).resolve()), args.modality)
    out = Path(args.out_root) / digest
    out.mkdir(parents=True, exist_ok=True)
    (out / "model.cfg").write_text(cfg_text)
    (out / "schedule.cfg").write_text(sch_text)
    write_replay(out, argv, {"model": cfg_text, "schedule": sch_text, "data": str(args.data),
                             "modality": args.modality, "seed": schedule.seed})
    result = pl.train(model, ds, schedule, out, keep_epoch_checkpoints=not args.no_epoch_checkpoints)
    metrics, scores = pl.evaluate(model, ds, "test") if len(ds.indices("test")) else (None, None)
    if scores is not None:
        scores.write(out / "scores.csv")
    last = result.log[-1]
    print(f"{out}: epochs={len(result.log)} loss={last['loss']:.4f} train_acc={last['train_acc']:.4f} "
          f"test_top1={'n/a' if metrics is None else f'{metrics.top1:.4f}'} best_epoch={result.best_epoch}")
    return EXIT_OK


def cmd_eval(args, argv) -> int:
    ds = _load_dataset(args.data, args.modality)
    model = _model_for(ds, args)
    model.load(args.checkpoint)
    metrics, scores = pl.evaluate(model, ds, args.split)
    if args.scores:
        Path(args.scores).parent.mkdir(parents=True, exist_ok=True)
        scores.write(args.scores)
    print(f"top1={metrics.top1:.6f} samples={metrics.total}")
    if args.per_class:
        for c, a in enumerate(metrics.per_class):
            print(f"class {c}: {a:.4f}")
        rep = pl.difficulty_report(metrics.per_class)
        print("  ".join(f"{k}={len(v)}" for k, v in rep.items()))
    return EXIT_OK


def cmd_ensemble(args, argv) -> int:
    files = [pl.ScoreFile.read(p) for p in args.scores]
    weights = [float(w) for w in args.weights.split(",")] if args.weights else None
    ds = _load_dataset(args.data)
    _, y, idx = ds.subset(args.split)
    by_id = {ds.sources[i]: int(ds.labels[i]) for i in idx}
    try:
        labels = [by_id[i] for i in files[0].ids]
    except KeyError as e:
        raise UsageError(f"score id {e.args[0]!r} not in the {args.split} split of {args.data}") from None
    metrics = pl.ensemble(files, weights, labels)
    print(f"top1={metrics.top1:.6f} streams={len(files)}")
    return EXIT_OK


def cmd_attn_export(args, argv) -> int:
    ds = _load_dataset(args.data, args.modality)
    model = _model_for(ds, args)
    if args.checkpoint:
        model.load(args.checkpoint)
    if not 0 <= args.index < len(ds):
        raise UsageError(f"--index {args.index} outside [0, {len(ds)})")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace: dict = {}
    model.forward(ds.x[args.index:args.index + 1], trace=trace)
    written = 0
    for b in range(model.cfg.depth):
        ms, mf, mfs = trace[f"block{b}.ms"], trace[f"block{b}.mf"], trace[f"block{b}.mfs"]
        for i in range(model.cfg.n):
            panels = {"ms": ms[i][0],
                      "mfs": mfs[i, 0].mean(axis=0)}
            if mf is not None:
                panels["mf_abs"] = time_average_abs(mf[i][0])
            for name, mat in panels.items():
                stem = out / f"block{b}_group{i}_{name}"
                write_matrix_csv(stem.with_suffix(".csv"), mat)
                write_pgm(stem.with_suffix(".pgm"), mat)
                written += 1
    write_replay(out, argv, {"model": model.cfg.to_text(), "index": args.index,
                             "checkpoint": args.checkpoint})
    print(f"wrote {written} maps to {out}")
    return EXIT_OK


def cmd_spectral_check(args, argv) -> int:
    Fs = _int_list(args.F)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["F", "orthonormality", "roundtrip", "parseval"])
    worst = 0.0
    for F in Fs:
        r = sp.residuals(F, seed=args.seed)
        worst = max(worst, r["orthonormality"], r["roundtrip"], r["parseval"])
        w.writerow([F, f"{r['orthonormality']:.3e}", f"{r['roundtrip']:.3e}", f"{r['parseval']:.3e}"])
    return EXIT_OK if worst < args.tol else EXIT_CHECK


def cmd_grad_check(args, argv) -> int:
    base = dict(J=5, C=8, F=8, n=2, depth=1, num_classes=3, n_high=2, seed=args.seed)
    cfg = resolve_model_config(args)
    cfg = ModelConfig(**(base | {k: getattr(cfg, k) for k in _explicit_model_keys(args)}))
    model = FreqMixFormer(cfg)
    rng = nx.make_rng(args.seed + 1)
    x = rng.normal(size=(args.batch, cfg.J, cfg.C_in, cfg.F))
    y = rng.integers(0, cfg.num_classes, size=args.batch)
    rep = pl.grad_check(model, x, y, args.epsilon, corrupt=args.corrupt)
    print(rep)
    print("PASS" if rep.max_rel_error < args.tol else "FAIL", f"(tolerance {args.tol:g})")
    return EXIT_OK if rep.max_rel_error < args.tol else EXIT_CHECK


def _explicit_model_keys(args) -> set:
    keys = set(_set_pairs(getattr(args, "set", None)))
    if getattr(args, "config", None):
        keys |= set(parse_kv(Path(args.config).read_text(), ModelConfig))
    return keys


SWEEP_PARAMS = {"n": int, "phi": float, "n_high": int}
ABLATION_ROWS = (
    ("baseline", dict(use_fab=False, use_fo=False, use_tab=False)),
    ("+TAB", dict(use_fab=False, use_fo=False, use_tab=True)),
    ("+FAB", dict(use_fab=True, use_fo=False, use_tab=False)),
    ("+FAB+FO", dict(use_fab=True, use_fo=True, use_tab=False)),
    ("+FAB+FO+TAB", dict(use_fab=True, use_fo=True, use_tab=True)),
)


def cmd_sweep(args, argv) -> int:
    if args.ablation == (args.param is not None):
        raise UsageError("give exactly one of --param/--values or --ablation")
    ds = _load_dataset(args.data, args.modality)
    schedule = resolve_schedule(args)
    if args.ablation:
        rows = [(name, flags) for name, flags in ABLATION_ROWS]
        header = ["setting", "use_fab", "use_fo", "use_tab", "params", "top1"]
    else:
        if args.values is None:
            raise UsageError("--param needs --values")
        cast = SWEEP_PARAMS[args.param]
        rows = [(cast(v), {args.param: cast(v)}) for v in parse_values(args.values)]
        header = [args.param, "params", "top1"]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    table = []
    for label, flags in rows:
        cfg = resolve_model_config(args, J=ds.J, C_in=ds.C_in, F=ds.F, num_classes=ds.num_classes, **flags)
        model = FreqMixFormer(cfg)
        if args.dry_run:
            top1 = float("nan")
        else:
            pl.train(model, ds, schedule, validate=False)
            top1 = pl.evaluate(model, ds, "test")[0].top1
        count = parameter_count(cfg)
        if args.ablation:
            table.append([label, int(cfg.use_fab), int(cfg.use_fo), int(cfg.use_tab), count, repr(float(top1))])
        else:
            table.append([label, count, repr(float(top1))])
        log.info("sweep %s -> %s", label, top1)
    write_rows(out, header, table)
    write_replay(out.parent, argv, {"schedule": schedule_text(schedule), "data": str(args.data)},
                 f"{out.name}.replay.json")
    print(f"wrote {len(table)} rows to {out}")
    return EXIT_OK


def render_markdown(path) -> str:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise UsageError(f"{path} is empty")
    header, body = rows[0], rows[1:]

    def fmt(col, v):
        if col == "top1":
            try:
                return f"{100 * float(v):.1f}"
            except ValueError:
                return v
        if col in ("use_fab", "use_fo", "use_tab"):
            return "✓" if v == "1" else ""
        return v

    cols = [("top1 (%)" if c == "top1" else c) for c in header]
    lines = ["| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
    for r in body:
        lines.append("| " + " | ".join(fmt(c, v) for c, v in zip(header, r)) + " |")
    return "\n".join(lines) + "\n"


def cmd_report(args, argv) -> int:
    parts = []
    for p in args.csv:
        parts.append(f"### {Path(p).stem}\n\n" + render_markdown(p))
    text = "\n".join(parts)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_replay(args, argv) -> int:
    rec = json.loads(Path(args.file).read_text())
    inner = rec["argv"]
    if inner and inner[0] == "replay":
        raise UsageError("refusing to replay a replay")
    return main(inner)


# ---------------------------------------------------------------------------
# argument parser


def _model_flags(p):
    p.add_argument("--config", help="model config file (key=value lines)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one model key (repeatable)")


def _schedule_flags(p):
    p.add_argument("--schedule", help="schedule file (key=value lines)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float, help="base learning rate")
    p.add_argument("--warmup", type=int)
    p.add_argument("--milestones", help="comma-separated decay epochs (empty string for none)")
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--clip-norm", type=float, help="gradient-norm cap; 0 disables")
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="freqmix", description="Frequency-aware mixed attention toolkit.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the confusable synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--samples", type=int, default=600)
    p.add_argument("--J", type=int, default=25)
    p.add_argument("--F", type=int, default=64)
    p.add_argument("--jitter-joints", default="11,23")
    p.add_argument("--amp", type=float, default=dt.SynthSpec.jitter_amp)
    p.add_argument("--noise", type=float, default=dt.SynthSpec.noise)
    p.add_argument("--low-var", type=float, default=dt.SynthSpec.low_var)
    p.add_argument("--n-high", type=int, default=12)
    p.add_argument("--no-center", action="store_true", help="keep each coordinate's mean over frames")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("parse", help="convert NTU .skeleton files to the canonical format")
    p.add_argument("inputs", nargs="+", help=".skeleton files or directories")
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=64)
    p.add_argument("--num-classes", type=int, default=None)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("train", help="train a model on a canonical dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out-root", default="runs")
    p.add_argument("--modality", choices=dt.MODALITIES, default="joint")
    p.add_argument("--no-epoch-checkpoints", action="store_true")
    _model_flags(p)
    _schedule_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--modality", choices=dt.MODALITIES, default="joint")
    p.add_argument("--scores", help="write per-sample scores here")
    p.add_argument("--per-class", action="store_true")
    _model_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ensemble", help="fuse score files")
    p.add_argument("scores", nargs="+")
    p.add_argument("--data", required=True, help="dataset supplying the labels")
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--weights", help="comma-separated, one per score file")
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("attn-export", help="export MS, time-averaged |MF| and MFS maps as CSV + PGM")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--modality", choices=dt.MODALITIES, default="joint")
    p.add_argument("--out", required=True)
    _model_flags(p)
    p.set_defaults(func=cmd_attn_export)

    p = sub.add_parser("spectral-check", help="print DCT residuals as CSV")
    p.add_argument("--F", default="4,8,16,64", help="comma-separated frame counts")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_spectral_check)

    p = sub.add_parser("grad-check", help="finite-difference check on a tiny model")
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--batch", type=int, default=2)
    p.add_argument("--corrupt", help="perturb this parameter's gradient (fault injection)")
    p.add_argument("--seed", type=int, default=0)
    _model_flags(p)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("sweep", help="train one model per setting and tabulate test accuracy")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--param", choices=sorted(SWEEP_PARAMS))
    p.add_argument("--values", help="e.g. 0.1..0.9, 2..6 or 4,8,12")
    p.add_argument("--ablation", action="store_true", help="baseline/+TAB/+FAB/+FO rows instead of a grid")
    p.add_argument("--modality", choices=dt.MODALITIES, default="joint")
    p.add_argument("--dry-run", action="store_true", help="skip training (parameter counts only)")
    _model_flags(p)
    _schedule_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="render CSV results as Markdown tables")
    p.add_argument("csv", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("replay", help="re-run a command from its replay.json")
    p.add_argument("file")
    p.set_defaults(func=cmd_replay)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # argparse already printed the diagnostic
        return EXIT_USAGE if e.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, argv)
    except (pl.DivergenceError, nx.NonFiniteError) as e:
        print(f"freqmix: diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, dt.FormatError, dt.ParseError, nx.FormatError) as e:
        print(f"freqmix: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_IO
    except (UsageError, ValueError, TypeError) as e:
        print(f"freqmix: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
