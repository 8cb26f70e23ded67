"""Command line front end for probing runs.

Exit codes: 0 success, 2 usage or config error, 3 data or format error,
4 numeric abort during training.

Every subcommand that writes a run directory drops a ``config.json`` holding
the fully resolved configuration, the effective seed, and the on-disk format
versions, so a run can be re-executed bit-identically from the directory
alone. Heavy modules (anything importing numpy) are imported inside the
command handlers; ``--threads`` must reach the environment before numpy
first loads or the BLAS pools ignore it.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import yaml

from .errors import (ConfigError, ContractError, DimensionError, FormatError,
                     ManifestError, NumericError, StepProbeError)

USAGE_ERROR = 2
DATA_ERROR = 3
NUMERIC_ABORT = 4

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS")


def apply_thread_cap(threads: int | None) -> None:
    """Cap BLAS worker pools. Must run before numpy is first imported."""
    if threads is None:
        return
    if threads < 1:
        raise ConfigError(f"--threads must be >= 1, got {threads}")
    if "numpy" in sys.modules:
        print("warning: numpy already loaded; --threads cap may not take "
              "effect in this process", file=sys.stderr)
    for var in _THREAD_VARS:
        os.environ[var] = str(threads)


# ---------------------------------------------------------------------------
# config plumbing


def load_config_file(path) -> dict:
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}")
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping of sections")
    return data


def apply_overrides(config: dict, assignments) -> dict:
    """Apply ``--set section.key=value`` pairs; values parse as YAML scalars."""
    for item in assignments or ():
        key, sep, raw = item.partition("=")
        parts = [p for p in key.strip().split(".")]
        if not sep or not all(parts):
            raise ConfigError(
                f"--set expects section.key=value, got {item!r}")
        node = config
        for p in parts[:-1]:
            nxt = node.setdefault(p, {})
            if not isinstance(nxt, dict):
                raise ConfigError(
                    f"--set {item!r}: {p!r} is not a config section")
            node = nxt
        try:
            val = yaml.safe_load(raw)
        except yaml.YAMLError:
            val = raw
        if isinstance(val, str):
            # YAML leaves bare scientific notation like 1e-2 as a string
            try:
                val = float(val)
            except ValueError:
                pass
        node[parts[-1]] = val
    return config


def _build_dataclass(cls, section: dict, what: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(
            f"unknown {what} config fields: {sorted(unknown)}; valid fields: "
            f"{sorted(known)}")
    return cls(**section)


def build_train_config(section: dict, args):
    from .training import TrainConfig

    merged = dict(section)
    for attr, key in (("epochs", "epochs"), ("batch_size", "batch_size"),
                      ("lr", "learning_rate")):
        val = getattr(args, attr, None)
        if val is not None:
            merged[key] = val
    if getattr(args, "seed", None) is not None:
        merged["seed"] = args.seed
    return _build_dataclass(TrainConfig, merged, "train")


_PROBE_DIM_FIELDS = ("d_model", "num_frames", "tokens_per_frame", "num_classes")


def build_probe_config(section: dict, args, manifest):
    """Resolve a probe config: variant from flag or file, dims from the data."""
    from .probes import ProbeConfig, Variant

    merged = dict(section)
    if getattr(args, "probe", None):
        merged["variant"] = args.probe
    variant = merged.pop("variant", None)
    if variant is None:
        raise ConfigError("no probe variant given; pass --probe or set "
                          "probe.variant in the config file")
    try:
        variant = Variant(variant)
    except ValueError:
        valid = ", ".join(v.value for v in Variant)
        raise ConfigError(
            f"unknown probe variant {variant!r}; valid variants: {valid}")

    t, n, d = manifest.dims
    data_dims = dict(d_model=d, num_frames=t, tokens_per_frame=n,
                     num_classes=manifest.num_classes)
    for key in _PROBE_DIM_FIELDS:
        if key in merged and merged[key] != data_dims[key]:
            raise ConfigError(
                f"probe.{key}={merged[key]} contradicts the manifest "
                f"({data_dims[key]})")
        merged.pop(key, None)

    allowed = {f.name for f in dataclasses.fields(ProbeConfig)} \
        - set(_PROBE_DIM_FIELDS) - {"variant"}
    unknown = set(merged) - allowed
    if unknown:
        raise ConfigError(
            f"unknown probe config fields: {sorted(unknown)}; valid fields: "
            f"{sorted(allowed)}")
    heads = merged.pop("num_heads", 4)
    seed = merged.pop("seed", 0)
    return ProbeConfig.for_variant(
        variant, d_model=d, num_classes=manifest.num_classes, num_frames=t,
        tokens_per_frame=n, num_heads=heads, seed=seed, **merged)


# ---------------------------------------------------------------------------
# run directory plumbing


def prepare_out_dir(path, overwrite: bool) -> Path:
    out = Path(path)
    if out.exists():
        if not out.is_dir():
            raise ConfigError(f"{out}: exists and is not a directory")
        if any(out.iterdir()) and not overwrite:
            raise ConfigError(
                f"output directory {out} is not empty; pass --overwrite to "
                "write into it anyway")
    else:
        out.mkdir(parents=True)
    return out


def format_versions() -> dict:
    from .features import VERSION as features_version
    from .manifest import FORMAT_VERSION as manifest_version
    from .probes import CKPT_VERSION as checkpoint_version

    return {"features": features_version, "manifest": manifest_version,
            "checkpoint": checkpoint_version}


def write_run_config(out: Path, payload: dict) -> None:
    from . import __version__

    meta = {"tool": "steprobe", "tool_version": __version__,
            "format_versions": format_versions()}
    meta.update(payload)
    (out / "config.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_dataset(manifest_path, pairs_path):
    from .manifest import ProbingDataset, load_manifest, load_pairs

    manifest = load_manifest(manifest_path)
    split = load_pairs(pairs_path, manifest.class_names)
    return ProbingDataset(manifest), manifest, split


def _write_report_artifacts(out: Path, report, name: str, split=None) -> list[Path]:
    from . import reporting

    written = []

    def _put(fname, writer, *a):
        p = out / fname
        writer(p, *a)
        written.append(p)

    _put("report.json", lambda p: Path(p).write_text(report.to_json() + "\n"))
    _put("report.txt", reporting.write_text,
         reporting.render_eval_report(report, name, split))
    _put("metrics.csv", reporting.write_metrics_csv, report, name)
    _put("per_class.csv", reporting.write_class_csv, report)
    _put("confusion.csv", reporting.write_confusion_csv, report)
    if report.corruption:
        _put("sensitivity.csv", reporting.write_sensitivity_csv, report)
    return written


# ---------------------------------------------------------------------------
# subcommand handlers


def cmd_gen_synth(args) -> int:
    from .synthetic import SynthConfig, generate_synthetic

    config = load_config_file(args.config) if args.config else {}
    apply_overrides(config, args.set)
    section = dict(config.get("synth", {}))
    for attr in ("num_pairs", "num_nsym", "clips_per_class", "num_frames",
                 "tokens_per_frame", "d_model", "noise_std"):
        val = getattr(args, attr, None)
        if val is not None:
            section[attr] = val
    if args.seed is not None:
        section["seed"] = args.seed
    synth = _build_dataclass(SynthConfig, section, "synth")

    out = prepare_out_dir(args.out, args.overwrite)
    manifest, split = generate_synthetic(synth, out)
    data_bytes = sum(p.stat().st_size for p in out.rglob("*") if p.is_file())
    write_run_config(out, {"command": "gen-synth",
                           "synth": dataclasses.asdict(synth),
                           "seed": synth.seed})
    print(f"classes: {manifest.num_classes}")
    print(f"clips: {len(manifest.clips)}")
    print(f"bytes: {data_bytes}")
    if args.verbose:
        print("class names: " + ", ".join(manifest.class_names))
        print(f"symmetric pairs: {sorted(split.pairs)}")
    return 0


def cmd_train(args) -> int:
    from .probes import count_params, init_params, save_checkpoint
    from .training import train
    from .evaluation import estimate_probe_flops, evaluate
    from . import reporting

    config = load_config_file(args.config) if args.config else {}
    apply_overrides(config, args.set)
    train_cfg = build_train_config(config.get("train", {}), args)
    dataset, manifest, split = load_dataset(args.manifest, args.pairs)
    probe_cfg = build_probe_config(config.get("probe", {}), args, manifest)

    resolved = {"command": "train",
                "manifest": str(args.manifest), "pairs": str(args.pairs),
                "split": args.split, "seed": train_cfg.seed,
                "probe": probe_cfg.to_dict(), "train": train_cfg.to_dict()}

    if args.dry_run:
        print(json.dumps(resolved, indent=2, sort_keys=True))
        print(f"params: {count_params(probe_cfg):,}")
        return 0

    if args.out is None:
        raise ConfigError("--out is required unless --dry-run is given")
    out = prepare_out_dir(args.out, args.overwrite)
    write_run_config(out, resolved)

    model = init_params(probe_cfg, seed=train_cfg.seed)
    model, history = train(model, dataset, train_cfg)
    save_checkpoint(model, out / "checkpoint.stepckpt")
    report = evaluate(model, dataset, split, split_name=args.split)

    (out / "history.json").write_text(
        json.dumps(history.to_dict(), indent=2) + "\n")
    reporting.write_history_csv(out / "history.csv", history)
    _write_report_artifacts(out, report, probe_cfg.variant.value, split)

    print(reporting.render_eval_report(report, probe_cfg.variant.value, split))
    print(f"\nbest val acc {reporting.fmt_pct(history.best_val_acc)} at "
          f"epoch {history.best_epoch}")
    print(f"run dir: {out}")
    if args.verbose:
        for e, (loss, acc) in enumerate(zip(history.train_loss,
                                            history.val_acc)):
            print(f"epoch {e:3d}  loss {loss:.4f}  val {acc:.4f}")
    return 0


def _load_model(path):
    from .probes import load_checkpoint

    try:
        return load_checkpoint(path)
    except FileNotFoundError:
        raise FormatError(f"checkpoint not found: {path}")


def cmd_eval(args) -> int:
    from .evaluation import evaluate
    from . import reporting

    model = _load_model(args.checkpoint)
    dataset, manifest, split = load_dataset(args.manifest, args.pairs)
    report = evaluate(model, dataset, split, split_name=args.split)
    print(reporting.render_eval_report(report, model.config.variant.value,
                                       split))
    if args.out:
        out = prepare_out_dir(args.out, args.overwrite)
        write_run_config(out, {
            "command": "eval", "checkpoint": str(args.checkpoint),
            "manifest": str(args.manifest), "pairs": str(args.pairs),
            "split": args.split, "seed": None,
            "probe": model.config.to_dict()})
        _write_report_artifacts(out, report, model.config.variant.value, split)
        print(f"run dir: {out}")
    return 0


def cmd_sensitivity(args) -> int:
    from .features import CORRUPTION_MODES
    from .evaluation import sensitivity_analysis
    from . import reporting

    modes = tuple(m.strip() for m in args.modes.split(",") if m.strip())
    bad = [m for m in modes if m not in CORRUPTION_MODES]
    if bad or not modes:
        raise ConfigError(f"unknown corruption modes {bad}; valid modes: "
                          f"{', '.join(CORRUPTION_MODES)}")
    model = _load_model(args.checkpoint)
    dataset, manifest, split = load_dataset(args.manifest, args.pairs)
    report = sensitivity_analysis(model, dataset, split, modes=modes,
                                  split_name=args.split,
                                  shuffle_seed=args.shuffle_seed)
    print(reporting.render_eval_report(report, model.config.variant.value,
                                       split))
    if args.out:
        out = prepare_out_dir(args.out, args.overwrite)
        write_run_config(out, {
            "command": "sensitivity", "checkpoint": str(args.checkpoint),
            "manifest": str(args.manifest), "pairs": str(args.pairs),
            "split": args.split, "modes": list(modes),
            "seed": args.shuffle_seed, "probe": model.config.to_dict()})
        _write_report_artifacts(out, report, model.config.variant.value, split)
        print(f"run dir: {out}")
    return 0


def cmd_ablate(args) -> int:
    from .evaluation import LADDER_ALIASES, ladder_configs, run_ablation
    from . import reporting

    if args.preset not in LADDER_ALIASES:
        raise ConfigError(f"unknown preset {args.preset!r}; valid presets: "
                          f"{', '.join(LADDER_ALIASES)}")
    config = load_config_file(args.config) if args.config else {}
    apply_overrides(config, args.set)
    train_cfg = build_train_config(config.get("train", {}), args)
    dataset, manifest, split = load_dataset(args.manifest, args.pairs)
    t, n, d = manifest.dims
    configs = ladder_configs(d, manifest.num_classes, t, n,
                             num_heads=args.heads)

    out = None
    if args.out:
        out = prepare_out_dir(args.out, args.overwrite)
        write_run_config(out, {
            "command": "ablate", "preset": args.preset,
            "manifest": str(args.manifest), "pairs": str(args.pairs),
            "split": args.split, "seed": train_cfg.seed,
            "num_heads": args.heads, "train": train_cfg.to_dict(),
            "rungs": [{"name": name, "probe": cfg.to_dict()}
                      for name, cfg in configs]})

    rows = run_ablation(configs, dataset, split, train_cfg,
                        split_name=args.split)
    table = reporting.render_ablation_table(rows)
    print(table)
    if out is not None:
        (out / "ablation.json").write_text(
            json.dumps([r.to_dict() for r in rows], indent=2) + "\n")
        reporting.write_ablation_csv(out / "ablation.csv", rows)
        reporting.write_text(out / "ablation.txt", table)
        print(f"run dir: {out}")
    return 0


def cmd_params(args) -> int:
    from .probes import ProbeConfig, Variant, count_params

    config = load_config_file(args.config) if args.config else {}
    apply_overrides(config, args.set)
    section = dict(config.get("probe", {}))
    if args.probe:
        section["variant"] = args.probe
    for attr, key in (("d_model", "d_model"), ("num_frames", "num_frames"),
                      ("tokens_per_frame", "tokens_per_frame"),
                      ("num_classes", "num_classes"), ("heads", "num_heads")):
        val = getattr(args, attr, None)
        if val is not None:
            section[key] = val
    variant = section.pop("variant", None)
    if variant is None:
        raise ConfigError("no probe variant given; pass --probe or set "
                          "probe.variant in the config file")
    try:
        variant = Variant(variant)
    except ValueError:
        valid = ", ".join(v.value for v in Variant)
        raise ConfigError(
            f"unknown probe variant {variant!r}; valid variants: {valid}")
    missing = [k for k in _PROBE_DIM_FIELDS if k not in section]
    if missing:
        raise ConfigError(f"params needs explicit dims; missing: {missing}")
    dims = {k: section.pop(k) for k in _PROBE_DIM_FIELDS}
    heads = section.pop("num_heads", 4)
    cfg = ProbeConfig.for_variant(variant, num_heads=heads, **dims, **section)
    n = count_params(cfg)
    if args.verbose:
        print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    print(f"{n:,}")
    return 0


def cmd_report(args) -> int:
    from .evaluation import AblationRow, EvalReport
    from .training import TrainHistory
    from . import figures, reporting

    run = Path(args.run)
    cfg_path = run / "config.json"
    if not cfg_path.is_file():
        raise FormatError(f"{run}: no config.json; not a run directory")
    try:
        run_cfg = json.loads(cfg_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{cfg_path}: invalid JSON: {exc}")

    out = prepare_out_dir(args.out or run / "report", args.overwrite)
    written = []
    name = (run_cfg.get("probe") or {}).get("variant", "probe")

    report_path = run / "report.json"
    if report_path.is_file():
        report = EvalReport.from_dict(json.loads(report_path.read_text()))
        txt = out / "report.txt"
        reporting.write_text(txt, reporting.render_eval_report(report, name))
        written.append(txt)
        cm_txt = out / "confusion.txt"
        reporting.write_text(cm_txt, reporting.render_confusion_matrix(report))
        written.append(cm_txt)
        reporting.write_metrics_csv(out / "metrics.csv", report, name)
        reporting.write_class_csv(out / "per_class.csv", report)
        reporting.write_confusion_csv(out / "confusion.csv", report)
        written += [out / "metrics.csv", out / "per_class.csv",
                    out / "confusion.csv"]
        written.append(figures.save_confusion_heatmap(
            report, out / "confusion.png", title=name))
        if report.corruption:
            reporting.write_sensitivity_csv(out / "sensitivity.csv", report)
            written.append(out / "sensitivity.csv")
            written.append(figures.save_sensitivity_bars(
                report, out / "sensitivity.png"))

    history_path = run / "history.json"
    if history_path.is_file():
        history = TrainHistory(**json.loads(history_path.read_text()))
        reporting.write_history_csv(out / "history.csv", history)
        written.append(out / "history.csv")
        written.append(figures.save_history_curves(history,
                                                   out / "history.png"))

    ablation_path = run / "ablation.json"
    if ablation_path.is_file():
        rows = [AblationRow.from_dict(d)
                for d in json.loads(ablation_path.read_text())]
        reporting.write_text(out / "ablation.txt",
                             reporting.render_ablation_table(rows))
        reporting.write_ablation_csv(out / "ablation.csv", rows)
        written += [out / "ablation.txt", out / "ablation.csv"]
        written.append(figures.save_ablation_bars(rows, out / "ablation.png"))

    if not written:
        raise FormatError(
            f"{run}: no renderable artifacts (report.json, history.json, "
            "ablation.json)")
    for p in written:
        print(p)
    return 0


def cmd_multitask(args) -> int:
    from .evaluation import multi_task_evaluate
    from . import reporting

    config = load_config_file(args.config) if args.config else {}
    apply_overrides(config, args.set)
    task_specs = []
    for item in args.task or ():
        tname, sep, ckpt = item.partition("=")
        if not sep or not tname or not ckpt:
            raise ConfigError(f"--task expects name=checkpoint, got {item!r}")
        task_specs.append({"name": tname, "checkpoint": ckpt})
    task_specs += list(config.get("tasks", []))
    if not task_specs:
        raise ConfigError("no tasks given; pass --task name=checkpoint or "
                          "list tasks in the config file")

    dataset, manifest, split = load_dataset(args.manifest, args.pairs)
    tasks = []
    for spec in task_specs:
        if not isinstance(spec, dict) or "name" not in spec \
                or "checkpoint" not in spec:
            raise ConfigError(f"malformed task entry: {spec!r}")
        tasks.append((spec["name"], manifest, _load_model(spec["checkpoint"])))

    report = multi_task_evaluate(
        tasks, split=split, split_name=args.split,
        shared_flops_per_clip=args.shared_gflops * 1e9)
    text = reporting.render_multitask_report(report)
    print(text)
    if args.out:
        out = prepare_out_dir(args.out, args.overwrite)
        write_run_config(out, {
            "command": "multitask", "manifest": str(args.manifest),
            "pairs": str(args.pairs), "split": args.split, "seed": None,
            "shared_gflops_per_clip": args.shared_gflops,
            "tasks": [{"name": s["name"], "checkpoint": str(s["checkpoint"])}
                      for s in task_specs]})
        (out / "multitask.json").write_text(
            json.dumps(report.to_dict(), indent=2) + "\n")
        reporting.write_text(out / "multitask.txt", text)
        print(f"run dir: {out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_common(p, out_required=False):
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override one config field (repeatable)")
    p.add_argument("--out", required=out_required, help="run directory")
    p.add_argument("--overwrite", action="store_true",
                   help="allow writing into a non-empty run directory")
    p.add_argument("--threads", type=int,
                   help="cap BLAS worker threads for this process")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_data(p):
    p.add_argument("--manifest", required=True, help="dataset manifest TSV")
    p.add_argument("--pairs", required=True, help="symmetric pair list TSV")
    p.add_argument("--split", default="test",
                   choices=("train", "val", "test"))


def _add_train_flags(p):
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int, help="training seed override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="steprobe",
        description="Train and evaluate temporal probes over frozen "
                    "per-frame video features.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth",
                       help="generate the synthetic symmetric-action dataset")
    _add_common(p, out_required=True)
    p.add_argument("--seed", type=int)
    for flag, attr in (("--num-pairs", "num_pairs"),
                       ("--num-nsym", "num_nsym"),
                       ("--clips-per-class", "clips_per_class"),
                       ("--frames", "num_frames"),
                       ("--tokens-per-frame", "tokens_per_frame"),
                       ("--d-model", "d_model")):
        p.add_argument(flag, type=int, dest=attr)
    p.add_argument("--noise-std", type=float, dest="noise_std")
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("train", help="train one probe and evaluate it")
    _add_common(p)
    _add_data(p)
    _add_train_flags(p)
    p.add_argument("--probe", help="probe variant "
                   "(linear, attentive, selfattn, step)")
    p.add_argument("--dry-run", action="store_true",
                   help="print resolved config and param count, train nothing")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    _add_common(p)
    _add_data(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sensitivity",
                       help="evaluate under frame-order corruptions")
    _add_common(p)
    _add_data(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--modes", default="reverse,shuffle",
                   help="comma-separated corruption modes")
    p.add_argument("--shuffle-seed", type=int, default=0,
                   dest="shuffle_seed")
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("ablate", help="train and evaluate a component ladder")
    _add_common(p)
    _add_data(p)
    _add_train_flags(p)
    p.add_argument("--preset", default="ladder",
                   help="ablation preset (ladder; table8 is an alias)")
    p.add_argument("--heads", type=int, default=4)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("params", help="print a probe's parameter count")
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    p.add_argument("--probe")
    p.add_argument("--d-model", type=int, dest="d_model")
    p.add_argument("--frames", type=int, dest="num_frames")
    p.add_argument("--tokens-per-frame", type=int, dest="tokens_per_frame")
    p.add_argument("--classes", type=int, dest="num_classes")
    p.add_argument("--heads", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("report",
                       help="render a run directory to tables, CSVs, and "
                            "figures")
    p.add_argument("--run", required=True, help="run directory to render")
    p.add_argument("--out", help="output directory (default RUN/report)")
    p.add_argument("--overwrite", action="store_true")
    p.add_argument("--threads", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("multitask",
                       help="evaluate several probe heads over one shared "
                            "feature pass")
    _add_common(p)
    _add_data(p)
    p.add_argument("--task", action="append", metavar="NAME=CHECKPOINT")
    p.add_argument("--shared-gflops", type=float, default=0.0,
                   dest="shared_gflops",
                   help="shared backbone GFLOPs per clip for the cost model")
    p.set_defaults(func=cmd_multitask)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        apply_thread_cap(getattr(args, "threads", None))
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except NumericError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return NUMERIC_ABORT
    except (FormatError, ManifestError, DimensionError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return DATA_ERROR
    except StepProbeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR
    except OSError as exc:
        # disk and permission problems pass through verbatim
        print(str(exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
