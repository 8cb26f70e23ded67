"""Evaluation: accuracy with symmetric/non-symmetric breakdown, confusion
analysis, temporal-sensitivity probes, analytic head FLOPs, the ablation
ladder, and single-pass multi-task evaluation."""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ContractError, DimensionError
from .features import CORRUPTION_MODES, FeatureStore, corrupt_order
from .manifest import DatasetManifest, ProbingDataset, SymmetricSplit
from .probes import (PEScheme, ProbeConfig, ProbeModel, Variant, init_params,
                     token_count)
from .training import TrainConfig, predict_batched, train


@dataclass
class CorruptionResult:
    accuracy: float
    delta: float  # clean minus corrupted overall accuracy
    mirror_rate: float  # sym clips predicted as their pair under corruption

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "delta": self.delta,
                "mirror_rate": self.mirror_rate}

    @staticmethod
    def from_dict(d: dict) -> "CorruptionResult":
        return CorruptionResult(accuracy=d["accuracy"], delta=d["delta"],
                                mirror_rate=d["mirror_rate"])


@dataclass
class EvalReport:
    split_name: str
    num_clips: int
    overall_acc: float
    sym_acc: float
    nsym_acc: float
    per_class_acc: list[float]
    confusion: np.ndarray  # [true, predicted] counts
    mirror_confusion: dict[int, float]
    top_confusion: dict[int, tuple[int, float]]
    class_names: tuple[str, ...]
    param_count: int
    probe_gflops_estimate: float
    corruption: dict[str, CorruptionResult] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "split_name": self.split_name,
            "num_clips": self.num_clips,
            "overall_acc": self.overall_acc,
            "sym_acc": self.sym_acc,
            "nsym_acc": self.nsym_acc,
            "per_class_acc": list(self.per_class_acc),
            "confusion": self.confusion.tolist(),
            "mirror_confusion": {str(k): v for k, v in self.mirror_confusion.items()},
            "top_confusion": {str(k): list(v) for k, v in self.top_confusion.items()},
            "class_names": list(self.class_names),
            "param_count": self.param_count,
            "probe_gflops_estimate": self.probe_gflops_estimate,
            "corruption": {k: v.to_dict() for k, v in self.corruption.items()},
        }

    @staticmethod
    def from_dict(d: dict) -> "EvalReport":
        """Inverse of to_dict, for re-rendering stored run artifacts."""
        return EvalReport(
            split_name=d["split_name"],
            num_clips=d["num_clips"],
            overall_acc=d["overall_acc"],
            sym_acc=d["sym_acc"],
            nsym_acc=d["nsym_acc"],
            per_class_acc=list(d["per_class_acc"]),
            confusion=np.asarray(d["confusion"], dtype=np.int64),
            mirror_confusion={int(k): v for k, v in d["mirror_confusion"].items()},
            top_confusion={int(k): (int(v[0]), float(v[1]))
                           for k, v in d["top_confusion"].items()},
            class_names=tuple(d["class_names"]),
            param_count=d["param_count"],
            probe_gflops_estimate=d["probe_gflops_estimate"],
            corruption={k: CorruptionResult.from_dict(v)
                        for k, v in d.get("corruption", {}).items()},
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def estimate_probe_flops(config: ProbeConfig) -> float:
    """Analytic multiply-add count for one clip through the probe head.

    Self-attention variants: 2*L*d*3d (QKV) + 2*L^2*d (attention) +
    2*L*d*d (output projection) + 2*d*C (classifier). The linear probe is
    just its classifier. The attentive probe has a single query row, so the
    quadratic term collapses to 4*L*d and only K/V span the token sequence.
    Backbone cost is excluded; this is head-only.
    """
    d, c = config.d_model, config.num_classes
    if config.variant == Variant.LINEAR:
        return float(2 * d * c)
    if config.variant == Variant.ATTENTIVE:
        length = config.num_frames * (config.tokens_per_frame + 1)
        kv = 2.0 * length * d * 2 * d
        q = 2.0 * d * d
        attn = 4.0 * length * d
        out = 2.0 * d * d
        ff = 2.0 * 2 * d * 4 * d
        return kv + q + attn + out + ff + 2.0 * d * c
    length = token_count(config)
    qkv = 2.0 * length * d * 3 * d
    attn = 2.0 * float(length) ** 2 * d
    out = 2.0 * length * d * d
    return qkv + attn + out + 2.0 * d * c


def _accuracy(mask: np.ndarray, hits: np.ndarray) -> float:
    if not mask.any():
        return float("nan")
    return float(hits[mask].mean())


def evaluate(model: ProbeModel, dataset: ProbingDataset, split: SymmetricSplit,
             split_name: str = "test") -> EvalReport:
    """Argmax evaluation over one split, in manifest order.

    Ties break toward the lowest class index. Raises ContractError if the
    split has no clips.
    """
    examples = dataset.examples(split_name)
    if not examples:
        raise ContractError(f"cannot evaluate: split {split_name!r} is empty")
    num_classes = dataset.manifest.num_classes
    if model.config.num_classes != num_classes:
        raise ContractError(
            f"probe expects {model.config.num_classes} classes but manifest "
            f"defines {num_classes}")

    features = [f for f, _ in examples]
    labels = np.array([y for _, y in examples], dtype=np.int64)
    preds = predict_batched(model, features)
    return _report_from_predictions(
        labels, preds, split, dataset.manifest, split_name,
        param_count=model.count_params(),
        gflops=estimate_probe_flops(model.config) / 1e9)


def _report_from_predictions(labels, preds, split, manifest, split_name,
                             param_count, gflops) -> EvalReport:
    num_classes = manifest.num_classes
    hits = preds == labels
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (labels, preds), 1)

    support = confusion.sum(axis=1)
    per_class = [float(confusion[c, c] / support[c]) if support[c] else float("nan")
                 for c in range(num_classes)]
    sym_mask = np.isin(labels, sorted(split.sym_set))
    nsym_mask = ~sym_mask

    mirror_confusion: dict[int, float] = {}
    top_confusion: dict[int, tuple[int, float]] = {}
    for c in range(num_classes):
        if not support[c]:
            continue
        mirror = split.mirror(c)
        if mirror is not None:
            mirror_confusion[c] = float(confusion[c, mirror] / support[c])
        else:
            row = confusion[c].copy()
            row[c] = 0
            if row.sum():
                top = int(np.argmax(row))
                top_confusion[c] = (top, float(row[top] / support[c]))

    return EvalReport(
        split_name=split_name,
        num_clips=int(labels.size),
        overall_acc=float(hits.mean()),
        sym_acc=_accuracy(sym_mask, hits),
        nsym_acc=_accuracy(nsym_mask, hits),
        per_class_acc=per_class,
        confusion=confusion,
        mirror_confusion=mirror_confusion,
        top_confusion=top_confusion,
        class_names=manifest.class_names,
        param_count=param_count,
        probe_gflops_estimate=gflops,
    )


def _clip_shuffle_seed(clip_id: str, base_seed: int) -> int:
    # stable per-clip permutation independent of clip order in the manifest
    return (zlib.crc32(clip_id.encode("utf-8")) ^ base_seed) & 0x7FFFFFFF


def sensitivity_analysis(model: ProbeModel, dataset: ProbingDataset,
                         split: SymmetricSplit,
                         modes: Sequence[str] = CORRUPTION_MODES,
                         split_name: str = "test",
                         shuffle_seed: int = 0) -> EvalReport:
    """Clean evaluation plus re-evaluation under frame-order corruptions.

    Each corruption entry records the corrupted accuracy, the drop versus
    clean, and the rate at which symmetric clips get predicted as their
    mirror class.
    """
    report = evaluate(model, dataset, split, split_name)
    examples = dataset.examples(split_name)
    labels = np.array([y for _, y in examples], dtype=np.int64)
    sym_mask = np.isin(labels, sorted(split.sym_set))
    mirrors = np.array([split.mirror(y) if split.mirror(y) is not None else -1
                        for y in labels])

    for mode in modes:
        corrupted = [corrupt_order(f, mode,
                                   seed=_clip_shuffle_seed(f.clip_id, shuffle_seed)
                                   if mode == "shuffle" else None)
                     for f, _ in examples]
        preds = predict_batched(model, corrupted)
        acc = float((preds == labels).mean())
        if sym_mask.any():
            mirror_rate = float((preds[sym_mask] == mirrors[sym_mask]).mean())
        else:
            mirror_rate = float("nan")
        report.corruption[mode] = CorruptionResult(
            accuracy=acc, delta=report.overall_acc - acc,
            mirror_rate=mirror_rate)
    return report


# ---------------------------------------------------------------------------
# ablation ladder


@dataclass
class AblationRow:
    name: str
    config: ProbeConfig
    report: EvalReport

    def to_dict(self) -> dict:
        return {"name": self.name, "config": self.config.to_dict(),
                "overall_acc": self.report.overall_acc,
                "sym_acc": self.report.sym_acc,
                "nsym_acc": self.report.nsym_acc,
                "param_count": self.report.param_count,
                "report": self.report.to_dict()}

    @staticmethod
    def from_dict(d: dict) -> "AblationRow":
        return AblationRow(name=d["name"],
                           config=ProbeConfig.from_dict(d["config"]),
                           report=EvalReport.from_dict(d["report"]))


LADDER_PRESET = "ladder"
LADDER_ALIASES = (LADDER_PRESET, "table8")


def ladder_configs(d_model: int, num_classes: int, num_frames: int,
                   tokens_per_frame: int, num_heads: int = 4) -> list[tuple[str, ProbeConfig]]:
    """The component ladder: plain self-attention, plus global CLS, plus
    temporal PE, and the full probe with both."""
    dims = dict(d_model=d_model, num_classes=num_classes,
                num_frames=num_frames, tokens_per_frame=tokens_per_frame,
                num_heads=num_heads)
    return [
        ("self-attn", ProbeConfig.for_variant(Variant.SELF_ATTN, **dims)),
        ("+global-cls", ProbeConfig.for_variant(Variant.STEP, **dims,
                                                pe_scheme=PEScheme.NONE)),
        ("+temporal-pe", ProbeConfig.for_variant(Variant.SELF_ATTN, **dims,
                                                 pe_scheme=PEScheme.LEARNABLE)),
        ("step", ProbeConfig.for_variant(Variant.STEP, **dims)),
    ]


def run_ablation(configs: Sequence[tuple[str, ProbeConfig]],
                 dataset: ProbingDataset, split: SymmetricSplit,
                 train_config: TrainConfig,
                 split_name: str = "test") -> list[AblationRow]:
    """Train every named config with the identical TrainConfig and seed,
    then evaluate each on the same split."""
    rows = []
    for name, config in configs:
        model = init_params(config, seed=train_config.seed)
        model, _ = train(model, dataset, train_config)
        rows.append(AblationRow(name, config,
                                evaluate(model, dataset, split, split_name)))
    return rows


# ---------------------------------------------------------------------------
# multi-task single-pass evaluation


@dataclass
class MultiTaskReport:
    feature_loads: int
    num_clips: int
    task_reports: dict[str, EvalReport]
    head_flops: dict[str, float]
    shared_flops: float
    total_flops: float

    def to_dict(self) -> dict:
        return {"feature_loads": self.feature_loads,
                "num_clips": self.num_clips,
                "task_reports": {k: v.to_dict() for k, v in self.task_reports.items()},
                "head_flops": self.head_flops,
                "shared_flops": self.shared_flops,
                "total_flops": self.total_flops}


def multi_task_evaluate(tasks: Sequence[tuple[str, DatasetManifest, ProbeModel]],
                        split: SymmetricSplit | None = None,
                        split_name: str = "test",
                        shared_flops_per_clip: float = 0.0) -> MultiTaskReport:
    """Evaluate several probes over one shared pass of the feature files.

    All tasks must reference identical clip feature files (same ids, same
    paths, same dims); each file is loaded exactly once through a shared
    store regardless of the task count. The cost model is
    ``total = shared + sum(heads)``: the shared term is one backbone pass
    per clip (``shared_flops_per_clip``, zero when features are precomputed)
    and each head contributes its analytic per-clip FLOPs.
    """
    if not tasks:
        raise ContractError("multi_task_evaluate needs at least one task")
    first = tasks[0][1]
    ref = [(c.clip_id, c.feature_path) for c in first.clips_for_split(split_name)]
    if not ref:
        raise ContractError(f"cannot evaluate: split {split_name!r} is empty")
    for name, manifest, model in tasks:
        rows = [(c.clip_id, c.feature_path) for c in manifest.clips_for_split(split_name)]
        if rows != ref:
            raise ContractError(
                f"task {name!r} references different clip files than the first task")
        if manifest.dims != first.dims:
            raise DimensionError(
                f"task {name!r} dims {manifest.dims} != {first.dims}")
        if (model.config.num_frames, model.config.tokens_per_frame,
                model.config.d_model) != first.dims:
            raise DimensionError(
                f"task {name!r} probe dims do not match features {first.dims}")

    store = FeatureStore()
    shared_features = [store.load(first.root / path, clip_id=cid)
                       for cid, path in ref]

    reports: dict[str, EvalReport] = {}
    head_flops: dict[str, float] = {}
    for name, manifest, model in tasks:
        labels = np.array([c.label for c in manifest.clips_for_split(split_name)],
                          dtype=np.int64)
        preds = predict_batched(model, shared_features)
        task_split = split if split is not None else SymmetricSplit((), manifest.num_classes)
        reports[name] = _report_from_predictions(
            labels, preds, task_split, manifest, split_name,
            param_count=model.count_params(),
            gflops=estimate_probe_flops(model.config) / 1e9)
        head_flops[name] = estimate_probe_flops(model.config)

    num_clips = len(ref)
    shared = shared_flops_per_clip * num_clips
    total = shared + sum(head_flops.values()) * num_clips
    return MultiTaskReport(feature_loads=store.loads, num_clips=num_clips,
                           task_reports=reports, head_flops=head_flops,
                           shared_flops=shared, total_flops=total)
