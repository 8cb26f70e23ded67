"""The extraction pipeline: video list in, containers plus manifest out."""

import dataclasses
import hashlib
import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .backbone import BACKBONES, build_backbone
from .container import write_container, write_manifest
from .errors import DataError, SpecError
from .video import UndecodableClip, load_clip_frames, preprocess

log = logging.getLogger("stepextract")

SPLITS = ("train", "val", "test")


@dataclass
class ExtractSpec:
    """Everything one extraction run depends on.

    ``num_frames`` must match the frame count the downstream probe will be
    configured with; the container header records it so the mismatch is
    caught at load time either way. ``resolution`` defaults to the
    backbone's native input size.
    """

    list_path: str | Path
    out_dir: str | Path
    backbone: str = "dinov2-vitb14"
    weights: str | Path | None = None
    num_frames: int = 16
    resolution: int | None = None
    batch_size: int = 8
    device: str = "cpu"
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.backbone not in BACKBONES:
            raise SpecError(f"unknown backbone {self.backbone!r}; available: "
                            f"{', '.join(sorted(BACKBONES))}")
        if self.num_frames < 1:
            raise SpecError(f"num_frames must be >=1, got {self.num_frames}")
        if self.batch_size < 1:
            raise SpecError(f"batch_size must be >=1, got {self.batch_size}")
        if self.workers < 1:
            raise SpecError(f"workers must be >=1, got {self.workers}")
        if self.resolution is None:
            self.resolution = BACKBONES[self.backbone].resolution
        spec = BACKBONES[self.backbone]
        if self.resolution % spec.patch_size != 0:
            raise SpecError(
                f"resolution {self.resolution} is not a multiple of "
                f"{self.backbone} patch size {spec.patch_size}")


@dataclass
class ExtractReport:
    manifest_path: Path
    meta_path: Path
    written: list[str] = field(default_factory=list)   # clip ids
    skipped: list[tuple[str, str]] = field(default_factory=list)  # (id, why)
    dims: tuple[int, int, int] = (0, 0, 0)


def read_video_list(path) -> list[tuple[Path, str, str]]:
    """Rows of ``path<TAB>class_name[<TAB>split]``; split defaults to train.

    Blank lines and ``#`` comments are ignored. Paths are resolved relative
    to the list file's directory.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read video list {path}: {exc}") from exc
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) not in (2, 3):
            raise DataError(
                f"{path}:{lineno}: expected path<TAB>class[<TAB>split], got {line!r}")
        clip_path = Path(parts[0])
        if not clip_path.is_absolute():
            clip_path = path.parent / clip_path
        split = parts[2] if len(parts) == 3 else "train"
        if split not in SPLITS:
            raise DataError(f"{path}:{lineno}: unknown split {split!r}")
        rows.append((clip_path, parts[1], split))
    if not rows:
        raise DataError(f"{path}: empty video list")
    ids = [p.stem for p, _, _ in rows]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise DataError(f"{path}: duplicate clip ids {dupes}; "
                        "clip file stems must be unique")
    return rows


def _state_digest(model: torch.nn.Module) -> str:
    h = hashlib.sha256()
    for name, tensor in sorted(model.state_dict().items()):
        h.update(name.encode())
        h.update(tensor.numpy().tobytes())
    return h.hexdigest()


def _extract_one(model, spec: ExtractSpec, bspec, clip_path: Path):
    frames = load_clip_frames(clip_path, spec.num_frames)
    batch = preprocess(frames, spec.resolution, bspec.mean, bspec.std)
    patch_chunks, cls_chunks = [], []
    with torch.no_grad():
        for start in range(0, len(batch), spec.batch_size):
            chunk = torch.from_numpy(batch[start:start + spec.batch_size])
            chunk = chunk.to(spec.device)
            patches, cls = model(chunk)
            patch_chunks.append(patches.cpu().numpy())
            cls_chunks.append(cls.cpu().numpy())
    return np.concatenate(patch_chunks), np.concatenate(cls_chunks)


def extract(spec: ExtractSpec) -> ExtractReport:
    """Run the pipeline; returns what was written and what was skipped.

    Undecodable clips are skipped with a logged warning and left out of the
    manifest. Anything that indicates a broken setup (unknown backbone,
    mismatched weights, feature dims disagreeing between clips) aborts.
    """
    rows = read_video_list(spec.list_path)
    bspec = BACKBONES[spec.backbone]
    model = build_backbone(spec.backbone, weights=spec.weights, seed=spec.seed)
    model = model.to(spec.device)
    digest_before = _state_digest(model)

    out = Path(spec.out_dir)
    features_dir = out / "features"
    features_dir.mkdir(parents=True, exist_ok=True)

    n_tokens = (spec.resolution // bspec.patch_size) ** 2
    dims = (spec.num_frames, n_tokens, bspec.dim)

    written: list[tuple[str, str, str, str]] = []
    skipped: list[tuple[str, str]] = []
    lock = threading.Lock()

    def work(row):
        clip_path, class_name, split = row
        clip_id = clip_path.stem
        try:
            patches, cls = _extract_one(model, spec, bspec, clip_path)
        except UndecodableClip as exc:
            log.warning("skipping %s: %s", clip_id, exc)
            with lock:
                skipped.append((clip_id, str(exc)))
            return
        if patches.shape != dims:
            raise DataError(
                f"{clip_id}: backbone emitted {patches.shape}, spec wants {dims}")
        rel = f"features/{clip_id}.stepfeat"
        write_container(out / rel, patches, cls)
        with lock:
            written.append((clip_id, rel, class_name, split))

    if spec.workers == 1:
        for row in rows:
            work(row)
    else:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            list(pool.map(work, rows))

    if digest_before != _state_digest(model):
        raise SpecError("backbone parameters changed during extraction; "
                        "this is a bug, the backbone must stay frozen")
    if not written:
        raise DataError("no clip could be decoded; nothing to write")

    written.sort(key=lambda r: r[0])
    class_names = sorted({r[2] for r in written})
    manifest_path = out / "manifest.tsv"
    write_manifest(manifest_path, dims, class_names, written)

    meta_path = out / "extract_meta.json"
    meta = {
        "tool": "stepextract",
        "backbone": spec.backbone,
        "weights": str(spec.weights) if spec.weights else None,
        "seed": spec.seed,
        "state_sha256": digest_before,
        "resolution": spec.resolution,
        "patch_size": bspec.patch_size,
        "normalization": {"mean": list(bspec.mean), "std": list(bspec.std),
                          "scale": "pixels / 255 before mean/std",
                          "resize": "shorter side bicubic, center crop",
                          "color_order": "RGB"},
        "sampling": "frame i of T = floor((i + 0.5) * N / T)",
        "num_frames": spec.num_frames,
        "dims": list(dims),
        "skipped": [{"clip_id": c, "reason": r} for c, r in skipped],
    }
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n",
                         encoding="utf-8")

    report = ExtractReport(manifest_path=manifest_path, meta_path=meta_path,
                           written=[r[0] for r in written], skipped=skipped,
                           dims=dims)
    return report


def spec_to_dict(spec: ExtractSpec) -> dict:
    d = dataclasses.asdict(spec)
    d["list_path"] = str(d["list_path"])
    d["out_dir"] = str(d["out_dir"])
    if d["weights"] is not None:
        d["weights"] = str(d["weights"])
    return d
