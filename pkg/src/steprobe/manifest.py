"""Dataset manifests, symmetric-pair splits, and the probing dataset view.

The manifest is a line-delimited TSV with an explicit header naming the class
count and dims, followed by the class registry and one row per clip:

    steprobe-manifest<TAB>1
    classes<TAB>14
    dims<TAB>16<TAB>8<TAB>64
    class<TAB>0<TAB>pair00_fwd
    ...
    clip<TAB>pair00_fwd_000<TAB>features/pair00_fwd_000.stepfeat<TAB>pair00_fwd<TAB>train

The pair list is a sibling TSV naming mirrored class pairs by name:

    steprobe-pairs<TAB>1
    pair<TAB>pair00_fwd<TAB>pair00_rev

Blank lines and lines starting with ``#`` are ignored in both. All split and
pair invariants are enforced at load time, never deferred.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import ManifestError
from .features import FeatureSequence, FeatureStore, read_header

MANIFEST_HEADER = "steprobe-manifest"
PAIRS_HEADER = "steprobe-pairs"
FORMAT_VERSION = 1
SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class ClipRecord:
    clip_id: str
    feature_path: str  # relative to the manifest's directory
    label: int
    split: str


@dataclass(frozen=True)
class DatasetManifest:
    """Class registry plus clip records, rooted at the manifest's directory."""

    dims: tuple[int, int, int]  # (T, n, d)
    class_names: tuple[str, ...]
    clips: tuple[ClipRecord, ...]
    root: Path = field(default_factory=Path)

    def __post_init__(self):
        t, n, d = self.dims
        if min(t, n, d) < 1:
            raise ManifestError(f"dims must all be >= 1, got {self.dims}")
        if len(set(self.class_names)) != len(self.class_names):
            raise ManifestError("duplicate class name in registry")
        seen: set[str] = set()
        for c in self.clips:
            if not 0 <= c.label < len(self.class_names):
                raise ManifestError(f"clip {c.clip_id!r}: label {c.label} out of range")
            if c.split not in SPLITS:
                raise ManifestError(f"clip {c.clip_id!r}: unknown split {c.split!r}")
            if c.clip_id in seen:
                raise ManifestError(f"duplicate clip_id {c.clip_id!r}")
            seen.add(c.clip_id)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def class_index(self, name: str) -> int:
        try:
            return self.class_names.index(name)
        except ValueError:
            raise ManifestError(f"unknown class name {name!r}") from None

    def clips_for_split(self, split: str) -> tuple[ClipRecord, ...]:
        if split not in SPLITS:
            raise ManifestError(f"unknown split {split!r}")
        return tuple(c for c in self.clips if c.split == split)

    def feature_path(self, clip: ClipRecord) -> Path:
        return self.root / clip.feature_path

    def class_counts(self, split: str | None = None) -> list[int]:
        counts = [0] * self.num_classes
        for c in self.clips:
            if split is None or c.split == split:
                counts[c.label] += 1
        return counts


def _data_lines(path: Path) -> list[list[str]]:
    rows = []
    for raw in path.read_text().splitlines():
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        rows.append(line.split("\t"))
    return rows


def _check_header(rows: list[list[str]], expect: str, path: Path) -> list[list[str]]:
    if not rows or rows[0][0] != expect:
        raise ManifestError(f"{path}: missing {expect!r} header line")
    if len(rows[0]) != 2 or rows[0][1] != str(FORMAT_VERSION):
        raise ManifestError(f"{path}: unsupported {expect} version {rows[0][1:]} "
                            f"(expected {FORMAT_VERSION})")
    return rows[1:]


def load_manifest(path, validate_files: bool = True) -> DatasetManifest:
    """Parse and validate a manifest file.

    With ``validate_files`` every referenced feature file must exist and its
    header dims must match the manifest header.
    """
    path = Path(path)
    rows = _check_header(_data_lines(path), MANIFEST_HEADER, path)

    declared_classes: int | None = None
    dims: tuple[int, int, int] | None = None
    names: list[str] = []
    clip_rows: list[tuple[str, str, str, str]] = []

    for row in rows:
        kind = row[0]
        if kind == "classes":
            if len(row) != 2:
                raise ManifestError(f"{path}: malformed classes row {row}")
            declared_classes = int(row[1])
        elif kind == "dims":
            if len(row) != 4:
                raise ManifestError(f"{path}: malformed dims row {row}")
            dims = (int(row[1]), int(row[2]), int(row[3]))
        elif kind == "class":
            if len(row) != 3:
                raise ManifestError(f"{path}: malformed class row {row}")
            if int(row[1]) != len(names):
                raise ManifestError(f"{path}: class indices must be consecutive "
                                    f"from 0, got {row[1]} at position {len(names)}")
            names.append(row[2])
        elif kind == "clip":
            if len(row) != 5:
                raise ManifestError(f"{path}: malformed clip row {row}")
            clip_rows.append((row[1], row[2], row[3], row[4]))
        else:
            raise ManifestError(f"{path}: unknown row kind {kind!r}")

    if dims is None:
        raise ManifestError(f"{path}: missing dims row")
    if declared_classes is None:
        raise ManifestError(f"{path}: missing classes row")
    if declared_classes != len(names):
        raise ManifestError(f"{path}: classes row says {declared_classes} but "
                            f"{len(names)} class rows found")

    index = {name: i for i, name in enumerate(names)}
    clips = []
    for clip_id, feature_path, class_name, split in clip_rows:
        if class_name not in index:
            raise ManifestError(f"{path}: clip {clip_id!r} names unknown class "
                                f"{class_name!r}")
        clips.append(ClipRecord(clip_id, feature_path, index[class_name], split))

    manifest = DatasetManifest(dims, tuple(names), tuple(clips), root=path.parent)

    if validate_files:
        for clip in manifest.clips:
            fpath = manifest.feature_path(clip)
            if not fpath.is_file():
                raise ManifestError(f"{path}: clip {clip.clip_id!r} feature file "
                                    f"missing: {fpath}")
            _, _, (t, n, d) = read_header(fpath)
            if (t, n, d) != manifest.dims:
                raise ManifestError(
                    f"{path}: clip {clip.clip_id!r} dims {(t, n, d)} do not match "
                    f"manifest dims {manifest.dims}")
    return manifest


def write_manifest(path, manifest: DatasetManifest) -> None:
    path = Path(path)
    t, n, d = manifest.dims
    lines = [f"{MANIFEST_HEADER}\t{FORMAT_VERSION}",
             f"classes\t{manifest.num_classes}",
             f"dims\t{t}\t{n}\t{d}"]
    for i, name in enumerate(manifest.class_names):
        lines.append(f"class\t{i}\t{name}")
    for c in manifest.clips:
        lines.append(f"clip\t{c.clip_id}\t{c.feature_path}\t"
                     f"{manifest.class_names[c.label]}\t{c.split}")
    path.write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class SymmetricSplit:
    """Mirrored class pairs; classes outside any pair are non-symmetric."""

    pairs: tuple[tuple[int, int], ...]
    num_classes: int

    def __post_init__(self):
        seen: set[int] = set()
        for a, b in self.pairs:
            if a == b:
                raise ManifestError(f"class {a} paired with itself")
            for c in (a, b):
                if not 0 <= c < self.num_classes:
                    raise ManifestError(f"pair class index {c} out of range")
                if c in seen:
                    raise ManifestError(f"class {c} appears in two pairs")
                seen.add(c)

    @property
    def sym_set(self) -> frozenset[int]:
        return frozenset(c for pair in self.pairs for c in pair)

    @property
    def nsym_set(self) -> frozenset[int]:
        return frozenset(range(self.num_classes)) - self.sym_set

    def mirror(self, label: int) -> int | None:
        """The paired class of ``label``, or None for non-symmetric classes."""
        for a, b in self.pairs:
            if label == a:
                return b
            if label == b:
                return a
        return None


def load_pairs(path, class_names) -> SymmetricSplit:
    """Parse a pair-list file, resolving class names against the registry."""
    path = Path(path)
    rows = _check_header(_data_lines(path), PAIRS_HEADER, path)
    index = {name: i for i, name in enumerate(class_names)}
    pairs = []
    for row in rows:
        if row[0] != "pair" or len(row) != 3:
            raise ManifestError(f"{path}: malformed pair row {row}")
        for name in row[1:]:
            if name not in index:
                raise ManifestError(f"{path}: unknown class name {name!r}")
        pairs.append((index[row[1]], index[row[2]]))
    return SymmetricSplit(tuple(pairs), len(class_names))


def write_pairs(path, split: SymmetricSplit, class_names) -> None:
    lines = [f"{PAIRS_HEADER}\t{FORMAT_VERSION}"]
    for a, b in split.pairs:
        lines.append(f"pair\t{class_names[a]}\t{class_names[b]}")
    Path(path).write_text("\n".join(lines) + "\n")


class ProbingDataset:
    """Feature-loading view over a manifest, cached through a FeatureStore.

    Examples come back in manifest order so that evaluation reports are
    deterministic; training shuffles indices on its own.
    """

    def __init__(self, manifest: DatasetManifest, store: FeatureStore | None = None):
        self.manifest = manifest
        self.store = store if store is not None else FeatureStore()

    def examples(self, split: str) -> list[tuple[FeatureSequence, int]]:
        out = []
        for clip in self.manifest.clips_for_split(split):
            feats = self.store.load(self.manifest.feature_path(clip),
                                    clip_id=clip.clip_id)
            out.append((feats, clip.label))
        return out

    def labels(self, split: str):
        import numpy as np

        return np.array([c.label for c in self.manifest.clips_for_split(split)],
                        dtype=np.int64)
