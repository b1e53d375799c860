"""Dataset schema, feature-file parsing and manifest loading.

Feature files are comma-separated numeric tables without a header, one
timestep per row.  The text vector is stored as a single row.  The manifest
is JSON Lines, one record per video::

    {"id": "v001", "label": 1, "split": "train",
     "visual_path": "v001_visual.csv", "audio_path": "v001_audio.csv",
     "text_path": "v001_text.csv"}

Relative paths are resolved against the manifest's directory.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._atomic import atomic_open
from .errors import (
    DimensionError,
    IngestError,
    ManifestError,
    ParseError,
    ValidationError,
)

N_AUS = 20
AUDIO_DIM = 768
TEXT_DIM = 768
SPLITS = ("train", "val", "test")
MANIFEST_FIELDS = ("id", "label", "split", "visual_path", "audio_path", "text_path")

# Py-Feat's 20 action units, in column order.
AU_CODES = (
    "AU01", "AU02", "AU04", "AU05", "AU06", "AU07", "AU09", "AU10", "AU11", "AU12",
    "AU14", "AU15", "AU17", "AU20", "AU23", "AU24", "AU25", "AU26", "AU28", "AU43",
)
AU_NAMES = {
    "AU01": "inner brow raiser",
    "AU02": "outer brow raiser",
    "AU04": "brow lowerer",
    "AU05": "upper lid raiser",
    "AU06": "cheek raiser",
    "AU07": "lid tightener",
    "AU09": "nose wrinkler",
    "AU10": "upper lip raiser",
    "AU11": "nasolabial deepener",
    "AU12": "lip corner puller",
    "AU14": "dimpler",
    "AU15": "lip corner depressor",
    "AU17": "chin raiser",
    "AU20": "lip stretcher",
    "AU23": "lip tightener",
    "AU24": "lip pressor",
    "AU25": "lips part",
    "AU26": "jaw drop",
    "AU28": "lip suck",
    "AU43": "eyes closed",
}


@dataclass(eq=False)
class VideoSample:
    id: str
    label: int
    visual: np.ndarray  # (T_v, 20)
    audio: np.ndarray  # (T_a, 768)
    text: np.ndarray  # (768,)
    split: str = "train"

    def validate(self) -> None:
        """Raise :class:`ValidationError` if any schema invariant is broken."""
        where = f"sample {self.id!r}"
        if self.label not in (0, 1):
            raise ValidationError(f"{where}: label {self.label!r} not in {{0, 1}}")
        if self.split not in SPLITS:
            raise ValidationError(f"{where}: split {self.split!r} not in {SPLITS}")
        for name, arr, cols in (
            ("visual", self.visual, N_AUS),
            ("audio", self.audio, AUDIO_DIM),
        ):
            if arr.ndim != 2:
                raise ValidationError(f"{where}: {name} must be 2-D, got ndim={arr.ndim}")
            if arr.shape[1] != cols:
                raise ValidationError(f"{where}: {name} dim {arr.shape[1]} ≠ {cols}")
            if arr.shape[0] < 1:
                raise ValidationError(f"{where}: {name} has no timesteps")
        if self.text.ndim != 1 or self.text.shape[0] != TEXT_DIM:
            raise ValidationError(f"{where}: text dim {self.text.size} ≠ {TEXT_DIM}")
        for name in ("visual", "audio", "text"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValidationError(f"{where}: {name} contains non-finite values")
        if np.any(self.visual < 0):
            raise ValidationError(f"{where}: visual AU activations must be >= 0")


@dataclass(eq=False)
class Dataset:
    samples: list[VideoSample]
    manifest_path: str = ""
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        seen = {}
        for s in self.samples:
            if s.id in seen:
                raise ManifestError(f"duplicate sample id {s.id!r}")
            seen[s.id] = s
        self._index = seen

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, sample_id: str) -> VideoSample:
        return self._index[sample_id]

    def split(self, name: str) -> list[VideoSample]:
        return [s for s in self.samples if s.split == name]

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)


def _scan_for_error(path: Path, expected_cols: int | None) -> None:
    """Re-read ``path`` cell by cell and raise at the first bad coordinate."""
    with open(path, newline="") as fh:
        ncols = None
        for r, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            for c, cell in enumerate(row, start=1):
                try:
                    value = float(cell)
                except ValueError:
                    raise ParseError(
                        f"{path}: non-numeric cell {cell!r} at row {r}, column {c}",
                        row=r, col=c,
                    ) from None
                if not np.isfinite(value):
                    raise ParseError(
                        f"{path}: non-finite value {cell.strip()!r} at row {r}, column {c}",
                        row=r, col=c,
                    )
            if ncols is None:
                ncols = len(row)
            elif len(row) != ncols:
                raise DimensionError(
                    f"{path}: row {r} has {len(row)} columns, expected {ncols}"
                )
    raise ParseError(f"{path}: could not parse")


def parse_feature_matrix(path, expected_cols: int | None = None) -> np.ndarray:
    """Read a comma-separated numeric table into a float64 ``(T, cols)`` array.

    Raises:
        IngestError: the file does not exist.
        ParseError: a cell is non-numeric or non-finite (row/column are 1-based).
        DimensionError: ragged rows, or column count differs from ``expected_cols``.
    """
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"feature file not found: {path}")
    try:
        mat = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError:
        _scan_for_error(path, expected_cols)
        raise  # pragma: no cover - _scan_for_error always raises
    if mat.size == 0:
        raise ParseError(f"{path}: empty feature file")
    bad = np.argwhere(~np.isfinite(mat))
    if bad.size:
        r, c = (int(i) + 1 for i in bad[0])
        raise ParseError(f"{path}: non-finite value at row {r}, column {c}", row=r, col=c)
    if expected_cols is not None and mat.shape[1] != expected_cols:
        raise DimensionError(f"{path}: {mat.shape[1]} columns, expected {expected_cols}")
    return mat


def write_feature_matrix(path, mat) -> None:
    """Write a matrix so that :func:`parse_feature_matrix` recovers it exactly."""
    mat = np.atleast_2d(np.asarray(mat, dtype=np.float64))
    with atomic_open(path) as fh:
        np.savetxt(fh, mat, delimiter=",", fmt="%.17g")


def _parse_record(line: str, lineno: int) -> dict:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest line {lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(rec, dict):
        raise ManifestError(f"manifest line {lineno}: record must be an object")
    missing = [k for k in MANIFEST_FIELDS if k not in rec]
    if missing:
        raise ManifestError(f"manifest line {lineno}: missing fields {missing}")
    if rec["label"] not in (0, 1) or isinstance(rec["label"], bool):
        raise ManifestError(f"manifest line {lineno}: label must be 0 or 1")
    if rec["split"] not in SPLITS:
        raise ManifestError(f"manifest line {lineno}: split must be one of {SPLITS}")
    return rec


def load_sample(rec: dict, root: Path) -> VideoSample:
    sid = str(rec["id"])
    arrays = {}
    for key, modality in (("visual_path", "visual"), ("audio_path", "audio"), ("text_path", "text")):
        path = root / rec[key]
        if not path.is_file():
            raise IngestError(f"sample {sid!r}: {modality} file not found: {path}", sample_id=sid)
        try:
            arrays[modality] = parse_feature_matrix(path)
        except (ParseError, DimensionError) as exc:
            raise type(exc)(f"sample {sid!r}: {exc}") from exc
    text = arrays["text"]
    if text.shape[0] != 1:
        raise ValidationError(f"sample {sid!r}: text file must hold one row, got {text.shape[0]}")
    sample = VideoSample(
        id=sid,
        label=int(rec["label"]),
        visual=arrays["visual"],
        audio=arrays["audio"],
        text=text[0],
        split=rec["split"],
    )
    sample.validate()
    return sample


def load_manifest(path) -> Dataset:
    """Load and validate every record of a JSON Lines manifest.

    The load is atomic: the first bad record raises and nothing is returned.
    """
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"manifest not found: {path}")
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                records.append(_parse_record(line, lineno))
    ids = [str(r["id"]) for r in records]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise ManifestError(f"duplicate sample ids in manifest: {dupes}")
    root = path.parent
    samples = [load_sample(rec, root) for rec in records]
    return Dataset(samples=samples, manifest_path=str(path))


def write_dataset(samples: Iterable[VideoSample], out_dir, manifest_name: str = "manifest.jsonl") -> Path:
    """Write feature files and a manifest for ``samples`` under ``out_dir``.

    The manifest is written to a temporary name and renamed into place last.
    """
    out_dir = Path(out_dir)
    feat_dir = out_dir / "features"
    feat_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for s in samples:
        rec = {"id": s.id, "label": int(s.label), "split": s.split}
        for modality in ("visual", "audio", "text"):
            rel = f"features/{s.id}_{modality}.csv"
            write_feature_matrix(out_dir / rel, getattr(s, modality))
            rec[f"{modality}_path"] = rel
        lines.append(json.dumps(rec))
    manifest = out_dir / manifest_name
    with atomic_open(manifest) as fh:
        fh.write("\n".join(lines) + "\n")
    return manifest


def split_labels(samples: Sequence[VideoSample]) -> np.ndarray:
    return np.array([s.label for s in samples], dtype=np.int64)
