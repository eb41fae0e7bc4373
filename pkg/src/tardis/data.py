"""Dataset files: JSON manifest + headerless float32 binary payloads.

A dataset on disk is a ``manifest.json`` plus one binary payload of
little-endian IEEE-754 binary32 values, row-major, one record per sample.
The manifest carries either ``feature_dim`` (pooled 1-D vectors) or
``tensor_shape`` (raw C, H, W activations), never both; all structure lives
in the manifest, the payload is bare numbers. An optional second payload
holds per-sample logits (``logits_file`` + ``logit_dim``).

Loaded datasets are plain immutable-by-convention numpy arrays; loading
rejects NaN/Inf rather than imputing.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    HeaderMismatch,
    MalformedManifest,
    NonFiniteValue,
    PayloadSizeMismatch,
    RaggedRow,
)

ROLES = ("ID", "WILD", "LABELED_ID", "LABELED_OOD")

# Origin flags distinguish rows of the known-ID set from rows of the wild set
# once the two are stacked together.
ORIGIN_ID = 0
ORIGIN_WILD = 1

MANIFEST_VERSION = 1


@dataclass
class SampleRecord:
    sample_id: str
    role: str
    row: int
    lat: float | None = None
    lon: float | None = None
    class_label: str | None = None
    logits_row: int | None = None

    def to_dict(self) -> dict:
        d = {"sample_id": self.sample_id, "role": self.role, "row": self.row}
        for key in ("lat", "lon", "class_label", "logits_row"):
            value = getattr(self, key)
            if value is not None:
                d[key] = value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SampleRecord":
        try:
            rec = cls(
                sample_id=str(d["sample_id"]),
                role=str(d["role"]),
                row=int(d["row"]),
                lat=None if d.get("lat") is None else float(d["lat"]),
                lon=None if d.get("lon") is None else float(d["lon"]),
                class_label=d.get("class_label"),
                logits_row=None if d.get("logits_row") is None else int(d["logits_row"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedManifest(f"bad sample record {d!r}: {exc}") from exc
        rec.validate()
        return rec

    def validate(self) -> None:
        if self.role not in ROLES:
            raise MalformedManifest(
                f"sample {self.sample_id!r}: unknown role {self.role!r}"
            )
        if self.lat is not None and not -90.0 <= self.lat <= 90.0:
            raise MalformedManifest(f"sample {self.sample_id!r}: lat {self.lat} out of range")
        if self.lon is not None and not -180.0 <= self.lon <= 180.0:
            raise MalformedManifest(f"sample {self.sample_id!r}: lon {self.lon} out of range")


@dataclass
class DatasetManifest:
    samples: list[SampleRecord]
    data_file: str
    feature_dim: int | None = None
    tensor_shape: tuple[int, int, int] | None = None
    logits_file: str | None = None
    logit_dim: int | None = None
    version: int = MANIFEST_VERSION

    @property
    def record_size(self) -> int:
        if self.feature_dim is not None:
            return self.feature_dim
        c, h, w = self.tensor_shape
        return c * h * w

    def validate(self) -> None:
        if (self.feature_dim is None) == (self.tensor_shape is None):
            raise MalformedManifest(
                "manifest must carry exactly one of feature_dim / tensor_shape"
            )
        if self.feature_dim is not None and self.feature_dim <= 0:
            raise MalformedManifest(f"feature_dim must be positive, got {self.feature_dim}")
        if self.tensor_shape is not None:
            if len(self.tensor_shape) != 3 or any(int(s) <= 0 for s in self.tensor_shape):
                raise MalformedManifest(f"bad tensor_shape {self.tensor_shape!r}")
        if (self.logits_file is None) != (self.logit_dim is None):
            raise MalformedManifest("logits_file and logit_dim must appear together")
        n = len(self.samples)
        rows = [s.row for s in self.samples]
        if sorted(rows) != list(range(n)):
            raise MalformedManifest("sample rows must be unique and cover 0..n-1")
        ids = {s.sample_id for s in self.samples}
        if len(ids) != n:
            raise MalformedManifest("duplicate sample_id in manifest")
        for s in self.samples:
            s.validate()

    def to_dict(self) -> dict:
        d = {
            "version": self.version,
            "data_file": self.data_file,
            "samples": [s.to_dict() for s in self.samples],
        }
        if self.feature_dim is not None:
            d["feature_dim"] = self.feature_dim
        if self.tensor_shape is not None:
            d["tensor_shape"] = list(self.tensor_shape)
        if self.logits_file is not None:
            d["logits_file"] = self.logits_file
            d["logit_dim"] = self.logit_dim
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        if not isinstance(d, dict):
            raise MalformedManifest("manifest root must be a JSON object")
        try:
            man = cls(
                samples=[SampleRecord.from_dict(s) for s in d["samples"]],
                data_file=str(d["data_file"]),
                feature_dim=None if d.get("feature_dim") is None else int(d["feature_dim"]),
                tensor_shape=None
                if d.get("tensor_shape") is None
                else tuple(int(x) for x in d["tensor_shape"]),
                logits_file=d.get("logits_file"),
                logit_dim=None if d.get("logit_dim") is None else int(d["logit_dim"]),
                version=int(d.get("version", MANIFEST_VERSION)),
            )
        except MalformedManifest:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedManifest(f"bad manifest: {exc}") from exc
        man.validate()
        return man


def atomic_write_bytes(path: str | Path, payload: bytes) -> None:
    """Write a file via temp-file + rename so readers never see partial data."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _check_finite(values: np.ndarray) -> None:
    if np.isfinite(values).all():
        return
    bad = np.argwhere(~np.isfinite(values))
    rows = sorted({int(r) for r, _ in bad[:100]})
    head = ", ".join(str(r) for r in rows[:10])
    r0, c0 = (int(x) for x in bad[0])
    raise NonFiniteValue(
        r0, c0, f"non-finite values (first at row {r0}, col {c0}; offending rows: {head})"
    )


def _load_payload(path: Path, n_rows: int, record_size: int) -> np.ndarray:
    if not path.exists():
        raise MalformedManifest(f"payload file not found: {path}")
    raw = path.read_bytes()
    expected = n_rows * record_size * 4
    if len(raw) != expected:
        raise PayloadSizeMismatch(
            f"{path}: expected {expected} bytes ({n_rows} x {record_size} x 4), got {len(raw)}"
        )
    values = np.frombuffer(raw, dtype="<f4").reshape(n_rows, record_size)
    _check_finite(values)
    return values.copy()  # own, writable memory


def load_manifest(manifest_path: str | Path) -> DatasetManifest:
    manifest_path = Path(manifest_path)
    try:
        d = json.loads(manifest_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise MalformedManifest(f"manifest not found: {manifest_path}")
    except json.JSONDecodeError as exc:
        raise MalformedManifest(f"{manifest_path}: invalid JSON: {exc}") from exc
    return DatasetManifest.from_dict(d)


def load_dataset(manifest_path: str | Path) -> tuple[DatasetManifest, np.ndarray]:
    """Load and validate a dataset.

    Returns the manifest and an (n_samples, record_size) float32 matrix in
    manifest row order. Raw tensor datasets come back flattened; reshape
    rows with the manifest's tensor_shape.
    """
    manifest_path = Path(manifest_path)
    manifest = load_manifest(manifest_path)
    values = _load_payload(
        manifest_path.parent / manifest.data_file, len(manifest.samples), manifest.record_size
    )
    return manifest, values


def load_logits(manifest_path: str | Path) -> np.ndarray:
    """Load the optional logits payload referenced by a manifest."""
    manifest_path = Path(manifest_path)
    manifest = load_manifest(manifest_path)
    if manifest.logits_file is None:
        raise MalformedManifest(f"{manifest_path}: manifest declares no logits payload")
    n_rows = 1 + max(
        (s.logits_row for s in manifest.samples if s.logits_row is not None), default=-1
    )
    return _load_payload(manifest_path.parent / manifest.logits_file, n_rows, manifest.logit_dim)


def save_dataset(
    manifest: DatasetManifest,
    values: np.ndarray,
    manifest_path: str | Path,
    logits: np.ndarray | None = None,
) -> None:
    """Write manifest and payload(s) next to each other, atomically."""
    manifest_path = Path(manifest_path)
    manifest.validate()
    values = np.asarray(values, dtype="<f4")
    flat = values.reshape(len(manifest.samples), -1)
    if flat.shape[1] != manifest.record_size:
        raise DimensionMismatch(
            f"payload record size {flat.shape[1]} != manifest record size {manifest.record_size}"
        )
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    atomic_write_bytes(manifest_path.parent / manifest.data_file, flat.tobytes(order="C"))
    if logits is not None:
        if manifest.logits_file is None:
            raise MalformedManifest("manifest declares no logits payload but logits were given")
        logits = np.asarray(logits, dtype="<f4")
        atomic_write_bytes(manifest_path.parent / manifest.logits_file, logits.tobytes(order="C"))
    atomic_write_text(manifest_path, json.dumps(manifest.to_dict(), indent=2) + "\n")


def feature_manifest(
    sample_ids: list[str],
    feature_dim: int,
    role: str = "WILD",
    data_file: str = "features.bin",
) -> DatasetManifest:
    """Convenience constructor: one record per id, rows in list order."""
    samples = [SampleRecord(sid, role, i) for i, sid in enumerate(sample_ids)]
    return DatasetManifest(samples=samples, data_file=data_file, feature_dim=feature_dim)


# --- CSV import/export ------------------------------------------------------

def _feature_header(n_features: int, with_geo: bool) -> list[str]:
    cols = ["sample_id"]
    if with_geo:
        cols += ["lat", "lon"]
    cols += [f"f{i}" for i in range(n_features)]
    return cols


def import_csv(csv_path: str | Path, role: str = "WILD") -> tuple[DatasetManifest, np.ndarray]:
    """Parse ``sample_id[,lat,lon],f0..f{F-1}`` rows into an in-memory dataset."""
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise HeaderMismatch(f"{csv_path}: empty file")
        with_geo = header[1:3] == ["lat", "lon"]
        n_features = len(header) - (3 if with_geo else 1)
        if n_features < 1 or header != _feature_header(n_features, with_geo):
            raise HeaderMismatch(
                f"{csv_path}: header must be sample_id[,lat,lon],f0..fN, got {header}"
            )
        samples: list[SampleRecord] = []
        rows: list[list[float]] = []
        for line_no, cells in enumerate(reader, start=2):
            if len(cells) != len(header):
                raise RaggedRow(
                    f"{csv_path}:{line_no}: expected {len(header)} cells, got {len(cells)}"
                )
            sid = cells[0]
            lat = lon = None
            if with_geo:
                lat = float(cells[1]) if cells[1] != "" else None
                lon = float(cells[2]) if cells[2] != "" else None
            feats = [float(c) for c in cells[3 if with_geo else 1 :]]
            samples.append(SampleRecord(sid, role, len(samples), lat=lat, lon=lon))
            rows.append(feats)
    if not samples:
        raise HeaderMismatch(f"{csv_path}: no data rows")
    values = np.asarray(rows, dtype=np.float32)
    manifest = DatasetManifest(samples=samples, data_file="features.bin", feature_dim=n_features)
    manifest.validate()
    _check_finite(values)
    return manifest, values


def export_csv(manifest: DatasetManifest, values: np.ndarray, csv_path: str | Path) -> None:
    """Inverse of import_csv; float32 values survive the round trip bitwise."""
    if manifest.feature_dim is None:
        raise DimensionMismatch("CSV export requires a pooled (feature_dim) dataset")
    values = np.asarray(values, dtype=np.float32)
    with_geo = any(s.lat is not None or s.lon is not None for s in manifest.samples)
    lines = [",".join(_feature_header(manifest.feature_dim, with_geo))]
    for s in sorted(manifest.samples, key=lambda s: s.row):
        cells = [s.sample_id]
        if with_geo:
            cells.append("" if s.lat is None else repr(float(s.lat)))
            cells.append("" if s.lon is None else repr(float(s.lon)))
        # repr of the exact float64 embedding of each float32 parses back bit-identically
        cells += [repr(float(v)) for v in values[s.row]]
        lines.append(",".join(cells))
    atomic_write_text(csv_path, "\n".join(lines) + "\n")


def concat(id_values: np.ndarray, wild_values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Stack known-ID rows on top of wild rows; return per-row origin flags."""
    id_values = np.asarray(id_values, dtype=np.float32)
    wild_values = np.asarray(wild_values, dtype=np.float32)
    if id_values.ndim != 2 or wild_values.ndim != 2:
        raise DimensionMismatch("concat expects 2-D matrices")
    if id_values.shape[1] != wild_values.shape[1]:
        raise DimensionMismatch(
            f"feature dims differ: {id_values.shape[1]} vs {wild_values.shape[1]}"
        )
    stacked = np.vstack([id_values, wild_values])
    origin = np.concatenate(
        [
            np.full(id_values.shape[0], ORIGIN_ID, dtype=np.int64),
            np.full(wild_values.shape[0], ORIGIN_WILD, dtype=np.int64),
        ]
    )
    return stacked, origin
