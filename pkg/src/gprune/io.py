"""File formats: model manifests, GPT1 tensors, norm CSVs, JSON reports.

All serialized channel indices are 0-based.

GPT1 binary tensor::

    b"GPT1" | u32 rank | u32 dims[rank] | float32 values (little-endian, row-major)

Norm CSV: one header line (``in_0,in_1,...``), then ``c_out`` rows of
``c_in`` comma-separated values.

Manifest (JSON)::

    {"format_version": 1,
     "layers": [{"name": "conv1", "c_in": 64, "c_out": 64, "k_h": 3, "k_w": 3,
                 "h_out": 32, "w_out": 32, "dtype": "float32",
                 "data_file": "conv1.gpt", "norm_file": "conv1.csv"}]}

File paths are relative to the manifest's directory. A layer needs at least
one of ``data_file`` / ``norm_file``; if both are present the norms are
taken from the weights.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .core import LayerSpec, PermutationPair, ValidationError, as_norm_matrix, kernel_norm_matrix
from .equivalence import GroupedLayerExport, SparseLayerExport

MAGIC = b"GPT1"
MANIFEST_VERSION = 1
REPORT_SCHEMA = 1


# -- GPT1 tensors -----------------------------------------------------------

def write_tensor(path, a) -> None:
    a = np.ascontiguousarray(a, dtype="<f4")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", a.ndim))
        f.write(struct.pack(f"<{a.ndim}I", *a.shape))
        f.write(a.tobytes(order="C"))


def read_tensor(path) -> np.ndarray:
    """Read a GPT1 file; values come back as float64."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise ValidationError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    if len(raw) < 8:
        raise ValidationError(f"{path}: truncated header")
    (rank,) = struct.unpack_from("<I", raw, 4)
    head = 8 + 4 * rank
    if len(raw) < head:
        raise ValidationError(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{rank}I", raw, 8)
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    if len(raw) - head != 4 * count:
        raise ValidationError(
            f"{path}: header declares dims {dims} ({count} values) but payload holds {(len(raw) - head) / 4:g}")
    a = np.frombuffer(raw, dtype="<f4", offset=head, count=count).astype(np.float64).reshape(dims)
    if not np.all(np.isfinite(a)):
        bad = tuple(int(i) for i in np.argwhere(~np.isfinite(a))[0])
        raise ValidationError(f"{path}: non-finite value at index {bad}")
    return a


# -- norm CSV ---------------------------------------------------------------

def write_norm_csv(path, m) -> None:
    m = as_norm_matrix(m)
    with open(path, "w", newline="") as f:
        f.write(",".join(f"in_{c}" for c in range(m.shape[1])) + "\n")
        for row in m:
            f.write(",".join(repr(float(v)) for v in row) + "\n")


def read_norm_csv(path) -> np.ndarray:
    path = Path(path)
    try:
        m = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2, dtype=np.float64)
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    try:
        return as_norm_matrix(m)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


# -- manifests --------------------------------------------------------------

@dataclass(eq=False)
class ManifestLayer:
    spec: LayerSpec
    norms: np.ndarray
    weights: Optional[np.ndarray] = None
    dtype: str = "float32"
    data_file: Optional[str] = None
    norm_file: Optional[str] = None


@dataclass(eq=False)
class ModelManifest:
    path: Optional[Path]
    layers: list[ManifestLayer] = field(default_factory=list)
    format_version: int = MANIFEST_VERSION

    def layer(self, name: str) -> ManifestLayer:
        for l in self.layers:
            if l.spec.name == name:
                return l
        raise ValidationError(f"{self.path}: no layer named {name!r}")

    @property
    def specs(self) -> list[LayerSpec]:
        return [l.spec for l in self.layers]

    def search_layers(self):
        return [(l.spec, l.norms) for l in self.layers]


_DIM_FIELDS = ("c_in", "c_out", "k_h", "k_w", "h_out", "w_out")


def load_manifest(path) -> ModelManifest:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"{path}: manifest not found")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: manifest must be a JSON object")
    version = doc.get("format_version")
    if version != MANIFEST_VERSION:
        raise ValidationError(f"{path}: unknown format_version {version!r} (supported: {MANIFEST_VERSION})")
    entries = doc.get("layers", [])
    if not isinstance(entries, list):
        raise ValidationError(f"{path}: 'layers' must be a list")
    base = path.parent
    seen = set()
    layers = []
    for i, e in enumerate(entries):
        where = f"{path}: layers[{i}]"
        name = e.get("name")
        if not isinstance(name, str) or not name:
            raise ValidationError(f"{where}.name: missing or not a string")
        if name in seen:
            raise ValidationError(f"{where}.name: duplicate layer name {name!r}")
        seen.add(name)
        dims = {}
        for k in _DIM_FIELDS:
            v = e.get(k, 1 if k in ("h_out", "w_out") else None)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ValidationError(f"{where}.{k}: must be a positive integer, got {v!r}")
            dims[k] = v
        spec = LayerSpec(name, **dims)
        dtype = e.get("dtype", "float32")
        if dtype != "float32":
            raise ValidationError(f"{where}.dtype: unsupported dtype {dtype!r} (only float32)")
        data_file, norm_file = e.get("data_file"), e.get("norm_file")
        if not data_file and not norm_file:
            raise ValidationError(f"{where}: needs data_file or norm_file")
        weights = None
        if data_file:
            fp = base / data_file
            if not fp.is_file():
                raise ValidationError(f"{where}.data_file: {fp} not found")
            weights = read_tensor(fp)
            want = (spec.c_out, spec.c_in, spec.k_h, spec.k_w)
            if weights.shape != want:
                raise ValidationError(
                    f"{where}.data_file: dimension mismatch, {fp} holds {weights.shape}, manifest declares {want}")
            norms = kernel_norm_matrix(weights)
        else:
            fp = base / norm_file
            if not fp.is_file():
                raise ValidationError(f"{where}.norm_file: {fp} not found")
            norms = read_norm_csv(fp)
            if norms.shape != (spec.c_out, spec.c_in):
                raise ValidationError(
                    f"{where}.norm_file: dimension mismatch, {fp} holds {norms.shape}, "
                    f"manifest declares {(spec.c_out, spec.c_in)}")
        layers.append(ManifestLayer(spec, norms, weights, dtype, data_file, norm_file))
    return ModelManifest(path, layers, version)


def write_manifest(path, layers: list[dict]) -> None:
    """Write a manifest document; ``layers`` are plain entry dicts."""
    doc = {"format_version": MANIFEST_VERSION, "layers": layers}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


# -- reports ----------------------------------------------------------------

@dataclass
class RunReport:
    command: list[str] = field(default_factory=list)
    seeds: list = field(default_factory=list)
    layers: list[dict] = field(default_factory=list)
    totals: Optional[dict] = None
    extra: dict = field(default_factory=dict)
    timing: Optional[dict] = None
    tool_version: str = __version__
    schema_version: int = REPORT_SCHEMA

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "tool": "gprune",
            "tool_version": self.tool_version,
            "index_base": 0,
            "command": list(self.command),
            "seeds": list(self.seeds),
            "layers": list(self.layers),
            "totals": self.totals,
            "extra": self.extra,
            "timing": self.timing,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        if d.get("schema_version") != REPORT_SCHEMA:
            raise ValidationError(f"unsupported report schema_version {d.get('schema_version')!r}")
        if d.get("index_base", 0) != 0:
            raise ValidationError("reports must use 0-based indices")
        for key in ("command", "seeds", "layers"):
            if not isinstance(d.get(key, []), list):
                raise ValidationError(f"report field {key!r} must be a list")
        report = cls(d.get("command", []), d.get("seeds", []), d.get("layers", []),
                     d.get("totals"), d.get("extra", {}), d.get("timing"),
                     d.get("tool_version", ""), d["schema_version"])
        report.validate()
        return report

    def validate(self) -> None:
        for entry in self.layers:
            if "out_perm" in entry and "in_perm" in entry:
                try:
                    PermutationPair.from_dict(entry)
                except ValidationError as exc:
                    raise ValidationError(f"layer {entry.get('name')!r}: {exc}") from None


def dumps_json(doc) -> str:
    # json writes floats with repr(), which round-trips exactly
    return json.dumps(doc, indent=2, sort_keys=False, allow_nan=False) + "\n"


def write_report(report: RunReport, path) -> None:
    report.validate()
    Path(path).write_text(dumps_json(report.to_dict()))


def read_report(path) -> RunReport:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from None
    return RunReport.from_dict(doc)


# -- exports ----------------------------------------------------------------

def write_grouped_export(out_dir, name: str, e: GroupedLayerExport) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for k, b in enumerate(e.blocks):
        fn = f"{name}.group{k}.gpt"
        write_tensor(out_dir / fn, b)
        files.append(fn)
    meta = {"format": "grouped", "index_base": 0, "name": name, "g": e.g,
            "c_out": e.c_out, "c_in": e.c_in, "block_files": files, **e.perms.to_dict()}
    meta_path = out_dir / f"{name}.grouped.json"
    meta_path.write_text(dumps_json(meta))
    return meta_path


def read_grouped_export(meta_path) -> GroupedLayerExport:
    meta_path = Path(meta_path)
    meta = json.loads(meta_path.read_text())
    blocks = tuple(read_tensor(meta_path.parent / fn) for fn in meta["block_files"])
    e = GroupedLayerExport(meta["g"], blocks, PermutationPair.from_dict(meta))
    e.check()
    return e


def write_sparse_export(out_dir, name: str, s: SparseLayerExport) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    values = f"{name}.values.gpt"
    write_tensor(out_dir / values, s.kernel_values)
    meta = {"format": "sparse-csr", "index_base": 0, "name": name,
            "c_out": s.c_out, "c_in": s.c_in,
            "row_offsets": s.row_offsets.tolist(), "column_indices": s.column_indices.tolist(),
            "values_file": values}
    meta_path = out_dir / f"{name}.sparse.json"
    meta_path.write_text(dumps_json(meta))
    return meta_path


def read_sparse_export(meta_path) -> SparseLayerExport:
    meta_path = Path(meta_path)
    meta = json.loads(meta_path.read_text())
    values = read_tensor(meta_path.parent / meta["values_file"])
    return SparseLayerExport(meta["c_out"], meta["c_in"], np.asarray(meta["row_offsets"], dtype=np.int64),
                             np.asarray(meta["column_indices"], dtype=np.int64), values)
