"""Point-cloud ingestion, grid preprocessing, sub-cloud cropping, persistence.

Supported file formats:

* PLY (ascii and binary-little-endian): element ``vertex`` with float32 or
  float64 ``x y z``, optional uint8 ``red green blue``, optional int32 or
  uint8 ``label``/``class``.
* xyzrgbl text: whitespace-separated ``x y z r g b label`` per line with
  r, g, b in 0..255.
* label files: one integer per line.

Colors are normalized to [0, 1] at load time.  A loaded cloud is immutable
(its arrays are marked read-only) and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .spatial import SpatialIndex, knn

__all__ = [
    "PointCloud", "SubsampleMap", "LoadError", "load_cloud", "save_cloud",
    "grid_subsample", "crop_subcloud", "save_labels", "load_labels", "FORMATS",
]

FORMATS = ("ply-ascii", "ply-binary-le", "xyzrgbl-text")


class LoadError(ValueError):
    """Malformed or out-of-contract point-cloud file."""


@dataclass
class PointCloud:
    coords: np.ndarray                      # (N, 3) float64, meters
    colors: Optional[np.ndarray] = None     # (N, 3) float64 in [0, 1]
    labels: Optional[np.ndarray] = None     # (N,) int64 in [0, n_class)
    n_class: Optional[int] = None

    def __post_init__(self):
        # copy, not alias: the arrays get frozen below
        self.coords = np.array(self.coords, dtype=np.float64, order="C")
        if self.coords.ndim != 2 or self.coords.shape[1] != 3:
            raise LoadError(f"coords must be (N, 3), got {self.coords.shape}")
        n = self.coords.shape[0]
        if n < 1:
            raise LoadError("a point cloud needs at least one point")
        if not np.isfinite(self.coords).all():
            bad = int(np.argwhere(~np.isfinite(self.coords).all(axis=1))[0, 0])
            raise LoadError(f"non-finite coordinate at record {bad}")
        if self.colors is not None:
            self.colors = np.array(self.colors, dtype=np.float64, order="C")
            if self.colors.shape != (n, 3):
                raise LoadError("colors must be (N, 3)")
            if self.colors.min() < 0.0 or self.colors.max() > 1.0:
                raise LoadError("colors must lie in [0, 1]")
        if self.labels is not None:
            self.labels = np.array(self.labels, dtype=np.int64, order="C")
            if self.labels.shape != (n,):
                raise LoadError("labels must be (N,)")
            if self.labels.min() < 0:
                raise LoadError("labels must be non-negative")
            if self.n_class is not None and self.labels.max() >= self.n_class:
                bad = int(np.argmax(self.labels >= self.n_class))
                raise LoadError(f"label {int(self.labels[bad])} >= n_class {self.n_class} at record {bad}")
        for arr in (self.coords, self.colors, self.labels):
            if arr is not None:
                arr.flags.writeable = False

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def d_in(self) -> int:
        """Input feature width: xyz alone or xyz plus rgb."""
        return 6 if self.colors is not None else 3

    def features(self) -> np.ndarray:
        if self.colors is None:
            return self.coords
        return np.hstack([self.coords, self.colors])

    def select(self, idx: np.ndarray) -> "PointCloud":
        return PointCloud(
            coords=self.coords[idx],
            colors=None if self.colors is None else self.colors[idx],
            labels=None if self.labels is None else self.labels[idx],
            n_class=self.n_class,
        )


@dataclass
class SubsampleMap:
    """For each kept point, the source indices of its voxel members."""

    kept_to_source: List[np.ndarray] = field(default_factory=list)
    voxel_size: float = 0.0


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

_PLY_DTYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _parse_ply_header(raw: bytes, path: str):
    lines = []
    pos = 0
    while True:
        nl = raw.find(b"\n", pos)
        if nl < 0:
            raise LoadError(f"{path}: no end_header found")
        line = raw[pos:nl].decode("ascii", errors="replace").strip()
        pos = nl + 1
        lines.append(line)
        if line == "end_header":
            break
    if not lines or lines[0] != "ply":
        raise LoadError(f"{path}: missing 'ply' magic on line 1")
    fmt = None
    count = None
    props: List[Tuple[str, str]] = []
    in_vertex = False
    vertex_seen = False
    for ln, line in enumerate(lines[1:], start=2):
        if not line or line.startswith("comment") or line.startswith("obj_info"):
            continue
        parts = line.split()
        if parts[0] == "format":
            if len(parts) < 2 or parts[1] not in ("ascii", "binary_little_endian"):
                raise LoadError(f"{path}: unsupported format on line {ln}: {line!r}")
            fmt = parts[1]
        elif parts[0] == "element":
            if len(parts) != 3:
                raise LoadError(f"{path}: malformed element on line {ln}")
            if parts[1] == "vertex":
                count = int(parts[2])
                in_vertex = True
                vertex_seen = True
            else:
                if not vertex_seen and int(parts[2]) > 0:
                    raise LoadError(f"{path}: element '{parts[1]}' precedes vertex data (line {ln})")
                in_vertex = False
        elif parts[0] == "property":
            if not in_vertex:
                continue
            if parts[1] == "list":
                raise LoadError(f"{path}: list property in vertex element (line {ln})")
            if len(parts) != 3 or parts[1] not in _PLY_DTYPES:
                raise LoadError(f"{path}: unsupported property on line {ln}: {line!r}")
            props.append((parts[2], _PLY_DTYPES[parts[1]]))
        elif parts[0] == "end_header":
            break
        else:
            raise LoadError(f"{path}: unrecognized header line {ln}: {line!r}")
    if fmt is None:
        raise LoadError(f"{path}: header has no format line")
    if count is None:
        raise LoadError(f"{path}: header has no vertex element")
    names = [p[0] for p in props]
    for needed in ("x", "y", "z"):
        if needed not in names:
            raise LoadError(f"{path}: vertex element lacks property '{needed}'")
    return fmt, count, props, pos


def _assemble_cloud(table: dict, count: int, path: str, n_class: Optional[int]) -> PointCloud:
    coords = np.stack([table["x"], table["y"], table["z"]], axis=1).astype(np.float64)
    colors = None
    if all(c in table for c in ("red", "green", "blue")):
        colors = np.stack([table["red"], table["green"], table["blue"]], axis=1).astype(np.float64) / 255.0
    labels = None
    for key in ("label", "class"):
        if key in table:
            labels = table[key].astype(np.int64)
            break
    try:
        return PointCloud(coords=coords, colors=colors, labels=labels, n_class=n_class)
    except LoadError as exc:
        raise LoadError(f"{path}: {exc}") from None


def _load_ply(path: str, binary: bool, n_class: Optional[int]) -> PointCloud:
    raw = Path(path).read_bytes()
    fmt, count, props, data_pos = _parse_ply_header(raw, path)
    if binary and fmt != "binary_little_endian":
        raise LoadError(f"{path}: expected binary_little_endian, header says {fmt}")
    if not binary and fmt != "ascii":
        raise LoadError(f"{path}: expected ascii, header says {fmt}")
    if count < 1:
        raise LoadError(f"{path}: vertex count must be >= 1")
    if binary:
        dtype = np.dtype([(name, "<" + code) for name, code in props])
        need = count * dtype.itemsize
        if len(raw) - data_pos < need:
            raise LoadError(f"{path}: truncated payload ({len(raw) - data_pos} of {need} bytes)")
        rec = np.frombuffer(raw, dtype=dtype, count=count, offset=data_pos)
        table = {name: rec[name] for name, _ in props}
    else:
        text = raw[data_pos:].decode("ascii", errors="replace").splitlines()
        rows = np.empty((count, len(props)), dtype=np.float64)
        line_no = 0
        for i in range(count):
            while line_no < len(text) and not text[line_no].strip():
                line_no += 1
            if line_no >= len(text):
                raise LoadError(f"{path}: expected {count} vertex lines, found {i}")
            parts = text[line_no].split()
            if len(parts) != len(props):
                raise LoadError(f"{path}: vertex record {i} has {len(parts)} fields, expected {len(props)}")
            try:
                rows[i] = [float(v) for v in parts]
            except ValueError:
                raise LoadError(f"{path}: unparseable vertex record {i}: {text[line_no]!r}") from None
            line_no += 1
        table = {name: rows[:, j] for j, (name, _) in enumerate(props)}
    return _assemble_cloud(table, count, path, n_class)


def _load_xyzrgbl(path: str, n_class: Optional[int]) -> PointCloud:
    rows = []
    with open(path, "r") as fh:
        for ln, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 7:
                raise LoadError(f"{path}: line {ln} has {len(parts)} fields, expected 7 (x y z r g b label)")
            try:
                rows.append([float(v) for v in parts])
            except ValueError:
                raise LoadError(f"{path}: unparseable value on line {ln}: {line.strip()!r}") from None
    if not rows:
        raise LoadError(f"{path}: empty cloud")
    data = np.asarray(rows, dtype=np.float64)
    labels = data[:, 6]
    if np.any(labels != np.floor(labels)):
        bad = int(np.argmax(labels != np.floor(labels))) + 1
        raise LoadError(f"{path}: non-integer label on record {bad}")
    return _assemble_cloud(
        {"x": data[:, 0], "y": data[:, 1], "z": data[:, 2],
         "red": data[:, 3], "green": data[:, 4], "blue": data[:, 5],
         "label": labels},
        data.shape[0], path, n_class)


def load_cloud(path: str, format: str, n_class: Optional[int] = None) -> PointCloud:
    """Load a point cloud in one of the declared formats, preserving point order."""
    if format == "ply-ascii":
        return _load_ply(path, binary=False, n_class=n_class)
    if format == "ply-binary-le":
        return _load_ply(path, binary=True, n_class=n_class)
    if format == "xyzrgbl-text":
        return _load_xyzrgbl(path, n_class=n_class)
    raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")


# ---------------------------------------------------------------------------
# Saving
# ---------------------------------------------------------------------------

def _color_bytes(colors: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(colors * 255.0), 0, 255).astype(np.uint8)


def save_cloud(path: str, cloud: PointCloud, format: str = "xyzrgbl-text") -> None:
    """Write a cloud; coordinates keep 6 significant decimals in text formats."""
    if format == "xyzrgbl-text":
        if cloud.colors is None or cloud.labels is None:
            raise ValueError("xyzrgbl-text needs both colors and labels")
        rgb = _color_bytes(cloud.colors)
        with open(path, "w") as fh:
            for i in range(cloud.n):
                x, y, z = cloud.coords[i]
                fh.write(f"{x:.6g} {y:.6g} {z:.6g} {rgb[i, 0]} {rgb[i, 1]} {rgb[i, 2]} {int(cloud.labels[i])}\n")
        return
    if format not in ("ply-ascii", "ply-binary-le"):
        raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")
    binary = format == "ply-binary-le"
    header = ["ply", "format binary_little_endian 1.0" if binary else "format ascii 1.0",
              f"element vertex {cloud.n}",
              "property double x", "property double y", "property double z"]
    if cloud.colors is not None:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    if cloud.labels is not None:
        header += ["property int label"]
    header.append("end_header")
    if binary:
        fields = [("x", "<f8"), ("y", "<f8"), ("z", "<f8")]
        if cloud.colors is not None:
            fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
        if cloud.labels is not None:
            fields += [("label", "<i4")]
        rec = np.empty(cloud.n, dtype=np.dtype(fields))
        rec["x"], rec["y"], rec["z"] = cloud.coords[:, 0], cloud.coords[:, 1], cloud.coords[:, 2]
        if cloud.colors is not None:
            rgb = _color_bytes(cloud.colors)
            rec["red"], rec["green"], rec["blue"] = rgb[:, 0], rgb[:, 1], rgb[:, 2]
        if cloud.labels is not None:
            rec["label"] = cloud.labels.astype(np.int32)
        with open(path, "wb") as fh:
            fh.write(("\n".join(header) + "\n").encode("ascii"))
            fh.write(rec.tobytes())
    else:
        rgb = _color_bytes(cloud.colors) if cloud.colors is not None else None
        with open(path, "w") as fh:
            fh.write("\n".join(header) + "\n")
            for i in range(cloud.n):
                parts = [f"{v:.6g}" for v in cloud.coords[i]]
                if rgb is not None:
                    parts += [str(v) for v in rgb[i]]
                if cloud.labels is not None:
                    parts.append(str(int(cloud.labels[i])))
                fh.write(" ".join(parts) + "\n")


def save_labels(path: str, labels: np.ndarray, n_class: Optional[int] = None) -> None:
    """One label per line, in point order."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise ValueError("labels must be a flat array")
    if labels.size and labels.min() < 0:
        raise ValueError("labels must be non-negative")
    if n_class is not None and labels.size and labels.max() >= n_class:
        raise ValueError(f"label {int(labels.max())} >= n_class {n_class}")
    with open(path, "w") as fh:
        for v in labels:
            fh.write(f"{int(v)}\n")


def load_labels(path: str) -> np.ndarray:
    values = []
    with open(path, "r") as fh:
        for ln, line in enumerate(fh, start=1):
            s = line.strip()
            if not s:
                continue
            try:
                values.append(int(s))
            except ValueError:
                raise LoadError(f"{path}: non-integer label on line {ln}: {s!r}") from None
    return np.asarray(values, dtype=np.int64)


# ---------------------------------------------------------------------------
# Preprocessing
# ---------------------------------------------------------------------------

def grid_subsample(cloud: PointCloud, voxel_size: float) -> Tuple[PointCloud, SubsampleMap]:
    """One point per occupied voxel of a global grid anchored at the origin.

    The representative is the centroid of the voxel members; colors average,
    labels take the majority vote with ties going to the smallest class id.
    Anchoring the grid at the origin (rather than the cloud minimum) makes
    re-subsampling at the same voxel size a fixed point.
    """
    if voxel_size <= 0:
        raise ValueError("voxel_size must be > 0")
    v = np.floor(cloud.coords / voxel_size).astype(np.int64)
    vmin = v.min(axis=0)
    rel = v - vmin
    span = rel.max(axis=0) + 1
    if int(span[0]) * int(span[1]) * int(span[2]) < 2 ** 62:
        packed = (rel[:, 0] * span[1] + rel[:, 1]) * span[2] + rel[:, 2]
        _, inverse, counts = np.unique(packed, return_inverse=True, return_counts=True)
    else:
        _, inverse, counts = np.unique(rel, axis=0, return_inverse=True, return_counts=True)
    m = counts.shape[0]

    coords = np.stack([np.bincount(inverse, weights=cloud.coords[:, d], minlength=m)
                       for d in range(3)], axis=1) / counts[:, None]
    colors = None
    if cloud.colors is not None:
        colors = np.stack([np.bincount(inverse, weights=cloud.colors[:, d], minlength=m)
                           for d in range(3)], axis=1) / counts[:, None]
        colors = np.clip(colors, 0.0, 1.0)
    labels = None
    if cloud.labels is not None:
        c = int(cloud.labels.max()) + 1 if cloud.n_class is None else cloud.n_class
        votes = np.bincount(inverse * c + cloud.labels, minlength=m * c).reshape(m, c)
        labels = votes.argmax(axis=1)  # argmax takes the first maximum: smallest class id

    order = np.argsort(inverse, kind="stable")
    members = np.split(order, np.cumsum(counts)[:-1])
    sub = PointCloud(coords=coords, colors=colors, labels=labels, n_class=cloud.n_class)
    return sub, SubsampleMap(kept_to_source=members, voxel_size=float(voxel_size))


def crop_subcloud(cloud: PointCloud, center_index: int, count: int,
                  index: SpatialIndex) -> np.ndarray:
    """Indices of the `count` points nearest the center point, center included."""
    if not 0 <= center_index < cloud.n:
        raise ValueError("center_index out of range")
    if not 1 <= count <= cloud.n:
        raise ValueError(f"cannot crop {count} of {cloud.n} points")
    center = cloud.coords[center_index].reshape(1, 3)
    if count == 1:
        return np.array([center_index], dtype=np.int64)
    rest = knn(index, center, count - 1,
               exclude_ids=np.array([center_index], dtype=np.int64)).indices[0]
    return np.concatenate([[center_index], rest]).astype(np.int64)
