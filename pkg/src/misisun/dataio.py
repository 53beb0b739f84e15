"""CSV matrices, dataset bundles and flat key-value records.

Matrices are plain CSV, one matrix row per line, bands along rows. Values are
written with 17 significant digits so a write/read cycle is bit-exact. Lines
starting with ``#`` are comments.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from numpy.typing import NDArray

from .types import (
    AbundanceMatrix,
    DimensionError,
    EndmemberMatrix,
    HsiMatrix,
    MixingMatrix,
    SpectralLibrary,
    as_array,
)

Y_FILE = "Y.csv"
D_FILE = "D.csv"
A_TRUE_FILE = "A_true.csv"
E_TRUE_FILE = "E_true.csv"
B_TRUE_FILE = "B_true.csv"
META_FILE = "meta.txt"


class MatrixParseError(ValueError):
    def __init__(self, path, line: Optional[int], message: str):
        self.path = str(path)
        self.line = line
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")


class BundleError(ValueError):
    pass


class LibraryRequiredError(BundleError):
    def __init__(self, directory):
        super().__init__(f"library required: {Path(directory) / D_FILE} is missing")


def atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_matrix(matrix, comment: Optional[str] = None) -> str:
    arr = as_array(matrix)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DimensionError(f"can only write 2-D matrices, got shape {arr.shape}")
    lines = []
    if comment:
        lines.extend(f"# {c}" for c in comment.splitlines())
    fmt = ",".join(["%.17g"] * arr.shape[1])
    lines.extend(fmt % tuple(row) for row in arr)
    return "\n".join(lines) + "\n"


def write_matrix(matrix, path, comment: Optional[str] = None) -> None:
    atomic_write_text(Path(path), format_matrix(matrix, comment))


def read_matrix(path) -> NDArray[np.float64]:
    path = Path(path)
    rows = []
    width = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split(",")
            try:
                row = [float(t) for t in tokens]
            except ValueError:
                bad = next(t for t in tokens if not _is_float(t))
                raise MatrixParseError(path, lineno, f"non-numeric token {bad.strip()!r}") from None
            if not all(math.isfinite(v) for v in row):
                raise MatrixParseError(path, lineno, "non-finite value")
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise MatrixParseError(path, lineno, f"ragged row: {len(row)} values, expected {width}")
            rows.append(row)
    if not rows:
        raise MatrixParseError(path, None, "empty matrix file")
    return np.array(rows, dtype=np.float64)


def _is_float(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def format_record(record: dict) -> str:
    lines = []
    for key, value in record.items():
        if "=" in str(key) or "\n" in str(value):
            raise ValueError(f"cannot encode record entry {key!r}")
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def write_record(record: dict, path) -> None:
    atomic_write_text(Path(path), format_record(record))


def read_record(path) -> dict[str, str]:
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise MatrixParseError(path, lineno, "expected 'key = value'")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


@dataclass
class DatasetBundle:
    y: Optional[HsiMatrix] = None
    d: Optional[SpectralLibrary] = None
    a_true: Optional[AbundanceMatrix] = None
    e_true: Optional[EndmemberMatrix] = None
    b_true: Optional[MixingMatrix] = None
    meta: dict = field(default_factory=dict)

    def require_library(self, directory="<bundle>") -> SpectralLibrary:
        if self.d is None:
            raise LibraryRequiredError(directory)
        return self.d

    def require_data(self, directory="<bundle>") -> HsiMatrix:
        if self.y is None:
            raise BundleError(f"data required: {Path(directory) / Y_FILE} is missing")
        return self.y

    def dimension_meta(self) -> dict:
        meta = {}
        if self.y is not None:
            meta["p"], meta["n"] = self.y.data.shape
            if self.y.spatial_shape is not None:
                meta["height"], meta["width"] = self.y.spatial_shape
        if self.d is not None:
            meta["p"], meta["m"] = self.d.data.shape
        r = next((x.data.shape[0] for x in (self.a_true,) if x is not None), None)
        if r is None and self.e_true is not None:
            r = self.e_true.data.shape[1]
        if r is not None:
            meta["r"] = r
        return meta


def write_bundle(bundle: DatasetBundle, directory) -> None:
    """Write all present matrices and meta.txt; files go through temp-file renames."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {**bundle.meta, **bundle.dimension_meta()}
    for name, obj in ((Y_FILE, bundle.y), (D_FILE, bundle.d), (A_TRUE_FILE, bundle.a_true),
                      (E_TRUE_FILE, bundle.e_true), (B_TRUE_FILE, bundle.b_true)):
        if obj is not None:
            write_matrix(obj.data, directory / name)
    write_record(meta, directory / META_FILE)


def _meta_int(meta: dict, key: str) -> Optional[int]:
    if key not in meta:
        return None
    try:
        return int(meta[key])
    except ValueError:
        raise BundleError(f"meta {key} = {meta[key]!r} is not an integer") from None


def _check(meta: dict, key: str, actual: int, source: str) -> None:
    expected = _meta_int(meta, key)
    if expected is not None and expected != actual:
        raise BundleError(f"dimension mismatch: meta {key} = {expected} but {source} has {actual}")


def read_bundle(directory, require_library: bool = False) -> DatasetBundle:
    """Load a bundle, cross-checking every matrix against meta.txt.

    Nothing is returned unless every present file parses and validates.
    """
    directory = Path(directory)
    meta_path = directory / META_FILE
    if not meta_path.is_file():
        raise BundleError(f"missing required file {meta_path}")
    meta = read_record(meta_path)

    def load(name):
        path = directory / name
        return read_matrix(path) if path.is_file() else None

    y, d, a, e, b = (load(n) for n in (Y_FILE, D_FILE, A_TRUE_FILE, E_TRUE_FILE, B_TRUE_FILE))
    if y is None and d is None:
        raise BundleError(f"missing required file {directory / Y_FILE}")
    if require_library and d is None:
        raise LibraryRequiredError(directory)
    if y is not None:
        _check(meta, "p", y.shape[0], Y_FILE)
        _check(meta, "n", y.shape[1], Y_FILE)
    if d is not None:
        _check(meta, "p", d.shape[0], D_FILE)
        _check(meta, "m", d.shape[1], D_FILE)
    if a is not None:
        _check(meta, "r", a.shape[0], A_TRUE_FILE)
        _check(meta, "n", a.shape[1], A_TRUE_FILE)
    if e is not None:
        _check(meta, "p", e.shape[0], E_TRUE_FILE)
        _check(meta, "r", e.shape[1], E_TRUE_FILE)
    if b is not None:
        _check(meta, "m", b.shape[0], B_TRUE_FILE)
        _check(meta, "r", b.shape[1], B_TRUE_FILE)

    shape = None
    h, w = _meta_int(meta, "height"), _meta_int(meta, "width")
    if h is not None and w is not None:
        shape = (h, w)
    try:
        return DatasetBundle(
            y=HsiMatrix(y, spatial_shape=shape) if y is not None else None,
            d=SpectralLibrary(d) if d is not None else None,
            a_true=AbundanceMatrix(a, tol=1e-6) if a is not None else None,
            e_true=EndmemberMatrix(e) if e is not None else None,
            b_true=MixingMatrix(b, tol=1e-6) if b is not None else None,
            meta=meta,
        )
    except ValueError as exc:
        raise BundleError(f"{directory}: {exc}") from exc

