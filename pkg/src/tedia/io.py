"""Plain-text file formats for tensors, matrices, block structures and models.

Tensor files::

    TEDIA-TENSOR 1
    real                      (or ``complex``)
    N1 N2 N3
    <one value per line, last index fastest; complex values as "re im">

Matrix files use the header ``TEDIA-MATRIX 1`` and a ``rows cols`` line,
with row-major values.  Every float is written with 17 significant digits,
so reading back is exact.
"""

import json
from pathlib import Path

import numpy as np

from .blocks import BlockStructure

TENSOR_MAGIC = "TEDIA-TENSOR 1"
MATRIX_MAGIC = "TEDIA-MATRIX 1"


class FormatError(ValueError):
    pass


def _fmt(x):
    return format(float(x), ".17g")


def _write_array(path, magic, a):
    a = np.asarray(a)
    kind = "complex" if np.iscomplexobj(a) else "real"
    lines = [magic, kind, " ".join(str(d) for d in a.shape)]
    flat = a.ravel(order="C")
    if kind == "complex":
        lines.extend(f"{_fmt(v.real)} {_fmt(v.imag)}" for v in flat)
    else:
        lines.extend(_fmt(v) for v in flat)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_array(path, magic, ndim):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: cannot read ({exc})") from exc
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if len(lines) < 3 or lines[0] != magic:
        raise FormatError(f"{path}: expected header {magic!r}")
    kind = lines[1]
    if kind not in ("real", "complex"):
        raise FormatError(f"{path}: scalar kind must be 'real' or 'complex', got {kind!r}")
    try:
        shape = tuple(int(d) for d in lines[2].split())
    except ValueError as exc:
        raise FormatError(f"{path}: bad dimension line {lines[2]!r}") from exc
    if len(shape) != ndim or any(d < 1 for d in shape):
        raise FormatError(f"{path}: expected {ndim} positive dimensions, got {lines[2]!r}")
    body = lines[3:]
    count = int(np.prod(shape))
    if len(body) != count:
        raise FormatError(f"{path}: expected {count} values, found {len(body)}")
    width = 2 if kind == "complex" else 1
    try:
        vals = np.array([[float(x) for x in ln.split()] for ln in body])
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric value ({exc})") from exc
    if vals.ndim != 2 or vals.shape[1] != width:
        raise FormatError(f"{path}: each value line must hold {width} number(s)")
    if not np.all(np.isfinite(vals)):
        raise FormatError(f"{path}: non-finite values")
    data = vals[:, 0] + 1j * vals[:, 1] if width == 2 else vals[:, 0]
    return data.reshape(shape)


def write_tensor(path, t):
    t = np.asarray(t)
    if t.ndim != 3:
        raise ValueError(f"expected an order-3 tensor, got ndim={t.ndim}")
    _write_array(path, TENSOR_MAGIC, t)


def read_tensor(path):
    return _read_array(path, TENSOR_MAGIC, 3)


def write_matrix(path, m):
    m = np.asarray(m)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got ndim={m.ndim}")
    _write_array(path, MATRIX_MAGIC, m)


def read_matrix(path):
    return _read_array(path, MATRIX_MAGIC, 2)


def format_blocks(b):
    """``perm:`` (1-based) and ``sizes:`` lines."""
    return ("perm: " + " ".join(str(p + 1) for p in b.perm) + "\n"
            + "sizes: " + " ".join(str(s) for s in b.sizes) + "\n")


def parse_blocks(text):
    fields = {}
    for ln in text.splitlines():
        if ":" in ln:
            key, _, val = ln.partition(":")
            fields[key.strip()] = val.split()
    if "perm" not in fields or "sizes" not in fields:
        raise FormatError("block structure needs 'perm:' and 'sizes:' lines")
    try:
        perm = np.array([int(p) - 1 for p in fields["perm"]])
        sizes = tuple(int(s) for s in fields["sizes"])
        return BlockStructure(perm=perm, sizes=sizes)
    except ValueError as exc:
        raise FormatError(f"invalid block structure: {exc}") from exc


def write_blocks(path, b):
    Path(path).write_text(format_blocks(b), encoding="utf-8")


def read_blocks(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"{path}: cannot read ({exc})") from exc
    return parse_blocks(text)


TRANSFORM_FILES = ("A", "B", "C", "A_tilde", "B_tilde", "C_tilde")


def write_transforms(directory, tr):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name in TRANSFORM_FILES:
        write_matrix(d / f"{name}.txt", getattr(tr, name))


def read_transforms(directory):
    from .sweep import TransformSet

    d = Path(directory)
    return TransformSet(*(read_matrix(d / f"{name}.txt") for name in TRANSFORM_FILES))


def write_btd(directory, model):
    """One tensor file per core, one matrix file per factor block, and a manifest."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    lines = ["sizes: " + " ".join(str(s) for s in model.sizes)]
    for b, g in enumerate(model.cores):
        write_tensor(d / f"core_{b + 1}.txt", g)
        lines.append(f"core {b + 1}: core_{b + 1}.txt")
        for m, name in enumerate("ABC"):
            fname = f"factor_{name}_{b + 1}.txt"
            write_matrix(d / fname, model.factors[m][b])
            lines.append(f"factor {name} {b + 1}: {fname}")
    (d / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_btd(directory):
    from .btd import BtdModel

    d = Path(directory)
    try:
        head = (d / "manifest.txt").read_text(encoding="utf-8").splitlines()[0]
    except (OSError, IndexError) as exc:
        raise FormatError(f"{d}: missing or empty manifest.txt") from exc
    if not head.startswith("sizes:"):
        raise FormatError(f"{d}: manifest must start with 'sizes:'")
    sizes = [int(s) for s in head.split(":", 1)[1].split()]
    cores = [read_tensor(d / f"core_{b + 1}.txt") for b in range(len(sizes))]
    fac = tuple([read_matrix(d / f"factor_{name}_{b + 1}.txt") for b in range(len(sizes))]
                for name in "ABC")
    return BtdModel(cores, fac)


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def read_kv(path):
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"{path}: cannot read ({exc})") from exc
    for n, ln in enumerate(text.splitlines(), 1):
        ln = ln.split("#", 1)[0].strip()
        if not ln:
            continue
        if "=" not in ln:
            raise FormatError(f"{path}:{n}: expected key=value, got {ln!r}")
        key, _, val = ln.partition("=")
        out[key.strip()] = val.strip()
    return out
