"""Signal ingest and on-disk scattering trees.

Formats
-------
* ``pgm``: binary PGM (``P5``), 8- or 16-bit, scaled to ``[0, 1]``.
* ``raw``: little-endian float64 samples plus a JSON sidecar ``<file>.json``
  holding ``{"dims": [...]}`` (and ``"dtype": "<c16"`` for complex data).

A tree directory holds ``manifest.json`` and one raw little-endian array
file per computed coefficient. Mirror twins point at their source's file.
"""

import hashlib
import json
import os
from pathlib import Path

import numpy as np

from . import __version__
from .frame import ConfigurationError
from .transform import ScatterConfig, ScatteringNode, ScatteringTree

__all__ = [
    "FormatError",
    "read_signal",
    "write_signal",
    "read_pgm",
    "write_pgm",
    "write_tree",
    "read_tree",
    "MANIFEST",
]

MANIFEST = "manifest.json"
_DTYPES = {"<f8": np.dtype("<f8"), "<c16": np.dtype("<c16")}


class FormatError(ValueError):
    """Malformed or inconsistent file."""


# ---------------------------------------------------------------- PGM


def _pgm_tokens(data):
    """Yield (token, end_offset) for the four header fields of a PGM."""
    pos = 0
    found = 0
    while found < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        found += 1
        yield data[start:pos], pos


def read_pgm(path):
    data = Path(path).read_bytes()
    try:
        (magic, _), (w, _), (h, _), (maxval, end) = list(_pgm_tokens(data))
        width, height, maxval = int(w), int(h), int(maxval)
    except (ValueError, FormatError) as exc:
        raise FormatError(f"{path}: malformed PGM header") from exc
    if magic != b"P5":
        raise FormatError(f"{path}: not a binary PGM (magic {magic!r})")
    if not 0 < maxval < 65536 or width <= 0 or height <= 0:
        raise FormatError(f"{path}: bad PGM dimensions or maxval")
    dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    body = data[end + 1:]
    need = width * height * dtype.itemsize
    if len(body) < need:
        raise FormatError(f"{path}: PGM pixel data truncated ({len(body)} < {need} bytes)")
    pixels = np.frombuffer(body[:need], dtype=dtype).reshape(height, width)
    return pixels.astype(np.float64) / maxval


def write_pgm(path, image, maxval=255):
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise FormatError("PGM images must be 2-D")
    q = np.clip(np.rint(image * maxval), 0, maxval)
    dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + q.astype(dtype).tobytes())


# ---------------------------------------------------------------- raw f64


def _sidecar(path):
    return Path(str(path) + ".json")


def write_signal(path, data):
    data = np.asarray(data)
    key = "<c16" if np.iscomplexobj(data) else "<f8"
    Path(path).write_bytes(np.ascontiguousarray(data, dtype=_DTYPES[key]).tobytes())
    _sidecar(path).write_text(json.dumps({"dims": list(data.shape), "dtype": key}))


def _read_raw(path):
    side = _sidecar(path)
    if not side.exists():
        raise FormatError(f"{path}: missing sidecar {side.name}")
    try:
        meta = json.loads(side.read_text())
        dims = [int(n) for n in meta["dims"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{side}: malformed sidecar") from exc
    key = meta.get("dtype", "<f8")
    if key not in _DTYPES:
        raise FormatError(f"{side}: unsupported dtype {key!r}")
    dtype = _DTYPES[key]
    raw = Path(path).read_bytes()
    need = int(np.prod(dims)) * dtype.itemsize
    if len(raw) != need:
        raise FormatError(f"{path}: expected {need} bytes for dims {dims}, found {len(raw)}")
    return np.frombuffer(raw, dtype=dtype).reshape(dims).copy()


def _guess_format(path):
    return "pgm" if str(path).lower().endswith(".pgm") else "raw"


def read_signal(path, format=None, N=None, d=None):
    """Load a signal; with ``N``/``d`` given, the shape must be ``(N,)*d``."""
    fmt = format or _guess_format(path)
    if fmt == "pgm":
        out = read_pgm(path)
    elif fmt in ("raw", "raw-f64", "f64"):
        out = _read_raw(path)
    else:
        raise FormatError(f"unknown signal format {fmt!r}")
    if d is not None and out.ndim != d:
        raise FormatError(f"{path}: signal is {out.ndim}-D, frame is {d}-D")
    if N is not None and any(n != N for n in out.shape):
        raise FormatError(f"{path}: dims {list(out.shape)} incompatible with N={N}")
    return out


# ---------------------------------------------------------------- trees


def _path_to_json(path):
    return [list(step) for step in path]


def _path_from_json(obj):
    return tuple(tuple(int(c) for c in step) for step in obj)


def write_tree(tree, directory, source=None):
    """Write ``tree`` to ``directory``; returns the manifest dict."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    records = []
    for i, node in enumerate(tree):
        rec = {
            "path": _path_to_json(node.path),
            "node_energy": node.node_energy,
            "coefficient_energy": node.coefficient_energy,
            "children_energy": node.children_energy,
            "expanded": node.expanded,
            "mirror_of": None if node.mirror_of is None else _path_to_json(node.mirror_of),
            "file": None,
        }
        coef = node.coefficient
        if coef is not None:
            owner = node.mirror_of if node.mirror_of is not None else node.path
            if owner not in files:
                key = "<c16" if np.iscomplexobj(coef) else "<f8"
                blob = np.ascontiguousarray(coef, dtype=_DTYPES[key]).tobytes()
                name = f"coef_{len(files):06d}.bin"
                (out / name).write_bytes(blob)
                files[owner] = {
                    "file": name, "dtype": key, "dims": list(coef.shape),
                    "bytes": len(blob), "sha256": hashlib.sha256(blob).hexdigest(),
                }
            rec.update(files[owner])
        records.append(rec)
    manifest = {
        "format": "fourier-scattering-tree",
        "tool_version": __version__,
        "frame": tree.frame_spec,
        "config": tree.config.to_json(),
        "input": {
            "source": None if source is None else str(source),
            "dims": [tree.frame_spec["N"]] * tree.frame_spec["d"],
            "dtype": tree.input_dtype,
            "norm_sq": tree.input_norm_sq,
        },
        "computed_nodes": tree.computed,
        "nodes": records,
    }
    tmp = out / (MANIFEST + ".tmp")
    tmp.write_text(json.dumps(manifest, indent=1) + "\n")
    os.replace(tmp, out / MANIFEST)
    return manifest


def _loader(path, rec):
    def load():
        blob = path.read_bytes()
        if len(blob) != rec["bytes"]:
            raise FormatError(f"{path}: expected {rec['bytes']} bytes, found {len(blob)}")
        if hashlib.sha256(blob).hexdigest() != rec["sha256"]:
            raise FormatError(f"{path}: digest mismatch with manifest")
        return np.frombuffer(blob, dtype=_DTYPES[rec["dtype"]]).reshape(rec["dims"]).copy()
    return load


def read_manifest(directory):
    path = Path(directory) / MANIFEST
    if not path.exists():
        raise FormatError(f"{path}: manifest not found")
    try:
        return json.loads(path.read_text())
    except ValueError as exc:
        raise FormatError(f"{path}: malformed manifest") from exc


def read_tree(directory, verify=False):
    """Load a tree written by :func:`write_tree`.

    File sizes are checked immediately; coefficients load lazily on first
    access to ``node.coefficient`` and are checked against their digest then
    (or immediately with ``verify=True``).
    """
    directory = Path(directory)
    manifest = read_manifest(directory)
    try:
        cfg = manifest["config"]
        config = ScatterConfig(M=cfg["M"], K=int(cfg["K"]), prune_eps=float(cfg["prune_eps"]),
                               mirror_halving=bool(cfg["mirror_halving"]),
                               keep_coefficients=any(r["file"] for r in manifest["nodes"]),
                               downsample=int(cfg.get("downsample", 1)))
        nodes = {}
        for rec in manifest["nodes"]:
            path = _path_from_json(rec["path"])
            loader = None
            if rec["file"]:
                fpath = directory / rec["file"]
                if not fpath.exists():
                    raise FormatError(f"{fpath}: coefficient file missing")
                if fpath.stat().st_size != rec["bytes"]:
                    raise FormatError(
                        f"{fpath}: expected {rec['bytes']} bytes, found {fpath.stat().st_size}")
                loader = _loader(fpath, rec)
            nodes[path] = ScatteringNode(
                path, rec["node_energy"], rec["coefficient_energy"], rec["children_energy"],
                expanded=rec["expanded"],
                mirror_of=None if rec["mirror_of"] is None else _path_from_json(rec["mirror_of"]),
                _loader=loader)
            if verify and loader is not None:
                nodes[path].coefficient
        tree = ScatteringTree(manifest["frame"], config, manifest["input"]["norm_sq"], nodes,
                              input_dtype=manifest["input"]["dtype"],
                              computed=manifest.get("computed_nodes"))
    except (KeyError, TypeError, ConfigurationError) as exc:
        raise FormatError(f"{directory / MANIFEST}: malformed manifest ({exc})") from exc
    return tree
