"""Binary little-endian PLY reader/writer for 3DGS scenes."""

from __future__ import annotations

import warnings
from pathlib import Path

import numpy as np

from .errors import FormatError, SchemaError, TruncationError, UnsupportedFormatError
from .model import GaussianCloud, sh_rest_width

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "<i2", "int16": "<i2", "ushort": "<u2", "uint16": "<u2",
    "int": "<i4", "int32": "<i4", "uint": "<u4", "uint32": "<u4",
    "float": "<f4", "float32": "<f4", "double": "<f8", "float64": "<f8",
}

_REST_TO_DEGREE = {0: 0, 9: 1, 24: 2, 45: 3}


def required_properties() -> list:
    return (["x", "y", "z"] + [f"f_dc_{i}" for i in range(3)] + ["opacity"]
            + [f"scale_{i}" for i in range(3)] + [f"rot_{i}" for i in range(4)])


def canonical_properties(sh_degree: int) -> list:
    """Property order written by :func:`save_ply`."""
    return (["x", "y", "z", "nx", "ny", "nz"]
            + [f"f_dc_{i}" for i in range(3)]
            + [f"f_rest_{i}" for i in range(sh_rest_width(sh_degree))]
            + ["opacity"] + [f"scale_{i}" for i in range(3)] + [f"rot_{i}" for i in range(4)])


def _parse_header(data: bytes):
    if not data.startswith(b"ply\n") and not data.startswith(b"ply\r\n"):
        raise FormatError("not a PLY file (bad magic)")
    end = data.find(b"end_header")
    if end < 0:
        raise FormatError("PLY header has no end_header")
    nl = data.find(b"\n", end)
    if nl < 0:
        raise FormatError("PLY header is not newline-terminated")
    text = data[:end].decode("ascii", errors="replace")
    fmt = None
    count = None
    props = []
    element = None
    seen_vertex = False
    for line in text.splitlines()[1:]:
        tok = line.split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            fmt = tok[1] if len(tok) > 1 else ""
        elif tok[0] == "element":
            element = tok[1]
            if element == "vertex":
                if seen_vertex:
                    raise FormatError("duplicate vertex element")
                seen_vertex = True
                count = int(tok[2])
            elif not seen_vertex:
                raise UnsupportedFormatError(f"element {element!r} before vertex is not supported")
        elif tok[0] == "property":
            if element != "vertex":
                continue
            if tok[1] == "list":
                raise UnsupportedFormatError("list properties are not supported")
            if tok[1] not in _PLY_TYPES:
                raise FormatError(f"unknown property type {tok[1]!r}")
            props.append((tok[2], _PLY_TYPES[tok[1]]))
    if fmt is None:
        raise FormatError("PLY header has no format line")
    if fmt != "binary_little_endian":
        raise UnsupportedFormatError(f"unsupported PLY format {fmt!r}; only binary_little_endian")
    if count is None:
        raise FormatError("PLY has no vertex element")
    return count, props, nl + 1


def load_ply(data: bytes) -> GaussianCloud:
    """Parse a 3DGS binary PLY. Normals and unknown properties are dropped."""
    data = bytes(data)
    count, props, offset = _parse_header(data)
    names = [p[0] for p in props]
    missing = [p for p in required_properties() if p not in names]
    if missing:
        raise SchemaError(missing)
    rest_names = [n for n in names if n.startswith("f_rest_")]
    if len(rest_names) not in _REST_TO_DEGREE:
        raise SchemaError([f"f_rest_* (got {len(rest_names)}, expected 0, 9, 24 or 45)"])
    sh_degree = _REST_TO_DEGREE[len(rest_names)]
    expected_rest = [f"f_rest_{i}" for i in range(len(rest_names))]
    if sorted(rest_names, key=lambda s: int(s[7:]) if s[7:].isdigit() else -1) != expected_rest:
        raise SchemaError(sorted(set(expected_rest) - set(rest_names)) or ["f_rest_* numbering"])
    known = set(canonical_properties(sh_degree))
    extras = [n for n in names if n not in known]
    if extras:
        warnings.warn(f"skipping unknown PLY properties: {', '.join(extras)}", stacklevel=2)

    dtype = np.dtype(props)
    need = count * dtype.itemsize
    have = len(data) - offset
    if have < need:
        raise TruncationError(need, have)
    v = np.frombuffer(data, dtype=dtype, count=count, offset=offset)

    def cols(keys):
        return np.stack([v[k].astype(np.float32) for k in keys], axis=1) if count else np.zeros((0, len(keys)), np.float32)

    return GaussianCloud(
        means=cols(["x", "y", "z"]),
        scale_log=cols([f"scale_{i}" for i in range(3)]),
        rotation=cols([f"rot_{i}" for i in range(4)]),
        opacity_logit=v["opacity"].astype(np.float32),
        sh_dc=cols([f"f_dc_{i}" for i in range(3)]),
        sh_rest=cols(expected_rest) if sh_degree else None,
        sh_degree=sh_degree,
    )


def save_ply(cloud: GaussianCloud) -> bytes:
    """Serialize with the canonical 3DGS property order; normals are written as zeros."""
    names = canonical_properties(cloud.sh_degree)
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {cloud.count}"]
    header += [f"property float {n}" for n in names]
    header.append("end_header")
    n = cloud.count
    parts = [cloud.means, np.zeros((n, 3), np.float32), cloud.sh_dc]
    if cloud.sh_rest is not None:
        parts.append(cloud.sh_rest)
    parts += [cloud.opacity_logit[:, None], cloud.scale_log, cloud.rotation]
    body = np.concatenate(parts, axis=1).astype("<f4", copy=False)
    assert body.shape[1] == len(names)
    return ("\n".join(header) + "\n").encode("ascii") + body.tobytes()


def read_ply(path) -> GaussianCloud:
    return load_ply(Path(path).read_bytes())


def write_ply(path, cloud: GaussianCloud) -> None:
    Path(path).write_bytes(save_ply(cloud))
