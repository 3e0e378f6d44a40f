"""PLY reader/writer for colored point clouds.

Supports ascii and binary_little_endian files whose vertex element
carries x, y, z plus red, green, blue (uchar). Extra scalar vertex
properties are skipped; list properties and big-endian files are
rejected. On write, coordinates are stored as 32-bit floats and colors
as unsigned bytes.
"""

from __future__ import annotations

import numpy as np

from .cloud import RGB8, PointCloud, infer_bitdepth, round_half_away
from .errors import (
    IoFailure,
    MalformedHeader,
    MissingProperty,
    TruncatedBody,
    UnsupportedFormat,
)

_SCALAR_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}

_REQUIRED = ("x", "y", "z", "red", "green", "blue")


def _parse_header(fh):
    """Consume the header; return (format, vertex property list)."""
    line = fh.readline()
    if line.strip() != b"ply":
        raise MalformedHeader("file does not start with 'ply'")
    fmt = None
    properties = []  # (name, numpy code) for the vertex element
    in_vertex = False
    vertex_count = None
    while True:
        raw = fh.readline()
        if not raw:
            raise MalformedHeader("header ends before end_header")
        try:
            line = raw.decode("ascii").strip()
        except UnicodeDecodeError as exc:
            raise MalformedHeader("non-ascii bytes in header") from exc
        if line == "end_header":
            break
        if not line or line.startswith("comment") or line.startswith("obj_info"):
            continue
        fields = line.split()
        if fields[0] == "format":
            if len(fields) < 2:
                raise MalformedHeader("bad format line")
            if fields[1] == "binary_big_endian":
                raise UnsupportedFormat("big-endian PLY is not supported")
            if fields[1] not in ("ascii", "binary_little_endian"):
                raise MalformedHeader(f"unknown format {fields[1]!r}")
            fmt = fields[1]
        elif fields[0] == "element":
            if len(fields) != 3:
                raise MalformedHeader(f"bad element line: {line!r}")
            if fields[1] == "vertex":
                in_vertex = True
                try:
                    vertex_count = int(fields[2])
                except ValueError as exc:
                    raise MalformedHeader(f"bad vertex count {fields[2]!r}") from exc
            else:
                in_vertex = False
        elif fields[0] == "property":
            if not in_vertex:
                continue
            if fields[1] == "list":
                raise UnsupportedFormat("list properties on vertices are not supported")
            if len(fields) != 3:
                raise MalformedHeader(f"bad property line: {line!r}")
            code = _SCALAR_TYPES.get(fields[1])
            if code is None:
                raise MalformedHeader(f"unknown property type {fields[1]!r}")
            properties.append((fields[2], code))
    if fmt is None:
        raise MalformedHeader("header lacks a format line")
    if vertex_count is None:
        raise MalformedHeader("header lacks a vertex element")
    return fmt, vertex_count, properties


def _check_properties(properties):
    names = [name for name, _ in properties]
    for req in _REQUIRED:
        if req not in names:
            raise MissingProperty(f"vertex element lacks property {req!r}")
    for chan in ("red", "green", "blue"):
        code = dict(properties)[chan]
        if code != "u1":
            raise UnsupportedFormat(f"color property {chan!r} must be uchar")


def read_ply(path) -> PointCloud:
    """Read a colored PLY file; point order is preserved."""
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    with fh:
        fmt, count, properties = _parse_header(fh)
        _check_properties(properties)
        if count < 1:
            raise TruncatedBody("vertex element declares zero points")
        if fmt == "ascii":
            table = _read_ascii_body(fh, count, properties)
        else:
            table = _read_binary_body(fh, count, properties)
    coords = np.stack([table["x"], table["y"], table["z"]], axis=1)
    coords = round_half_away(coords).astype(np.int64)
    colors = np.stack([table["red"], table["green"], table["blue"]], axis=1)
    colors = colors.astype(np.float64)
    return PointCloud(coords, colors, RGB8, infer_bitdepth(coords))


def _read_ascii_body(fh, count, properties):
    n_props = len(properties)
    rows = np.empty((count, n_props), dtype=np.float64)
    for i in range(count):
        raw = fh.readline()
        if not raw:
            raise TruncatedBody(f"body ends at vertex {i} of {count}")
        fields = raw.split()
        if len(fields) < n_props:
            raise TruncatedBody(f"vertex {i} has {len(fields)} values, expected {n_props}")
        try:
            rows[i] = [float(v) for v in fields[:n_props]]
        except ValueError as exc:
            raise TruncatedBody(f"vertex {i} has a non-numeric value") from exc
    return {name: rows[:, j] for j, (name, _) in enumerate(properties)}


def _read_binary_body(fh, count, properties):
    dtype = np.dtype([(name, "<" + code) for name, code in properties])
    raw = fh.read(count * dtype.itemsize)
    if len(raw) < count * dtype.itemsize:
        raise TruncatedBody(
            f"body holds {len(raw)} bytes, expected {count * dtype.itemsize}"
        )
    table = np.frombuffer(raw, dtype=dtype, count=count)
    return {name: table[name] for name, _ in properties}


def write_ply(pc: PointCloud, path, encoding: str = "binary_le") -> None:
    """Write a cloud; colors are rounded to 8 bits, coords stored as float32."""
    if encoding not in ("ascii", "binary_le"):
        raise UnsupportedFormat(f"unknown encoding {encoding!r}")
    fmt = "ascii" if encoding == "ascii" else "binary_little_endian"
    header = "\n".join(
        [
            "ply",
            f"format {fmt} 1.0",
            f"element vertex {len(pc)}",
            "property float x",
            "property float y",
            "property float z",
            "property uchar red",
            "property uchar green",
            "property uchar blue",
            "end_header",
        ]
    ) + "\n"
    colors = np.clip(round_half_away(pc.colors), 0, 255).astype(np.uint8)
    try:
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            if encoding == "ascii":
                for (x, y, z), (r, g, b) in zip(pc.coords, colors):
                    fh.write(f"{x} {y} {z} {r} {g} {b}\n".encode("ascii"))
            else:
                rec = np.empty(
                    len(pc),
                    dtype=[("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
                           ("red", "u1"), ("green", "u1"), ("blue", "u1")],
                )
                rec["x"] = pc.coords[:, 0]
                rec["y"] = pc.coords[:, 1]
                rec["z"] = pc.coords[:, 2]
                rec["red"] = colors[:, 0]
                rec["green"] = colors[:, 1]
                rec["blue"] = colors[:, 2]
                fh.write(rec.tobytes())
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
